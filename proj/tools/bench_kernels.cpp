// Serial vs OpenMP matmul benchmark. Verifies bit-identical outputs, then
// reports GFLOP/s per kernel and size.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "tnmt/common.hpp"
#include "tnmt/kernels.hpp"

using namespace tnmt;

namespace {

using Fn = void (*)(const float*, const float*, float*, std::size_t,
                    std::size_t, std::size_t);

double bench(Fn fn, const std::vector<float>& a, const std::vector<float>& b,
             std::vector<float>& c, std::size_t m, std::size_t k,
             std::size_t n, int reps) {
  using clk = std::chrono::steady_clock;
  // warm-up
  std::fill(c.begin(), c.end(), 0.0f);
  fn(a.data(), b.data(), c.data(), m, k, n);
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    std::fill(c.begin(), c.end(), 0.0f);
    auto t0 = clk::now();
    fn(a.data(), b.data(), c.data(), m, k, n);
    best = std::min(best,
                    std::chrono::duration<double>(clk::now() - t0).count());
  }
  return 2.0 * double(m) * double(k) * double(n) / best * 1e-9;
}

struct Kernel {
  const char* name;
  Fn serial;
  Fn omp;
};

}  // namespace

int main(int argc, char** argv) {
  int reps = argc > 1 ? std::atoi(argv[1]) : 5;

  const Kernel ks[] = {
      {"matmul_acc", kernels::matmul_acc_serial<float>,
       kernels::matmul_acc_omp<float>},
      {"matmul_nt_acc", kernels::matmul_nt_acc_serial<float>,
       kernels::matmul_nt_acc_omp<float>},
      {"matmul_tn_acc", kernels::matmul_tn_acc_serial<float>,
       kernels::matmul_tn_acc_omp<float>},
  };
  const std::size_t sizes[][3] = {
      {64, 64, 64}, {128, 128, 128}, {256, 256, 256}, {96, 512, 96}};

  std::printf("%-14s %4s %4s %4s  %10s %10s %8s %s\n", "kernel", "m", "k",
              "n", "serial", "omp", "speedup", "bit-identical");
  for (const auto& kn : ks) {
    for (const auto& sz : sizes) {
      std::size_t m = sz[0], k = sz[1], n = sz[2];
      Rng rng(17);
      // operand shapes differ per kernel; size every buffer for the largest
      std::size_t mx = std::max({m * k, k * n, m * n});
      std::vector<float> a(mx), b(mx), c1(mx), c2(mx);
      for (auto& x : a) x = float(rng.uniform() - 0.5);
      for (auto& x : b) x = float(rng.uniform() - 0.5);

      std::fill(c1.begin(), c1.end(), 0.0f);
      kn.serial(a.data(), b.data(), c1.data(), m, k, n);
      std::fill(c2.begin(), c2.end(), 0.0f);
      kn.omp(a.data(), b.data(), c2.data(), m, k, n);
      bool same =
          std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(float)) == 0;

      double gs = bench(kn.serial, a, b, c1, m, k, n, reps);
      double go = bench(kn.omp, a, b, c2, m, k, n, reps);
      std::printf("%-14s %4zu %4zu %4zu  %7.2f GF %7.2f GF %7.2fx %s\n",
                  kn.name, m, k, n, gs, go, go / gs, same ? "yes" : "NO");
      if (!same) return 1;
    }
  }
  return 0;
}
