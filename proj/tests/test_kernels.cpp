#include <vector>

#include "doctest.h"
#include "tnmt/common.hpp"
#include "tnmt/kernels.hpp"

using namespace tnmt;

namespace {

template <typename T>
std::vector<T> random_mat(Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

}  // namespace

TEST_CASE("omp kernels match the serial reference bitwise") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::size_t m = 1 + rng.below(40), k = 1 + rng.below(40),
                n = 1 + rng.below(40);
    auto a = random_mat<float>(rng, m * k);
    auto b = random_mat<float>(rng, k * n);
    auto bt = random_mat<float>(rng, n * k);

    std::vector<float> c0(m * n, 0.f), c1(m * n, 0.f);
    kernels::matmul_acc_serial(a.data(), b.data(), c0.data(), m, k, n);
    kernels::matmul_acc_omp(a.data(), b.data(), c1.data(), m, k, n);
    CHECK(c0 == c1);

    std::fill(c0.begin(), c0.end(), 0.f);
    std::fill(c1.begin(), c1.end(), 0.f);
    kernels::matmul_nt_acc_serial(a.data(), bt.data(), c0.data(), m, k, n);
    kernels::matmul_nt_acc_omp(a.data(), bt.data(), c1.data(), m, k, n);
    CHECK(c0 == c1);

    std::vector<float> d0(k * n, 0.f), d1(k * n, 0.f);
    auto bm = random_mat<float>(rng, m * n);
    kernels::matmul_tn_acc_serial(a.data(), bm.data(), d0.data(), m, k, n);
    kernels::matmul_tn_acc_omp(a.data(), bm.data(), d1.data(), m, k, n);
    CHECK(d0 == d1);
  }
}

TEST_CASE("kernel layouts agree with naive triple loop") {
  Rng rng(11);
  std::size_t m = 5, k = 7, n = 3;
  auto a = random_mat<double>(rng, m * k);
  auto b = random_mat<double>(rng, k * n);

  std::vector<double> want(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p)
        want[i * n + j] += a[i * k + p] * b[p * n + j];

  std::vector<double> got(m * n, 0.0);
  kernels::matmul_acc_serial(a.data(), b.data(), got.data(), m, k, n);
  for (std::size_t i = 0; i < m * n; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // b^T laid out [n x k]
  std::vector<double> btr(n * k);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) btr[j * k + p] = b[p * n + j];
  std::fill(got.begin(), got.end(), 0.0);
  kernels::matmul_nt_acc_serial(a.data(), btr.data(), got.data(), m, k, n);
  for (std::size_t i = 0; i < m * n; ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}
