#include "tnmt/kernels.hpp"

#include <atomic>

namespace tnmt::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::OpenMP};
}

Backend backend() { return g_backend.load(); }
void set_backend(Backend b) { g_backend.store(b); }

// i-k-j order: the inner loop is a contiguous saxpy over b's row, which the
// compiler vectorizes. Summation order per output element is fixed (k
// ascending), so serial and omp variants agree bitwise.
template <typename T>
void matmul_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                       std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void matmul_acc_omp(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void matmul_nt_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                          std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void matmul_nt_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                       std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void matmul_tn_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                          std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    T* cp = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aip = a[i * k + p];
      const T* bi = b + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

template <typename T>
void matmul_tn_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                       std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t p = 0; p < k; ++p) {
    T* cp = c + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T aip = a[i * k + p];
      const T* bi = b + i * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
    }
  }
}

template <typename T>
void matmul_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                std::size_t n) {
  if (backend() == Backend::OpenMP)
    matmul_acc_omp(a, b, c, m, k, n);
  else
    matmul_acc_serial(a, b, c, m, k, n);
}

template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  if (backend() == Backend::OpenMP)
    matmul_nt_acc_omp(a, b, c, m, k, n);
  else
    matmul_nt_acc_serial(a, b, c, m, k, n);
}

template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                   std::size_t n) {
  if (backend() == Backend::OpenMP)
    matmul_tn_acc_omp(a, b, c, m, k, n);
  else
    matmul_tn_acc_serial(a, b, c, m, k, n);
}

#define TNMT_INSTANTIATE(T)                                                  \
  template void matmul_acc_serial<T>(const T*, const T*, T*, std::size_t,    \
                                     std::size_t, std::size_t);              \
  template void matmul_acc_omp<T>(const T*, const T*, T*, std::size_t,       \
                                  std::size_t, std::size_t);                 \
  template void matmul_nt_acc_serial<T>(const T*, const T*, T*, std::size_t, \
                                        std::size_t, std::size_t);           \
  template void matmul_nt_acc_omp<T>(const T*, const T*, T*, std::size_t,    \
                                     std::size_t, std::size_t);              \
  template void matmul_tn_acc_serial<T>(const T*, const T*, T*, std::size_t, \
                                        std::size_t, std::size_t);           \
  template void matmul_tn_acc_omp<T>(const T*, const T*, T*, std::size_t,    \
                                     std::size_t, std::size_t);              \
  template void matmul_acc<T>(const T*, const T*, T*, std::size_t,           \
                              std::size_t, std::size_t);                     \
  template void matmul_nt_acc<T>(const T*, const T*, T*, std::size_t,        \
                                 std::size_t, std::size_t);                  \
  template void matmul_tn_acc<T>(const T*, const T*, T*, std::size_t,        \
                                 std::size_t, std::size_t);

TNMT_INSTANTIATE(float)
TNMT_INSTANTIATE(double)

#undef TNMT_INSTANTIATE

}  // namespace tnmt::kernels
