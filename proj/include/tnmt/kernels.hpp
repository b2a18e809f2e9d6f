#pragma once

#include <cstddef>

namespace tnmt::kernels {

// Dense matmul kernels. The serial variants are the reference implementation;
// the omp variants parallelize over output rows and must produce bit-identical
// results (each output element is reduced in the same order by one thread).
//
// All matrices are row-major. c must not alias a or b.

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void matmul_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                       std::size_t k, std::size_t n);
template <typename T>
void matmul_acc_omp(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                    std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void matmul_nt_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                          std::size_t k, std::size_t n);
template <typename T>
void matmul_nt_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                       std::size_t k, std::size_t n);

// c[k x n] += a[m x k]^T * b[m x n]
template <typename T>
void matmul_tn_acc_serial(const T* a, const T* b, T* c, std::size_t m,
                          std::size_t k, std::size_t n);
template <typename T>
void matmul_tn_acc_omp(const T* a, const T* b, T* c, std::size_t m,
                       std::size_t k, std::size_t n);

// Dispatchers used by the tensor layer; switchable for tests/benchmarks.
enum class Backend { Serial, OpenMP };
Backend backend();
void set_backend(Backend b);

template <typename T>
void matmul_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                std::size_t n);
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                   std::size_t n);
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
                   std::size_t n);

}  // namespace tnmt::kernels
