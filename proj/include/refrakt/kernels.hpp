#pragma once

#include <cstddef>

namespace refrakt::kernels {

/// Number of OpenMP threads the kernels may use. Reads REFRAKT_THREADS once;
/// defaults to omp_get_max_threads().
int thread_count();

/// Override the thread cap (used by the CLI and by benchmarks).
void set_thread_count(int n);

// Row-major GEMM variants. All parallelize over rows of C, and every output
// element is accumulated serially by exactly one thread, so results are
// bit-identical for any thread count.
//
//   gemm_nn: C[m x n] = A[m x k] * B[k x n] + beta * C
//   gemm_nt: C[m x n] = A[m x k] * B[n x k]^T + beta * C
//   gemm_tn: C[m x n] = A[k x m]^T * B[k x n] + beta * C

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, T beta);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, T beta);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, T beta);

/// c[j] += sum_i a[i*n + j] over m rows.
template <typename T>
void colsum_add(const T* a, T* c, int m, int n);

namespace serial {

// Naive reference implementations, kept for correctness tests and the
// kernel benchmark. Single-threaded, dot-product inner loops.

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, T beta);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, T beta);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, T beta);

}  // namespace serial

}  // namespace refrakt::kernels
