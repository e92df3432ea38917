#include "refrakt/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>

namespace refrakt::kernels {

namespace {

int read_thread_env() {
  const char* env = std::getenv("REFRAKT_THREADS");
  if (env != nullptr) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

int g_threads = read_thread_env();

}  // namespace

int thread_count() { return g_threads; }

void set_thread_count(int n) { g_threads = std::max(1, n); }

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, T beta) {
  const int nt = g_threads;
#pragma omp parallel for num_threads(nt) schedule(static) if (m > 1 && nt > 1)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * n;
    if (beta == T(0)) {
      std::fill(ci, ci + n, T(0));
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) ci[j] *= beta;
    }
    const T* ai = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const T aik = ai[kk];
      const T* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, T beta) {
  const int nt = g_threads;
#pragma omp parallel for num_threads(nt) schedule(static) if (m > 1 && nt > 1)
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * k;
    T* ci = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<std::size_t>(j) * k;
      T acc = 0;
      for (int kk = 0; kk < k; ++kk) acc += ai[kk] * bj[kk];
      ci[j] = beta == T(0) ? acc : beta * ci[j] + acc;
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, T beta) {
  const int nt = g_threads;
#pragma omp parallel for num_threads(nt) schedule(static) if (m > 1 && nt > 1)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * n;
    if (beta == T(0)) {
      std::fill(ci, ci + n, T(0));
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) ci[j] *= beta;
    }
    for (int kk = 0; kk < k; ++kk) {
      const T aki = a[static_cast<std::size_t>(kk) * m + i];
      const T* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
}

template <typename T>
void colsum_add(const T* a, T* c, int m, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) c[j] += ai[j];
  }
}

template void gemm_nn<float>(const float*, const float*, float*, int, int, int, float);
template void gemm_nn<double>(const double*, const double*, double*, int, int, int, double);
template void gemm_nt<float>(const float*, const float*, float*, int, int, int, float);
template void gemm_nt<double>(const double*, const double*, double*, int, int, int, double);
template void gemm_tn<float>(const float*, const float*, float*, int, int, int, float);
template void gemm_tn<double>(const double*, const double*, double*, int, int, int, double);
template void colsum_add<float>(const float*, float*, int, int);
template void colsum_add<double>(const double*, double*, int, int);

namespace serial {

// Same loop bodies as the parallel kernels, minus the pragma. Keeping the
// accumulation order identical makes serial-vs-parallel comparisons exact.

template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, T beta) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * n;
    if (beta == T(0)) {
      std::fill(ci, ci + n, T(0));
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) ci[j] *= beta;
    }
    const T* ai = a + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const T aik = ai[kk];
      const T* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, T beta) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int kk = 0; kk < k; ++kk)
        acc += a[static_cast<std::size_t>(i) * k + kk] *
               b[static_cast<std::size_t>(j) * k + kk];
      T& ci = c[static_cast<std::size_t>(i) * n + j];
      ci = beta == T(0) ? acc : beta * ci + acc;
    }
  }
}

template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, T beta) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<std::size_t>(i) * n;
    if (beta == T(0)) {
      std::fill(ci, ci + n, T(0));
    } else if (beta != T(1)) {
      for (int j = 0; j < n; ++j) ci[j] *= beta;
    }
    for (int kk = 0; kk < k; ++kk) {
      const T aki = a[static_cast<std::size_t>(kk) * m + i];
      const T* bk = b + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
}

template void gemm_nn<float>(const float*, const float*, float*, int, int, int, float);
template void gemm_nn<double>(const double*, const double*, double*, int, int, int, double);
template void gemm_nt<float>(const float*, const float*, float*, int, int, int, float);
template void gemm_nt<double>(const double*, const double*, double*, int, int, int, double);
template void gemm_tn<float>(const float*, const float*, float*, int, int, int, float);
template void gemm_tn<double>(const double*, const double*, double*, int, int, int, double);

}  // namespace serial

}  // namespace refrakt::kernels
