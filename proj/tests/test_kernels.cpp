#include <doctest.h>

#include <cstdlib>
#include <refrakt/kernels.hpp>
#include <refrakt/rng.hpp>
#include <vector>

using namespace refrakt;

namespace {

template <typename T>
std::vector<T> random_block(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

// Plain triple loop in double, independent of the kernel loop order.
template <typename T>
std::vector<double> oracle_gemm(const std::vector<T>& a,
                                const std::vector<T>& b,
                                const std::vector<T>& c0, int m, int k, int n,
                                double beta, char mode) {
  std::vector<double> c(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        double av = mode == 't' ? a[static_cast<std::size_t>(p) * m + i]
                                : a[static_cast<std::size_t>(i) * k + p];
        double bv = mode == 'n' ? b[static_cast<std::size_t>(j) * k + p]
                                : b[static_cast<std::size_t>(p) * n + j];
        acc += av * bv;
      }
      c[static_cast<std::size_t>(i) * n + j] =
          acc + beta * c0[static_cast<std::size_t>(i) * n + j];
    }
  return c;
}

}  // namespace

TEST_CASE("gemm variants match a naive oracle") {
  struct Shape {
    int m, k, n;
  };
  for (Shape s : {Shape{1, 1, 1}, Shape{3, 5, 2}, Shape{17, 11, 13},
                  Shape{32, 64, 48}}) {
    for (double beta : {0.0, 1.0, 0.5}) {
      auto a = random_block<double>(static_cast<std::size_t>(s.m) * s.k, 1);
      auto b = random_block<double>(static_cast<std::size_t>(s.k) * s.n, 2);
      auto c0 = random_block<double>(static_cast<std::size_t>(s.m) * s.n, 3);

      auto c = c0;
      kernels::gemm_nn(a.data(), b.data(), c.data(), s.m, s.k, s.n, beta);
      auto want = oracle_gemm(a, b, c0, s.m, s.k, s.n, beta, 'x');
      for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));

      // b transposed: stored n x k
      auto bt = random_block<double>(static_cast<std::size_t>(s.n) * s.k, 4);
      c = c0;
      kernels::gemm_nt(a.data(), bt.data(), c.data(), s.m, s.k, s.n, beta);
      want = oracle_gemm(a, bt, c0, s.m, s.k, s.n, beta, 'n');
      for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));

      // a transposed: stored k x m
      auto at = random_block<double>(static_cast<std::size_t>(s.k) * s.m, 5);
      c = c0;
      kernels::gemm_tn(at.data(), b.data(), c.data(), s.m, s.k, s.n, beta);
      want = oracle_gemm(at, b, c0, s.m, s.k, s.n, beta, 't');
      for (std::size_t i = 0; i < c.size(); ++i)
        CHECK(c[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  const int m = 37, k = 29, n = 41;
  auto a = random_block<float>(static_cast<std::size_t>(m) * k, 10);
  auto b = random_block<float>(static_cast<std::size_t>(k) * n, 11);
  auto bt = random_block<float>(static_cast<std::size_t>(n) * k, 12);
  auto at = random_block<float>(static_cast<std::size_t>(k) * m, 13);
  auto c0 = random_block<float>(static_cast<std::size_t>(m) * n, 14);

  const int saved = kernels::thread_count();
  for (int threads : {1, 3}) {
    kernels::set_thread_count(threads);

    auto cp = c0, cs = c0;
    kernels::gemm_nn(a.data(), b.data(), cp.data(), m, k, n, 0.5f);
    kernels::serial::gemm_nn(a.data(), b.data(), cs.data(), m, k, n, 0.5f);
    CHECK(cp == cs);

    cp = c0, cs = c0;
    kernels::gemm_nt(a.data(), bt.data(), cp.data(), m, k, n, 1.0f);
    kernels::serial::gemm_nt(a.data(), bt.data(), cs.data(), m, k, n, 1.0f);
    CHECK(cp == cs);

    cp = c0, cs = c0;
    kernels::gemm_tn(at.data(), b.data(), cp.data(), m, k, n, 0.0f);
    kernels::serial::gemm_tn(at.data(), b.data(), cs.data(), m, k, n, 0.0f);
    CHECK(cp == cs);
  }
  kernels::set_thread_count(saved);
}

TEST_CASE("colsum_add accumulates column sums") {
  const int m = 7, n = 5;
  auto a = random_block<double>(static_cast<std::size_t>(m) * n, 21);
  std::vector<double> c(n, 0.25);
  kernels::colsum_add(a.data(), c.data(), m, n);
  for (int j = 0; j < n; ++j) {
    double want = 0.25;
    for (int i = 0; i < m; ++i)
      want += a[static_cast<std::size_t>(i) * n + j];
    CHECK(c[static_cast<std::size_t>(j)] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("set_thread_count clamps to at least one thread") {
  const int saved = kernels::thread_count();
  kernels::set_thread_count(0);
  CHECK(kernels::thread_count() >= 1);
  kernels::set_thread_count(saved);
}
