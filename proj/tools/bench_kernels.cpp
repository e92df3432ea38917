#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "refrakt/kernels.hpp"
#include "refrakt/rng.hpp"

namespace {

using Clock = std::chrono::steady_clock;
using refrakt::Rng;
namespace k = refrakt::kernels;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

void bench_one(const char* name,
               void (*parallel)(const float*, const float*, float*, int, int,
                                int, float),
               void (*serial)(const float*, const float*, float*, int, int,
                              int, float),
               int m, int k_dim, int n) {
  Rng rng(12345);
  std::vector<float> a(static_cast<std::size_t>(m) * k_dim);
  std::vector<float> b(static_cast<std::size_t>(k_dim) * n);
  std::vector<float> c_par(static_cast<std::size_t>(m) * n, 0.0f);
  std::vector<float> c_ser(static_cast<std::size_t>(m) * n, 0.0f);
  for (auto& v : a) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : b) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  const int reps = 5;
  const double t_ser = time_best_of(
      reps, [&] { serial(a.data(), b.data(), c_ser.data(), m, k_dim, n, 0.0f); });
  const double t_par = time_best_of(
      reps, [&] { parallel(a.data(), b.data(), c_par.data(), m, k_dim, n, 0.0f); });

  float max_diff = 0.0f;
  for (std::size_t i = 0; i < c_par.size(); ++i)
    max_diff = std::max(max_diff, std::abs(c_par[i] - c_ser[i]));

  const double flops = 2.0 * m * k_dim * n;
  std::printf(
      "%-8s %4dx%4dx%4d  serial %8.3f ms (%6.2f GFLOP/s)  parallel %8.3f ms "
      "(%6.2f GFLOP/s)  speedup %5.2fx  max|diff| %g\n",
      name, m, k_dim, n, 1e3 * t_ser, flops / t_ser * 1e-9, 1e3 * t_par,
      flops / t_par * 1e-9, t_ser / t_par, static_cast<double>(max_diff));
}

}  // namespace

int main() {
  std::printf("threads: %d\n", k::thread_count());
  const int sizes[][3] = {
      {256, 256, 256}, {512, 512, 512}, {2048, 128, 96}, {768, 101, 512}};
  for (const auto& s : sizes) {
    bench_one("gemm_nn", &k::gemm_nn<float>, &k::serial::gemm_nn<float>, s[0],
              s[1], s[2]);
    bench_one("gemm_nt", &k::gemm_nt<float>, &k::serial::gemm_nt<float>, s[0],
              s[1], s[2]);
    bench_one("gemm_tn", &k::gemm_tn<float>, &k::serial::gemm_tn<float>, s[0],
              s[1], s[2]);
  }
  return 0;
}
