#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <refrakt/rng.hpp>
#include <vector>

using namespace refrakt;

TEST_CASE("identical seeds produce identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());

  Rng c(42), d(43);
  int differing = 0;
  for (int i = 0; i < 100; ++i)
    if (c.bits() != d.bits()) ++differing;
  CHECK(differing > 90);
}

TEST_CASE("uniform stays in [0,1) and matches bounds form") {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng r2(7);
  for (int i = 0; i < 100; ++i) {
    double v = r2.uniform(-2.0, 5.0);
    CHECK(v >= -2.0);
    CHECK(v < 5.0);
  }
}

TEST_CASE("uniform_int covers its range") {
  Rng rng(3);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    int v = rng.uniform_int(7);
    REQUIRE(v >= 0);
    REQUIRE(v < 7);
    ++counts[static_cast<std::size_t>(v)];
  }
  for (int c : counts) CHECK(c > 700);
}

TEST_CASE("normal has the requested moments") {
  Rng rng(11);
  const int n = 50000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    double v = rng.normal();
    sum += v;
    sq += v * v;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);

  Rng r2(11);
  Rng r3(11);
  CHECK(r2.normal(10.0, 2.0) == doctest::Approx(10.0 + 2.0 * r3.normal()));
}

TEST_CASE("shuffle yields a permutation and is seed-deterministic") {
  Rng a(5), b(5);
  std::vector<int> va(20), vb(20);
  for (int i = 0; i < 20; ++i) va[static_cast<std::size_t>(i)] = vb[static_cast<std::size_t>(i)] = i;
  a.shuffle(va);
  b.shuffle(vb);
  CHECK(va == vb);

  auto sorted = va;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 20; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);

  auto p = Rng(6).permutation(50);
  std::sort(p.begin(), p.end());
  for (int i = 0; i < 50; ++i) CHECK(p[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("mix_seed separates streams") {
  CHECK(mix_seed(1, 0) != mix_seed(1, 1));
  CHECK(mix_seed(1, 0) != mix_seed(2, 0));
  CHECK(mix_seed(123, 7) == mix_seed(123, 7));
}

TEST_CASE("fnv1a matches published 64-bit vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}
