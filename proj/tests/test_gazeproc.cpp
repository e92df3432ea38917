#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <refrakt/gazeproc.hpp>
#include <refrakt/rng.hpp>
#include <vector>

using namespace refrakt;

namespace {

GazeRecord make_record(GazeStream s, double t, double conf, double fill) {
  GazeRecord r;
  r.stream = s;
  r.t = t;
  r.confidence = conf;
  r.payload.assign(stream_schema(s).size(), fill);
  return r;
}

double sorted_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Direct restatement of the hampel rule for cross-checking.
std::vector<double> hampel_oracle(const std::vector<double>& x,
                                  const std::vector<std::uint8_t>& valid,
                                  double fs, double window_ms, double k) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto half = std::max<std::ptrdiff_t>(
      1, static_cast<std::ptrdiff_t>(std::lround(window_ms * fs / 2000.0)));
  std::vector<double> out = x;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!valid[static_cast<std::size_t>(i)]) continue;
    std::vector<double> buf;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half);
         j <= std::min(n - 1, i + half); ++j)
      if (valid[static_cast<std::size_t>(j)])
        buf.push_back(x[static_cast<std::size_t>(j)]);
    const double m = sorted_median(buf);
    std::vector<double> dev;
    for (double v : buf) dev.push_back(std::abs(v - m));
    if (std::abs(x[static_cast<std::size_t>(i)] - m) > k * sorted_median(dev))
      out[static_cast<std::size_t>(i)] = m;
  }
  return out;
}

}  // namespace

TEST_CASE("flatten_records groups by stream and sorts by time, stably") {
  std::vector<GazeRecord> recs;
  recs.push_back(make_record(GazeStream::gaze, 2.0, 0.9, 1.0));
  recs.push_back(make_record(GazeStream::blink, 1.0, 1.0, 7.0));
  recs.push_back(make_record(GazeStream::gaze, 1.0, 0.8, 2.0));
  recs.push_back(make_record(GazeStream::gaze, 1.0, 0.7, 3.0));  // tie with #2

  auto tables = flatten_records(recs);
  const auto& gaze = tables[static_cast<int>(GazeStream::gaze)];
  REQUIRE(gaze.t.size() == 3);
  CHECK(gaze.t == std::vector<double>{1.0, 1.0, 2.0});
  CHECK(gaze.values(0, 0) == 2.0);  // first 1.0-record kept first
  CHECK(gaze.values(1, 0) == 3.0);
  CHECK(gaze.values(2, 0) == 1.0);
  CHECK(gaze.confidence == std::vector<double>{0.8, 0.7, 0.9});

  CHECK(tables[static_cast<int>(GazeStream::blink)].t.size() == 1);
  CHECK(tables[static_cast<int>(GazeStream::fixation)].t.empty());
}

TEST_CASE("align_to_reference") {
  std::vector<GazeRecord> recs;
  for (double t : {0.0, 0.1, 0.2, 0.3})
    recs.push_back(make_record(GazeStream::pupil_eye0_2d, t, 0.9, t + 1.0));
  recs.push_back(make_record(GazeStream::pupil_eye1_2d, 0.04, 0.6, 10.0));
  recs.push_back(make_record(GazeStream::pupil_eye1_2d, 0.26, 0.7, 20.0));
  // Fixation starting at 0.1 lasting 0.1 s; schema: duration is a payload key.
  {
    GazeRecord f = make_record(GazeStream::fixation, 0.1, 1.0, 5.0);
    const auto& schema = stream_schema(GazeStream::fixation);
    const auto di = static_cast<std::size_t>(
        std::find(schema.begin(), schema.end(), "fixation_duration") -
        schema.begin());
    f.payload[di] = 0.1;
    recs.push_back(f);
  }
  recs.push_back(make_record(GazeStream::blink, 0.29, 1.0, 1.0));

  auto table = align_to_reference(flatten_records(recs));
  REQUIRE(table.length() == 4);
  CHECK(table.values.cols == kGazeFeatureCount);

  const int e0 = gaze_feature_offset(GazeStream::pupil_eye0_2d);
  const int e1 = gaze_feature_offset(GazeStream::pupil_eye1_2d);
  const int fx = gaze_feature_offset(GazeStream::fixation);
  const int bl = gaze_feature_offset(GazeStream::blink);

  SUBCASE("reference stream maps row for row") {
    for (int i = 0; i < 4; ++i) {
      CHECK(table.values(i, e0) == doctest::Approx(0.1 * i + 1.0));
      CHECK(table.valid(i, e0) == 1);
    }
  }
  SUBCASE("other pupil streams take the nearest source row") {
    CHECK(table.values(0, e1) == 10.0);
    CHECK(table.values(1, e1) == 10.0);
    CHECK(table.values(2, e1) == 20.0);
    CHECK(table.values(3, e1) == 20.0);
    CHECK(table.stream_confidence(0, static_cast<int>(GazeStream::pupil_eye1_2d)) == 0.6);
  }
  SUBCASE("fixations cover start through start plus duration") {
    CHECK(table.valid(0, fx) == 0);
    CHECK(table.valid(1, fx) == 1);
    CHECK(table.valid(2, fx) == 1);
    CHECK(table.valid(3, fx) == 0);
    CHECK(table.values(1, fx) == 5.0);
  }
  SUBCASE("blinks cover only the nearest reference row") {
    CHECK(table.valid(0, bl) == 0);
    CHECK(table.valid(1, bl) == 0);
    CHECK(table.valid(2, bl) == 0);
    CHECK(table.valid(3, bl) == 1);
  }
  SUBCASE("columns of absent streams stay invalid and zero") {
    const int e13 = gaze_feature_offset(GazeStream::pupil_eye1_3d);
    for (int i = 0; i < 4; ++i) {
      CHECK(table.valid(i, e13) == 0);
      CHECK(table.values(i, e13) == 0.0);
    }
  }

  CHECK_THROWS_AS(align_to_reference(StreamTables{}), FormatError);
}

TEST_CASE("nearest join breaks ties toward the earlier row") {
  std::vector<GazeRecord> recs;
  recs.push_back(make_record(GazeStream::pupil_eye0_2d, 0.15, 0.9, 0.0));
  recs.push_back(make_record(GazeStream::gaze, 0.1, 0.9, 111.0));
  recs.push_back(make_record(GazeStream::gaze, 0.2, 0.9, 222.0));
  auto table = align_to_reference(flatten_records(recs));
  CHECK(table.values(0, gaze_feature_offset(GazeStream::gaze)) == 111.0);
}

TEST_CASE("mask_low_confidence is strict at the threshold") {
  std::vector<GazeRecord> recs;
  recs.push_back(make_record(GazeStream::pupil_eye0_2d, 0.0, 0.49, 1.0));
  recs.push_back(make_record(GazeStream::pupil_eye0_2d, 0.1, 0.50, 1.0));
  recs.push_back(make_record(GazeStream::pupil_eye0_2d, 0.2, 0.51, 1.0));
  auto table = align_to_reference(flatten_records(recs));
  mask_low_confidence(table);
  const int e0 = gaze_feature_offset(GazeStream::pupil_eye0_2d);
  const auto width = static_cast<int>(stream_schema(GazeStream::pupil_eye0_2d).size());
  for (int j = 0; j < width; ++j) {
    CHECK(table.valid(0, e0 + j) == 0);
    CHECK(table.valid(1, e0 + j) == 1);
    CHECK(table.valid(2, e0 + j) == 1);
  }
}

TEST_CASE("hampel matches a direct restatement and replaces spikes") {
  Rng rng(4242);
  const std::size_t n = 240;
  std::vector<double> x(n);
  std::vector<std::uint8_t> valid(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = std::sin(0.05 * static_cast<double>(i)) + 0.05 * rng.normal();
    if (rng.uniform() < 0.15) valid[i] = 0;
  }
  x[50] = 40.0;
  x[51] = -35.0;
  x[120] = 25.0;

  auto got = hampel(x, valid, 120.0);
  CHECK(got == hampel_oracle(x, valid, 120.0, 100.0, 3.0));

  SUBCASE("the spike value is exactly the window median") {
    std::vector<double> buf;
    for (std::size_t j = 120 - 6; j <= 120 + 6; ++j)
      if (valid[j]) buf.push_back(x[j]);
    if (valid[120]) CHECK(got[120] == sorted_median(buf));
  }
  SUBCASE("invalid samples pass through untouched") {
    for (std::size_t i = 0; i < n; ++i)
      if (!valid[i]) CHECK(got[i] == x[i]);
  }
  SUBCASE("zero MAD keeps exact-equal samples and rejects the rest") {
    std::vector<double> c(31, 2.0);
    std::vector<std::uint8_t> cv(31, 1);
    c[15] = 2.0 + 1e-9;
    auto out = hampel(c, cv, 120.0);
    CHECK(out[15] == 2.0);
    CHECK(out[14] == 2.0);
  }
}

TEST_CASE("median_smooth truncates at the edges and skips invalid cells") {
  std::vector<double> x = {5.0, 1.0, 4.0, 2.0, 8.0};
  SUBCASE("all valid") {
    std::vector<std::uint8_t> v(5, 1);
    auto out = median_smooth(x, v, 3);
    CHECK(out == std::vector<double>{3.0, 4.0, 2.0, 4.0, 5.0});
  }
  SUBCASE("invalid cells pass through and drop out of windows") {
    std::vector<std::uint8_t> v = {1, 1, 0, 1, 1};
    auto out = median_smooth(x, v, 3);
    CHECK(out[1] == 3.0);  // median of {5, 1}
    CHECK(out[2] == 4.0);  // untouched
    CHECK(out[3] == 5.0);  // median of {2, 8}
  }
  SUBCASE("even windows are rejected") {
    std::vector<std::uint8_t> v(5, 1);
    CHECK_THROWS_AS(median_smooth(x, v, 4), ParamError);
  }
}

TEST_CASE("fit_zscore_masked uses valid cells only") {
  Matrix<double> X(4, 2);
  Matrix<std::uint8_t> valid(4, 2);
  const double col0[] = {1.0, 100.0, 3.0, 5.0};
  for (int i = 0; i < 4; ++i) {
    X(i, 0) = col0[i];
    X(i, 1) = 9.0;
    valid(i, 0) = static_cast<std::uint8_t>(i != 1);  // exclude the 100
    valid(i, 1) = 0;                                  // fully invalid column
  }
  auto p = fit_zscore_masked(X, valid);
  CHECK(p.mean[0] == doctest::Approx(3.0));
  CHECK(p.stddev[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(p.mean[1] == 0.0);
  CHECK(p.stddev[1] == kStdFloor);

  Matrix<std::uint8_t> wrong(3, 2);
  CHECK_THROWS_AS(fit_zscore_masked(X, wrong), ParamError);
}

TEST_CASE("impute_ffill_bfill_zero") {
  Matrix<double> X(5, 3);
  Matrix<std::uint8_t> valid(5, 3);
  X.fill(-1.0);
  valid.fill(0);
  // col 0: valid rows 1 and 3
  X(1, 0) = 2.0;
  valid(1, 0) = 1;
  X(3, 0) = 3.0;
  valid(3, 0) = 1;
  // col 1: fully invalid; col 2: fully valid
  for (int i = 0; i < 5; ++i) {
    X(i, 2) = 10.0 + i;
    valid(i, 2) = 1;
  }
  impute_ffill_bfill_zero(X, valid);

  CHECK(X(0, 0) == 2.0);  // backward fill from the first valid cell
  CHECK(X(1, 0) == 2.0);
  CHECK(X(2, 0) == 2.0);  // forward fill
  CHECK(X(3, 0) == 3.0);
  CHECK(X(4, 0) == 3.0);
  for (int i = 0; i < 5; ++i) {
    CHECK(X(i, 1) == 0.0);
    CHECK(X(i, 2) == 10.0 + i);
    for (int j = 0; j < 3; ++j) CHECK(valid(i, j) == 1);
  }
}

TEST_CASE("preprocess_gaze leaves every cell valid and finite") {
  Rng rng(7);
  std::vector<GazeRecord> recs;
  for (int i = 0; i < 360; ++i) {
    const double t = i / 120.0;
    recs.push_back(make_record(GazeStream::pupil_eye0_2d, t,
                               rng.uniform() < 0.1 ? 0.2 : 0.95,
                               std::sin(0.1 * i) + 0.1 * rng.normal()));
    if (i % 2 == 0)
      recs.push_back(make_record(GazeStream::gaze, t + 0.001, 0.9,
                                 0.5 * std::cos(0.07 * i)));
  }
  auto table = preprocess_gaze(recs);
  REQUIRE(table.length() == 360);
  for (int i = 0; i < table.values.rows; ++i)
    for (int j = 0; j < table.values.cols; ++j) {
      CHECK(table.valid(i, j) == 1);
      CHECK(std::isfinite(table.values(i, j)));
    }

  SUBCASE("normalized valid cells of the reference column have zero mean") {
    auto cleaned = clean_gaze(recs);
    const int e0 = gaze_feature_offset(GazeStream::pupil_eye0_2d);
    double mean = 0.0;
    int cnt = 0;
    for (int i = 0; i < table.values.rows; ++i)
      if (cleaned.valid(i, e0)) {
        mean += table.values(i, e0);
        ++cnt;
      }
    REQUIRE(cnt > 0);
    CHECK(mean / cnt == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("external norm params shift the output verbatim") {
    NormParams p;
    p.mean.assign(kGazeFeatureCount, 0.0);
    p.stddev.assign(kGazeFeatureCount, 1.0);
    auto raw = preprocess_gaze(recs, p);
    auto cleaned = clean_gaze(recs);
    const int e0 = gaze_feature_offset(GazeStream::pupil_eye0_2d);
    for (int i = 0; i < raw.values.rows; ++i)
      if (cleaned.valid(i, e0)) CHECK(raw.values(i, e0) == cleaned.values(i, e0));
  }
}
