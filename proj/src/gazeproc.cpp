#include "refrakt/gazeproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace refrakt {

namespace {

double median_of(std::vector<double>& buf) {
  const std::size_t n = buf.size();
  const std::size_t mid = n / 2;
  std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid),
                   buf.end());
  double hi = buf[mid];
  if (n % 2 == 1) return hi;
  double lo =
      *std::max_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Index of the element of `ts` (sorted) nearest to t; earlier wins ties.
std::size_t nearest_index(const std::vector<double>& ts, double t) {
  auto it = std::lower_bound(ts.begin(), ts.end(), t);
  if (it == ts.begin()) return 0;
  if (it == ts.end()) return ts.size() - 1;
  auto prev = it - 1;
  return (t - *prev <= *it - t) ? static_cast<std::size_t>(prev - ts.begin())
                                : static_cast<std::size_t>(it - ts.begin());
}

}  // namespace

StreamTables flatten_records(const std::vector<GazeRecord>& records) {
  StreamTables out;
  std::array<std::vector<std::size_t>, kGazeStreamCount> order;
  for (std::size_t i = 0; i < records.size(); ++i)
    order[static_cast<std::size_t>(static_cast<int>(records[i].stream))]
        .push_back(i);

  for (int s = 0; s < kGazeStreamCount; ++s) {
    auto& idx = order[static_cast<std::size_t>(s)];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return records[a].t < records[b].t;
    });
    StreamTable& tab = out[static_cast<std::size_t>(s)];
    const auto width =
        static_cast<int>(stream_schema(static_cast<GazeStream>(s)).size());
    tab.values = Matrix<double>(static_cast<int>(idx.size()), width);
    tab.t.reserve(idx.size());
    tab.confidence.reserve(idx.size());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const GazeRecord& rec = records[idx[r]];
      tab.t.push_back(rec.t);
      tab.confidence.push_back(rec.confidence);
      std::copy(rec.payload.begin(), rec.payload.end(),
                tab.values.row(static_cast<int>(r)));
    }
  }
  return out;
}

GazeTable align_to_reference(const StreamTables& streams) {
  const StreamTable& ref =
      streams[static_cast<std::size_t>(static_cast<int>(GazeStream::pupil_eye0_2d))];
  if (ref.t.empty())
    throw FormatError("align_to_reference: empty reference stream");

  const auto n = static_cast<int>(ref.t.size());
  GazeTable out;
  out.timestamps = ref.t;
  out.values = Matrix<double>(n, kGazeFeatureCount);
  out.values.fill(0.0);
  out.valid = Matrix<std::uint8_t>(n, kGazeFeatureCount);
  out.valid.fill(0);
  out.stream_confidence = Matrix<double>(n, kGazeStreamCount);
  out.stream_confidence.fill(1.0);

  auto put_row = [&](int ref_row, GazeStream s, const StreamTable& tab,
                     std::size_t src_row) {
    const int off = gaze_feature_offset(s);
    const int width = tab.values.cols;
    const double* src = tab.values.row(static_cast<int>(src_row));
    for (int j = 0; j < width; ++j) {
      out.values(ref_row, off + j) = src[j];
      out.valid(ref_row, off + j) = 1;
    }
    out.stream_confidence(ref_row, static_cast<int>(s)) =
        tab.confidence[src_row];
  };

  // Pupil and gaze streams: nearest-timestamp join.
  for (GazeStream s : {GazeStream::pupil_eye0_2d, GazeStream::pupil_eye0_3d,
                       GazeStream::pupil_eye1_2d, GazeStream::pupil_eye1_3d,
                       GazeStream::gaze}) {
    const StreamTable& tab = streams[static_cast<std::size_t>(static_cast<int>(s))];
    if (tab.t.empty()) continue;
    for (int i = 0; i < n; ++i)
      put_row(i, s, tab, nearest_index(tab.t, ref.t[static_cast<std::size_t>(i)]));
  }

  // Fixations cover [start, start + duration].
  {
    const StreamTable& tab =
        streams[static_cast<std::size_t>(static_cast<int>(GazeStream::fixation))];
    const auto& schema = stream_schema(GazeStream::fixation);
    const auto dur_idx = static_cast<int>(
        std::find(schema.begin(), schema.end(), "fixation_duration") -
        schema.begin());
    for (std::size_t r = 0; r < tab.t.size(); ++r) {
      const double start = tab.t[r];
      const double end = start + tab.values(static_cast<int>(r), dur_idx);
      auto lo = std::lower_bound(ref.t.begin(), ref.t.end(), start);
      for (auto it = lo; it != ref.t.end() && *it <= end; ++it)
        put_row(static_cast<int>(it - ref.t.begin()), GazeStream::fixation, tab, r);
    }
  }

  // Blink events cover their nearest reference row.
  {
    const StreamTable& tab =
        streams[static_cast<std::size_t>(static_cast<int>(GazeStream::blink))];
    for (std::size_t r = 0; r < tab.t.size(); ++r)
      put_row(static_cast<int>(nearest_index(ref.t, tab.t[r])),
              GazeStream::blink, tab, r);
  }
  return out;
}

void mask_low_confidence(GazeTable& table, double threshold) {
  const auto n = static_cast<int>(table.length());
  for (int s = 0; s < kGazeStreamCount; ++s) {
    const int off = gaze_feature_offset(static_cast<GazeStream>(s));
    const auto width =
        static_cast<int>(stream_schema(static_cast<GazeStream>(s)).size());
    for (int i = 0; i < n; ++i) {
      if (table.stream_confidence(i, s) < threshold)
        for (int j = 0; j < width; ++j) table.valid(i, off + j) = 0;
    }
  }
}

std::vector<double> hampel(const std::vector<double>& x,
                           const std::vector<std::uint8_t>& valid, double fs,
                           double window_ms, double k) {
  if (x.size() != valid.size())
    throw ParamError("hampel: series and validity lengths differ");
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const auto half = std::max<std::ptrdiff_t>(
      1, static_cast<std::ptrdiff_t>(std::lround(window_ms * fs / 1000.0 / 2.0)));

  std::vector<double> out = x;
  std::vector<double> buf, dev;
  buf.reserve(static_cast<std::size_t>(2 * half + 1));
  dev.reserve(static_cast<std::size_t>(2 * half + 1));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!valid[static_cast<std::size_t>(i)]) continue;
    buf.clear();
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min(n - 1, i + half);
    for (std::ptrdiff_t j = lo; j <= hi; ++j)
      if (valid[static_cast<std::size_t>(j)])
        buf.push_back(x[static_cast<std::size_t>(j)]);
    const double m = median_of(buf);
    dev.clear();
    for (double v : buf) dev.push_back(std::abs(v - m));
    const double mad = median_of(dev);
    if (std::abs(x[static_cast<std::size_t>(i)] - m) > k * mad)
      out[static_cast<std::size_t>(i)] = m;
  }
  return out;
}

std::vector<double> median_smooth(const std::vector<double>& x,
                                  const std::vector<std::uint8_t>& valid,
                                  int window) {
  if (window < 1 || window % 2 == 0)
    throw ParamError("median_smooth: window must be odd and >= 1");
  if (x.size() != valid.size())
    throw ParamError("median_smooth: series and validity lengths differ");
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  const std::ptrdiff_t half = window / 2;

  std::vector<double> out = x;
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(window));
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (!valid[static_cast<std::size_t>(i)]) continue;
    buf.clear();
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half);
    const std::ptrdiff_t hi = std::min(n - 1, i + half);
    for (std::ptrdiff_t j = lo; j <= hi; ++j)
      if (valid[static_cast<std::size_t>(j)])
        buf.push_back(x[static_cast<std::size_t>(j)]);
    out[static_cast<std::size_t>(i)] = median_of(buf);
  }
  return out;
}

NormParams fit_zscore_masked(const Matrix<double>& X,
                             const Matrix<std::uint8_t>& valid) {
  if (X.rows != valid.rows || X.cols != valid.cols)
    throw ParamError("fit_zscore_masked: shape mismatch");
  NormParams p;
  p.mean.assign(static_cast<std::size_t>(X.cols), 0.0);
  p.stddev.assign(static_cast<std::size_t>(X.cols), 0.0);
  std::vector<std::int64_t> count(static_cast<std::size_t>(X.cols), 0);
  for (int i = 0; i < X.rows; ++i)
    for (int j = 0; j < X.cols; ++j)
      if (valid(i, j)) {
        p.mean[static_cast<std::size_t>(j)] += X(i, j);
        ++count[static_cast<std::size_t>(j)];
      }
  for (int j = 0; j < X.cols; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    if (count[ju] > 0) p.mean[ju] /= static_cast<double>(count[ju]);
  }
  for (int i = 0; i < X.rows; ++i)
    for (int j = 0; j < X.cols; ++j)
      if (valid(i, j)) {
        const double d = X(i, j) - p.mean[static_cast<std::size_t>(j)];
        p.stddev[static_cast<std::size_t>(j)] += d * d;
      }
  for (int j = 0; j < X.cols; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    p.stddev[ju] = count[ju] > 0
                       ? std::sqrt(p.stddev[ju] / static_cast<double>(count[ju]))
                       : 0.0;
    if (p.stddev[ju] < kStdFloor) p.stddev[ju] = kStdFloor;
  }
  return p;
}

void impute_ffill_bfill_zero(Matrix<double>& X, Matrix<std::uint8_t>& valid) {
  if (X.rows != valid.rows || X.cols != valid.cols)
    throw ParamError("impute: shape mismatch");
  for (int j = 0; j < X.cols; ++j) {
    int first_valid = -1;
    double last = 0.0;
    bool have_last = false;
    for (int i = 0; i < X.rows; ++i) {
      if (valid(i, j)) {
        if (first_valid < 0) first_valid = i;
        last = X(i, j);
        have_last = true;
      } else if (have_last) {
        X(i, j) = last;
      }
    }
    if (first_valid > 0) {
      const double head = X(first_valid, j);
      for (int i = 0; i < first_valid; ++i) X(i, j) = head;
    } else if (first_valid < 0) {
      for (int i = 0; i < X.rows; ++i) X(i, j) = 0.0;
    }
    for (int i = 0; i < X.rows; ++i) valid(i, j) = 1;
  }
}

GazeTable clean_gaze(const std::vector<GazeRecord>& records,
                     const GazePreprocessOptions& opt) {
  GazeTable table = align_to_reference(flatten_records(records));
  mask_low_confidence(table, opt.confidence_threshold);

  const auto n = static_cast<int>(table.length());
  std::vector<double> col(static_cast<std::size_t>(n));
  std::vector<std::uint8_t> colv(static_cast<std::size_t>(n));
  for (int j = 0; j < kGazeFeatureCount; ++j) {
    for (int i = 0; i < n; ++i) {
      col[static_cast<std::size_t>(i)] = table.values(i, j);
      colv[static_cast<std::size_t>(i)] = table.valid(i, j);
    }
    auto h = hampel(col, colv, opt.fs, opt.hampel_window_ms, opt.hampel_k);
    auto s = median_smooth(h, colv, opt.median_window);
    for (int i = 0; i < n; ++i) table.values(i, j) = s[static_cast<std::size_t>(i)];
  }
  return table;
}

namespace {

GazeTable preprocess_gaze_impl(const std::vector<GazeRecord>& records,
                               const NormParams* norm,
                               const GazePreprocessOptions& opt) {
  GazeTable table = clean_gaze(records, opt);
  NormParams fitted;
  if (norm == nullptr) {
    fitted = fit_zscore_masked(table.values, table.valid);
    norm = &fitted;
  }
  apply_zscore_inplace(table.values, *norm);
  impute_ffill_bfill_zero(table.values, table.valid);
  return table;
}

}  // namespace

GazeTable preprocess_gaze(const std::vector<GazeRecord>& records,
                          const GazePreprocessOptions& opt) {
  return preprocess_gaze_impl(records, nullptr, opt);
}

GazeTable preprocess_gaze(const std::vector<GazeRecord>& records,
                          const NormParams& norm,
                          const GazePreprocessOptions& opt) {
  return preprocess_gaze_impl(records, &norm, opt);
}

}  // namespace refrakt
