#include "refrakt/sigproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace refrakt {

const std::vector<std::string>& eog_feature_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const char* c : kEogChannelNames) out.emplace_back(c);
    for (const char* c : kEogChannelNames) out.push_back(std::string(c) + "_diff");
    return out;
  }();
  return names;
}

std::vector<double> interpolate_outliers(const std::vector<double>& x,
                                         double k) {
  const std::size_t n = x.size();
  if (n < 2) throw ParamError("interpolate_outliers: need at least 2 samples");

  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double thresh = k * std::sqrt(var);

  std::vector<char> bad(n, 0);
  std::size_t n_bad = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(x[i] - mean) > thresh) {
      bad[i] = 1;
      ++n_bad;
    }
  }
  if (n_bad == n) throw FormatError("degenerate series");
  if (n_bad == 0) return x;

  std::vector<double> out = x;
  std::size_t i = 0;
  while (i < n) {
    if (!bad[i]) {
      ++i;
      continue;
    }
    std::size_t run_end = i;
    while (run_end + 1 < n && bad[run_end + 1]) ++run_end;
    const bool has_left = i > 0;
    const bool has_right = run_end + 1 < n;
    if (has_left && has_right) {
      const double xl = out[i - 1], xr = out[run_end + 1];
      const double span = static_cast<double>(run_end + 2 - i);
      for (std::size_t j = i; j <= run_end; ++j) {
        const double f = static_cast<double>(j - i + 1) / span;
        out[j] = xl + f * (xr - xl);
      }
    } else {
      const double v = has_left ? out[i - 1] : out[run_end + 1];
      for (std::size_t j = i; j <= run_end; ++j) out[j] = v;
    }
    i = run_end + 1;
  }
  return out;
}

std::vector<double> taper_ramp(const std::vector<double>& x, double fs,
                               double ramp_s) {
  const std::size_t n = x.size();
  const auto n_ramp =
      static_cast<std::size_t>(std::ceil(ramp_s * fs));
  if (n <= 2 * n_ramp)
    throw ParamError("taper_ramp: series shorter than two taper ramps");
  std::vector<double> out = x;
  for (std::size_t i = 0; i < n_ramp; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(n_ramp));
    out[i] *= w;
    out[n - 1 - i] *= w;
  }
  return out;
}

std::vector<double> remove_dc(const std::vector<double>& x) {
  if (x.empty()) throw ParamError("remove_dc: empty series");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - mean;
  return out;
}

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

// DF2T steady state for unit input: zi = (I - A)^{-1} B with
// A = [[-a1, 1], [-a2, 0]], B = [b1 - a1*b0, b2 - a2*b0].
std::array<double, 2> steady_state(const Biquad& q) {
  const double m00 = 1.0 + q.a1, m01 = -1.0;
  const double m10 = q.a2, m11 = 1.0;
  const double r0 = q.b1 - q.a1 * q.b0;
  const double r1 = q.b2 - q.a2 * q.b0;
  const double det = m00 * m11 - m01 * m10;
  return {(r0 * m11 - m01 * r1) / det, (m00 * r1 - r0 * m10) / det};
}

std::array<Biquad, 2> butter4_lowpass(double fs, double cutoff) {
  const double K = std::tan(std::numbers::pi * cutoff / fs);
  std::array<Biquad, 2> out{};
  for (int j = 0; j < 2; ++j) {
    const double q =
        1.0 / (2.0 * std::sin((2.0 * j + 1.0) * std::numbers::pi / 8.0));
    const double d = K * K + K / q + 1.0;
    Biquad& s = out[static_cast<std::size_t>(j)];
    s.b0 = K * K / d;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (K * K - 1.0) / d;
    s.a2 = (K * K - K / q + 1.0) / d;
  }
  return out;
}

void sos_forward(const std::array<Biquad, 2>& sos, std::vector<double>& x) {
  for (const Biquad& q : sos) {
    auto z = steady_state(q);
    double z1 = z[0] * x[0], z2 = z[1] * x[0];
    for (double& v : x) {
      const double y = q.b0 * v + z1;
      z1 = q.b1 * v - q.a1 * y + z2;
      z2 = q.b2 * v - q.a2 * y;
      v = y;
    }
  }
}

}  // namespace

std::vector<double> lowpass(const std::vector<double>& x, double fs,
                            double cutoff) {
  if (!(cutoff > 0.0) || cutoff >= fs / 2.0)
    throw ParamError("lowpass: cutoff must lie in (0, fs/2)");
  const std::size_t n = x.size();
  if (n < 2) return x;

  const auto sos = butter4_lowpass(fs, cutoff);
  const std::size_t pad = std::min<std::size_t>(24, n - 1);

  // Odd extension at both ends, as in forward-backward filtering practice.
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i)
    ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  sos_forward(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sos_forward(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> detrend_linear(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2) throw ParamError("detrend_linear: need at least 2 samples");
  const double tbar = static_cast<double>(n - 1) / 2.0;
  double xbar = 0.0;
  for (double v : x) xbar += v;
  xbar /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = static_cast<double>(i) - tbar;
    num += dt * (x[i] - xbar);
    den += dt * dt;
  }
  const double slope = num / den;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] - (xbar + slope * (static_cast<double>(i) - tbar));
  return out;
}

std::vector<double> differentiate(const std::vector<double>& x) {
  if (x.empty()) throw ParamError("differentiate: empty series");
  std::vector<double> out(x.size());
  out[0] = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) out[i] = x[i] - x[i - 1];
  return out;
}

NormParams fit_zscore(const Matrix<double>& X) {
  if (X.rows < 2) throw ParamError("fit_zscore: need at least 2 rows");
  NormParams p;
  p.mean.assign(static_cast<std::size_t>(X.cols), 0.0);
  p.stddev.assign(static_cast<std::size_t>(X.cols), 0.0);
  for (int i = 0; i < X.rows; ++i) {
    const double* row = X.row(i);
    for (int j = 0; j < X.cols; ++j)
      p.mean[static_cast<std::size_t>(j)] += row[j];
  }
  for (double& m : p.mean) m /= static_cast<double>(X.rows);
  for (int i = 0; i < X.rows; ++i) {
    const double* row = X.row(i);
    for (int j = 0; j < X.cols; ++j) {
      const double d = row[j] - p.mean[static_cast<std::size_t>(j)];
      p.stddev[static_cast<std::size_t>(j)] += d * d;
    }
  }
  for (double& s : p.stddev) {
    s = std::sqrt(s / static_cast<double>(X.rows));
    if (s < kStdFloor) s = kStdFloor;
  }
  return p;
}

void apply_zscore_inplace(Matrix<double>& X, const NormParams& p) {
  if (X.cols != p.cols())
    throw ParamError("apply_zscore: matrix has " + std::to_string(X.cols) +
                     " columns, params have " + std::to_string(p.cols()));
  for (int i = 0; i < X.rows; ++i) {
    double* row = X.row(i);
    for (int j = 0; j < X.cols; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      row[j] = (row[j] - p.mean[ju]) / p.stddev[ju];
    }
  }
}

Matrix<double> apply_zscore(const Matrix<double>& X, const NormParams& p) {
  Matrix<double> out = X;
  apply_zscore_inplace(out, p);
  return out;
}

std::vector<double> filter_eog_channel(const std::vector<double>& x,
                                       const EogPreprocessOptions& opt) {
  struct Stage {
    const char* name;
    std::vector<double> (*fn)(const std::vector<double>&,
                              const EogPreprocessOptions&);
  };
  static constexpr std::array<Stage, 5> stages = {{
      {"interpolate_outliers",
       [](const std::vector<double>& v, const EogPreprocessOptions& o) {
         return interpolate_outliers(v, o.outlier_k);
       }},
      {"taper_ramp",
       [](const std::vector<double>& v, const EogPreprocessOptions& o) {
         return taper_ramp(v, o.fs, o.ramp_s);
       }},
      {"remove_dc",
       [](const std::vector<double>& v, const EogPreprocessOptions&) {
         return remove_dc(v);
       }},
      {"lowpass",
       [](const std::vector<double>& v, const EogPreprocessOptions& o) {
         return lowpass(v, o.fs, o.cutoff_hz);
       }},
      {"detrend_linear",
       [](const std::vector<double>& v, const EogPreprocessOptions&) {
         return detrend_linear(v);
       }},
  }};
  std::vector<double> cur = x;
  for (const Stage& st : stages) {
    try {
      cur = st.fn(cur, opt);
    } catch (const std::exception& e) {
      throw FormatError(std::string("stage ") + st.name + ": " + e.what());
    }
  }
  return cur;
}

namespace {

EogFeatureMatrix preprocess_eog_impl(const EogRecording& rec,
                                     const NormParams* norm,
                                     const EogPreprocessOptions& opt) {
  const auto n = rec.length();
  Matrix<double> filtered(static_cast<int>(n), 4);
  for (int c = 0; c < 4; ++c) {
    auto col = filter_eog_channel(rec.channels[static_cast<std::size_t>(c)], opt);
    for (std::size_t i = 0; i < n; ++i)
      filtered(static_cast<int>(i), c) = col[i];
  }
  NormParams fitted;
  if (norm == nullptr) {
    fitted = fit_zscore(filtered);
    norm = &fitted;
  }
  apply_zscore_inplace(filtered, *norm);

  EogFeatureMatrix out;
  out.timestamps = rec.timestamps;
  out.values = Matrix<double>(static_cast<int>(n), kEogFeatureCount);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 4; ++c)
      out.values(static_cast<int>(i), c) = filtered(static_cast<int>(i), c);
  for (int c = 0; c < 4; ++c) {
    out.values(0, 4 + c) = 0.0;
    for (std::size_t i = 1; i < n; ++i)
      out.values(static_cast<int>(i), 4 + c) =
          filtered(static_cast<int>(i), c) -
          filtered(static_cast<int>(i) - 1, c);
  }
  return out;
}

}  // namespace

EogFeatureMatrix preprocess_eog(const EogRecording& rec,
                                const EogPreprocessOptions& opt) {
  return preprocess_eog_impl(rec, nullptr, opt);
}

EogFeatureMatrix preprocess_eog(const EogRecording& rec,
                                const NormParams& norm,
                                const EogPreprocessOptions& opt) {
  return preprocess_eog_impl(rec, &norm, opt);
}

}  // namespace refrakt
