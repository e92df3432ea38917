#pragma once

#include <array>
#include <string>
#include <vector>

#include "refrakt/datamodel.hpp"
#include "refrakt/errors.hpp"
#include "refrakt/matrix.hpp"

namespace refrakt {

/// Per-column z-score parameters, fit on training rows only.
struct NormParams {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at kStdFloor

  int cols() const { return static_cast<int>(mean.size()); }

  bool operator==(const NormParams&) const = default;
};

inline constexpr double kStdFloor = 1e-8;

/// The 8 EOG feature columns: 4 normalized channels + their differentials.
inline constexpr int kEogFeatureCount = 8;
const std::vector<std::string>& eog_feature_names();

struct EogFeatureMatrix {
  std::vector<double> timestamps;
  Matrix<double> values;  // length x 8
};

// --- series stages, applied per channel in this order ---

/// Replaces samples beyond k standard deviations from the mean by linear
/// interpolation between the nearest inliers. Mean/std are computed once on
/// the raw series. Throws FormatError("degenerate series") when every sample
/// is flagged.
std::vector<double> interpolate_outliers(const std::vector<double>& x,
                                         double k = 3.0);

/// Tukey taper: the first and last ceil(ramp_s*fs) samples are scaled by the
/// rising/falling halves of a Hann window.
std::vector<double> taper_ramp(const std::vector<double>& x, double fs,
                               double ramp_s = 0.5);

std::vector<double> remove_dc(const std::vector<double>& x);

/// Zero-phase low-pass: 4th-order Butterworth applied forward-backward.
std::vector<double> lowpass(const std::vector<double>& x, double fs = 512.0,
                            double cutoff = 50.0);

std::vector<double> detrend_linear(const std::vector<double>& x);

/// d[0] = 0; d[i] = x[i] - x[i-1].
std::vector<double> differentiate(const std::vector<double>& x);

// --- normalization ---

/// Population std (divide by N), floored at kStdFloor.
NormParams fit_zscore(const Matrix<double>& X);
void apply_zscore_inplace(Matrix<double>& X, const NormParams& p);
Matrix<double> apply_zscore(const Matrix<double>& X, const NormParams& p);

struct EogPreprocessOptions {
  double fs = 512.0;
  double cutoff_hz = 50.0;
  double ramp_s = 0.5;
  double outlier_k = 3.0;
};

/// Full chain: interpolate_outliers -> taper_ramp -> remove_dc -> lowpass ->
/// detrend_linear -> z-score, then differential columns appended from the
/// normalized channels (not re-normalized). The one-argument form fits the
/// normalization on the recording itself.
EogFeatureMatrix preprocess_eog(const EogRecording& rec,
                                const EogPreprocessOptions& opt = {});
EogFeatureMatrix preprocess_eog(const EogRecording& rec,
                                const NormParams& norm,
                                const EogPreprocessOptions& opt = {});

/// The five pre-normalization stages for one channel. Pipeline code fits the
/// z-score across segments per fold, so it needs the filtered-but-unnormalized
/// series.
std::vector<double> filter_eog_channel(const std::vector<double>& x,
                                       const EogPreprocessOptions& opt = {});

}  // namespace refrakt
