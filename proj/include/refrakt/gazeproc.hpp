#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "refrakt/datamodel.hpp"
#include "refrakt/matrix.hpp"
#include "refrakt/sigproc.hpp"

namespace refrakt {

/// One stream's records in timestamp order, one row per record.
struct StreamTable {
  std::vector<double> t;
  std::vector<double> confidence;
  Matrix<double> values;  // rows x stream_schema(s).size()
};

using StreamTables = std::array<StreamTable, kGazeStreamCount>;

StreamTables flatten_records(const std::vector<GazeRecord>& records);

/// The 93-column feature table on the eye0 2D pupil timeline. Invalid cells
/// are marked, never silently zero; stream_confidence carries the source
/// row's confidence per stream for the masking stage.
struct GazeTable {
  std::vector<double> timestamps;
  Matrix<double> values;             // n x 93
  Matrix<std::uint8_t> valid;        // n x 93
  Matrix<double> stream_confidence;  // n x 7

  std::size_t length() const { return timestamps.size(); }
};

/// Pupil and gaze columns take the nearest source row; fixation columns are
/// filled where the reference time falls inside [start, start + duration];
/// blink events cover their nearest reference row.
GazeTable align_to_reference(const StreamTables& streams);

/// Invalidates a stream's columns on rows whose source confidence < threshold
/// (strict: exactly 0.5 is retained).
void mask_low_confidence(GazeTable& table, double threshold = 0.5);

/// Hampel despike over a centered time window. Valid samples deviating from
/// the windowed median by more than k times the raw MAD are replaced by that
/// median; invalid cells pass through. MAD = 0 keeps only exact-equal samples.
std::vector<double> hampel(const std::vector<double>& x,
                           const std::vector<std::uint8_t>& valid, double fs,
                           double window_ms = 100.0, double k = 3.0);

/// Centered median over valid samples, truncated at the edges. Window must be
/// odd.
std::vector<double> median_smooth(const std::vector<double>& x,
                                  const std::vector<std::uint8_t>& valid,
                                  int window);

/// fit_zscore over valid cells only; fully-invalid columns get mean 0 and the
/// std floor.
NormParams fit_zscore_masked(const Matrix<double>& X,
                             const Matrix<std::uint8_t>& valid);

/// Final imputation: per column, forward-fill, then backward-fill, then 0.
/// All cells are valid afterwards.
void impute_ffill_bfill_zero(Matrix<double>& X, Matrix<std::uint8_t>& valid);

struct GazePreprocessOptions {
  double fs = 120.0;
  double confidence_threshold = 0.5;
  double hampel_window_ms = 100.0;
  double hampel_k = 3.0;
  int median_window = 5;
};

/// Full chain: flatten -> align -> mask -> hampel -> median_smooth -> z-score
/// -> impute. Confidence columns are dropped from the output. The one-argument
/// form fits the normalization on the table itself.
GazeTable preprocess_gaze(const std::vector<GazeRecord>& records,
                          const GazePreprocessOptions& opt = {});
GazeTable preprocess_gaze(const std::vector<GazeRecord>& records,
                          const NormParams& norm,
                          const GazePreprocessOptions& opt = {});

/// The stages before normalization (flatten through median_smooth). Pipeline
/// code fits the z-score per fold on the cleaned table.
GazeTable clean_gaze(const std::vector<GazeRecord>& records,
                     const GazePreprocessOptions& opt = {});

}  // namespace refrakt
