#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refrakt/nn.hpp"
#include "refrakt/pipeline.hpp"

namespace refrakt {

struct Metrics {
  double accuracy = 0.0;           // percent
  double macro_f1 = 0.0;           // percent
  Matrix<std::int64_t> confusion;  // row: true label, col: predicted
};

/// Per-window metrics. A class absent from both labels and predictions
/// contributes an F1 of 0 to the macro mean over num_classes.
Metrics compute_metrics(const std::vector<int>& predicted,
                        const std::vector<int>& labels, int num_classes);

struct FoldResult {
  std::string subject_id;
  int fold_id = 0;
  Modality modality = Modality::multimodal;
  double accuracy = 0.0;  // percent
  double macro_f1 = 0.0;  // percent
  Matrix<std::int64_t> confusion;
  int n_test_windows = 0;
};

struct TrialFold {
  std::vector<int> train;  // segment indices into the bundle
  std::vector<int> test;
};

/// Slot-k-out folds: fold k tests the 13 segments with trial_slot k (one per
/// condition) and trains on the remaining slots. Throws FormatError when a
/// condition is missing a slot.
std::vector<TrialFold> build_trial_folds(const SubjectBundle& bundle);

/// Shuffles and splits: ceil(0.9 n) train windows, the rest validation.
void split_train_val(const std::vector<WindowRef>& windows, Rng& rng,
                     std::vector<WindowRef>* train, std::vector<WindowRef>* val);

struct EvalConfig {
  TrainConfig train;
  PipelineOptions pipeline;
  bool shuffle_labels = false;  // chance-calibration scenario
};

/// Retained per-fold state for leakage audits.
struct FoldArtifacts {
  NormParams eog_norm;
  NormParams gaze_norm;
  std::vector<int> train_idx;
  std::vector<int> test_idx;
};

/// Subject-dependent protocol: 8 slot-out folds, each fold fit/normalized on
/// its train segments, trained on a 90/10 window split, scored per window on
/// the held-out slot with the best-validation model.
std::vector<FoldResult> run_subject_dependent(
    const SubjectBundle& bundle, Modality modality, const EvalConfig& cfg,
    std::vector<FoldArtifacts>* artifacts = nullptr);

/// Leave-one-subject-out protocol over >= 3 subjects; one fold per held-out
/// subject.
std::vector<FoldResult> run_loso(const std::vector<SubjectBundle>& bundles,
                                 Modality modality, const EvalConfig& cfg);

}  // namespace refrakt
