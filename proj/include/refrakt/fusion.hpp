#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refrakt/datamodel.hpp"
#include "refrakt/matrix.hpp"

namespace refrakt {

enum class Modality { eog, gaze, multimodal };

std::string_view to_string(Modality m);
std::optional<Modality> modality_from_string(std::string_view name);

/// 8, 93 or 101.
int modality_feature_count(Modality m);
const std::vector<std::string>& modality_feature_names(Modality m);

/// One trial segment's features on trigger-relative time.
struct FeatureSegment {
  std::string subject_id;
  DiopterClass label;
  int trial_slot = 0;
  Modality modality = Modality::eog;
  std::vector<double> rel_t;  // seconds since the task-start trigger
  Matrix<double> values;      // |rel_t| x modality_feature_count
};

std::vector<double> relative_time(const std::vector<double>& timestamps,
                                  double task_start);

/// Linear interpolation of each column onto target_rel_t. Targets outside the
/// source span raise "extrapolation required"; targets exactly on a source
/// timestamp pass the value through bit-exactly.
Matrix<double> resample_linear(const std::vector<double>& src_rel_t,
                               const Matrix<double>& src,
                               const std::vector<double>& target_rel_t);

/// Column concatenation, EOG's 8 columns first. Relative timestamps must
/// match within 1e-9 s; label, slot and subject must match.
FeatureSegment fuse(const FeatureSegment& eog_seg,
                    const FeatureSegment& gaze_seg);

/// CSV with header `rel_t,<feature names…>` plus a sidecar JSON
/// `{subject, diopter, trial_slot, modality}` next to it (.json extension).
void save_feature_segment(const FeatureSegment& seg,
                          const std::filesystem::path& csv_path);
FeatureSegment load_feature_segment(const std::filesystem::path& csv_path);

}  // namespace refrakt
