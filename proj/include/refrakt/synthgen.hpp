#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "refrakt/datamodel.hpp"
#include "refrakt/matrix.hpp"

namespace refrakt {

/// Knobs for one synthetic subject. class_effect_scale multiplies every
/// class-dependent signal component, so 0 means the labels carry no
/// information. confound_scale controls both literal per-channel offsets and
/// gains (which per-subject normalization removes) and how strongly the
/// subject's condition-to-effect-level mapping is scrambled relative to the
/// shared linear mapping (which it does not remove). The scramble weight is
/// confound_scale / (confound_scale + class_effect_scale).
struct SubjectProfile {
  std::string subject_id;
  std::uint64_t seed = 0;
  double class_effect_scale = 1.0;  // >= 0
  double confound_scale = 0.0;      // >= 0
  double noise_sd = 12.0;           // EOG white noise, microvolts; > 0
  double clock_offset_eog = 0.0;    // seconds
  double clock_offset_gaze = 0.0;   // seconds
  bool sign_symmetric = false;      // levels depend on |diopter| only
  double conf_dip_rate = 0.03;      // low-confidence bursts per second; >= 0

  void validate() const;
};

/// Effect levels per class, one row per effect group: 0 EOG oscillation
/// amplitude, 1 pupil diameter, 2 gaze dispersion. Values are a per-subject
/// permutation of the grid (c - 6) / 6; the identity permutation when
/// confound_scale is 0.
Matrix<double> class_levels(const SubjectProfile& profile);

struct SubjectData {
  EogRecording eog;
  std::vector<GazeRecord> gaze;
  TriggerLog triggers;
};

/// One full 13-condition session: per condition 8 alternating fixation (5 s)
/// and pursuit (1.43-2.92 s) trials with 1 s inter-trial intervals, then 40 s
/// of reading. EOG at 512 Hz, all 7 gaze streams at ~120 Hz, triggers on both
/// clocks with the profile's offsets.
SubjectData generate_subject(const SubjectProfile& profile);

/// Profiles derived deterministically from the dataset seed.
std::vector<SubjectProfile> derive_profiles(int n_subjects,
                                            double class_effect_scale,
                                            double confound_scale,
                                            std::uint64_t seed);

/// Writes one folder per subject (eog.csv, gaze.jsonl, triggers.csv) plus
/// manifest.json listing the subjects and knob values.
void generate_dataset(const std::filesystem::path& out_dir, int n_subjects,
                      double class_effect_scale, double confound_scale,
                      std::uint64_t seed);

}  // namespace refrakt
