#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "refrakt/datamodel.hpp"
#include "refrakt/fusion.hpp"
#include "refrakt/gazeproc.hpp"
#include "refrakt/sigproc.hpp"

namespace refrakt {

struct SubjectRaw {
  std::string subject_id;
  EogRecording eog;
  std::vector<GazeRecord> gaze;
  TriggerLog triggers;
};

/// Loads <dir>/eog.csv, <dir>/gaze.jsonl and <dir>/triggers.csv; the folder
/// name is the subject id.
SubjectRaw load_subject(const std::filesystem::path& dir);

/// Subject ids listed in <root>/manifest.json.
std::vector<std::string> list_subjects(const std::filesystem::path& root);

struct PipelineOptions {
  EogPreprocessOptions eog;
  GazePreprocessOptions gaze;
};

/// The fold-independent preprocessing product for one subject: the cleaned
/// (unnormalized) gaze table plus, per trial segment, the filtered
/// (unnormalized) EOG and the gaze row ranges of its chunks. Fold-specific
/// normalization happens in assemble_fold / assemble_loso.
struct SubjectBundle {
  std::string subject_id;

  struct Chunk {
    std::vector<double> eog_rel_t;  // seconds since the chunk's task start
    Matrix<double> eog;             // rows x 4, filtered but unnormalized
    int gaze_begin = 0;             // row range in the cleaned gaze table;
    int gaze_end = 0;               // clipped to the EOG time coverage
    std::vector<double> gaze_rel_t;
    double rel_offset = 0.0;        // shift applied when chunks concatenate
  };

  struct Segment {
    DiopterClass condition;
    int trial_slot = 0;
    std::array<Chunk, 3> chunks;  // fixation, pursuit, reading part
  };

  GazeTable gaze;  // cleaned, validity marked, unnormalized
  std::vector<Segment> segments;
};

/// Runs outlier interpolation, taper, DC removal, low-pass and detrending on
/// the EOG per chunk, and the gaze cleaning chain (align, mask, hampel,
/// median) once per subject.
SubjectBundle preprocess_subject(const SubjectRaw& raw,
                                 const PipelineOptions& opt = {});

/// One fold's fully normalized feature segments. Normalization is fit on the
/// train segments' rows only; the params are retained for leakage audits.
struct FoldData {
  std::vector<FeatureSegment> train_segments;
  std::vector<FeatureSegment> test_segments;
  NormParams eog_norm;
  NormParams gaze_norm;
};

/// Subject-dependent assembly: fit z-score on train rows, apply everywhere,
/// differentiate EOG per chunk, resample EOG onto the gaze timeline, impute
/// gaze per segment, select/fuse columns per modality.
FoldData assemble_fold(const SubjectBundle& bundle,
                       const std::vector<int>& train_idx,
                       const std::vector<int>& test_idx, Modality modality,
                       const PipelineOptions& opt = {});

/// LOSO assembly: every subject (including the held-out one) is first
/// z-scored on its own rows; a second normalization is fit on the training
/// subjects' aggregated rows and applied to everyone. The stage-2 params are
/// retained for audits.
struct LosoData {
  std::vector<FeatureSegment> train_segments;  // all training subjects
  std::vector<FeatureSegment> test_segments;   // the held-out subject
  NormParams eog_norm;                         // stage-2 params
  NormParams gaze_norm;
};

LosoData assemble_loso(const std::vector<SubjectBundle>& bundles,
                       std::size_t held_out, Modality modality,
                       const PipelineOptions& opt = {});

/// Recomputes the subject-dependent fold NormParams from training rows alone
/// (the leakage audit's independent path).
std::pair<NormParams, NormParams> fit_fold_norms(
    const SubjectBundle& bundle, const std::vector<int>& train_idx);

}  // namespace refrakt
