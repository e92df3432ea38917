#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "refrakt/evalharness.hpp"

namespace refrakt {

/// One evaluation run: dataset, protocol, modality and training budget.
/// Round-trips losslessly through its JSON form.
struct ExperimentConfig {
  std::string dataset;
  std::string modality = "multimodal";   // eog | gaze | multimodal
  std::string scenario = "dependent";    // dependent | independent
  std::string out = ".";
  bool shuffle_labels = false;
  TrainConfig train;

  void validate() const;
};

std::string experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const std::string& text);

/// Loads and preprocesses every subject listed in the dataset manifest.
std::vector<SubjectBundle> load_and_preprocess(
    const std::filesystem::path& dataset);

/// Scenario-driven evaluation over the whole dataset. Writes
/// fold_results.jsonl and summary.csv into cfg.out and returns the results.
std::vector<FoldResult> run_eval(const ExperimentConfig& cfg);

/// run_manifest.json: command, the config used, and an FNV-1a content hash
/// per artifact. Reruns with the same config reproduce the hashes.
void write_run_manifest(const std::filesystem::path& out_dir,
                        const std::string& command,
                        const std::string& config_json,
                        const std::vector<std::filesystem::path>& artifacts);

}  // namespace refrakt
