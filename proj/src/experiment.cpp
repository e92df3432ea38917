#include "refrakt/experiment.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "refrakt/reports.hpp"
#include "refrakt/rng.hpp"

namespace refrakt {

void ExperimentConfig::validate() const {
  if (dataset.empty()) throw ParamError("experiment: dataset not set");
  if (!modality_from_string(modality))
    throw ParamError("experiment: unknown modality '" + modality + "'");
  if (scenario != "dependent" && scenario != "independent")
    throw ParamError("experiment: unknown scenario '" + scenario + "'");
  train.validate();
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j{{"dataset", cfg.dataset},
                   {"modality", cfg.modality},
                   {"scenario", cfg.scenario},
                   {"out", cfg.out},
                   {"shuffle_labels", cfg.shuffle_labels},
                   {"train", nlohmann::json::parse(
                                 train_config_to_json(cfg.train))}};
  return j.dump(2);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad experiment config: " + std::string(e.what()));
  }
  ExperimentConfig cfg;
  try {
    cfg.dataset = j.at("dataset").get<std::string>();
    cfg.modality = j.at("modality").get<std::string>();
    cfg.scenario = j.at("scenario").get<std::string>();
    cfg.out = j.at("out").get<std::string>();
    cfg.shuffle_labels = j.at("shuffle_labels").get<bool>();
    cfg.train = train_config_from_json(j.at("train").dump());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad experiment config: " + std::string(e.what()));
  }
  return cfg;
}

std::vector<SubjectBundle> load_and_preprocess(
    const std::filesystem::path& dataset) {
  std::vector<SubjectBundle> bundles;
  for (const auto& id : list_subjects(dataset))
    bundles.push_back(preprocess_subject(load_subject(dataset / id), {}));
  return bundles;
}

std::vector<FoldResult> run_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  const Modality modality = *modality_from_string(cfg.modality);

  EvalConfig ec;
  ec.train = cfg.train;
  ec.shuffle_labels = cfg.shuffle_labels;

  const auto bundles = load_and_preprocess(cfg.dataset);
  std::vector<FoldResult> results;
  if (cfg.scenario == "dependent") {
    for (const auto& bundle : bundles) {
      auto folds = run_subject_dependent(bundle, modality, ec);
      results.insert(results.end(), folds.begin(), folds.end());
    }
  } else {
    results = run_loso(bundles, modality, ec);
  }

  const std::filesystem::path out_dir = cfg.out;
  std::filesystem::create_directories(out_dir);
  save_fold_results(results, out_dir / "fold_results.jsonl");
  save_summary_csv(results, out_dir / "summary.csv");
  write_run_manifest(out_dir, "eval", experiment_config_to_json(cfg),
                     {out_dir / "fold_results.jsonl", out_dir / "summary.csv"});
  return results;
}

void write_run_manifest(const std::filesystem::path& out_dir,
                        const std::string& command,
                        const std::string& config_json,
                        const std::vector<std::filesystem::path>& artifacts) {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = nlohmann::json::parse(config_json);
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& path : artifacts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot hash missing artifact " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(bytes)));
    hashes[path.filename().string()] = buf;
  }
  j["artifacts"] = hashes;
  std::ofstream out(out_dir / "run_manifest.json", std::ios::binary);
  if (!out) throw FormatError("cannot write run_manifest.json");
  out << j.dump(2) << "\n";
}

}  // namespace refrakt
