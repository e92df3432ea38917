#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "refrakt/experiment.hpp"
#include "refrakt/kernels.hpp"
#include "refrakt/num_io.hpp"
#include "refrakt/reports.hpp"
#include "refrakt/rng.hpp"
#include "refrakt/synthgen.hpp"

namespace {

using namespace refrakt;

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream body;
  body << in.rdbuf();
  return body.str();
}

// Train-budget flags shared by train and eval; only flags the user passed
// override the config file.
void add_train_flags(CLI::App* cmd, TrainConfig& tc) {
  cmd->add_option("--seed", tc.seed, "RNG seed");
  cmd->add_option("--window-len", tc.window_len, "window length in rows");
  cmd->add_option("--window-stride", tc.window_stride, "window stride in rows");
  cmd->add_option("--epochs", tc.epochs, "training epochs");
  cmd->add_option("--batch", tc.batch_size, "mini-batch size");
  cmd->add_option("--hidden", tc.hidden, "LSTM hidden size");
  cmd->add_option("--layers", tc.layers, "LSTM layer count");
  cmd->add_option("--lr", tc.lr0, "initial learning rate");
  cmd->add_option("--dropout", tc.dropout, "dropout rate");
}

// A shortened --epochs would strand the default decay milestones past the
// last epoch; drop the ones that no longer fit.
void clamp_milestones(TrainConfig& tc) {
  std::erase_if(tc.milestones, [&](int m) { return m >= tc.epochs; });
}

int run(int argc, char** argv) {
  CLI::App app{
      "refrakt: refractive-power classification from EOG and eye tracking"};
  app.require_subcommand(1);

  // synth ------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_out;
  int subjects = 4;
  double class_effect = 3.0, confound = 0.0;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", synth_out, "dataset directory")->required();
  synth->add_option("--subjects", subjects, "subject count");
  synth->add_option("--class-effect", class_effect, "class effect scale");
  synth->add_option("--confound", confound, "subject confound scale");
  synth->add_option("--seed", synth_seed, "dataset seed");

  // shared experiment options ----------------------------------------------
  ExperimentConfig cfg;
  std::string config_path;

  auto add_experiment_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config JSON");
    cmd->add_option("--dataset", cfg.dataset, "dataset directory");
    cmd->add_option("--modality", cfg.modality, "eog | gaze | multimodal");
    cmd->add_option("--out", cfg.out, "output directory");
    add_train_flags(cmd, cfg.train);
  };

  // preprocess ---------------------------------------------------------------
  auto* preprocess =
      app.add_subcommand("preprocess", "emit normalized feature segments");
  add_experiment_flags(preprocess);

  // train --------------------------------------------------------------------
  auto* train_cmd =
      app.add_subcommand("train", "train one subject-dependent model");
  std::string train_subject;
  add_experiment_flags(train_cmd);
  train_cmd->add_option("--subject", train_subject,
                        "subject id (default: first in manifest)");

  // eval ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand(
      "eval", "scenario-driven evaluation: FoldResult JSONL + summary CSV");
  add_experiment_flags(eval_cmd);
  eval_cmd->add_option("--scenario", cfg.scenario, "dependent | independent");
  eval_cmd->add_flag("--shuffle-labels", cfg.shuffle_labels,
                     "shuffle training labels (chance calibration)");

  // stats ----------------------------------------------------------------
  auto* stats_cmd = app.add_subcommand(
      "stats", "stats report JSON from per-modality FoldResult files");
  std::vector<std::string> stats_inputs;
  std::string stats_out = "stats.json";
  int family = -1;
  stats_cmd->add_option("results", stats_inputs, "FoldResult JSONL files")
      ->required()
      ->expected(-1);
  stats_cmd->add_option("--family", family,
                        "Bonferroni family size (default: test count)");
  stats_cmd->add_option("--out", stats_out, "output JSON path");

  // report ---------------------------------------------------------------
  auto* report_cmd = app.add_subcommand(
      "report", "per-subject accuracy and confusion CSVs from FoldResults");
  std::vector<std::string> report_inputs;
  std::string report_out = ".";
  report_cmd->add_option("results", report_inputs, "FoldResult JSONL files")
      ->required()
      ->expected(-1);
  report_cmd->add_option("--out", report_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  // Config file first, then flags passed on the command line override it.
  if (!config_path.empty()) {
    ExperimentConfig from_file =
        experiment_config_from_json(read_text(config_path));
    for (auto* cmd : {preprocess, train_cmd, eval_cmd}) {
      if (cmd->parsed()) {
        auto keep = [&](const std::string& flag) {
          return cmd->count(flag) > 0;
        };
        if (!keep("--dataset")) cfg.dataset = from_file.dataset;
        if (!keep("--modality")) cfg.modality = from_file.modality;
        if (!keep("--out")) cfg.out = from_file.out;
        if (cmd == eval_cmd && !keep("--scenario"))
          cfg.scenario = from_file.scenario;
        if (cmd == eval_cmd && !keep("--shuffle-labels"))
          cfg.shuffle_labels = from_file.shuffle_labels;
        TrainConfig tc = from_file.train;
        if (keep("--seed")) tc.seed = cfg.train.seed;
        if (keep("--window-len")) tc.window_len = cfg.train.window_len;
        if (keep("--window-stride")) tc.window_stride = cfg.train.window_stride;
        if (keep("--epochs")) tc.epochs = cfg.train.epochs;
        if (keep("--batch")) tc.batch_size = cfg.train.batch_size;
        if (keep("--hidden")) tc.hidden = cfg.train.hidden;
        if (keep("--layers")) tc.layers = cfg.train.layers;
        if (keep("--lr")) tc.lr0 = cfg.train.lr0;
        if (keep("--dropout")) tc.dropout = cfg.train.dropout;
        cfg.train = tc;
      }
    }
  }
  clamp_milestones(cfg.train);

  if (synth->parsed()) {
    generate_dataset(synth_out, subjects, class_effect, confound, synth_seed);
    std::vector<std::filesystem::path> artifacts = {
        std::filesystem::path(synth_out) / "manifest.json"};
    for (const auto& id : list_subjects(synth_out))
      for (const char* name : {"eog.csv", "gaze.jsonl", "triggers.csv"})
        artifacts.push_back(std::filesystem::path(synth_out) / id / name);
    std::string config_json = "{\"out\":\"" + synth_out +
                              "\",\"subjects\":" + std::to_string(subjects) +
                              ",\"class_effect_scale\":" +
                              format_double(class_effect) +
                              ",\"confound_scale\":" + format_double(confound) +
                              ",\"seed\":" + std::to_string(synth_seed) + "}";
    write_run_manifest(synth_out, "synth", config_json, artifacts);
    std::cout << "wrote " << subjects << " subjects to " << synth_out << "\n";
    return 0;
  }

  if (preprocess->parsed()) {
    cfg.validate();
    const Modality modality = *modality_from_string(cfg.modality);
    std::filesystem::create_directories(cfg.out);
    std::vector<std::filesystem::path> artifacts;
    for (const auto& bundle : load_and_preprocess(cfg.dataset)) {
      std::vector<int> all(bundle.segments.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
      FoldData data = assemble_fold(bundle, all, {}, modality, {});
      for (const auto& seg : data.train_segments) {
        char name[64];
        std::snprintf(name, sizeof name, "%s_c%02d_s%d.csv",
                      seg.subject_id.c_str(), seg.label.index, seg.trial_slot);
        const auto path = std::filesystem::path(cfg.out) / name;
        save_feature_segment(seg, path);
        artifacts.push_back(path);
      }
    }
    write_run_manifest(cfg.out, "preprocess", experiment_config_to_json(cfg),
                       artifacts);
    std::cout << "wrote " << artifacts.size() << " feature segments to "
              << cfg.out << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    cfg.validate();
    const Modality modality = *modality_from_string(cfg.modality);
    const auto subjects_in_set = list_subjects(cfg.dataset);
    const std::string subject =
        train_subject.empty() ? subjects_in_set.front() : train_subject;
    const auto bundle = preprocess_subject(
        load_subject(std::filesystem::path(cfg.dataset) / subject), {});

    std::vector<int> all(bundle.segments.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    FoldData data = assemble_fold(bundle, all, {}, modality, {});
    auto pool = window_segments(data.train_segments, cfg.train.window_len,
                                cfg.train.window_stride);
    std::vector<WindowRef> tr, val;
    Rng split_rng(mix_seed(cfg.train.seed, 3));
    split_train_val(pool, split_rng, &tr, &val);
    auto result = train<float>(data.train_segments, tr, val, cfg.train);

    std::filesystem::create_directories(cfg.out);
    const auto ckpt = std::filesystem::path(cfg.out) / (subject + ".rfkt");
    save_checkpoint(result.best_model, cfg.train, ckpt);
    write_run_manifest(cfg.out, "train", experiment_config_to_json(cfg),
                       {ckpt, ckpt.string() + ".json"});
    std::cout << "best validation accuracy "
              << 100.0 * result.best_val_accuracy << "% at epoch "
              << result.best_epoch << "; checkpoint " << ckpt << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const auto results = run_eval(cfg);
    double mean = 0.0;
    for (const auto& r : results) mean += r.accuracy;
    mean /= results.empty() ? 1.0 : static_cast<double>(results.size());
    std::cout << results.size() << " folds, mean accuracy " << mean << "%\n";
    return 0;
  }

  if (stats_cmd->parsed()) {
    std::vector<ModalityResults> results;
    for (const auto& path : stats_inputs) {
      ModalityResults mr;
      mr.folds = load_fold_results(path);
      if (mr.folds.empty())
        throw FormatError("no fold results in " + path);
      mr.modality = mr.folds.front().modality;
      results.push_back(std::move(mr));
    }
    const auto lines = stats_report(results, 100.0 / 13.0, family);
    save_stat_lines_json(lines, stats_out);
    std::cout << "wrote " << lines.size() << " stat lines to " << stats_out
              << "\n";
    return 0;
  }

  if (report_cmd->parsed()) {
    std::filesystem::create_directories(report_out);
    std::vector<std::filesystem::path> artifacts;
    for (const auto& input : report_inputs) {
      const auto results = load_fold_results(input);
      if (results.empty()) throw FormatError("no fold results in " + input);
      const auto stem = std::filesystem::path(input).stem().string();
      const auto acc_path =
          std::filesystem::path(report_out) / (stem + "_subjects.csv");
      const auto conf_path =
          std::filesystem::path(report_out) / (stem + "_confusion.csv");
      save_subject_accuracy_csv(per_subject_accuracy(results), acc_path);
      save_confusion_csv(pooled_confusion(results), conf_path);
      artifacts.push_back(acc_path);
      artifacts.push_back(conf_path);
    }
    write_run_manifest(report_out, "report", "{}", artifacts);
    std::cout << "wrote " << artifacts.size() << " report files to "
              << report_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* threads = std::getenv("REFRAKT_THREADS"))
    refrakt::kernels::set_thread_count(std::max(1, std::atoi(threads)));
  try {
    return run(argc, argv);
  } catch (const refrakt::RefraktError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
