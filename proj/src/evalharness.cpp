#include "refrakt/evalharness.hpp"

#include <algorithm>
#include <cmath>

namespace refrakt {

Metrics compute_metrics(const std::vector<int>& predicted,
                        const std::vector<int>& labels, int num_classes) {
  if (predicted.size() != labels.size())
    throw ParamError("compute_metrics: size mismatch");
  if (predicted.empty()) throw ParamError("compute_metrics: empty input");
  if (num_classes < 1) throw ParamError("compute_metrics: num_classes < 1");

  Metrics m;
  m.confusion = Matrix<std::int64_t>(num_classes, num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i];
    const int p = predicted[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
      throw ParamError("compute_metrics: label out of range");
    ++m.confusion(t, p);
  }

  std::int64_t correct = 0;
  for (int c = 0; c < num_classes; ++c) correct += m.confusion(c, c);
  m.accuracy = 100.0 * static_cast<double>(correct) /
               static_cast<double>(labels.size());

  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t tp = m.confusion(c, c), fp = 0, fn = 0;
    for (int o = 0; o < num_classes; ++o) {
      if (o == c) continue;
      fp += m.confusion(o, c);
      fn += m.confusion(c, o);
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom > 0.0) f1_sum += 2.0 * static_cast<double>(tp) / denom;
  }
  m.macro_f1 = 100.0 * f1_sum / static_cast<double>(num_classes);
  return m;
}

std::vector<TrialFold> build_trial_folds(const SubjectBundle& bundle) {
  constexpr int kFolds = 8;
  std::vector<TrialFold> folds(kFolds);
  for (int k = 0; k < kFolds; ++k) {
    std::vector<int> seen(DiopterClass::kCount, 0);
    for (std::size_t i = 0; i < bundle.segments.size(); ++i) {
      const auto& seg = bundle.segments[i];
      if (seg.trial_slot == k) {
        folds[static_cast<std::size_t>(k)].test.push_back(static_cast<int>(i));
        ++seen[static_cast<std::size_t>(seg.condition.index)];
      } else {
        folds[static_cast<std::size_t>(k)].train.push_back(static_cast<int>(i));
      }
    }
    for (int c = 0; c < DiopterClass::kCount; ++c)
      if (seen[static_cast<std::size_t>(c)] != 1)
        throw FormatError("missing slot " + std::to_string(k) +
                          " for diopter index " + std::to_string(c));
  }
  return folds;
}

void split_train_val(const std::vector<WindowRef>& windows, Rng& rng,
                     std::vector<WindowRef>* train,
                     std::vector<WindowRef>* val) {
  std::vector<WindowRef> shuffled = windows;
  rng.shuffle(shuffled);
  const auto n = shuffled.size();
  const auto n_train = (9 * n + 9) / 10;  // ceil(0.9 n)
  train->assign(shuffled.begin(),
                shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  val->assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train),
              shuffled.end());
}

namespace {

FoldResult run_one(const std::vector<FeatureSegment>& train_segments,
                   const std::vector<FeatureSegment>& test_segments,
                   const std::string& subject_id, int fold_id,
                   Modality modality, const EvalConfig& cfg,
                   std::uint64_t fold_seed) {
  TrainConfig tc = cfg.train;
  tc.seed = fold_seed;

  auto pool =
      window_segments(train_segments, tc.window_len, tc.window_stride);
  if (pool.empty())
    throw FormatError("no training windows for fold " +
                      std::to_string(fold_id) + " of " + subject_id);

  if (cfg.shuffle_labels) {
    Rng rng(mix_seed(fold_seed, 4));
    std::vector<DiopterClass> labels(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) labels[i] = pool[i].label;
    rng.shuffle(labels);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i].label = labels[i];
  }

  std::vector<WindowRef> train_windows, val_windows;
  Rng split_rng(mix_seed(fold_seed, 3));
  split_train_val(pool, split_rng, &train_windows, &val_windows);

  auto result = train<float>(train_segments, train_windows, val_windows, tc);

  auto test_windows =
      window_segments(test_segments, tc.window_len, tc.window_stride);
  if (test_windows.empty())
    throw FormatError("no test windows for fold " + std::to_string(fold_id) +
                      " of " + subject_id);
  auto preds = predict(result.best_model, test_segments, test_windows,
                       tc.window_len);

  std::vector<int> predicted(test_windows.size()), truth(test_windows.size());
  for (std::size_t i = 0; i < test_windows.size(); ++i) {
    predicted[i] = preds[i].label;
    truth[i] = test_windows[i].label.index;
  }
  const Metrics m = compute_metrics(predicted, truth, DiopterClass::kCount);

  FoldResult fr;
  fr.subject_id = subject_id;
  fr.fold_id = fold_id;
  fr.modality = modality;
  fr.accuracy = m.accuracy;
  fr.macro_f1 = m.macro_f1;
  fr.confusion = m.confusion;
  fr.n_test_windows = static_cast<int>(test_windows.size());
  return fr;
}

std::uint64_t fold_seed(const EvalConfig& cfg, const std::string& subject_id,
                        int fold_id) {
  return mix_seed(mix_seed(cfg.train.seed, fnv1a(subject_id)),
                  static_cast<std::uint64_t>(fold_id));
}

}  // namespace

std::vector<FoldResult> run_subject_dependent(
    const SubjectBundle& bundle, Modality modality, const EvalConfig& cfg,
    std::vector<FoldArtifacts>* artifacts) {
  const auto folds = build_trial_folds(bundle);
  std::vector<FoldResult> out;
  out.reserve(folds.size());
  for (std::size_t k = 0; k < folds.size(); ++k) {
    FoldData data = assemble_fold(bundle, folds[k].train, folds[k].test,
                                  modality, cfg.pipeline);
    out.push_back(run_one(data.train_segments, data.test_segments,
                          bundle.subject_id, static_cast<int>(k), modality,
                          cfg,
                          fold_seed(cfg, bundle.subject_id,
                                    static_cast<int>(k))));
    if (artifacts != nullptr)
      artifacts->push_back({std::move(data.eog_norm), std::move(data.gaze_norm),
                            folds[k].train, folds[k].test});
  }
  return out;
}

std::vector<FoldResult> run_loso(const std::vector<SubjectBundle>& bundles,
                                 Modality modality, const EvalConfig& cfg) {
  if (bundles.size() < 3)
    throw ParamError("run_loso: need at least 3 subjects");
  std::vector<FoldResult> out;
  out.reserve(bundles.size());
  for (std::size_t s = 0; s < bundles.size(); ++s) {
    LosoData data = assemble_loso(bundles, s, modality, cfg.pipeline);
    out.push_back(run_one(data.train_segments, data.test_segments,
                          bundles[s].subject_id, static_cast<int>(s), modality,
                          cfg,
                          fold_seed(cfg, bundles[s].subject_id,
                                    static_cast<int>(s))));
  }
  return out;
}

}  // namespace refrakt
