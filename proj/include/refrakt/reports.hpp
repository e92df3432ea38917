#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "refrakt/evalharness.hpp"

namespace refrakt {

/// FoldResult JSONL: one object per line, fixed key order, shortest
/// round-trip float formatting (byte-stable across runs).
void save_fold_results(const std::vector<FoldResult>& results,
                       const std::filesystem::path& path);
std::vector<FoldResult> load_fold_results(const std::filesystem::path& path);

/// CSV `subject,fold,accuracy,macro_f1`.
void save_summary_csv(const std::vector<FoldResult>& results,
                      const std::filesystem::path& path);

struct SubjectAccuracy {
  std::string subject_id;
  int n_folds = 0;
  double mean_accuracy = 0.0;  // percent
  double sem = 0.0;            // over folds
  double sd = 0.0;             // sample SD over folds
};

/// Per-subject fold means, subjects in first-appearance order.
std::vector<SubjectAccuracy> per_subject_accuracy(
    const std::vector<FoldResult>& results);

/// CSV `subject,n_folds,mean_accuracy,sem,sd`.
void save_subject_accuracy_csv(const std::vector<SubjectAccuracy>& rows,
                               const std::filesystem::path& path);

/// Confusion counts summed over folds.
Matrix<std::int64_t> pooled_confusion(const std::vector<FoldResult>& results);

/// CSV with diopter row/column labels, row = true class.
void save_confusion_csv(const Matrix<std::int64_t>& confusion,
                        const std::filesystem::path& path);

/// One row of the stats report.
struct StatLine {
  std::string test;        // shapiro_wilk | friedman | wilcoxon
  std::string comparison;  // e.g. "eog vs multimodal"
  double statistic = 0.0;
  double p = 0.0;
  double p_adjusted = 0.0;
};

struct ModalityResults {
  Modality modality = Modality::multimodal;
  std::vector<FoldResult> folds;
};

/// The Tables-3/5-style report over per-subject mean accuracies: Shapiro-Wilk
/// per modality, the Friedman omnibus, and Wilcoxon tests pairwise between
/// modalities and against the chance level, Bonferroni-adjusted with family
/// size m (defaults to the number of Wilcoxon tests when m < 0). Tests whose
/// preconditions fail (too few subjects, degenerate samples) are omitted.
std::vector<StatLine> stats_report(const std::vector<ModalityResults>& results,
                                   double chance_percent = 100.0 / 13.0,
                                   int family = -1);

/// JSON array of {test, comparison, statistic, p, p_adjusted}.
void save_stat_lines_json(const std::vector<StatLine>& lines,
                          const std::filesystem::path& path);

}  // namespace refrakt
