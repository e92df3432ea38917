#pragma once

#include <string>
#include <vector>

#include "refrakt/matrix.hpp"

namespace refrakt::stats {

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int n = 0;  // sample count after exclusions
  std::string method_note;
};

/// Standard normal CDF / survival / quantile.
double normal_cdf(double z);
double normal_sf(double z);
double normal_quantile(double p);

/// Upper tail of the chi-square distribution (regularized incomplete gamma).
double chi2_sf(double x, int df);

/// Shapiro-Wilk via the Royston (1995, AS R94) approximation. 3 <= n <= 5000;
/// zero-variance input raises "degenerate sample".
TestResult shapiro_wilk(std::vector<double> x);

/// Friedman omnibus over an n_subjects x k_models score matrix, with average
/// ranks for ties and the tie-corrected chi-square statistic. All rows
/// constant yields statistic 0, p = 1.
TestResult friedman(const Matrix<double>& scores);

/// Wilcoxon signed-rank, two-sided. Zero differences are dropped, tied
/// |differences| share average ranks, statistic = min(W+, W-). Exact
/// enumeration of the signed-rank null when the effective n is <= 25 (average
/// ranks are doubled so the distribution stays integral), else the normal
/// approximation with tie variance correction and 0.5 continuity correction.
/// All-zero differences raise "no information".
TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                const std::vector<double>& y);
TestResult wilcoxon_signed_rank(const std::vector<double>& x, double y);

/// out[i] = min(1, p[i] * m). Requires m >= |p_values|.
std::vector<double> bonferroni(const std::vector<double>& p_values, int m);

/// Average ranks (1-based) with ties sharing the mean rank. Exposed for
/// tests.
std::vector<double> average_ranks(const std::vector<double>& x);

}  // namespace refrakt::stats
