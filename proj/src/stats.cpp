#include "refrakt/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "refrakt/errors.hpp"

namespace refrakt::stats {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw ParamError("normal_quantile: p must lie in (0, 1)");

  // Acklam's rational approximation, then Newton refinement against the
  // erfc-based CDF down to machine precision.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double plow = 0.02425;

  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  }
  for (int it = 0; it < 3; ++it) {
    const double err = normal_cdf(x) - p;
    const double pdf =
        std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
    if (pdf <= 0.0) break;
    x -= err / pdf;
  }
  return x;
}

namespace {

// Regularized lower incomplete gamma P(a, x); series and continued-fraction
// branches as in standard practice.
double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw ParamError("gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - gln);
  }
  // Lentz continued fraction for Q(a, x).
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -double(i) * (double(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  const double q = std::exp(-x + a * std::log(x) - gln) * h;
  return 1.0 - q;
}

}  // namespace

double chi2_sf(double x, int df) {
  if (df <= 0) throw ParamError("chi2_sf: df must be positive");
  if (x <= 0.0) return 1.0;
  return 1.0 - gamma_p(0.5 * df, 0.5 * x);
}

// ---------------------------------------------------------------------------
// Shapiro-Wilk (AS R94)
// ---------------------------------------------------------------------------

TestResult shapiro_wilk(std::vector<double> x) {
  const int n = static_cast<int>(x.size());
  if (n < 3) throw ParamError("shapiro_wilk: need at least 3 samples");
  if (n > 5000)
    throw ParamError("shapiro_wilk: approximation valid only for n <= 5000");
  std::sort(x.begin(), x.end());
  if (x.back() - x.front() <= 0.0) throw FormatError("degenerate sample");

  std::vector<double> m(static_cast<std::size_t>(n));
  double ssumm2 = 0.0;
  for (int i = 0; i < n; ++i) {
    m[static_cast<std::size_t>(i)] =
        normal_quantile((double(i) + 1.0 - 0.375) / (double(n) + 0.25));
    ssumm2 += m[static_cast<std::size_t>(i)] * m[static_cast<std::size_t>(i)];
  }

  std::vector<double> a(static_cast<std::size_t>(n));
  if (n == 3) {
    a[2] = std::sqrt(0.5);
    a[1] = 0.0;
    a[0] = -a[2];
  } else {
    const double rsn = 1.0 / std::sqrt(double(n));
    const double ssm = std::sqrt(ssumm2);
    const double cn = m[static_cast<std::size_t>(n - 1)] / ssm;
    const double an = cn + rsn * (0.221157 +
                                  rsn * (-0.147981 +
                                         rsn * (-2.071190 +
                                                rsn * (4.434685 +
                                                       rsn * -2.706056))));
    double fac;
    int i1;
    if (n > 5) {
      const double cn1 = m[static_cast<std::size_t>(n - 2)] / ssm;
      const double an1 =
          cn1 + rsn * (0.042981 +
                       rsn * (-0.293762 +
                              rsn * (-1.752461 +
                                     rsn * (5.682633 + rsn * -3.582633))));
      const double mn = m[static_cast<std::size_t>(n - 1)];
      const double mn1 = m[static_cast<std::size_t>(n - 2)];
      fac = std::sqrt((ssumm2 - 2.0 * mn * mn - 2.0 * mn1 * mn1) /
                      (1.0 - 2.0 * an * an - 2.0 * an1 * an1));
      a[static_cast<std::size_t>(n - 1)] = an;
      a[static_cast<std::size_t>(n - 2)] = an1;
      a[0] = -an;
      a[1] = -an1;
      i1 = 2;
    } else {
      const double mn = m[static_cast<std::size_t>(n - 1)];
      fac = std::sqrt((ssumm2 - 2.0 * mn * mn) / (1.0 - 2.0 * an * an));
      a[static_cast<std::size_t>(n - 1)] = an;
      a[0] = -an;
      i1 = 1;
    }
    for (int i = i1; i < n - i1; ++i)
      a[static_cast<std::size_t>(i)] = m[static_cast<std::size_t>(i)] / fac;
  }

  double mean = std::accumulate(x.begin(), x.end(), 0.0) / double(n);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    num += a[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    const double d = x[static_cast<std::size_t>(i)] - mean;
    den += d * d;
  }
  const double w = num * num / den;

  TestResult out;
  out.statistic = w;
  out.n = n;
  if (n == 3) {
    constexpr double pi6 = 1.90985931710274;   // 6/pi
    constexpr double stqr = 1.047197551196598;  // asin(sqrt(3/4))
    double pw = pi6 * (std::asin(std::sqrt(w)) - stqr);
    out.p_value = std::clamp(pw, 0.0, 1.0);
    out.method_note = "exact (n = 3)";
    return out;
  }
  const double y = std::log(1.0 - w);
  double z;
  if (n <= 11) {
    const double gamma = -2.273 + 0.459 * n;
    if (y >= gamma) {
      out.p_value = 1e-99;
      out.method_note = "Royston AS R94, small-n branch (saturated)";
      return out;
    }
    const double yy = -std::log(gamma - y);
    const double mu =
        0.5440 + n * (-0.39978 + n * (0.025054 + n * -0.0006714));
    const double sigma =
        std::exp(1.3822 + n * (-0.77857 + n * (0.062767 + n * -0.0020322)));
    z = (yy - mu) / sigma;
    out.method_note = "Royston AS R94, 4 <= n <= 11 branch";
  } else {
    const double xx = std::log(double(n));
    const double mu =
        -1.5861 + xx * (-0.31082 + xx * (-0.083751 + xx * 0.0038915));
    const double sigma =
        std::exp(-0.4803 + xx * (-0.082676 + xx * 0.0030302));
    z = (y - mu) / sigma;
    out.method_note = "Royston AS R94, n >= 12 branch";
  }
  out.p_value = std::clamp(normal_sf(z), 0.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Ranks
// ---------------------------------------------------------------------------

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * (double(i + 1) + double(j + 1));
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

// ---------------------------------------------------------------------------
// Friedman
// ---------------------------------------------------------------------------

TestResult friedman(const Matrix<double>& scores) {
  const int n = scores.rows, k = scores.cols;
  if (n < 2 || k < 2)
    throw ParamError("friedman: need at least 2 rows and 2 columns");

  std::vector<double> colsum(static_cast<std::size_t>(k), 0.0);
  double tie_sum = 0.0;  // sum over rows of sum(t^3 - t)
  std::vector<double> row(static_cast<std::size_t>(k));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = scores(i, j);
    auto ranks = average_ranks(row);
    for (int j = 0; j < k; ++j)
      colsum[static_cast<std::size_t>(j)] += ranks[static_cast<std::size_t>(j)];
    std::sort(row.begin(), row.end());
    std::size_t a = 0;
    while (a < row.size()) {
      std::size_t b = a;
      while (b + 1 < row.size() && row[b + 1] == row[a]) ++b;
      const double t = double(b - a + 1);
      tie_sum += t * t * t - t;
      a = b + 1;
    }
  }

  const double c = 1.0 - tie_sum / (double(n) * k * (double(k) * k - 1.0));
  TestResult out;
  out.n = n;
  if (c == 0.0) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    out.method_note = "all rows fully tied";
    return out;
  }
  double ssbn = 0.0;
  for (double s : colsum) ssbn += s * s;
  double stat =
      12.0 * ssbn / (double(n) * k * (k + 1)) - 3.0 * double(n) * (k + 1);
  stat /= c;
  out.statistic = stat;
  out.p_value = chi2_sf(stat, k - 1);
  out.method_note = "chi-square approximation, tie-corrected";
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

TestResult wilcoxon_signed_rank(const std::vector<double>& x,
                                const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ParamError("wilcoxon_signed_rank: length mismatch");
  std::vector<double> d;
  d.reserve(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x[i] - y[i];
    if (diff != 0.0) d.push_back(diff);
  }
  const int n = static_cast<int>(d.size());
  if (n == 0) throw FormatError("no information");

  std::vector<double> absd(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) absd[i] = std::abs(d[i]);
  auto ranks = average_ranks(absd);

  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    (d[i] > 0.0 ? w_plus : w_minus) += ranks[i];
  const double stat = std::min(w_plus, w_minus);

  TestResult out;
  out.statistic = stat;
  out.n = n;
  if (n <= 25) {
    // Exact null distribution of W+ by subset-sum counting. Average ranks
    // are multiples of 1/2, so doubling them makes the DP integral.
    const int total = n * (n + 1);
    std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      const int r = static_cast<int>(std::lround(2.0 * ranks[i]));
      for (int s = total; s >= r; --s)
        count[static_cast<std::size_t>(s)] +=
            count[static_cast<std::size_t>(s - r)];
    }
    const double denom = std::pow(2.0, n);
    const int w = static_cast<int>(std::lround(2.0 * stat));
    double lo = 0.0, hi = 0.0;
    for (int s = 0; s <= w; ++s) lo += count[static_cast<std::size_t>(s)];
    for (int s = total - w; s <= total; ++s)
      hi += count[static_cast<std::size_t>(s)];
    out.p_value = std::min(1.0, (lo + hi) / denom);
    out.method_note = "exact enumeration";
    return out;
  }

  double tie_sum = 0.0;
  {
    auto sorted = absd;
    std::sort(sorted.begin(), sorted.end());
    std::size_t a = 0;
    while (a < sorted.size()) {
      std::size_t b = a;
      while (b + 1 < sorted.size() && sorted[b + 1] == sorted[a]) ++b;
      const double t = double(b - a + 1);
      tie_sum += t * t * t - t;
      a = b + 1;
    }
  }
  const double mn = double(n) * (n + 1) / 4.0;
  const double var =
      double(n) * (n + 1) * (2.0 * n + 1.0) / 24.0 - tie_sum / 48.0;
  const double se = std::sqrt(var);
  const double centered = stat - mn;
  const double correction = 0.5 * (centered > 0 ? 1.0 : (centered < 0 ? -1.0 : 0.0));
  const double z = (centered - correction) / se;
  out.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
  out.method_note = "normal approximation, tie-corrected, continuity-corrected";
  return out;
}

TestResult wilcoxon_signed_rank(const std::vector<double>& x, double y) {
  return wilcoxon_signed_rank(x, std::vector<double>(x.size(), y));
}

std::vector<double> bonferroni(const std::vector<double>& p_values, int m) {
  if (m < static_cast<int>(p_values.size()))
    throw ParamError("bonferroni: family size smaller than the p-value list");
  std::vector<double> out;
  out.reserve(p_values.size());
  for (double p : p_values) {
    if (p < 0.0 || p > 1.0)
      throw ParamError("bonferroni: p-values must lie in [0, 1]");
    out.push_back(std::min(1.0, p * m));
  }
  return out;
}

}  // namespace refrakt::stats
