#pragma once

// Hypothesis tests used by the analysis reports. Distribution functions are
// implemented here (incomplete beta by continued fraction, normal via erfc).

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dualsys {

struct SampleVector {
  std::vector<double> values;
  std::string label;
};

struct TestResult {
  std::string test_name;
  double statistic = 0.0;
  double df = 0.0;  // 0 when the test has none
  double p_value = 1.0;
  std::size_t n = 0;
  std::map<std::string, double> extras;
};

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
double normal_cdf(double z);

/// Unequal-variance t test, two-sided. extras: cohens_d, mean_a, mean_b.
/// Throws ValidationError when a sample has fewer than two values and
/// DegenerateTestError when both samples have zero variance.
TestResult welch_t(std::span<const double> a, std::span<const double> b);

struct TostResult {
  double margin = 0.0;
  double alpha = 0.05;
  TestResult lower;  // H0: diff <= -margin
  TestResult upper;  // H0: diff >= +margin
  bool equivalent = false;
  /// Smaller of the two one-sided statistics (oriented so larger is stronger evidence).
  double headline_t = 0.0;
  double df = 0.0;
};

/// Two one-sided Welch tests for |mean(a) - mean(b)| < margin.
TostResult tost_equivalence(std::span<const double> a, std::span<const double> b, double margin, double alpha = 0.05);

/// Margins 3, 5, 7 and 5% of the combined mean, in that order.
std::vector<TostResult> tost_margin_grid(std::span<const double> a, std::span<const double> b, double alpha = 0.05);

/// Continuity-corrected McNemar test over paired booleans (s1, s2).
/// b counts (true, false) pairs and c counts (false, true). Below 25 discordant
/// pairs the p-value is the exact two-sided binomial. extras: b, c, exact.
TestResult mcnemar(const std::vector<std::pair<bool, bool>>& pairs);
TestResult mcnemar_counts(std::size_t b, std::size_t c, std::size_t n);

/// Mann-Whitney U for sample a (midranks for ties). Exact permutation
/// p-value when the smaller sample has at most 8 values and the pooled sample
/// at most 64; otherwise tie-corrected normal approximation with continuity
/// correction. extras: u_b, exact, and z when approximated.
TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// "χ²(1, 400) = 20.0"
std::string format_chi2(const TestResult& r);
/// "t(8836) = 57.14", "t(2090.1) = -184.74"
std::string format_t(const TestResult& r);

/// One row of an analysis CSV: group, metric, statistic, df, p, n.
struct ReportRow {
  std::string group;
  std::string metric;
  TestResult result;
};

std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace dualsys
