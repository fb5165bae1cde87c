#include "dualsys/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {
namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs, double mean) {
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

void require_finite(std::span<const double> xs, const char* which) {
  for (double x : xs) {
    if (!std::isfinite(x)) throw ValidationError(fmt::format("sample {} contains a non-finite value", which));
  }
}

struct WelchParts {
  double mean_a, mean_b, var_a, var_b, se, df;
};

WelchParts welch_parts(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError(fmt::format("Welch test needs at least 2 values per sample (got {} and {})", a.size(), b.size()));
  }
  require_finite(a, "a");
  require_finite(b, "b");
  WelchParts w{};
  w.mean_a = mean_of(a);
  w.mean_b = mean_of(b);
  w.var_a = sample_variance(a, w.mean_a);
  w.var_b = sample_variance(b, w.mean_b);
  if (w.var_a == 0.0 && w.var_b == 0.0) throw DegenerateTestError("Welch test: both samples have zero variance");
  const double qa = w.var_a / static_cast<double>(a.size());
  const double qb = w.var_b / static_cast<double>(b.size());
  w.se = std::sqrt(qa + qb);
  w.df = (qa + qb) * (qa + qb) /
         (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
  return w;
}

double clamp_p(double p) { return std::clamp(p, 0.0, 1.0); }

// Two decimals with trailing zeros trimmed, keeping at least one decimal.
std::string two_decimals(double v) {
  auto s = fmt::format("{:.2f}", v);
  if (s.back() == '0') s.pop_back();
  return s;
}

// Up to two decimals with trailing zeros and point trimmed.
std::string compact(double v) {
  auto s = fmt::format("{:.2f}", v);
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.pop_back();
  return s;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError(fmt::format("incomplete beta needs a, b > 0 (got {}, {})", a, b));
  if (!(x >= 0.0 && x <= 1.0)) throw ValidationError(fmt::format("incomplete beta argument {} outside [0, 1]", x));
  if (x == 0.0 || x == 1.0) return x;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ValidationError(fmt::format("t distribution needs df > 0 (got {})", df));
  if (std::isnan(t)) return t;
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

TestResult welch_t(std::span<const double> a, std::span<const double> b) {
  const auto w = welch_parts(a, b);
  TestResult r;
  r.test_name = "welch_t";
  r.statistic = (w.mean_a - w.mean_b) / w.se;
  r.df = w.df;
  r.p_value = clamp_p(2.0 * student_t_cdf(-std::abs(r.statistic), w.df));
  r.n = a.size() + b.size();
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double pooled_sd = std::sqrt(((na - 1.0) * w.var_a + (nb - 1.0) * w.var_b) / (na + nb - 2.0));
  r.extras = {{"cohens_d", (w.mean_a - w.mean_b) / pooled_sd}, {"mean_a", w.mean_a}, {"mean_b", w.mean_b}};
  return r;
}

TostResult tost_equivalence(std::span<const double> a, std::span<const double> b, double margin, double alpha) {
  if (!(margin > 0.0) || !std::isfinite(margin)) {
    throw ValidationError(fmt::format("equivalence margin must be positive, got {}", margin));
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError(fmt::format("alpha {} outside (0, 1)", alpha));
  const auto w = welch_parts(a, b);
  const double diff = w.mean_a - w.mean_b;

  TostResult out;
  out.margin = margin;
  out.alpha = alpha;
  out.df = w.df;
  auto one_sided = [&](const char* name, double t, double p) {
    TestResult r;
    r.test_name = name;
    r.statistic = t;
    r.df = w.df;
    r.p_value = clamp_p(p);
    r.n = a.size() + b.size();
    r.extras = {{"margin", margin}, {"mean_diff", diff}};
    return r;
  };
  const double t_lower = (diff + margin) / w.se;
  const double t_upper = (diff - margin) / w.se;
  out.lower = one_sided("tost_lower", t_lower, 1.0 - student_t_cdf(t_lower, w.df));
  out.upper = one_sided("tost_upper", t_upper, student_t_cdf(t_upper, w.df));
  out.equivalent = out.lower.p_value < alpha && out.upper.p_value < alpha;
  out.headline_t = std::min(t_lower, -t_upper);
  return out;
}

std::vector<TostResult> tost_margin_grid(std::span<const double> a, std::span<const double> b, double alpha) {
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const double five_percent = 0.05 * std::abs(mean_of(pooled));
  std::vector<TostResult> out;
  for (double m : {3.0, 5.0, 7.0, five_percent}) out.push_back(tost_equivalence(a, b, m, alpha));
  return out;
}

TestResult mcnemar_counts(std::size_t b, std::size_t c, std::size_t n) {
  if (n == 0) throw ValidationError("McNemar test needs at least one pair");
  if (b + c > n) throw ValidationError(fmt::format("discordant counts {} + {} exceed {} pairs", b, c, n));
  TestResult r;
  r.test_name = "mcnemar";
  r.df = 1.0;
  r.n = n;
  const std::size_t k = b + c;
  r.extras = {{"b", static_cast<double>(b)}, {"c", static_cast<double>(c)}, {"exact", k < 25 ? 1.0 : 0.0}};
  if (k == 0) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    return r;
  }
  const double gap = std::max(0.0, std::abs(static_cast<double>(b) - static_cast<double>(c)) - 1.0);
  r.statistic = gap * gap / static_cast<double>(k);
  if (k < 25) {
    // P(X <= min(b, c)) for X ~ Binomial(k, 1/2), doubled.
    const std::size_t lo = std::min(b, c);
    double coef = 1.0;
    double cdf = 0.0;
    for (std::size_t i = 0; i <= lo; ++i) {
      cdf += coef;
      coef = coef * static_cast<double>(k - i) / static_cast<double>(i + 1);
    }
    r.p_value = clamp_p(2.0 * cdf / std::ldexp(1.0, static_cast<int>(k)));
  } else {
    r.p_value = clamp_p(std::erfc(std::sqrt(r.statistic / 2.0)));
  }
  return r;
}

TestResult mcnemar(const std::vector<std::pair<bool, bool>>& pairs) {
  std::size_t b = 0;
  std::size_t c = 0;
  for (const auto& [s1, s2] : pairs) {
    if (s1 && !s2) ++b;
    if (!s1 && s2) ++c;
  }
  return mcnemar_counts(b, c, pairs.size());
}

TestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("Mann-Whitney U needs non-empty samples");
  require_finite(a, "a");
  require_finite(b, "b");
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t n = na + nb;

  std::vector<std::pair<double, bool>> pooled;  // (value, from a)
  pooled.reserve(n);
  for (double x : a) pooled.emplace_back(x, true);
  for (double x : b) pooled.emplace_back(x, false);
  std::sort(pooled.begin(), pooled.end(), [](const auto& l, const auto& r) { return l.first < r.first; });

  // Doubled midranks stay integral: positions i..j-1 (0-based) share i + j + 1.
  std::vector<long> doubled(n);
  long rank_sum_a2 = 0;
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && pooled[j].first == pooled[i].first) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    for (std::size_t k = i; k < j; ++k) {
      doubled[k] = static_cast<long>(i + j + 1);
      if (pooled[k].second) rank_sum_a2 += doubled[k];
    }
    i = j;
  }
  const double u_a = static_cast<double>(rank_sum_a2) / 2.0 - static_cast<double>(na * (na + 1)) / 2.0;
  const double nab = static_cast<double>(na) * static_cast<double>(nb);

  TestResult r;
  r.test_name = "mann_whitney_u";
  r.statistic = u_a;
  r.n = n;
  r.extras["u_b"] = nab - u_a;

  if (std::min(na, nb) <= 8 && n <= 64) {
    // Distribution of the doubled rank sum over all size-na subsets.
    const long max_sum = std::accumulate(doubled.begin(), doubled.end(), 0L);
    std::vector<std::vector<double>> ways(na + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto d = static_cast<std::size_t>(doubled[i]);
      for (std::size_t k = std::min(i + 1, na); k >= 1; --k) {
        auto& dst = ways[k];
        const auto& src = ways[k - 1];
        for (std::size_t s = max_sum; s >= d; --s) dst[s] += src[s - d];
      }
    }
    double total = 0.0;
    double le = 0.0;
    double ge = 0.0;
    for (std::size_t s = 0; s < ways[na].size(); ++s) {
      const double w = ways[na][s];
      total += w;
      if (static_cast<long>(s) <= rank_sum_a2) le += w;
      if (static_cast<long>(s) >= rank_sum_a2) ge += w;
    }
    r.p_value = clamp_p(2.0 * std::min(le, ge) / total);
    r.extras["exact"] = 1.0;
    return r;
  }

  const double nd = static_cast<double>(n);
  const double mu = nab / 2.0;
  const double sigma = std::sqrt(nab / 12.0 * ((nd + 1.0) - tie_term / (nd * (nd - 1.0))));
  r.extras["exact"] = 0.0;
  if (sigma == 0.0) {
    r.p_value = 1.0;
    r.extras["z"] = 0.0;
    return r;
  }
  const double u_big = std::max(u_a, nab - u_a);
  const double z = (u_big - mu - 0.5) / sigma;
  r.extras["z"] = z;
  r.p_value = clamp_p(2.0 * normal_cdf(-z));
  return r;
}

std::string format_chi2(const TestResult& r) {
  return fmt::format("χ²({}, {}) = {}", compact(r.df), r.n, two_decimals(r.statistic));
}

std::string format_t(const TestResult& r) { return fmt::format("t({}) = {}", compact(r.df), compact(r.statistic)); }

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "group,metric,statistic,df,p,n\n";
  for (const auto& row : rows) {
    out += fmt::format("{},{},{:.10g},{:.10g},{:.10g},{}\n", csv_field(row.group), csv_field(row.metric), row.result.statistic,
                       row.result.df, row.result.p_value, row.result.n);
  }
  return out;
}

}  // namespace dualsys
