#include "dualsys/entropy.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dualsys/errors.hpp"

namespace dualsys {
namespace {

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

// Share of a two-way sum; both zero means the systems are indistinguishable.
std::pair<double, double> shares(double a, double b) {
  const double total = a + b;
  if (total == 0.0) return {0.5, 0.5};
  return {a / total, b / total};
}

}  // namespace

TokenProb TokenProb::from_logprob(std::string token, double logprob) {
  return {std::move(token), std::exp(logprob), logprob};
}

double TokenProb::log_probability() const { return std::isnan(logprob) ? std::log(probability) : logprob; }

bool operator==(const TokenProb& a, const TokenProb& b) {
  const bool same_lp = (std::isnan(a.logprob) && std::isnan(b.logprob)) || a.logprob == b.logprob;
  return a.token == b.token && a.probability == b.probability && same_lp;
}

void validate_distribution(const TokenDistribution& dist) {
  double mass = 0.0;
  for (std::size_t i = 0; i < dist.entries.size(); ++i) {
    const auto& e = dist.entries[i];
    if (!std::isfinite(e.probability) || e.probability < 0.0 || e.probability > 1.0) {
      throw ValidationError(fmt::format("token distribution entry {} ('{}') has invalid probability {}",
                                        i, e.token, e.probability));
    }
    mass += e.probability;
  }
  if (!std::isfinite(dist.tail_mass) || dist.tail_mass < 0.0 || dist.tail_mass > 1.0) {
    throw ValidationError(fmt::format("token distribution tail mass {} outside [0, 1]", dist.tail_mass));
  }
  mass += dist.tail_mass;
  if (std::abs(mass - 1.0) > kMassTolerance) {
    throw ValidationError(fmt::format("token distribution mass {:.9f} is not 1 (entries={}, tail={})",
                                      mass, dist.entries.size(), dist.tail_mass));
  }
}

double token_entropy(const TokenDistribution& dist, TailPolicy policy) {
  validate_distribution(dist);
  double acc = 0.0;
  for (const auto& e : dist.entries) acc -= plogp(e.probability);
  if (policy == TailPolicy::single_bucket) acc -= plogp(dist.tail_mass);
  // -p ln p sums can round to -0.0 or a hair below zero for point masses.
  return acc > 0.0 ? acc : 0.0;
}

SequenceEntropyStats sequence_stats(std::span<const double> series) {
  if (series.empty()) throw ValidationError("empty generation: entropy series has no tokens");
  const auto n = static_cast<double>(series.size());
  double sum = 0.0;
  for (double h : series) {
    if (!std::isfinite(h) || h < 0.0) throw ValidationError(fmt::format("invalid token entropy {}", h));
    sum += h;
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (double h : series) ss += (h - mean) * (h - mean);
  return {mean, ss / n, series.size()};
}

NormalizedStatsPair total_sum_normalize(const SequenceEntropyStats& s1, const SequenceEntropyStats& s2) {
  const auto [h1, h2] = shares(s1.mean, s2.mean);
  const auto [v1, v2] = shares(s1.variance, s2.variance);
  return {h1, h2, v1, v2};
}

ReliabilityWeight::ReliabilityWeight(double w) : w_(w) {
  if (!(w >= 0.0 && w <= 1.0)) throw ValidationError(fmt::format("reliability weight {} outside [0, 1]", w));
}

ReliabilityScores reliability_score(const NormalizedStatsPair& norm, ReliabilityWeight w) {
  const double wv = w.value();
  return {wv * norm.h_hat_1 + (1.0 - wv) * norm.v_hat_1, wv * norm.h_hat_2 + (1.0 - wv) * norm.v_hat_2};
}

Selection select(double r1, double r2, TieBreak tie_break) {
  if (!std::isfinite(r1) || !std::isfinite(r2)) {
    throw ValidationError(fmt::format("non-finite reliability score (r1={}, r2={})", r1, r2));
  }
  if (std::abs(r1 - r2) <= kTieTolerance) {
    return {tie_break == TieBreak::prefer_s1 ? SystemId::system1 : SystemId::system2, true};
  }
  return {r1 < r2 ? SystemId::system1 : SystemId::system2, false};
}

ArbitrationDecision decide(const SequenceEntropyStats& s1, const SequenceEntropyStats& s2, ReliabilityWeight w,
                           TieBreak tie_break) {
  ArbitrationDecision d;
  d.raw_stats_1 = s1;
  d.raw_stats_2 = s2;
  d.normalized = total_sum_normalize(s1, s2);
  const auto scores = reliability_score(d.normalized, w);
  d.r1 = scores.r1;
  d.r2 = scores.r2;
  const auto sel = select(d.r1, d.r2, tie_break);
  d.chosen = sel.chosen;
  d.tie = sel.tie;
  d.w = w.value();
  return d;
}

std::string to_string(SystemId id) { return id == SystemId::system1 ? "s1" : "s2"; }

std::string to_string(TieBreak tb) { return tb == TieBreak::prefer_s1 ? "prefer_s1" : "prefer_s2"; }

std::string to_string(TailPolicy policy) {
  return policy == TailPolicy::ignore ? "ignore" : "single_bucket";
}

SystemId parse_system_id(const std::string& text) {
  if (text == "s1" || text == "S1" || text == "system1") return SystemId::system1;
  if (text == "s2" || text == "S2" || text == "system2") return SystemId::system2;
  throw ValidationError(fmt::format("unknown system '{}' (expected s1 or s2)", text));
}

TieBreak parse_tie_break(const std::string& text) {
  if (text == "prefer_s1" || text == "s1") return TieBreak::prefer_s1;
  if (text == "prefer_s2" || text == "s2") return TieBreak::prefer_s2;
  throw ValidationError(fmt::format("unknown tie break '{}'", text));
}

TailPolicy parse_tail_policy(const std::string& text) {
  if (text == "ignore") return TailPolicy::ignore;
  if (text == "single_bucket") return TailPolicy::single_bucket;
  throw ValidationError(fmt::format("unknown tail policy '{}'", text));
}

}  // namespace dualsys
