#pragma once

// Token-entropy statistics and the reliability score used to arbitrate
// between an intuitive (System 1) and a deliberative (System 2) backend.
//
// All quantities are in nats. Every function here is pure.

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace dualsys {

/// One candidate token and its probability at a decoding step. When the
/// entry came off the wire, `logprob` keeps the reported value and
/// probability == exp(logprob); otherwise it is NaN.
struct TokenProb {
  std::string token;
  double probability = 0.0;
  double logprob = std::numeric_limits<double>::quiet_NaN();

  static TokenProb from_logprob(std::string token, double logprob);
  /// ln(probability), preferring the reported logprob.
  double log_probability() const;
  friend bool operator==(const TokenProb& a, const TokenProb& b);
};

/// Probability mass of one decoding step: the listed candidates plus the
/// mass the backend did not report.
struct TokenDistribution {
  std::vector<TokenProb> entries;
  double tail_mass = 0.0;

  friend bool operator==(const TokenDistribution&, const TokenDistribution&) = default;
};

/// Allowed deviation of the total mass from 1.
inline constexpr double kMassTolerance = 1e-6;

enum class TailPolicy {
  ignore,         // unreported mass contributes nothing
  single_bucket,  // unreported mass is one pseudo-token
};

/// Throws ValidationError naming the first offending entry.
void validate_distribution(const TokenDistribution& dist);

/// Shannon entropy of one step. Zero-probability entries contribute 0.
double token_entropy(const TokenDistribution& dist, TailPolicy policy = TailPolicy::single_bucket);

/// Mean and population variance (divisor n) of a per-token entropy series.
struct SequenceEntropyStats {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n = 0;
};

SequenceEntropyStats sequence_stats(std::span<const double> series);

/// Each system's share of the summed mean entropy and of the summed variance.
struct NormalizedStatsPair {
  double h_hat_1 = 0.5;
  double h_hat_2 = 0.5;
  double v_hat_1 = 0.5;
  double v_hat_2 = 0.5;
};

/// When both systems are zero on an axis the shares are (0.5, 0.5).
NormalizedStatsPair total_sum_normalize(const SequenceEntropyStats& s1, const SequenceEntropyStats& s2);

/// Weight on the normalized mean entropy; 1 - w goes to the variance share.
class ReliabilityWeight {
 public:
  static constexpr double kDefault = 0.4;

  ReliabilityWeight() = default;
  /// Throws ValidationError outside [0, 1].
  explicit ReliabilityWeight(double w);

  double value() const noexcept { return w_; }

 private:
  double w_ = kDefault;
};

struct ReliabilityScores {
  double r1 = 0.0;
  double r2 = 0.0;
};

ReliabilityScores reliability_score(const NormalizedStatsPair& norm, ReliabilityWeight w);

enum class SystemId { system1, system2 };
enum class TieBreak { prefer_s1, prefer_s2 };

inline constexpr double kTieTolerance = 1e-12;

struct Selection {
  SystemId chosen = SystemId::system1;
  bool tie = false;
};

/// Lower score wins; |r1 - r2| <= kTieTolerance defers to the tie-break.
Selection select(double r1, double r2, TieBreak tie_break = TieBreak::prefer_s1);

struct ArbitrationDecision {
  double r1 = 0.0;
  double r2 = 0.0;
  SystemId chosen = SystemId::system1;
  bool tie = false;
  SequenceEntropyStats raw_stats_1;
  SequenceEntropyStats raw_stats_2;
  NormalizedStatsPair normalized;
  double w = ReliabilityWeight::kDefault;
};

/// Normalize, score and select in one step.
ArbitrationDecision decide(const SequenceEntropyStats& s1, const SequenceEntropyStats& s2,
                           ReliabilityWeight w, TieBreak tie_break = TieBreak::prefer_s1);

std::string to_string(SystemId id);
std::string to_string(TieBreak tb);
std::string to_string(TailPolicy policy);
SystemId parse_system_id(const std::string& text);
TieBreak parse_tie_break(const std::string& text);
TailPolicy parse_tail_policy(const std::string& text);

}  // namespace dualsys
