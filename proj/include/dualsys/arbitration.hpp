#pragma once

// Dual-system arbitration: query an intuitive and a deliberative backend
// for the same item, score both generations by entropy and keep the more
// reliable answer together with an audit record.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualsys/entropy.hpp"
#include "dualsys/model_client.hpp"

namespace dualsys {

/// Which generation feeds the entropy statistics.
enum class EntropySource { stage1, stage2, concat };

std::string to_string(EntropySource s);
EntropySource parse_entropy_source(const std::string& text);

/// One side of the pair: a backend plus the sampling parameters sent to it.
/// The prompt field of `params` is ignored.
struct SystemEndpoint {
  std::shared_ptr<Backend> backend;
  GenerationRequest params;
  std::string label;  // usually the model tag or endpoint, for audit only
};

/// Builds the stage-2 prompt from the stage-1 prompt and generation.
/// An empty function means single-stage generation.
using StageTwoPrompt = std::function<std::string(const std::string& prompt, const Generation& stage1)>;

struct DualBackendPair {
  SystemEndpoint system1;
  SystemEndpoint system2;
  ReliabilityWeight w;
  TieBreak tie_break = TieBreak::prefer_s1;
  TailPolicy tail_policy = TailPolicy::single_bucket;
  EntropySource entropy_source = EntropySource::stage1;
  bool degrade_to_single = false;
  StageTwoPrompt stage_two;
};

/// Throws ConfigError when a backend is missing or both sides share the
/// same label and model tag.
void validate_pair(const DualBackendPair& pair);

/// Everything one system produced for one item.
struct SystemOutput {
  Generation stage1;
  std::optional<Generation> stage2;
  std::chrono::nanoseconds latency{0};

  /// Text used for answer extraction: stage 2 when present, else stage 1.
  const std::string& final_text() const;
};

struct ArbitratedAnswer {
  std::string question_id;
  ArbitrationDecision decision;
  std::string chosen_text;
  std::optional<SystemOutput> s1;
  std::optional<SystemOutput> s2;
  EntropySource entropy_source = EntropySource::stage1;
  /// Set when degrade_to_single kicked in; holds the failure of the other side.
  std::optional<std::string> degraded;

  const SystemOutput& chosen_output() const;
};

/// Per-token entropies of `out` according to `source`.
std::vector<double> output_entropy_series(const SystemOutput& out, EntropySource source, TailPolicy policy);

/// Runs one system (both stages when configured).
SystemOutput run_system(const SystemEndpoint& side, const std::string& prompt, const StageTwoPrompt& stage_two);

/// Queries both systems concurrently and selects the lower reliability score.
/// Throws ArbitrationError naming the failed side unless degrade_to_single is set.
ArbitratedAnswer dynamic_generate(const DualBackendPair& pair, const std::string& prompt,
                                  const std::string& question_id = "");

/// Arbitration from two finished outputs. No backend calls.
ArbitratedAnswer arbitrate_outputs(const DualBackendPair& pair, std::string question_id, SystemOutput s1,
                                   SystemOutput s2);

/// Re-decides an answer under a different weight, reusing its statistics.
ArbitratedAnswer rearbitrate(const ArbitratedAnswer& answer, ReliabilityWeight w, TieBreak tie_break);

struct BatchItem {
  std::string id;
  std::string prompt;
};

struct BatchEntry {
  std::string id;
  std::optional<ArbitratedAnswer> answer;
  std::string error;  // non-empty iff answer is empty
};

struct BatchSummary {
  std::size_t chose_s1 = 0;
  std::size_t chose_s2 = 0;
  std::size_t errored = 0;
  std::size_t ties = 0;
  double mean_r1 = 0.0;  // over successful items
  double mean_r2 = 0.0;
};

struct BatchResult {
  std::vector<BatchEntry> entries;  // input order
  BatchSummary summary;
};

BatchSummary summarize(const std::vector<BatchEntry>& entries);

/// Arbitrates every item with up to `parallelism` items in flight. Per-item
/// failures are recorded inline; throws only when every item fails.
BatchResult arbitrate_batch(const DualBackendPair& pair, const std::vector<BatchItem>& items, int parallelism = 1);

/// Runs `fn(i)` for i in [0, n) on up to `parallelism` worker threads.
/// Exceptions escaping `fn` are rethrown after all workers finish.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& fn);

// --------------------------------------------------------------------------
// Audit log

/// One line of the decision audit log. Wall-clock latencies are included
/// only on request, so logs of replayed runs compare byte for byte.
nlohmann::json audit_record(const ArbitratedAnswer& answer, bool include_latency = false);

/// Recomputes (r1, r2) from an audit record's raw statistics and weight.
ReliabilityScores recompute_scores(const nlohmann::json& record);

/// Writes one audit record per successful entry, and an error record per failure.
void write_audit_log(const std::filesystem::path& path, const std::vector<BatchEntry>& entries,
                     bool include_latency = false);

}  // namespace dualsys
