#pragma once

// Preference data for aligning a model toward intuitive (S1) or deliberative
// (S2) answers: validation, length balancing, pair export, interpolation
// mixes and train/validation splits.

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualsys/model_client.hpp"

namespace dualsys {

enum class HeuristicCategory {
  Anchoring,
  HaloEffect,
  Overconfidence,
  Optimism,
  Availability,
  StatusQuo,
  Recency,
  Confirmation,
  PlanningFallacy,
  Bandwagon,
};

inline constexpr std::size_t kCategoryCount = 10;

const std::array<HeuristicCategory, kCategoryCount>& all_categories();
std::string to_string(HeuristicCategory c);
/// Accepts "Anchoring", "anchoring bias", "Halo Effect Bias", "status_quo" and similar.
std::optional<HeuristicCategory> parse_category(std::string_view text);
/// One-sentence definition used in expansion prompts.
const std::string& category_definition(HeuristicCategory c);

struct PreferenceItem {
  std::string id;
  std::string question;
  std::string s1_answer;
  std::string s2_answer;
  HeuristicCategory category = HeuristicCategory::Anchoring;
};

nlohmann::json item_to_json(const PreferenceItem& item);

struct ValidationIssue {
  std::size_t line = 0;
  std::string id;
  std::string reason;
};

struct ValidationReport {
  std::vector<PreferenceItem> items;  // accepted, in file order
  std::vector<ValidationIssue> issues;
  std::array<std::size_t, kCategoryCount> category_counts{};
};

/// Checks each row independently; bad rows become issues, never exceptions.
ValidationReport validate_items(const std::vector<std::pair<std::size_t, nlohmann::json>>& rows);
/// Reads a JSON-lines file; unparseable lines are reported as issues.
ValidationReport validate_file(const std::filesystem::path& path);
nlohmann::json validation_report_json(const ValidationReport& report);

/// Reads and validates; throws ValidationError when any row is rejected.
std::vector<PreferenceItem> load_items(const std::filesystem::path& path);

// --------------------------------------------------------------------------

struct TokenCounter {
  std::string name;
  std::function<std::size_t(std::string_view)> count;
};

/// Counts whitespace-separated tokens.
const TokenCounter& whitespace_counter();

inline constexpr std::size_t kDisparityThreshold = 15;

struct Disparity {
  std::size_t n_s1 = 0;
  std::size_t n_s2 = 0;
  bool flag = false;  // |n_s1 - n_s2| > 15
};

Disparity length_disparity(std::size_t n_s1, std::size_t n_s2);
Disparity length_disparity(const PreferenceItem& item, const TokenCounter& counter = whitespace_counter());

/// The length-adjustment prompt with question and both answers substituted.
/// Substituted text is never re-scanned, so braces in it survive verbatim.
std::string build_refinement_prompt(const PreferenceItem& item);

/// Pulls the two rewritten answers out of a rewriter reply that labels them
/// "System 1 Answer:" and "System 2 Answer:".
std::optional<std::pair<std::string, std::string>> parse_refinement_reply(std::string_view reply);

enum class RefineStatus { unchanged, rewritten, needs_review };
std::string to_string(RefineStatus s);

struct RefineOutcome {
  PreferenceItem item;  // rewritten when accepted, else the original
  RefineStatus status = RefineStatus::unchanged;
  Disparity before;
  std::optional<Disparity> after;
  std::string note;
};

/// Sends every item whose answers differ by more than 15 tokens to `rewriter`.
/// A rewrite is kept only when it closes the gap to 15 tokens or fewer.
std::vector<RefineOutcome> refine_items(const std::vector<PreferenceItem>& items, Backend& rewriter,
                                        const GenerationRequest& params, const TokenCounter& counter = whitespace_counter(),
                                        int parallelism = 1);

// --------------------------------------------------------------------------

enum class Winner { S1, S2 };
std::string to_string(Winner w);
Winner parse_winner(const std::string& text);

struct TrainingPair {
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::string source_id;
  Winner winner_system = Winner::S1;
};

nlohmann::json pair_to_json(const TrainingPair& p);

TrainingPair make_pair_for(const PreferenceItem& item, Winner winner);
std::vector<TrainingPair> export_pairs(const std::vector<PreferenceItem>& items, Winner target);

/// Deterministic per-item sort key derived from (seed, salt, id).
std::uint64_t item_key(std::uint64_t seed, std::string_view salt, std::string_view id);

/// Item indices ordered by item_key. Prefixes of this order are the nested
/// selections used by interpolation and splitting.
std::vector<std::size_t> seeded_order(const std::vector<PreferenceItem>& items, std::uint64_t seed, std::string_view salt);

struct MixPlan {
  double ratio = 0.0;  // fraction of items exported with S2 as winner
  std::uint64_t seed = 0;
  std::size_t n_s1_winner = 0;
  std::size_t n_s2_winner = 0;
};

/// Throws ValidationError for a ratio outside [0, 1].
MixPlan make_mix_plan(std::size_t n_items, double ratio, std::uint64_t seed);

/// Pairs in item order; the first round(ratio * N) items in seeded order get S2 winners.
std::vector<TrainingPair> export_interpolated(const std::vector<PreferenceItem>& items, const MixPlan& plan);

struct Split {
  std::vector<PreferenceItem> train;
  std::vector<PreferenceItem> validation;
};

/// Train receives round(fraction * N) items chosen by seeded order; both
/// halves keep file order. Requires 0 < fraction < 1.
Split split_items(const std::vector<PreferenceItem>& items, double train_fraction, std::uint64_t seed);

/// Export manifest: seed, ratio, counts and the digest of the source file.
nlohmann::json export_manifest(const std::string& kind, const MixPlan& plan, const std::string& source_digest,
                               std::size_t n_items);

// --------------------------------------------------------------------------

/// Expansion prompt for new items: heuristic definition, both system
/// descriptions and a seed example.
std::string build_expansion_prompt(HeuristicCategory category, const PreferenceItem& seed_example);

/// Parses a generated item from a reply labelled "Question:", "System 1 Answer:"
/// and "System 2 Answer:". Returns nothing when a label is missing.
std::optional<PreferenceItem> parse_generated_item(std::string_view reply, HeuristicCategory category, std::string id);

}  // namespace dualsys
