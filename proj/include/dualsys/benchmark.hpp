#pragma once

// Two-stage benchmark evaluation: a reasoning pass on the question, then a
// finalization pass that appends the benchmark's instruction sentence.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualsys/model_client.hpp"
#include "dualsys/stats.hpp"

namespace dualsys {

enum class Category { arithmetic, symbolic, commonsense };
enum class AnswerFormat { numeral, letter_AE, letter_AC, letter_AB, yes_no, true_false, free_string };

std::string to_string(Category c);
std::string to_string(AnswerFormat f);

struct BenchmarkSpec {
  std::string name;
  Category category = Category::arithmetic;
  std::string instruction;
  AnswerFormat format = AnswerFormat::numeral;
};

/// The 13 benchmarks in report column order.
const std::vector<BenchmarkSpec>& all_benchmarks();

/// Case-insensitive lookup; throws ValidationError for unknown names.
const BenchmarkSpec& benchmark_spec(std::string_view name);

bool is_letter_format(AnswerFormat f);
/// Number of choices a letter format requires (0 for other formats).
std::size_t choice_count(AnswerFormat f);

struct Choice {
  std::string label;
  std::string text;
};

struct BenchmarkItem {
  std::string id;
  std::string question;
  std::vector<Choice> choices;
  std::string gold;  // normalized for the benchmark's format
};

/// Canonical input: one JSON object per line, {id, question, choices?, gold}.
/// Throws ValidationError naming the row for malformed rows or duplicate ids.
std::vector<BenchmarkItem> load_benchmark(const BenchmarkSpec& spec, const std::filesystem::path& path);
BenchmarkItem parse_benchmark_item(const BenchmarkSpec& spec, const nlohmann::json& row, std::size_t line);
nlohmann::json benchmark_item_to_json(const BenchmarkItem& item);

/// Question followed by "A) text" lines when the item has choices.
std::string stage1_prompt(const BenchmarkItem& item);
/// Stage-1 prompt, the stage-1 response and the instruction sentence, newline separated.
std::string stage2_prompt(const BenchmarkSpec& spec, const BenchmarkItem& item, const std::string& stage1_response);

struct StageRecord {
  std::string item_id;
  std::string stage1_prompt;
  std::string stage1_response;
  Generation stage1_generation;
  std::string stage2_prompt;
  std::string stage2_response;
  Generation stage2_generation;
  std::optional<std::string> extracted;
  std::optional<bool> correct;
  std::size_t stage1_token_count = 0;
  std::size_t stage2_token_count = 0;
};

/// Runs both stages on `backend`. The prompt in `params` is ignored.
StageRecord run_two_stage(Backend& backend, const GenerationRequest& params, const BenchmarkSpec& spec,
                          const BenchmarkItem& item);

/// Fills a record from two finished generations and scores it.
StageRecord make_stage_record(const BenchmarkSpec& spec, const BenchmarkItem& item, Generation stage1,
                              Generation stage2);

nlohmann::json stage_record_to_json(const StageRecord& r, bool include_steps = false);
/// Inverse of stage_record_to_json. Generations are empty when the steps were omitted.
StageRecord stage_record_from_json(const nlohmann::json& j);
/// Reads a records file written by the CLI (one stage record per line).
std::vector<StageRecord> load_stage_records(const std::filesystem::path& path);

/// Canonical decimal: no sign for zero, no leading zeros, no trailing
/// fractional zeros, no thousands separators. Empty when `text` is not a number.
std::optional<std::string> canonical_number(std::string_view text);

/// Normalized answer or none on an extraction miss.
std::optional<std::string> extract_answer(std::string_view raw, AnswerFormat format);

/// Gold label in the same normal form as extract_answer. Throws ValidationError.
std::string normalize_gold(std::string_view gold, AnswerFormat format);

bool answers_match(std::string_view extracted, std::string_view gold, AnswerFormat format);

struct AccuracyReport {
  std::string benchmark;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  std::size_t n_extraction_miss = 0;
  double accuracy = 0.0;  // percent
  double mean_stage1_tokens = 0.0;
  double mean_stage2_tokens = 0.0;
  std::vector<StageRecord> records;  // in item order
};

/// Exact-match accuracy. Records may arrive in any order but must cover
/// `items` exactly; throws ValidationError otherwise or for zero items.
AccuracyReport score(const BenchmarkSpec& spec, std::vector<StageRecord> records, const std::vector<BenchmarkItem>& items);

/// Two decimals, e.g. "78.49".
std::string format_accuracy(double percent);

nlohmann::json report_to_json(const AccuracyReport& report, bool include_records = true);

/// One row of the accuracy table: a label and the accuracy per benchmark name.
struct TableRow {
  std::string label;
  std::vector<std::pair<std::string, double>> accuracy;
};

/// CSV with one column per benchmark in report order. Rows other than the
/// baseline show "acc (+delta)" against it; missing cells are empty.
std::string accuracy_table_csv(const std::vector<TableRow>& rows, const std::string& baseline_label);

// --------------------------------------------------------------------------
// Token-length comparison between two systems relative to a base model.

struct TokenDiffItem {
  std::string item_id;
  long stage1_a = 0;  // count_a - count_base
  long stage1_b = 0;
  long stage2_a = 0;
  long stage2_b = 0;
};

struct StageDiffSummary {
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::optional<TestResult> welch;  // b-vs-base against a-vs-base; empty when degenerate
};

struct TokenDiffReport {
  std::vector<TokenDiffItem> items;  // sorted by item id
  StageDiffSummary stage1;
  StageDiffSummary stage2;
};

/// Throws ValidationError when the three record sets do not share item ids.
TokenDiffReport token_diff_report(const std::vector<StageRecord>& a, const std::vector<StageRecord>& b,
                                  const std::vector<StageRecord>& base);

nlohmann::json token_diff_to_json(const TokenDiffReport& report);

// --------------------------------------------------------------------------
// Converters from the public benchmark releases to the canonical rows.

/// `inputs` is the release file, plus a labels file for PIQA and SIQA.
std::vector<nlohmann::json> convert_public(const BenchmarkSpec& spec, const std::vector<std::filesystem::path>& inputs);

}  // namespace dualsys
