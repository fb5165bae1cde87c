#include "dualsys/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "dualsys/arbitration.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {

namespace {

struct CategoryInfo {
  HeuristicCategory category;
  const char* name;
  const char* label;  // display name used in prompts
  std::string definition;
};

const std::vector<CategoryInfo>& category_table() {
  static const std::vector<CategoryInfo> table = {
      {HeuristicCategory::Anchoring, "Anchoring", "Anchoring Bias",
       "The tendency to rely too heavily on the first piece of information we receive about a topic, using it as a "
       "reference point for future judgments and decisions, even when new information becomes available."},
      {HeuristicCategory::HaloEffect, "HaloEffect", "Halo Effect Bias",
       "The tendency to let one positive impressions of people, brands, and products in one area positively "
       "influence our feelings in another area."},
      {HeuristicCategory::Overconfidence, "Overconfidence", "Overconfidence Bias",
       "The tendency to have excessive confidence in one's own abilities or knowledge."},
      {HeuristicCategory::Optimism, "Optimism", "Optimism Bias",
       "The tendency to overestimate the likelihood of positive outcomes and underestimate negative ones."},
      {HeuristicCategory::Availability, "Availability", "Availability Heuristic Bias",
       "The tendency to use information that comes to mind quickly and easily when making decisions about the "
       "future."},
      {HeuristicCategory::StatusQuo, "StatusQuo", "Status Quo Bias",
       "The preference for maintaining the current state of affairs, leading to resistance to change."},
      {HeuristicCategory::Recency, "Recency", "Recency Bias",
       "The tendency to better remember and recall information presented to us most recently, compared to "
       "information we encountered earlier."},
      {HeuristicCategory::Confirmation, "Confirmation", "Confirmation Bias",
       "The tendency to notice, focus on, and give greater credence to evidence that fits with our existing "
       "beliefs."},
      {HeuristicCategory::PlanningFallacy, "PlanningFallacy", "Planning Fallacy",
       "The tendency to underestimate the amount of time it will take to complete a task, as well as the costs and "
       "risks associated with that task even if it contradicts our experiences."},
      {HeuristicCategory::Bandwagon, "Bandwagon", "Bandwagon Effect Bias",
       "The tendency to adopt beliefs or behaviors because many others do."},
  };
  return table;
}

const CategoryInfo& info(HeuristicCategory c) { return category_table()[static_cast<std::size_t>(c)]; }

std::string alnum_lower(std::string_view s) {
  std::string out;
  for (unsigned char ch : s)
    if (std::isalnum(ch)) out += static_cast<char>(std::tolower(ch));
  return out;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string ci_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

/// Splits `reply` on the given labels (case-insensitive, in order). Each
/// section runs to the next label or the end.
std::optional<std::vector<std::string>> labelled_sections(std::string_view reply,
                                                          const std::vector<std::string_view>& labels) {
  const std::string lower = ci_lower(reply);
  std::vector<std::size_t> starts, ends;
  std::size_t from = 0;
  for (auto label : labels) {
    auto pos = lower.find(ci_lower(label), from);
    if (pos == std::string::npos) return std::nullopt;
    starts.push_back(pos);
    ends.push_back(pos + label.size());
    from = pos + label.size();
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t stop = i + 1 < labels.size() ? starts[i + 1] : reply.size();
    auto text = trim(reply.substr(ends[i], stop - ends[i]));
    if (text.empty()) return std::nullopt;
    out.push_back(std::move(text));
  }
  return out;
}

std::string required_text(const nlohmann::json& row, const char* field) {
  if (!row.contains(field)) throw ValidationError(fmt::format("missing field '{}'", field));
  const auto& v = row.at(field);
  if (!v.is_string()) throw ValidationError(fmt::format("field '{}' must be a string", field));
  auto s = v.get<std::string>();
  if (trim(s).empty()) throw ValidationError(fmt::format("field '{}' is empty", field));
  return s;
}

}  // namespace

const std::array<HeuristicCategory, kCategoryCount>& all_categories() {
  static const std::array<HeuristicCategory, kCategoryCount> all = {
      HeuristicCategory::Anchoring,    HeuristicCategory::HaloEffect, HeuristicCategory::Overconfidence,
      HeuristicCategory::Optimism,     HeuristicCategory::Availability, HeuristicCategory::StatusQuo,
      HeuristicCategory::Recency,      HeuristicCategory::Confirmation, HeuristicCategory::PlanningFallacy,
      HeuristicCategory::Bandwagon,
  };
  return all;
}

std::string to_string(HeuristicCategory c) { return info(c).name; }

std::optional<HeuristicCategory> parse_category(std::string_view text) {
  std::string key = alnum_lower(text);
  for (std::string_view suffix : {"bias", "heuristic", "effect"})
    if (ends_with(key, suffix) && key.size() > suffix.size()) key.resize(key.size() - suffix.size());
  static const std::map<std::string, HeuristicCategory> aliases = {
      {"anchoring", HeuristicCategory::Anchoring},
      {"anchor", HeuristicCategory::Anchoring},
      {"halo", HeuristicCategory::HaloEffect},
      {"haloeffect", HeuristicCategory::HaloEffect},
      {"overconfidence", HeuristicCategory::Overconfidence},
      {"optimism", HeuristicCategory::Optimism},
      {"availability", HeuristicCategory::Availability},
      {"availabilityheuristic", HeuristicCategory::Availability},
      {"statusquo", HeuristicCategory::StatusQuo},
      {"recency", HeuristicCategory::Recency},
      {"confirmation", HeuristicCategory::Confirmation},
      {"planningfallacy", HeuristicCategory::PlanningFallacy},
      {"planning", HeuristicCategory::PlanningFallacy},
      {"bandwagon", HeuristicCategory::Bandwagon},
      {"bandwagoneffect", HeuristicCategory::Bandwagon},
  };
  auto it = aliases.find(key);
  if (it == aliases.end()) return std::nullopt;
  return it->second;
}

const std::string& category_definition(HeuristicCategory c) { return info(c).definition; }

nlohmann::json item_to_json(const PreferenceItem& item) {
  return {{"id", item.id},
          {"question", item.question},
          {"s1_answer", item.s1_answer},
          {"s2_answer", item.s2_answer},
          {"category", to_string(item.category)}};
}

ValidationReport validate_items(const std::vector<std::pair<std::size_t, nlohmann::json>>& rows) {
  ValidationReport report;
  std::set<std::string> seen;
  for (const auto& [line, row] : rows) {
    std::string id;
    try {
      if (!row.is_object()) throw ValidationError("row is not an object");
      id = required_text(row, "id");
      PreferenceItem item;
      item.id = id;
      item.question = required_text(row, "question");
      item.s1_answer = required_text(row, "s1_answer");
      item.s2_answer = required_text(row, "s2_answer");
      if (!row.contains("category") || !row.at("category").is_string())
        throw ValidationError("missing category");
      auto raw = row.at("category").get<std::string>();
      auto cat = parse_category(raw);
      if (!cat) throw ValidationError(fmt::format("unknown category '{}'", raw));
      item.category = *cat;
      if (!seen.insert(id).second) throw ValidationError(fmt::format("duplicate id '{}'", id));
      ++report.category_counts[static_cast<std::size_t>(item.category)];
      report.items.push_back(std::move(item));
    } catch (const ValidationError& e) {
      report.issues.push_back({line, id, e.what()});
    }
  }
  return report;
}

ValidationReport validate_file(const std::filesystem::path& path) {
  std::vector<std::pair<std::size_t, std::string>> parse_errors;
  auto lines = read_jsonl_lenient(path, parse_errors);
  std::vector<std::pair<std::size_t, nlohmann::json>> rows;
  for (auto& l : lines)
    if (!l.value.is_null()) rows.emplace_back(l.line, std::move(l.value));
  auto report = validate_items(rows);
  for (auto& [line, msg] : parse_errors) report.issues.push_back({line, "", "malformed JSON: " + msg});
  std::stable_sort(report.issues.begin(), report.issues.end(),
                   [](const auto& a, const auto& b) { return a.line < b.line; });
  return report;
}

nlohmann::json validation_report_json(const ValidationReport& report) {
  nlohmann::json coverage = nlohmann::json::object();
  for (auto c : all_categories()) coverage[to_string(c)] = report.category_counts[static_cast<std::size_t>(c)];
  nlohmann::json issues = nlohmann::json::array();
  for (const auto& i : report.issues) issues.push_back({{"line", i.line}, {"id", i.id}, {"reason", i.reason}});
  std::size_t covered = std::count_if(report.category_counts.begin(), report.category_counts.end(),
                                      [](std::size_t n) { return n > 0; });
  return {{"n_valid", report.items.size()},
          {"n_rejected", report.issues.size()},
          {"categories_covered", covered},
          {"coverage", coverage},
          {"issues", issues}};
}

std::vector<PreferenceItem> load_items(const std::filesystem::path& path) {
  auto report = validate_file(path);
  if (!report.issues.empty()) {
    const auto& first = report.issues.front();
    throw ValidationError(fmt::format("{}: {} invalid row(s); line {}: {}", path.string(), report.issues.size(),
                                      first.line, first.reason));
  }
  if (report.items.empty()) throw ValidationError(fmt::format("{}: no items", path.string()));
  return std::move(report.items);
}

// --------------------------------------------------------------------------

const TokenCounter& whitespace_counter() {
  static const TokenCounter counter{"whitespace", [](std::string_view text) {
                                      std::size_t n = 0;
                                      bool in_word = false;
                                      for (unsigned char ch : text) {
                                        bool space = std::isspace(ch) != 0;
                                        if (!space && !in_word) ++n;
                                        in_word = !space;
                                      }
                                      return n;
                                    }};
  return counter;
}

Disparity length_disparity(std::size_t n_s1, std::size_t n_s2) {
  std::size_t diff = n_s1 > n_s2 ? n_s1 - n_s2 : n_s2 - n_s1;
  return {n_s1, n_s2, diff > kDisparityThreshold};
}

Disparity length_disparity(const PreferenceItem& item, const TokenCounter& counter) {
  return length_disparity(counter.count(item.s1_answer), counter.count(item.s2_answer));
}

std::string build_refinement_prompt(const PreferenceItem& item) {
  static constexpr std::string_view kTemplate =
      "For a given {question}, we have two types of answers:\n"
      "A fast, intuitive response based on cognitive heuristics which is our System 1 Answer.\n"
      "System 1 Answer: {System 1 Answer}\n"
      "And a slow, deliberate, and logical reasoning response which is our System 2 Answer.\n"
      "System 2 Answer: {System 2 Answer}\n"
      "Your task is to adjust the two answers so that they are presented in the same order of tokens without "
      "altering their content. Ensure that the intuitive nature of the System 1 Answer and the logical reasoning of "
      "the System 2 Answer are preserved.";
  const std::pair<std::string_view, const std::string*> slots[] = {
      {"{question}", &item.question},
      {"{System 1 Answer}", &item.s1_answer},
      {"{System 2 Answer}", &item.s2_answer},
  };
  std::string out;
  std::size_t pos = 0;
  while (pos < kTemplate.size()) {
    bool replaced = false;
    if (kTemplate[pos] == '{') {
      for (const auto& [slot, value] : slots) {
        if (kTemplate.substr(pos, slot.size()) == slot) {
          out += *value;
          pos += slot.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out += kTemplate[pos++];
  }
  return out;
}

std::optional<std::pair<std::string, std::string>> parse_refinement_reply(std::string_view reply) {
  auto sections = labelled_sections(reply, {"System 1 Answer:", "System 2 Answer:"});
  if (!sections) return std::nullopt;
  return std::make_pair((*sections)[0], (*sections)[1]);
}

std::string to_string(RefineStatus s) {
  switch (s) {
    case RefineStatus::unchanged: return "unchanged";
    case RefineStatus::rewritten: return "rewritten";
    case RefineStatus::needs_review: return "needs_review";
  }
  return "unknown";
}

std::vector<RefineOutcome> refine_items(const std::vector<PreferenceItem>& items, Backend& rewriter,
                                        const GenerationRequest& params, const TokenCounter& counter,
                                        int parallelism) {
  std::vector<RefineOutcome> out(items.size());
  parallel_for(items.size(), parallelism, [&](std::size_t i) {
    RefineOutcome& o = out[i];
    o.item = items[i];
    o.before = length_disparity(items[i], counter);
    if (!o.before.flag) return;
    GenerationRequest req = params;
    req.prompt = build_refinement_prompt(items[i]);
    Generation gen;
    try {
      gen = rewriter.generate(req);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("refinement of item '{}' failed: {}", items[i].id, e.what()));
    }
    auto parsed = parse_refinement_reply(gen.text);
    o.status = RefineStatus::needs_review;
    if (!parsed) {
      o.note = "rewriter reply did not contain both labelled answers";
      return;
    }
    PreferenceItem candidate = items[i];
    candidate.s1_answer = parsed->first;
    candidate.s2_answer = parsed->second;
    o.after = length_disparity(candidate, counter);
    if (o.after->flag) {
      o.note = fmt::format("rewrite still differs by more than {} tokens", kDisparityThreshold);
      return;
    }
    o.item = std::move(candidate);
    o.status = RefineStatus::rewritten;
  });
  return out;
}

// --------------------------------------------------------------------------

std::string to_string(Winner w) { return w == Winner::S1 ? "S1" : "S2"; }

Winner parse_winner(const std::string& text) {
  auto key = alnum_lower(text);
  if (key == "s1" || key == "system1") return Winner::S1;
  if (key == "s2" || key == "system2") return Winner::S2;
  throw ConfigError(fmt::format("unknown target '{}' (expected S1 or S2)", text));
}

nlohmann::json pair_to_json(const TrainingPair& p) {
  return {{"prompt", p.prompt},
          {"chosen", p.chosen},
          {"rejected", p.rejected},
          {"source_id", p.source_id},
          {"winner_system", to_string(p.winner_system)}};
}

TrainingPair make_pair_for(const PreferenceItem& item, Winner winner) {
  TrainingPair p;
  p.prompt = item.question;
  p.source_id = item.id;
  p.winner_system = winner;
  p.chosen = winner == Winner::S1 ? item.s1_answer : item.s2_answer;
  p.rejected = winner == Winner::S1 ? item.s2_answer : item.s1_answer;
  if (p.chosen == p.rejected)
    throw ValidationError(fmt::format("item '{}': both answers are identical", item.id));
  return p;
}

std::vector<TrainingPair> export_pairs(const std::vector<PreferenceItem>& items, Winner target) {
  std::vector<TrainingPair> out;
  out.reserve(items.size());
  for (const auto& item : items) out.push_back(make_pair_for(item, target));
  return out;
}

std::uint64_t item_key(std::uint64_t seed, std::string_view salt, std::string_view id) {
  auto hex = sha256_hex(fmt::format("{}\x1f{}\x1f{}", seed, salt, id));
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

std::vector<std::size_t> seeded_order(const std::vector<PreferenceItem>& items, std::uint64_t seed,
                                      std::string_view salt) {
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
  keyed.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) keyed.emplace_back(item_key(seed, salt, items[i].id), i);
  std::sort(keyed.begin(), keyed.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return items[a.second].id < items[b.second].id;
  });
  std::vector<std::size_t> order;
  order.reserve(keyed.size());
  for (auto& k : keyed) order.push_back(k.second);
  return order;
}

MixPlan make_mix_plan(std::size_t n_items, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ValidationError(fmt::format("ratio {} is outside [0, 1]", ratio));
  MixPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.n_s2_winner = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_items)));
  plan.n_s1_winner = n_items - plan.n_s2_winner;
  return plan;
}

std::vector<TrainingPair> export_interpolated(const std::vector<PreferenceItem>& items, const MixPlan& plan) {
  if (plan.n_s1_winner + plan.n_s2_winner != items.size())
    throw ValidationError(fmt::format("mix plan covers {} items but {} were given",
                                      plan.n_s1_winner + plan.n_s2_winner, items.size()));
  auto order = seeded_order(items, plan.seed, "mix");
  std::vector<Winner> winners(items.size(), Winner::S1);
  for (std::size_t k = 0; k < plan.n_s2_winner; ++k) winners[order[k]] = Winner::S2;
  std::vector<TrainingPair> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out.push_back(make_pair_for(items[i], winners[i]));
  return out;
}

Split split_items(const std::vector<PreferenceItem>& items, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ValidationError(fmt::format("train fraction {} must lie strictly between 0 and 1", train_fraction));
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(items.size())));
  auto order = seeded_order(items, seed, "split");
  std::vector<bool> in_train(items.size(), false);
  for (std::size_t k = 0; k < n_train; ++k) in_train[order[k]] = true;
  Split s;
  for (std::size_t i = 0; i < items.size(); ++i) (in_train[i] ? s.train : s.validation).push_back(items[i]);
  return s;
}

nlohmann::json export_manifest(const std::string& kind, const MixPlan& plan, const std::string& source_digest,
                               std::size_t n_items) {
  return {{"kind", kind},
          {"seed", plan.seed},
          {"ratio", plan.ratio},
          {"n_items", n_items},
          {"counts", {{"s1_winner", plan.n_s1_winner}, {"s2_winner", plan.n_s2_winner}}},
          {"source_sha256", source_digest}};
}

// --------------------------------------------------------------------------

std::string build_expansion_prompt(HeuristicCategory category, const PreferenceItem& seed_example) {
  const auto& ci = info(category);
  return fmt::format(
      "{}: {}\n\n"
      "Example\n"
      "Question: {}\n"
      "System 1 Answer: {}\n"
      "System 2 Answer: {}\n\n"
      "Write one new question that tests {}, then a System 1 answer and a System 2 answer.\n"
      "The System 1 response should demonstrate intuitive, fast reasoning that relies on the heuristic, showing "
      "the shortcut-like process it uses. The responses should highlight the reasoning style itself, not just the "
      "final answer.\n"
      "The System 2 response should demonstrate slow, step-by-step reasoning that carefully analyzes the question, "
      "explicitly contrasting with System 1. The responses should highlight the reasoning style itself, not just "
      "the final answer.\n"
      "Reply with three lines labelled \"Question:\", \"System 1 Answer:\" and \"System 2 Answer:\".",
      ci.label, ci.definition, seed_example.question, seed_example.s1_answer, seed_example.s2_answer, ci.label);
}

std::optional<PreferenceItem> parse_generated_item(std::string_view reply, HeuristicCategory category,
                                                   std::string id) {
  auto sections = labelled_sections(reply, {"Question:", "System 1 Answer:", "System 2 Answer:"});
  if (!sections) return std::nullopt;
  return PreferenceItem{std::move(id), (*sections)[0], (*sections)[1], (*sections)[2], category};
}

}  // namespace dualsys
