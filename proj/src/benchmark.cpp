#include "dualsys/benchmark.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>

#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {

using nlohmann::json;

namespace {

constexpr const char* kNumeralInstruction = "Therefore, the answer (arabic numerals) is";
constexpr const char* kYesNoInstruction = "Therefore, the answer (Yes or No) is";

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char letter_max(AnswerFormat f) {
  switch (f) {
    case AnswerFormat::letter_AE: return 'E';
    case AnswerFormat::letter_AC: return 'C';
    case AnswerFormat::letter_AB: return 'B';
    default: return '\0';
  }
}

// Text after the first instruction echo, or the whole text.
std::string_view after_echo(std::string_view raw) {
  const auto low = lower(raw);
  for (const char* phrase : {"answer (arabic numerals) is", "answer (yes or no) is", "answer (true or false) is",
                             "final answer is", "answer is"}) {
    const auto pos = low.find(phrase);
    if (pos != std::string::npos) return raw.substr(pos + std::string_view(phrase).size());
  }
  return raw;
}

std::optional<std::string> first_number(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
    std::size_t start = i;
    if (start > 0 && text[start - 1] == '-' && (start < 2 || !is_alnum(text[start - 2]))) --start;
    std::size_t end = i;
    while (end < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[end])) ||
            (text[end] == ',' && end + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[end + 1]))))) {
      ++end;
    }
    if (end + 1 < text.size() && text[end] == '.' && std::isdigit(static_cast<unsigned char>(text[end + 1]))) {
      ++end;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    }
    return canonical_number(text.substr(start, end - start));
  }
  return std::nullopt;
}

std::optional<std::string> first_letter(std::string_view text, char hi) {
  for (std::size_t i = 1; i + 1 < text.size(); ++i) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(text[i])));
    if (text[i - 1] == '(' && text[i + 1] == ')' && c >= 'A' && c <= hi) return std::string(1, c);
  }
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c < 'A' || c > hi) continue;
    const bool left = i == 0 || !is_alnum(text[i - 1]);
    const bool right = i + 1 == text.size() || !is_alnum(text[i + 1]);
    if (left && right) return std::string(1, c);
  }
  return std::nullopt;
}

std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (is_alnum(c)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::optional<std::string> first_of(std::string_view text, const char* x, const char* y) {
  for (const auto& w : words(text)) {
    if (w == x || w == y) return w;
  }
  return std::nullopt;
}

std::string strip_to_alnum_lower(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (is_alnum(c)) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::optional<std::string> free_string(std::string_view text) {
  // Straight or curly double quotes.
  static const std::vector<std::pair<std::string_view, std::string_view>> kQuotes{{"\"", "\""},
                                                                                  {"\xE2\x80\x9C", "\xE2\x80\x9D"}};
  std::size_t best = std::string_view::npos;
  std::optional<std::string> quoted;
  for (const auto& [open, close] : kQuotes) {
    const auto b = text.find(open);
    if (b == std::string_view::npos || b >= best) continue;
    const auto e = text.find(close, b + open.size());
    if (e == std::string_view::npos) continue;
    auto inner = strip_to_alnum_lower(text.substr(b + open.size(), e - b - open.size()));
    if (inner.empty()) continue;
    best = b;
    quoted = std::move(inner);
  }
  if (quoted) return quoted;
  const auto end = text.find_last_not_of(" \t\r\n");
  if (end == std::string_view::npos) return std::nullopt;
  auto start = text.find_last_of(" \t\r\n", end);
  start = start == std::string_view::npos ? 0 : start + 1;
  auto token = strip_to_alnum_lower(text.substr(start, end - start + 1));
  if (token.empty()) return std::nullopt;
  return token;
}

std::string json_scalar_to_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::floor(d) == d && std::abs(d) < 1e15) return fmt::format("{}", static_cast<long long>(d));
    return fmt::format("{}", d);
  }
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  throw ValidationError(fmt::format("expected a string or number, got {}", v.dump()));
}

}  // namespace

std::string to_string(Category c) {
  switch (c) {
    case Category::arithmetic: return "arithmetic";
    case Category::symbolic: return "symbolic";
    case Category::commonsense: return "commonsense";
  }
  return "arithmetic";
}

std::string to_string(AnswerFormat f) {
  switch (f) {
    case AnswerFormat::numeral: return "numeral";
    case AnswerFormat::letter_AE: return "letter_AE";
    case AnswerFormat::letter_AC: return "letter_AC";
    case AnswerFormat::letter_AB: return "letter_AB";
    case AnswerFormat::yes_no: return "yes_no";
    case AnswerFormat::true_false: return "true_false";
    case AnswerFormat::free_string: return "free_string";
  }
  return "numeral";
}

const std::vector<BenchmarkSpec>& all_benchmarks() {
  static const std::vector<BenchmarkSpec> kSpecs{
      {"MultiArith", Category::arithmetic, kNumeralInstruction, AnswerFormat::numeral},
      {"GSM8K", Category::arithmetic, kNumeralInstruction, AnswerFormat::numeral},
      {"AddSub", Category::arithmetic, kNumeralInstruction, AnswerFormat::numeral},
      {"AQuA", Category::arithmetic, "Therefore, among A through E, the answer is", AnswerFormat::letter_AE},
      {"SingleEq", Category::arithmetic, kNumeralInstruction, AnswerFormat::numeral},
      {"SVAMP", Category::arithmetic, kNumeralInstruction, AnswerFormat::numeral},
      {"Coin", Category::symbolic, kYesNoInstruction, AnswerFormat::yes_no},
      {"Letter", Category::symbolic, "Therefore, the final answer is", AnswerFormat::free_string},
      {"CSQA", Category::commonsense, "Therefore, among A through E, the answer is", AnswerFormat::letter_AE},
      {"Strategy", Category::commonsense, kYesNoInstruction, AnswerFormat::yes_no},
      {"PIQA", Category::commonsense, "Therefore, among A and B, the answer is", AnswerFormat::letter_AB},
      {"SIQA", Category::commonsense, "Therefore, among A through C, the answer is", AnswerFormat::letter_AC},
      {"COM2SENSE", Category::commonsense, "Therefore, the answer (TRUE or FALSE) is", AnswerFormat::true_false},
  };
  return kSpecs;
}

const BenchmarkSpec& benchmark_spec(std::string_view name) {
  auto key = lower(name);
  if (key == "letters" || key == "last_letters") key = "letter";
  if (key == "strategyqa") key = "strategy";
  if (key == "coin_flip") key = "coin";
  if (key == "commonsenseqa") key = "csqa";
  for (const auto& s : all_benchmarks()) {
    if (lower(s.name) == key) return s;
  }
  throw ValidationError(fmt::format("unknown benchmark '{}'", name));
}

bool is_letter_format(AnswerFormat f) { return letter_max(f) != '\0'; }

std::size_t choice_count(AnswerFormat f) {
  return is_letter_format(f) ? static_cast<std::size_t>(letter_max(f) - 'A' + 1) : 0;
}

// --------------------------------------------------------------------------

BenchmarkItem parse_benchmark_item(const BenchmarkSpec& spec, const json& row, std::size_t line) {
  auto fail = [&](const std::string& why) {
    return ValidationError(fmt::format("{} row {}: {}", spec.name, line, why));
  };
  if (!row.is_object()) throw fail("expected a JSON object");
  BenchmarkItem item;
  for (const char* field : {"id", "question", "gold"}) {
    if (!row.contains(field) || row[field].is_null()) throw fail(fmt::format("missing '{}'", field));
  }
  try {
    item.id = json_scalar_to_string(row["id"]);
    item.question = row["question"].get<std::string>();
  } catch (const std::exception& e) {
    throw fail(e.what());
  }
  if (item.id.empty()) throw fail("empty id");
  if (trim(item.question).empty()) throw fail("empty question");

  const bool has_choices = row.contains("choices") && !row["choices"].is_null();
  if (is_letter_format(spec.format)) {
    if (!has_choices || !row["choices"].is_array()) throw fail("letter-format benchmark rows need 'choices'");
    const auto want = choice_count(spec.format);
    if (row["choices"].size() != want) {
      throw fail(fmt::format("expected {} choices, got {}", want, row["choices"].size()));
    }
    for (std::size_t i = 0; i < want; ++i) {
      const auto& c = row["choices"][i];
      const std::string expected(1, static_cast<char>('A' + i));
      Choice choice;
      if (c.is_string()) {
        choice = {expected, c.get<std::string>()};
      } else if (c.is_object() && c.contains("text") && c["text"].is_string()) {
        choice = {c.value("label", expected), c["text"].get<std::string>()};
      } else {
        throw fail(fmt::format("choice {} must be a string or {{label, text}}", i));
      }
      if (choice.label != expected) throw fail(fmt::format("choice {} has label '{}', expected '{}'", i, choice.label, expected));
      item.choices.push_back(std::move(choice));
    }
  } else if (has_choices && !(row["choices"].is_array() && row["choices"].empty())) {
    throw fail(fmt::format("{} answers are {}, so rows must not carry choices", spec.name, to_string(spec.format)));
  }

  try {
    item.gold = normalize_gold(json_scalar_to_string(row["gold"]), spec.format);
  } catch (const Error& e) {
    throw fail(e.what());
  }
  return item;
}

std::vector<BenchmarkItem> load_benchmark(const BenchmarkSpec& spec, const std::filesystem::path& path) {
  std::vector<BenchmarkItem> items;
  std::set<std::string> ids;
  for (const auto& row : read_jsonl(path)) {
    auto item = parse_benchmark_item(spec, row.value, row.line);
    if (!ids.insert(item.id).second) {
      throw ValidationError(fmt::format("{} row {}: duplicate id '{}'", spec.name, row.line, item.id));
    }
    items.push_back(std::move(item));
  }
  if (items.empty()) throw ValidationError(fmt::format("{}: '{}' has no items", spec.name, path.string()));
  return items;
}

json benchmark_item_to_json(const BenchmarkItem& item) {
  json j{{"id", item.id}, {"question", item.question}, {"gold", item.gold}};
  if (!item.choices.empty()) {
    j["choices"] = json::array();
    for (const auto& c : item.choices) j["choices"].push_back(json{{"label", c.label}, {"text", c.text}});
  }
  return j;
}

std::string stage1_prompt(const BenchmarkItem& item) {
  std::string out = item.question;
  for (const auto& c : item.choices) out += fmt::format("\n{}) {}", c.label, c.text);
  return out;
}

std::string stage2_prompt(const BenchmarkSpec& spec, const BenchmarkItem& item, const std::string& stage1_response) {
  return stage1_prompt(item) + "\n" + stage1_response + "\n" + spec.instruction;
}

StageRecord make_stage_record(const BenchmarkSpec& spec, const BenchmarkItem& item, Generation stage1,
                              Generation stage2) {
  StageRecord r;
  r.item_id = item.id;
  r.stage1_prompt = stage1_prompt(item);
  r.stage1_response = stage1.text;
  r.stage2_prompt = stage2_prompt(spec, item, stage1.text);
  r.stage2_response = stage2.text;
  r.stage1_token_count = stage1.tokens.size();
  r.stage2_token_count = stage2.tokens.size();
  r.stage1_generation = std::move(stage1);
  r.stage2_generation = std::move(stage2);
  r.extracted = extract_answer(r.stage2_response, spec.format);
  r.correct = r.extracted && answers_match(*r.extracted, item.gold, spec.format);
  return r;
}

StageRecord run_two_stage(Backend& backend, const GenerationRequest& params, const BenchmarkSpec& spec,
                          const BenchmarkItem& item) {
  auto call = [&](const std::string& prompt, int stage) {
    GenerationRequest req = params;
    req.prompt = prompt;
    try {
      return backend.generate(req);
    } catch (const CacheMissError& e) {
      throw CacheMissError(e.digest(), fmt::format("{} item '{}' stage {}: {}", spec.name, item.id, stage, e.what()));
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("{} item '{}' stage {}: {}", spec.name, item.id, stage, e.what()));
    }
  };
  auto first = call(stage1_prompt(item), 1);
  auto second = call(stage2_prompt(spec, item, first.text), 2);
  return make_stage_record(spec, item, std::move(first), std::move(second));
}

json stage_record_to_json(const StageRecord& r, bool include_steps) {
  json j{{"item_id", r.item_id},
         {"stage1_prompt", r.stage1_prompt},
         {"stage1_response", r.stage1_response},
         {"stage2_prompt", r.stage2_prompt},
         {"stage2_response", r.stage2_response},
         {"extracted", r.extracted ? json(*r.extracted) : json(nullptr)},
         {"correct", r.correct ? json(*r.correct) : json(nullptr)},
         {"stage1_token_count", r.stage1_token_count},
         {"stage2_token_count", r.stage2_token_count}};
  if (include_steps) {
    j["stage1_generation"] = generation_to_json(r.stage1_generation);
    j["stage2_generation"] = generation_to_json(r.stage2_generation);
  }
  return j;
}

StageRecord stage_record_from_json(const json& j) {
  StageRecord r;
  try {
    r.item_id = j.at("item_id").get<std::string>();
    r.stage1_prompt = j.at("stage1_prompt").get<std::string>();
    r.stage1_response = j.at("stage1_response").get<std::string>();
    r.stage2_prompt = j.at("stage2_prompt").get<std::string>();
    r.stage2_response = j.at("stage2_response").get<std::string>();
    if (!j.at("extracted").is_null()) r.extracted = j.at("extracted").get<std::string>();
    if (!j.at("correct").is_null()) r.correct = j.at("correct").get<bool>();
    r.stage1_token_count = j.at("stage1_token_count").get<std::size_t>();
    r.stage2_token_count = j.at("stage2_token_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed stage record: {}", e.what()));
  }
  if (j.contains("stage1_generation")) r.stage1_generation = generation_from_json(j.at("stage1_generation"));
  if (j.contains("stage2_generation")) r.stage2_generation = generation_from_json(j.at("stage2_generation"));
  return r;
}

std::vector<StageRecord> load_stage_records(const std::filesystem::path& path) {
  std::vector<StageRecord> out;
  for (const auto& line : read_jsonl(path)) {
    try {
      out.push_back(stage_record_from_json(line.value));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("{} line {}: {}", path.string(), line.line, e.what()));
    }
  }
  return out;
}

// --------------------------------------------------------------------------

std::optional<std::string> canonical_number(std::string_view text) {
  std::string s;
  for (char c : trim(text)) {
    if (c != ',') s += c;
  }
  bool negative = false;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '-' || s[i] == '+')) negative = s[i++] == '-';
  std::string int_part;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) int_part += s[i++];
  std::string frac;
  if (i < s.size() && s[i] == '.') {
    ++i;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) frac += s[i++];
  }
  if (i != s.size() || (int_part.empty() && frac.empty())) return std::nullopt;
  int_part.erase(0, std::min(int_part.find_first_not_of('0'), int_part.size()));
  if (int_part.empty()) int_part = "0";
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  std::string out = int_part;
  if (!frac.empty()) out += "." + frac;
  if (negative && out != "0") out = "-" + out;
  return out;
}

std::optional<std::string> extract_answer(std::string_view raw, AnswerFormat format) {
  const auto tail = after_echo(raw);
  switch (format) {
    case AnswerFormat::numeral: return first_number(tail);
    case AnswerFormat::letter_AE:
    case AnswerFormat::letter_AC:
    case AnswerFormat::letter_AB: return first_letter(tail, letter_max(format));
    case AnswerFormat::yes_no: return first_of(tail, "yes", "no");
    case AnswerFormat::true_false: return first_of(tail, "true", "false");
    case AnswerFormat::free_string: return free_string(tail);
  }
  return std::nullopt;
}

std::string normalize_gold(std::string_view gold, AnswerFormat format) {
  const auto g = trim(gold);
  auto bad = [&] {
    return ValidationError(fmt::format("gold answer '{}' is not a valid {} answer", g, to_string(format)));
  };
  switch (format) {
    case AnswerFormat::numeral: {
      auto n = canonical_number(g);
      if (!n) throw bad();
      return *n;
    }
    case AnswerFormat::letter_AE:
    case AnswerFormat::letter_AC:
    case AnswerFormat::letter_AB: {
      std::string s = g;
      if (s.size() == 3 && s.front() == '(' && s.back() == ')') s = s.substr(1, 1);
      if (s.size() == 2 && s.back() == ')') s = s.substr(0, 1);
      if (s.size() != 1) throw bad();
      const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
      if (c < 'A' || c > letter_max(format)) throw bad();
      return std::string(1, c);
    }
    case AnswerFormat::yes_no: {
      const auto s = lower(g);
      if (s != "yes" && s != "no") throw bad();
      return s;
    }
    case AnswerFormat::true_false: {
      const auto s = lower(g);
      if (s != "true" && s != "false") throw bad();
      return s;
    }
    case AnswerFormat::free_string: {
      auto s = strip_to_alnum_lower(g);
      if (s.empty()) throw bad();
      return s;
    }
  }
  throw bad();
}

bool answers_match(std::string_view extracted, std::string_view gold, AnswerFormat format) {
  if (format == AnswerFormat::numeral) {
    const auto a = canonical_number(extracted);
    const auto b = canonical_number(gold);
    return a && b && *a == *b;
  }
  return extracted == gold;
}

// --------------------------------------------------------------------------

AccuracyReport score(const BenchmarkSpec& spec, std::vector<StageRecord> records, const std::vector<BenchmarkItem>& items) {
  if (items.empty()) throw ValidationError(fmt::format("{}: cannot score zero items", spec.name));
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < items.size(); ++i) index.emplace(items[i].id, i);

  std::vector<std::optional<StageRecord>> slots(items.size());
  for (auto& r : records) {
    const auto it = index.find(r.item_id);
    if (it == index.end()) throw ValidationError(fmt::format("{}: record for unknown item '{}'", spec.name, r.item_id));
    if (slots[it->second]) throw ValidationError(fmt::format("{}: two records for item '{}'", spec.name, r.item_id));
    slots[it->second] = std::move(r);
  }

  AccuracyReport rep;
  rep.benchmark = spec.name;
  rep.n_items = items.size();
  double tok1 = 0.0;
  double tok2 = 0.0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!slots[i]) throw ValidationError(fmt::format("{}: no record for item '{}'", spec.name, items[i].id));
    auto& r = *slots[i];
    r.correct = r.extracted && answers_match(*r.extracted, items[i].gold, spec.format);
    if (!r.extracted) ++rep.n_extraction_miss;
    if (*r.correct) ++rep.n_correct;
    tok1 += static_cast<double>(r.stage1_token_count);
    tok2 += static_cast<double>(r.stage2_token_count);
    rep.records.push_back(std::move(r));
  }
  const double n = static_cast<double>(rep.n_items);
  rep.accuracy = 100.0 * static_cast<double>(rep.n_correct) / n;
  rep.mean_stage1_tokens = tok1 / n;
  rep.mean_stage2_tokens = tok2 / n;
  return rep;
}

std::string format_accuracy(double percent) { return fmt::format("{:.2f}", percent); }

json report_to_json(const AccuracyReport& report, bool include_records) {
  json j{{"benchmark", report.benchmark},
         {"n_items", report.n_items},
         {"n_correct", report.n_correct},
         {"n_extraction_miss", report.n_extraction_miss},
         {"accuracy", format_accuracy(report.accuracy)},
         {"mean_stage1_tokens", report.mean_stage1_tokens},
         {"mean_stage2_tokens", report.mean_stage2_tokens}};
  if (include_records) {
    j["records"] = json::array();
    for (const auto& r : report.records) j["records"].push_back(stage_record_to_json(r));
  }
  return j;
}

std::string accuracy_table_csv(const std::vector<TableRow>& rows, const std::string& baseline_label) {
  const TableRow* baseline = nullptr;
  for (const auto& r : rows) {
    if (r.label == baseline_label) baseline = &r;
  }
  auto lookup = [](const TableRow& row, const std::string& name) -> std::optional<double> {
    for (const auto& [bench, acc] : row.accuracy) {
      if (lower(bench) == lower(name)) return acc;
    }
    return std::nullopt;
  };
  std::string out = "model";
  for (const auto& s : all_benchmarks()) out += "," + s.name;
  out += "\n";
  for (const auto& row : rows) {
    out += row.label;
    for (const auto& s : all_benchmarks()) {
      out += ",";
      const auto acc = lookup(row, s.name);
      if (!acc) continue;
      out += format_accuracy(*acc);
      if (baseline && &row != baseline) {
        if (const auto base = lookup(*baseline, s.name)) out += fmt::format(" ({:+.2f})", *acc - *base);
      }
    }
    out += "\n";
  }
  return out;
}

// --------------------------------------------------------------------------

TokenDiffReport token_diff_report(const std::vector<StageRecord>& a, const std::vector<StageRecord>& b,
                                  const std::vector<StageRecord>& base) {
  auto by_id = [](const std::vector<StageRecord>& rs, const char* which) {
    std::map<std::string, const StageRecord*> m;
    for (const auto& r : rs) {
      if (!m.emplace(r.item_id, &r).second) {
        throw ValidationError(fmt::format("token diff: duplicate item '{}' in {} records", r.item_id, which));
      }
    }
    return m;
  };
  const auto ma = by_id(a, "a");
  const auto mb = by_id(b, "b");
  const auto mbase = by_id(base, "base");
  auto same_keys = [](const auto& x, const auto& y) {
    return x.size() == y.size() && std::equal(x.begin(), x.end(), y.begin(), [](const auto& p, const auto& q) {
             return p.first == q.first;
           });
  };
  if (!same_keys(ma, mbase) || !same_keys(mb, mbase)) {
    throw ValidationError(fmt::format("token diff: record sets are not aligned ({} / {} / {} items or differing ids)",
                                      ma.size(), mb.size(), mbase.size()));
  }
  if (mbase.empty()) throw ValidationError("token diff: no records");

  TokenDiffReport rep;
  std::vector<double> s1a, s1b, s2a, s2b;
  for (const auto& [id, rb] : mbase) {
    const auto* ra = ma.at(id);
    const auto* rbb = mb.at(id);
    auto diff = [](std::size_t x, std::size_t y) { return static_cast<long>(x) - static_cast<long>(y); };
    TokenDiffItem d{id, diff(ra->stage1_token_count, rb->stage1_token_count),
                    diff(rbb->stage1_token_count, rb->stage1_token_count),
                    diff(ra->stage2_token_count, rb->stage2_token_count),
                    diff(rbb->stage2_token_count, rb->stage2_token_count)};
    s1a.push_back(static_cast<double>(d.stage1_a));
    s1b.push_back(static_cast<double>(d.stage1_b));
    s2a.push_back(static_cast<double>(d.stage2_a));
    s2b.push_back(static_cast<double>(d.stage2_b));
    rep.items.push_back(d);
  }
  auto summarize_stage = [](const std::vector<double>& da, const std::vector<double>& db) {
    StageDiffSummary s;
    const double n = static_cast<double>(da.size());
    for (std::size_t i = 0; i < da.size(); ++i) {
      s.mean_a += da[i] / n;
      s.mean_b += db[i] / n;
    }
    try {
      s.welch = welch_t(db, da);
    } catch (const ValidationError&) {
    } catch (const DegenerateTestError&) {
    }
    return s;
  };
  rep.stage1 = summarize_stage(s1a, s1b);
  rep.stage2 = summarize_stage(s2a, s2b);
  return rep;
}

json token_diff_to_json(const TokenDiffReport& report) {
  auto stage = [](const StageDiffSummary& s) {
    json j{{"mean_diff_a", s.mean_a}, {"mean_diff_b", s.mean_b}, {"welch", nullptr}};
    if (s.welch) {
      j["welch"] = json{{"t", s.welch->statistic},
                        {"df", s.welch->df},
                        {"p", s.welch->p_value},
                        {"cohens_d", s.welch->extras.at("cohens_d")},
                        {"text", format_t(*s.welch)}};
    }
    return j;
  };
  json items = json::array();
  for (const auto& d : report.items) {
    items.push_back(json{{"item_id", d.item_id},
                         {"stage1_a", d.stage1_a},
                         {"stage1_b", d.stage1_b},
                         {"stage2_a", d.stage2_a},
                         {"stage2_b", d.stage2_b}});
  }
  return json{{"stage1", stage(report.stage1)}, {"stage2", stage(report.stage2)}, {"items", items}};
}

// --------------------------------------------------------------------------

namespace {

json load_json_file(const std::filesystem::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw ValidationError(fmt::format("'{}' is not valid JSON: {}", p.string(), e.what()));
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::vector<std::string> out;
  const auto text = read_file(p);
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    auto line = trim(std::string_view(text).substr(pos, nl - pos));
    if (!line.empty()) out.push_back(std::move(line));
    pos = nl + 1;
  }
  return out;
}

json row(std::string id, std::string question, json gold, json choices = nullptr) {
  json r{{"id", std::move(id)}, {"question", std::move(question)}, {"gold", std::move(gold)}};
  if (!choices.is_null()) r["choices"] = std::move(choices);
  return r;
}

json letter_choices(const std::vector<std::string>& texts) {
  json out = json::array();
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out.push_back(json{{"label", std::string(1, static_cast<char>('A' + i))}, {"text", texts[i]}});
  }
  return out;
}

std::string id_or(const json& r, const char* key, const std::string& fallback) {
  if (r.contains(key) && !r[key].is_null()) return json_scalar_to_string(r[key]);
  return fallback;
}

}  // namespace

std::vector<json> convert_public(const BenchmarkSpec& spec, const std::vector<std::filesystem::path>& inputs) {
  if (inputs.empty()) throw ConfigError("convert: no input file given");
  const bool needs_labels = spec.name == "PIQA" || spec.name == "SIQA";
  if (needs_labels && inputs.size() < 2) throw ConfigError(fmt::format("convert {}: pass the data file and the labels file", spec.name));
  const auto& src = inputs[0];
  std::vector<json> out;
  const auto key = spec.name + "-";
  try {
    if (spec.name == "GSM8K") {
      for (const auto& l : read_jsonl(src)) {
        const auto answer = l.value.at("answer").get<std::string>();
        const auto mark = answer.rfind("####");
        if (mark == std::string::npos) throw ValidationError(fmt::format("line {}: answer has no '####' marker", l.line));
        out.push_back(row(id_or(l.value, "id", key + std::to_string(l.line)), l.value.at("question").get<std::string>(),
                          trim(answer.substr(mark + 4))));
      }
    } else if (spec.name == "AQuA") {
      for (const auto& l : read_jsonl(src)) {
        std::vector<std::string> texts;
        for (const auto& opt : l.value.at("options")) {
          auto s = opt.get<std::string>();
          const auto paren = s.find(')');
          texts.push_back(trim(paren != std::string::npos && paren <= 2 ? s.substr(paren + 1) : s));
        }
        out.push_back(row(key + std::to_string(l.line), l.value.at("question").get<std::string>(), l.value.at("correct"),
                          letter_choices(texts)));
      }
    } else if (spec.name == "CSQA") {
      for (const auto& l : read_jsonl(src)) {
        const auto& q = l.value.at("question");
        std::vector<std::string> texts;
        for (const auto& c : q.at("choices")) texts.push_back(c.at("text").get<std::string>());
        out.push_back(row(id_or(l.value, "id", key + std::to_string(l.line)), q.at("stem").get<std::string>(),
                          l.value.at("answerKey"), letter_choices(texts)));
      }
    } else if (spec.name == "AddSub" || spec.name == "MultiArith" || spec.name == "SingleEq") {
      const auto doc = load_json_file(src);
      std::size_t i = 0;
      for (const auto& r : doc) {
        ++i;
        out.push_back(row(id_or(r, "iIndex", key + std::to_string(i)), trim(r.at("sQuestion").get<std::string>()),
                          json_scalar_to_string(r.at("lSolutions").at(0))));
      }
    } else if (spec.name == "SVAMP") {
      const auto doc = load_json_file(src);
      std::size_t i = 0;
      for (const auto& r : doc) {
        ++i;
        auto body = trim(r.at("Body").get<std::string>());
        if (!body.empty() && body.back() != '.') body += ".";
        out.push_back(row(id_or(r, "ID", key + std::to_string(i)), body + " " + trim(r.at("Question").get<std::string>()),
                          json_scalar_to_string(r.at("Answer"))));
      }
    } else if (spec.name == "Strategy") {
      const auto doc = load_json_file(src);
      std::size_t i = 0;
      for (const auto& r : doc.at("examples")) {
        ++i;
        const bool yes = r.at("target_scores").at("Yes").get<int>() == 1;
        out.push_back(row(key + std::to_string(i), trim(r.at("input").get<std::string>()), yes ? "yes" : "no"));
      }
    } else if (spec.name == "Coin" || spec.name == "Letter") {
      const auto doc = load_json_file(src);
      std::size_t i = 0;
      for (const auto& r : doc.at("examples")) {
        ++i;
        out.push_back(row(key + std::to_string(i), r.at("question").get<std::string>(), r.at("answer")));
      }
    } else if (spec.name == "PIQA" || spec.name == "SIQA") {
      const auto rows = read_jsonl(src);
      const auto labels = read_lines(inputs[1]);
      if (labels.size() != rows.size()) {
        throw ValidationError(fmt::format("{} rows but {} labels", rows.size(), labels.size()));
      }
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i].value;
        const int label = std::stoi(labels[i]);
        if (spec.name == "PIQA") {
          if (label != 0 && label != 1) throw ValidationError(fmt::format("label {} is not 0 or 1", labels[i]));
          out.push_back(row(id_or(r, "id", key + std::to_string(i + 1)), r.at("goal").get<std::string>(),
                            std::string(1, static_cast<char>('A' + label)),
                            letter_choices({r.at("sol1").get<std::string>(), r.at("sol2").get<std::string>()})));
        } else {
          if (label < 1 || label > 3) throw ValidationError(fmt::format("label {} is not 1, 2 or 3", labels[i]));
          out.push_back(row(key + std::to_string(i + 1),
                            trim(r.at("context").get<std::string>()) + " " + trim(r.at("question").get<std::string>()),
                            std::string(1, static_cast<char>('A' + label - 1)),
                            letter_choices({r.at("answerA").get<std::string>(), r.at("answerB").get<std::string>(),
                                            r.at("answerC").get<std::string>()})));
        }
      }
    } else if (spec.name == "COM2SENSE") {
      const auto doc = load_json_file(src);
      std::size_t i = 0;
      for (const auto& r : doc) {
        ++i;
        out.push_back(row(id_or(r, "id", key + std::to_string(i)), r.at("sent").get<std::string>(),
                          lower(json_scalar_to_string(r.at("label")))));
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("convert {} from '{}': {}", spec.name, src.string(), e.what()));
  } catch (const std::invalid_argument&) {
    throw ValidationError(fmt::format("convert {}: labels file has a non-numeric line", spec.name));
  }
  // Every converted row must load under the canonical schema.
  for (std::size_t i = 0; i < out.size(); ++i) parse_benchmark_item(spec, out[i], i + 1);
  return out;
}

}  // namespace dualsys
