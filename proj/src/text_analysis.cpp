#include "dualsys/text_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {

// Generated from data/ at build time.
extern const char* const kBuiltinHedgeLexicon;
extern const char* const kBuiltinJudgeDemonstrations;

const char* const kJudgeInstruction =
    "Does the given answer directly answer the given question in a definitive way? ONLY RETURN YES OR NO IN A "
    "\\textbf{}. Definitive answers are clear and do not leave room for interpretation or ambiguity. If the answer "
    "tries to explore multiple perspectives or factors involved, it is not definitive, and YOU HAVE TO RETURN NO.";

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c == '\'' || c >= 0x80; }

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

}  // namespace

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) {
      // Quotes wrapping a word are punctuation, not part of it.
      std::string_view w = text.substr(start, i - start);
      while (!w.empty() && w.front() == '\'') w.remove_prefix(1);
      while (!w.empty() && w.back() == '\'') w.remove_suffix(1);
      if (!w.empty()) out.push_back(lower(w));
    }
  }
  return out;
}

HedgeLexicon::HedgeLexicon(const std::vector<std::string>& terms, std::string source) : source_(std::move(source)) {
  if (terms.empty()) throw ValidationError(fmt::format("hedge lexicon '{}' is empty", source_));
  std::set<std::string> seen;
  for (const auto& t : terms) {
    auto words = word_tokens(t);
    if (words.empty()) throw ValidationError(fmt::format("hedge lexicon '{}' has a blank term", source_));
    std::string key;
    for (const auto& w : words) key += (key.empty() ? "" : " ") + w;
    if (!seen.insert(key).second) {
      throw ValidationError(fmt::format("hedge lexicon '{}' lists '{}' twice", source_, key));
    }
    phrases_.push_back(std::move(words));
  }
  std::stable_sort(phrases_.begin(), phrases_.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  std::string canon;
  for (const auto& k : seen) canon += k + "\n";
  digest_ = sha256_hex(canon);
}

HedgeLexicon HedgeLexicon::parse(std::string_view contents, std::string source) {
  std::vector<std::string> terms;
  std::size_t pos = 0;
  while (pos <= contents.size()) {
    auto nl = contents.find('\n', pos);
    if (nl == std::string_view::npos) nl = contents.size();
    auto line = contents.substr(pos, nl - pos);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto term = trim(line);
    if (!term.empty()) terms.push_back(std::move(term));
    pos = nl + 1;
  }
  return HedgeLexicon(terms, std::move(source));
}

HedgeLexicon HedgeLexicon::load(const std::filesystem::path& path) { return parse(read_file(path), path.string()); }

const HedgeLexicon& HedgeLexicon::builtin() {
  static const HedgeLexicon lexicon = parse(kBuiltinHedgeLexicon, "builtin:hedge_lexicon.txt");
  return lexicon;
}

std::size_t hedge_count(std::string_view text, const HedgeLexicon& lexicon) {
  const auto words = word_tokens(text);
  std::size_t count = 0;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    for (const auto& phrase : lexicon.phrases()) {
      if (phrase.size() > words.size() - i) continue;
      if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
        matched = phrase.size();
        break;
      }
    }
    if (matched > 0) {
      ++count;
      i += matched;
    } else {
      ++i;
    }
  }
  return count;
}

double hedge_ratio(std::string_view text, const HedgeLexicon& lexicon) {
  const auto total = word_tokens(text).size();
  if (total == 0) return 0.0;
  return static_cast<double>(hedge_count(text, lexicon)) / static_cast<double>(total);
}

double mean_logprob(const Generation& gen) {
  if (gen.tokens.size() != gen.steps.size()) {
    throw ValidationError(fmt::format("generation has {} tokens but {} steps", gen.tokens.size(), gen.steps.size()));
  }
  if (gen.tokens.empty()) throw ValidationError("empty generation: no tokens to average");
  double sum = 0.0;
  for (std::size_t i = 0; i < gen.tokens.size(); ++i) {
    const auto& entries = gen.steps[i].entries;
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const TokenProb& e) { return e.token == gen.tokens[i]; });
    if (it == entries.end()) {
      throw ValidationError(fmt::format("step {}: chosen token '{}' has no probability in its distribution", i,
                                        gen.tokens[i]));
    }
    sum += it->log_probability();
  }
  const double mean = sum / static_cast<double>(gen.tokens.size());
  return mean > 0.0 ? 0.0 : mean;
}

// --------------------------------------------------------------------------

namespace {

const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kAbbrev{"e.g", "i.e", "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st",
                                             "vs", "fig", "approx", "inc", "ltd", "no", "cf", "al", "eq"};
  return kAbbrev;
}

bool closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

// Word (letters and inner dots) that ends right before text[dot].
std::string word_before(std::string_view text, std::size_t dot) {
  std::size_t b = dot;
  while (b > 0 && (std::isalpha(static_cast<unsigned char>(text[b - 1])) || text[b - 1] == '.')) --b;
  return lower(text.substr(b, dot - b));
}

std::vector<std::pair<std::size_t, std::size_t>> sentence_spans(std::string_view text) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = text.find_first_not_of(" \t\r\n");
  if (start == std::string_view::npos) return spans;
  std::size_t i = start;
  while (i < text.size()) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    std::size_t end = i + 1;
    while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?')) ++end;
    while (end < text.size() && closer(text[end])) ++end;
    std::size_t next = end;
    while (next < text.size() && std::isspace(static_cast<unsigned char>(text[next]))) ++next;
    bool boundary = false;
    if (next == text.size()) {
      boundary = true;
    } else if (next > end) {
      const auto n = static_cast<unsigned char>(text[next]);
      boundary = std::isupper(n) || std::isdigit(n) || n == '"' || n == '(';
    }
    if (boundary && c == '.' && end == i + 1 && abbreviations().count(word_before(text, i)) > 0) boundary = false;
    if (boundary) {
      spans.emplace_back(start, end);
      start = next;
      if (next == text.size()) return spans;
    }
    i = end;
  }
  const auto last = text.find_last_not_of(" \t\r\n");
  if (start <= last) spans.emplace_back(start, last + 1);
  return spans;
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& [b, e] : sentence_spans(text)) out.push_back(trim(text.substr(b, e - b)));
  return out;
}

std::string truncate_sentences(std::string_view text, int n) {
  if (n < 1) throw ValidationError(fmt::format("sentence count must be >= 1, got {}", n));
  const auto spans = sentence_spans(text);
  if (spans.size() <= static_cast<std::size_t>(n)) return std::string(text);
  return std::string(text.substr(0, spans[static_cast<std::size_t>(n) - 1].second));
}

// --------------------------------------------------------------------------

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::yes: return "yes";
    case Verdict::no: return "no";
    case Verdict::unparseable: return "unparseable";
  }
  return "unparseable";
}

Verdict parse_verdict_name(const std::string& text) {
  const auto t = lower(text);
  if (t == "yes") return Verdict::yes;
  if (t == "no") return Verdict::no;
  if (t == "unparseable") return Verdict::unparseable;
  throw ValidationError(fmt::format("unknown verdict '{}'", text));
}

std::vector<JudgeDemonstration> parse_demonstrations(std::string_view json_text, const std::string& source) {
  std::vector<JudgeDemonstration> out;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    for (const auto& d : doc.at("demonstrations")) {
      JudgeDemonstration demo{d.at("question").get<std::string>(), d.at("answer").get<std::string>(),
                              parse_verdict_name(d.at("verdict").get<std::string>())};
      if (demo.verdict == Verdict::unparseable) {
        throw ValidationError(fmt::format("demonstration verdict must be YES or NO in '{}'", source));
      }
      out.push_back(std::move(demo));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("judge demonstrations '{}': {}", source, e.what()));
  }
  if (out.empty()) throw ValidationError(fmt::format("judge demonstrations '{}' is empty", source));
  return out;
}

std::vector<JudgeDemonstration> load_demonstrations(const std::filesystem::path& path) {
  return parse_demonstrations(read_file(path), path.string());
}

const std::vector<JudgeDemonstration>& builtin_demonstrations() {
  static const auto demos = parse_demonstrations(kBuiltinJudgeDemonstrations, "builtin:judge_demonstrations.json");
  return demos;
}

std::string build_judge_prompt(const std::string& question, const std::string& answer,
                               const std::vector<JudgeDemonstration>& demos) {
  std::string out = kJudgeInstruction;
  out += "\n\n";
  for (const auto& d : demos) {
    out += fmt::format("Question: {}\nAnswer: {}\nVerdict: \\textbf{{{}}}\n\n", d.question, d.answer,
                       d.verdict == Verdict::yes ? "YES" : "NO");
  }
  out += fmt::format("Question: {}\nAnswer: {}\nVerdict:", question, answer);
  return out;
}

Verdict parse_verdict(std::string_view reply) {
  const auto low = lower(reply);
  for (std::size_t pos = low.find("\\textbf{"); pos != std::string::npos; pos = low.find("\\textbf{", pos + 1)) {
    const auto close = low.find('}', pos);
    if (close == std::string::npos) break;
    const auto inner = trim(std::string_view(low).substr(pos + 8, close - pos - 8));
    if (inner == "yes") return Verdict::yes;
    if (inner == "no") return Verdict::no;
  }
  bool yes = false;
  bool no = false;
  for (const auto& w : word_tokens(reply)) {
    yes = yes || w == "yes";
    no = no || w == "no";
  }
  if (yes != no) return yes ? Verdict::yes : Verdict::no;
  return Verdict::unparseable;
}

DefinitiveJudgement judge_definitive(Backend& judge, const GenerationRequest& params, const std::string& item_id,
                                     const std::string& question, const std::string& reasoning, int n,
                                     const std::vector<JudgeDemonstration>& demos) {
  if (std::find(kSentenceGrid.begin(), kSentenceGrid.end(), n) == kSentenceGrid.end()) {
    throw ValidationError(fmt::format("sentence count {} is not one of 1, 3, 6, 9, 12, 15", n));
  }
  DefinitiveJudgement j;
  j.item_id = item_id;
  j.n_sentences = n;
  j.prompt = build_judge_prompt(question, truncate_sentences(reasoning, n), demos);
  GenerationRequest req = params;
  req.prompt = j.prompt;
  try {
    j.reply = judge.generate(req).text;
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("judge call for item '{}' failed: {}", item_id, e.what()));
  }
  j.verdict = parse_verdict(j.reply);
  return j;
}

}  // namespace dualsys
