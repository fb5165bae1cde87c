#pragma once

// Surface-level measures over model reasoning: hedge-word ratio, per-token
// log-probability, sentence truncation and an LLM judge for definitiveness.

#include <array>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dualsys/model_client.hpp"

namespace dualsys {

/// Lowercased word tokens. A word is a maximal run of letters, digits,
/// apostrophes or non-ASCII bytes.
std::vector<std::string> word_tokens(std::string_view text);

class HedgeLexicon {
 public:
  /// Throws ValidationError on an empty list, blank or duplicate terms.
  HedgeLexicon(const std::vector<std::string>& terms, std::string source);

  /// One term per line; '#' starts a comment.
  static HedgeLexicon load(const std::filesystem::path& path);
  static HedgeLexicon parse(std::string_view contents, std::string source);
  /// The lexicon shipped in data/hedge_lexicon.txt, compiled in.
  static const HedgeLexicon& builtin();

  const std::vector<std::vector<std::string>>& phrases() const { return phrases_; }
  std::size_t size() const { return phrases_.size(); }
  const std::string& source() const { return source_; }
  /// SHA-256 over the sorted, normalized terms.
  const std::string& digest() const { return digest_; }

 private:
  std::vector<std::vector<std::string>> phrases_;  // longest first
  std::string source_;
  std::string digest_;
};

/// Hedge occurrences (longest match, each multi-word phrase counted once)
/// divided by the word count. 0 for text without words.
double hedge_ratio(std::string_view text, const HedgeLexicon& lexicon);
std::size_t hedge_count(std::string_view text, const HedgeLexicon& lexicon);

/// Mean natural-log probability of the emitted tokens. Throws ValidationError
/// naming the step when a chosen token is absent from its distribution.
double mean_logprob(const Generation& gen);

/// Sentence spans: a sentence ends at '.', '!' or '?' (plus closing quotes or
/// brackets) followed by whitespace and an uppercase letter or digit, or by the
/// end of the text. Common abbreviations do not end sentences.
std::vector<std::string> split_sentences(std::string_view text);

/// The first n sentences of `text`, or the text unchanged when it has at most n.
std::string truncate_sentences(std::string_view text, int n);

inline constexpr std::array<int, 6> kSentenceGrid{1, 3, 6, 9, 12, 15};

enum class Verdict { yes, no, unparseable };

std::string to_string(Verdict v);
Verdict parse_verdict_name(const std::string& text);

struct JudgeDemonstration {
  std::string question;
  std::string answer;
  Verdict verdict = Verdict::no;
};

/// Reads {"demonstrations": [{question, answer, verdict}, ...]}.
std::vector<JudgeDemonstration> load_demonstrations(const std::filesystem::path& path);
std::vector<JudgeDemonstration> parse_demonstrations(std::string_view json_text, const std::string& source);
/// The six demonstrations shipped in data/judge_demonstrations.json.
const std::vector<JudgeDemonstration>& builtin_demonstrations();

/// The judge instruction, verbatim.
extern const char* const kJudgeInstruction;

std::string build_judge_prompt(const std::string& question, const std::string& answer,
                               const std::vector<JudgeDemonstration>& demos);

/// \textbf{YES}/\textbf{NO} wins; otherwise a lone yes or no word; otherwise unparseable.
Verdict parse_verdict(std::string_view reply);

struct DefinitiveJudgement {
  std::string item_id;
  int n_sentences = 1;
  Verdict verdict = Verdict::unparseable;
  std::string prompt;
  std::string reply;
};

/// Judges the first n sentences of `reasoning`. n must be in kSentenceGrid.
/// Backend failures are rethrown with the item id attached.
DefinitiveJudgement judge_definitive(Backend& judge, const GenerationRequest& params, const std::string& item_id,
                                     const std::string& question, const std::string& reasoning, int n,
                                     const std::vector<JudgeDemonstration>& demos = builtin_demonstrations());

}  // namespace dualsys
