#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "dualsys/benchmark.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"
#include "oracles/stats_oracle.hpp"
#include "unit/temp_dir.hpp"

using namespace dualsys;
using nlohmann::json;

namespace {

void write(const std::filesystem::path& p, const std::string& s) {
  std::ofstream f(p);
  f << s;
}

StageRecord rec(const std::string& id, std::optional<std::string> extracted, std::size_t t1 = 0, std::size_t t2 = 0) {
  StageRecord r;
  r.item_id = id;
  r.extracted = std::move(extracted);
  r.stage1_token_count = t1;
  r.stage2_token_count = t2;
  return r;
}

BenchmarkItem item(const std::string& id, const std::string& gold) { return {id, "q" + id, {}, gold}; }

}  // namespace

TEST_CASE("benchmark table") {
  const auto& all = all_benchmarks();
  REQUIRE(all.size() == 13);
  CHECK(all[0].name == "MultiArith");
  CHECK(all[12].name == "COM2SENSE");
  CHECK(benchmark_spec("gsm8k").instruction == "Therefore, the answer (arabic numerals) is");
  CHECK(benchmark_spec("AQuA").instruction == "Therefore, among A through E, the answer is");
  CHECK(benchmark_spec("CSQA").instruction == "Therefore, among A through E, the answer is");
  CHECK(benchmark_spec("SIQA").instruction == "Therefore, among A through C, the answer is");
  CHECK(benchmark_spec("PIQA").instruction == "Therefore, among A and B, the answer is");
  CHECK(benchmark_spec("COM2SENSE").instruction == "Therefore, the answer (TRUE or FALSE) is");
  CHECK(benchmark_spec("Strategy").instruction == "Therefore, the answer (Yes or No) is");
  CHECK(benchmark_spec("Coin").instruction == "Therefore, the answer (Yes or No) is");
  CHECK(benchmark_spec("Letters").instruction == "Therefore, the final answer is");
  for (const char* n : {"MultiArith", "SingleEq", "AddSub", "GSM8K", "SVAMP"}) {
    CHECK(benchmark_spec(n).format == AnswerFormat::numeral);
    CHECK(benchmark_spec(n).category == Category::arithmetic);
  }
  CHECK(benchmark_spec("AQuA").category == Category::arithmetic);
  CHECK(benchmark_spec("Coin").category == Category::symbolic);
  CHECK(benchmark_spec("Letter").category == Category::symbolic);
  CHECK(benchmark_spec("PIQA").category == Category::commonsense);
  CHECK_THROWS_AS(benchmark_spec("MMLU"), ValidationError);
  CHECK(choice_count(AnswerFormat::letter_AC) == 3);
  CHECK(choice_count(AnswerFormat::yes_no) == 0);
}

TEST_CASE("loading canonical files") {
  TempDir dir;
  write(dir / "gsm.jsonl",
        R"({"id": "g1", "question": "2+2?", "gold": "4"}
{"id": "g2", "question": "Big?", "gold": "1,234"}

{"id": 3, "question": "Half?", "gold": 0.5}
)");
  const auto items = load_benchmark(benchmark_spec("GSM8K"), dir / "gsm.jsonl");
  REQUIRE(items.size() == 3);
  CHECK(items[1].gold == "1234");
  CHECK(items[2].id == "3");
  CHECK(items[2].gold == "0.5");

  write(dir / "bad.jsonl", R"({"id": "g1", "question": "2+2?", "gold": "4"}
{"id": "g2", "question": "3+3?"}
)");
  CHECK_THROWS_WITH_AS(load_benchmark(benchmark_spec("GSM8K"), dir / "bad.jsonl"),
                       doctest::Contains("row 2: missing 'gold'"), ValidationError);

  write(dir / "dup.jsonl", R"({"id": "g1", "question": "a", "gold": "4"}
{"id": "g1", "question": "b", "gold": "5"}
)");
  CHECK_THROWS_WITH_AS(load_benchmark(benchmark_spec("GSM8K"), dir / "dup.jsonl"), doctest::Contains("duplicate"),
                       ValidationError);

  write(dir / "csqa.jsonl",
        R"({"id": "c1", "question": "Where?", "choices": [{"label": "A", "text": "bank"}, {"label": "B", "text": "park"}, {"label": "C", "text": "home"}, {"label": "D", "text": "shop"}, {"label": "E", "text": "zoo"}], "gold": "c"}
)");
  const auto cs = load_benchmark(benchmark_spec("CSQA"), dir / "csqa.jsonl");
  REQUIRE(cs.size() == 1);
  CHECK(cs[0].choices.size() == 5);
  CHECK(cs[0].gold == "C");

  write(dir / "csqa4.jsonl", R"({"id": "c1", "question": "Where?", "choices": ["a", "b", "c", "d"], "gold": "A"}
)");
  CHECK_THROWS_WITH_AS(load_benchmark(benchmark_spec("CSQA"), dir / "csqa4.jsonl"),
                       doctest::Contains("expected 5 choices"), ValidationError);
  write(dir / "coin.jsonl", R"({"id": "c1", "question": "Heads?", "choices": ["a", "b"], "gold": "yes"}
)");
  CHECK_THROWS_AS(load_benchmark(benchmark_spec("Coin"), dir / "coin.jsonl"), ValidationError);
  write(dir / "gold.jsonl", R"({"id": "c1", "question": "Heads?", "gold": "maybe"}
)");
  CHECK_THROWS_WITH_AS(load_benchmark(benchmark_spec("Coin"), dir / "gold.jsonl"), doctest::Contains("row 1"),
                       ValidationError);
}

TEST_CASE("prompt assembly") {
  const BenchmarkItem aqua{"a1", "Pick one.", {{"A", "1"}, {"B", "2"}, {"C", "3"}, {"D", "4"}, {"E", "5"}}, "B"};
  CHECK(stage1_prompt(aqua) == "Pick one.\nA) 1\nB) 2\nC) 3\nD) 4\nE) 5");
  const auto& coin = benchmark_spec("Coin");
  const BenchmarkItem c{"c1", "Is the coin still heads up?", {}, "yes"};
  const auto p2 = stage2_prompt(coin, c, "It was flipped twice.");
  CHECK(p2 == "Is the coin still heads up?\nIt was flipped twice.\nTherefore, the answer (Yes or No) is");
  CHECK(p2.size() >= coin.instruction.size());
  CHECK(p2.substr(p2.size() - coin.instruction.size()) == "Therefore, the answer (Yes or No) is");
  CHECK(stage2_prompt(coin, c, "It was flipped twice.") == p2);

  const auto& letter = benchmark_spec("Letter");
  const auto lp = stage2_prompt(letter, {"l1", "Take the last letters.", {}, "nado"}, "n a d o");
  CHECK(lp.substr(lp.size() - letter.instruction.size()) == "Therefore, the final answer is");
}

TEST_CASE("two-stage run against a scripted backend") {
  std::vector<std::string> prompts;
  SyntheticBackend backend([&](const GenerationRequest& r) {
    prompts.push_back(r.prompt);
    if (r.prompt.find("Therefore") != std::string::npos) {
      return scripted_generation(std::vector<std::string>{" Yes", "."}, {0.1, 0.0});
    }
    return scripted_generation(std::vector<std::string>{"It", " flips", " twice", "."}, {0.5, 0.2, 0.3, 0.0});
  });
  const auto& coin = benchmark_spec("Coin");
  const BenchmarkItem c{"c1", "Is the coin still heads up?", {}, "yes"};
  const auto r = run_two_stage(backend, {}, coin, c);
  REQUIRE(prompts.size() == 2);
  CHECK(prompts[0] == "Is the coin still heads up?");
  CHECK(prompts[1] == "Is the coin still heads up?\nIt flips twice.\nTherefore, the answer (Yes or No) is");
  CHECK(r.stage1_response == "It flips twice.");
  CHECK(r.stage2_response == " Yes.");
  CHECK(r.stage1_token_count == 4);
  CHECK(r.stage2_token_count == 2);
  CHECK(r.extracted == "yes");
  CHECK(r.correct == true);
  const auto q1 = r.stage2_prompt.find(c.question);
  const auto q2 = r.stage2_prompt.find(r.stage1_response);
  const auto q3 = r.stage2_prompt.find(coin.instruction);
  CHECK(q1 < q2);
  CHECK(q2 < q3);

  SyntheticBackend broken([](const GenerationRequest& r) -> Generation {
    throw CacheMissError(request_digest(r), "not recorded");
  });
  CHECK_THROWS_WITH_AS(run_two_stage(broken, {}, coin, c), doctest::Contains("stage 1"), CacheMissError);
}

TEST_CASE("extraction examples") {
  CHECK(extract_answer("the answer (arabic numerals) is 42.", AnswerFormat::numeral) == "42");
  CHECK(extract_answer("Step 1: 3 apples. Therefore, the answer (arabic numerals) is 1,250.", AnswerFormat::numeral) ==
        "1250");
  CHECK(extract_answer("We get 7.0 in total", AnswerFormat::numeral) == "7");
  CHECK(extract_answer("It is -3.50 degrees", AnswerFormat::numeral) == "-3.5");
  CHECK(extract_answer("no digits here", AnswerFormat::numeral) == std::nullopt);
  CHECK(extract_answer("...the answer is (B) because it fits.", AnswerFormat::letter_AE) == "B");
  CHECK(extract_answer("A careful look: the answer is C.", AnswerFormat::letter_AE) == "C");
  CHECK(extract_answer("the answer is (d)", AnswerFormat::letter_AE) == "D");
  CHECK(extract_answer("the answer is E", AnswerFormat::letter_AC) == std::nullopt);
  CHECK(extract_answer("Yes, it is.", AnswerFormat::yes_no) == "yes");
  CHECK(extract_answer("Therefore, the answer (Yes or No) is No.", AnswerFormat::yes_no) == "no");
  CHECK(extract_answer("The statement is FALSE.", AnswerFormat::true_false) == "false");
  CHECK(extract_answer("...final answer is \"nado\".", AnswerFormat::free_string) == "nado");
  CHECK(extract_answer("Therefore, the final answer is ya.", AnswerFormat::free_string) == "ya");
  CHECK(extract_answer("   ", AnswerFormat::free_string) == std::nullopt);
}

TEST_CASE("extraction is idempotent when its output is restated") {
  std::mt19937_64 rng(53);
  std::uniform_int_distribution<int> num(-5000, 500000), dec(0, 99), letter(0, 4);
  for (int i = 0; i < 200; ++i) {
    const auto n = std::to_string(num(rng)) + (i % 2 ? "." + std::to_string(dec(rng)) : "");
    const auto first = extract_answer("I think it is " + n + " overall", AnswerFormat::numeral);
    REQUIRE(first.has_value());
    CHECK(extract_answer("Therefore, the answer (arabic numerals) is " + *first + ".", AnswerFormat::numeral) == first);
    const std::string l(1, static_cast<char>('A' + letter(rng)));
    const auto lf = extract_answer("Option (" + l + ") works", AnswerFormat::letter_AE);
    CHECK(extract_answer("Therefore, among A through E, the answer is " + *lf + ".", AnswerFormat::letter_AE) == lf);
  }
  for (const char* s : {"nado", "ya", "lkje"}) {
    const auto f = extract_answer(std::string("the final answer is \"") + s + "\"", AnswerFormat::free_string);
    CHECK(extract_answer("the final answer is \"" + *f + "\".", AnswerFormat::free_string) == f);
  }
  CHECK(extract_answer("Answer: " + *extract_answer("yes indeed", AnswerFormat::yes_no), AnswerFormat::yes_no) == "yes");
}

TEST_CASE("numeral comparison") {
  CHECK(answers_match("7", "7.0", AnswerFormat::numeral));
  CHECK_FALSE(answers_match("7", "7.01", AnswerFormat::numeral));
  CHECK(answers_match("0.50", ".5", AnswerFormat::numeral));
  CHECK(answers_match("-0", "0", AnswerFormat::numeral));
  CHECK(canonical_number("007.100") == "7.1");
  CHECK(canonical_number("1,000,000") == "1000000");
  CHECK(canonical_number("abc") == std::nullopt);
  CHECK(canonical_number(".") == std::nullopt);
}

TEST_CASE("scoring") {
  const auto& gsm = benchmark_spec("GSM8K");
  const std::vector<BenchmarkItem> items{item("1", "4"), item("2", "5"), item("3", "6"), item("4", "7")};
  std::vector<StageRecord> records{rec("1", "4", 10, 2), rec("2", "5.0", 20, 4), rec("3", "6", 30, 6),
                                   rec("4", std::nullopt, 40, 8)};
  auto r = score(gsm, records, items);
  CHECK(r.accuracy == 75.0);
  CHECK(format_accuracy(r.accuracy) == "75.00");
  CHECK(r.n_extraction_miss == 1);
  CHECK(r.mean_stage1_tokens == 25.0);
  CHECK(r.mean_stage2_tokens == 5.0);

  std::mt19937_64 rng(59);
  for (int i = 0; i < 20; ++i) {
    std::shuffle(records.begin(), records.end(), rng);
    const auto p = score(gsm, records, items);
    CHECK(p.n_correct == r.n_correct);
    CHECK(p.records.front().item_id == "1");
  }

  CHECK_THROWS_AS(score(gsm, {}, {}), ValidationError);
  CHECK_THROWS_AS(score(gsm, {rec("1", "4")}, items), ValidationError);
  CHECK_THROWS_AS(score(gsm, {rec("1", "4"), rec("1", "4"), rec("2", "5"), rec("3", "6")}, items), ValidationError);

  // 7849 of 10000 prints with two decimals.
  std::vector<BenchmarkItem> many;
  std::vector<StageRecord> many_recs;
  for (int i = 0; i < 10000; ++i) {
    many.push_back(item(std::to_string(i), "1"));
    many_recs.push_back(rec(std::to_string(i), i < 7849 ? "1" : "2"));
  }
  CHECK(format_accuracy(score(gsm, many_recs, many).accuracy) == "78.49");

  const auto j = report_to_json(r, false);
  CHECK(j.at("accuracy") == "75.00");
  CHECK_FALSE(j.contains("records"));
}

TEST_CASE("accuracy table csv") {
  const auto csv = accuracy_table_csv({{"Llama-3", {{"GSM8K", 78.49}, {"MultiArith", 97.67}}},
                                       {"S2-DPO", {{"GSM8K", 79.37}, {"MultiArith", 98.67}}}},
                                      "Llama-3");
  CHECK(csv.rfind("model,MultiArith,GSM8K,AddSub,AQuA,SingleEq,SVAMP,Coin,Letter,CSQA,Strategy,PIQA,SIQA,COM2SENSE\n",
                  0) == 0);
  CHECK(csv.find("Llama-3,97.67,78.49,,") != std::string::npos);
  CHECK(csv.find("S2-DPO,98.67 (+1.00),79.37 (+0.88),,") != std::string::npos);
}

TEST_CASE("token difference report") {
  std::vector<StageRecord> base, a, b;
  for (int i = 0; i < 6; ++i) {
    const auto id = std::to_string(i);
    base.push_back(rec(id, "1", 100 + i, 20 + 2 * i));
    a.push_back(rec(id, "1", 100 + i, 20 + 2 * i));
    b.push_back(rec(id, "1", 110 + i, 30 + 2 * i));
  }
  auto self = token_diff_report(base, base, base);
  for (const auto& d : self.items) {
    CHECK(d.stage1_a == 0);
    CHECK(d.stage2_b == 0);
  }
  CHECK_FALSE(self.stage1.welch.has_value());

  const auto r = token_diff_report(a, b, base);
  CHECK(r.stage1.mean_a == 0.0);
  CHECK(r.stage1.mean_b == 10.0);
  CHECK(r.stage2.mean_b == 10.0);

  std::vector<StageRecord> short_b(b.begin(), b.end() - 1);
  CHECK_THROWS_WITH_AS(token_diff_report(a, short_b, base), doctest::Contains("not aligned"), ValidationError);
  auto renamed = b;
  renamed[0].item_id = "zz";
  CHECK_THROWS_AS(token_diff_report(a, renamed, base), ValidationError);
}

TEST_CASE("token difference Welch matches the oracle on a large constructed fixture") {
  std::mt19937_64 rng(61);
  std::normal_distribution<double> noise_a(0, 30), noise_b(25, 45);
  std::vector<StageRecord> base, a, b;
  std::vector<double> da, db;
  for (int i = 0; i < 4420; ++i) {
    const auto id = fmt::format("{:05d}", i);
    const long bs = 200;
    const long xa = std::max(0L, bs + std::lround(noise_a(rng)));
    const long xb = std::max(0L, bs + std::lround(noise_b(rng)));
    base.push_back(rec(id, "1", 50, bs));
    a.push_back(rec(id, "1", 50, xa));
    b.push_back(rec(id, "1", 50, xb));
    da.push_back(double(xa - bs));
    db.push_back(double(xb - bs));
  }
  const auto r = token_diff_report(a, b, base);
  REQUIRE(r.stage2.welch.has_value());
  const auto o = oracle::welch(db, da);
  CHECK(r.stage2.welch->statistic == doctest::Approx(o.t).epsilon(1e-9));
  CHECK(r.stage2.welch->df == doctest::Approx(o.df).epsilon(1e-9));
  const auto text = format_t(*r.stage2.welch);
  CHECK(text.rfind("t(", 0) == 0);
  CHECK(text.find(") = ") != std::string::npos);
  const auto j = token_diff_to_json(r);
  CHECK(j.at("stage2").at("welch").at("text") == text);
  CHECK(j.at("stage1").at("welch").is_null());
}

TEST_CASE("converters from public releases") {
  TempDir dir;
  write(dir / "gsm.jsonl", R"({"question": "Q1", "answer": "work\n#### 1,200"}
{"question": "Q2", "answer": "#### 7"}
)");
  auto rows = convert_public(benchmark_spec("GSM8K"), {dir / "gsm.jsonl"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("gold") == "1,200");
  CHECK(rows[0].at("id") == "GSM8K-1");

  write(dir / "aqua.jsonl",
        R"({"question": "Q", "options": ["A)21", "B)22", "C)23", "D)24", "E)25"], "rationale": "r", "correct": "B"}
)");
  rows = convert_public(benchmark_spec("AQuA"), {dir / "aqua.jsonl"});
  CHECK(rows[0].at("choices")[1].at("text") == "22");
  CHECK(rows[0].at("gold") == "B");

  write(dir / "csqa.jsonl",
        R"({"answerKey": "E", "id": "x9", "question": {"stem": "S?", "choices": [{"label": "A", "text": "a"}, {"label": "B", "text": "b"}, {"label": "C", "text": "c"}, {"label": "D", "text": "d"}, {"label": "E", "text": "e"}]}}
)");
  rows = convert_public(benchmark_spec("CSQA"), {dir / "csqa.jsonl"});
  CHECK(rows[0].at("id") == "x9");
  CHECK(rows[0].at("question") == "S?");

  write(dir / "addsub.json", R"([{"iIndex": 5, "sQuestion": " Q ", "lSolutions": [29.0]}])");
  rows = convert_public(benchmark_spec("AddSub"), {dir / "addsub.json"});
  CHECK(rows[0].at("gold") == "29");
  CHECK(rows[0].at("id") == "5");

  write(dir / "svamp.json", R"([{"ID": "chal-1", "Body": "Tom has 3 apples", "Question": "How many?", "Answer": 3.0}])");
  rows = convert_public(benchmark_spec("SVAMP"), {dir / "svamp.json"});
  CHECK(rows[0].at("question") == "Tom has 3 apples. How many?");

  write(dir / "strategy.json", R"({"examples": [{"input": "Is ice cold?", "target_scores": {"Yes": 1, "No": 0}}]})");
  rows = convert_public(benchmark_spec("Strategy"), {dir / "strategy.json"});
  CHECK(rows[0].at("gold") == "yes");

  write(dir / "letter.json", R"({"examples": [{"question": "Take the last letters of \"Ann Bo\".", "answer": "no"}]})");
  rows = convert_public(benchmark_spec("Letter"), {dir / "letter.json"});
  CHECK(rows[0].at("gold") == "no");

  write(dir / "piqa.jsonl", R"({"goal": "Open a jar", "sol1": "twist", "sol2": "smash"}
)");
  write(dir / "piqa-labels.lst", "0\n");
  rows = convert_public(benchmark_spec("PIQA"), {dir / "piqa.jsonl", dir / "piqa-labels.lst"});
  CHECK(rows[0].at("gold") == "A");
  CHECK_THROWS_AS(convert_public(benchmark_spec("PIQA"), {dir / "piqa.jsonl"}), ConfigError);

  write(dir / "siqa.jsonl", R"({"context": "Ann ran.", "question": "Why?", "answerA": "a", "answerB": "b", "answerC": "c"}
)");
  write(dir / "siqa-labels.lst", "3\n");
  rows = convert_public(benchmark_spec("SIQA"), {dir / "siqa.jsonl", dir / "siqa-labels.lst"});
  CHECK(rows[0].at("gold") == "C");
  CHECK(rows[0].at("question") == "Ann ran. Why?");

  write(dir / "c2s.json", R"([{"id": "k1", "sent": "Ice is hot.", "label": "False"}])");
  rows = convert_public(benchmark_spec("COM2SENSE"), {dir / "c2s.json"});
  CHECK(rows[0].at("gold") == "false");

  write(dir / "broken.jsonl", R"({"question": "Q1", "answer": "no marker"}
)");
  CHECK_THROWS_AS(convert_public(benchmark_spec("GSM8K"), {dir / "broken.jsonl"}), ValidationError);
}

TEST_CASE("stage records survive a write and reload") {
  const auto& coin = benchmark_spec("Coin");
  const BenchmarkItem c{"c1", "Heads up?", {}, "yes"};
  auto s1 = scripted_generation(std::vector<std::string>{"It", " stays", "."}, {0.4, 0.2, 0.0});
  auto s2 = scripted_generation(std::vector<std::string>{" Yes"}, {0.1});
  const auto r = make_stage_record(coin, c, s1, s2);

  const auto full = stage_record_from_json(stage_record_to_json(r, true));
  CHECK(full.item_id == r.item_id);
  CHECK(full.stage1_prompt == r.stage1_prompt);
  CHECK(full.stage2_prompt == r.stage2_prompt);
  CHECK(full.stage1_response == r.stage1_response);
  CHECK(full.stage2_response == r.stage2_response);
  CHECK(full.stage1_generation == r.stage1_generation);
  CHECK(full.stage2_generation == r.stage2_generation);
  CHECK(full.extracted == r.extracted);
  CHECK(full.correct == r.correct);
  CHECK(full.stage1_token_count == 3);
  CHECK(full.stage2_token_count == 1);
  CHECK(stage_record_to_json(full, true) == stage_record_to_json(r, true));

  const auto bare = stage_record_from_json(stage_record_to_json(r, false));
  CHECK(bare.stage1_generation.tokens.empty());
  CHECK(bare.stage1_token_count == 3);
  CHECK(bare.extracted == r.extracted);

  TempDir dir;
  write(dir / "records.jsonl", stage_record_to_json(r, true).dump() + "\n" + stage_record_to_json(r, false).dump() + "\n");
  const auto loaded = load_stage_records(dir / "records.jsonl");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].stage2_generation == r.stage2_generation);
  write(dir / "broken.jsonl", stage_record_to_json(r).dump() + "\n{\"item_id\": 3}\n");
  CHECK_THROWS_WITH_AS(load_stage_records(dir / "broken.jsonl"), doctest::Contains("line 2"), ValidationError);
}
