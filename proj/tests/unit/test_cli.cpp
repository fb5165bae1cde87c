#include <doctest.h>

#include <set>

#include "dualsys/benchmark.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"
#include "dualsys/run_config.hpp"
#include "support/fixtures.hpp"
#include "unit/temp_dir.hpp"

using namespace dualsys;
using fixture::read_text;
using fixture::run_cli;
using nlohmann::json;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars](const std::string& name) -> std::optional<std::string> {
    auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

std::vector<json> jsonl(const std::filesystem::path& p) {
  std::vector<json> rows;
  for (auto& r : read_jsonl(p)) rows.push_back(r.value);
  return rows;
}

}  // namespace

TEST_CASE("environment interpolation") {
  const auto env = env_of({{"HOST", "gpu1"}, {"EMPTY", ""}});
  CHECK(interpolate_env("http://${HOST}:8000", env) == "http://gpu1:8000");
  CHECK(interpolate_env("cost $$5 on ${HOST}${EMPTY}", env) == "cost $5 on gpu1");
  CHECK(interpolate_env("no refs", env) == "no refs");
  CHECK_THROWS_WITH_AS(interpolate_env("${MISSING}", env), doctest::Contains("MISSING"), ConfigError);
  CHECK_THROWS_AS(interpolate_env("${HOST", env), ConfigError);
}

TEST_CASE("run config parsing") {
  TempDir dir;
  fixture::write_text(dir / "scripts/s1.json", R"({"default": {"text": "ok"}})");
  const json doc{{"backends",
                  {{"s1", {{"kind", "synthetic"}, {"script", "scripts/s1.json"}, {"temperature", 0.7}}},
                   {"s2", {{"kind", "http"}, {"url", "http://${HOST}/v1"}, {"model", "big"}, {"api_key_env", "KEY"}}}}},
                 {"w", 0.3},
                 {"tie_break", "s2"},
                 {"seed", 11},
                 {"equivalence_margins", {"2", "10%"}}};
  const auto cfg = parse_run_config(doc, dir.path(), env_of({{"HOST", "gpu1"}}));
  CHECK(cfg.w == 0.3);
  CHECK(cfg.tie_break == TieBreak::prefer_s2);
  CHECK(cfg.seed == 11);
  CHECK(cfg.backend("s1").backend.script_path == dir / "scripts/s1.json");
  CHECK(cfg.backend("s1").params.temperature == 0.7);
  CHECK(cfg.backend("s1").backend.model_tag == "s1");
  CHECK(cfg.backend("s2").backend.endpoint_url == "http://gpu1/v1");
  CHECK(cfg.backend("s2").backend.auth_token_env_var == "KEY");
  REQUIRE(cfg.equivalence_margins.size() == 2);
  CHECK(cfg.equivalence_margins[1].relative);
  CHECK(cfg.equivalence_margins[1].value == doctest::Approx(0.10));
  CHECK_THROWS_AS(cfg.backend("judge"), ConfigError);
  validate_run_config(cfg);
  CHECK(run_config_summary(cfg).dump().find("KEY") == std::string::npos);

  CHECK_THROWS_WITH_AS(parse_run_config({{"wieght", 0.4}}, dir.path(), env_of({})), doctest::Contains("wieght"),
                       ConfigError);
  auto bad = cfg;
  bad.w = 1.5;
  CHECK_THROWS_AS(validate_run_config(bad), Error);
  auto missing = cfg;
  missing.backends["s1"].backend.script_path = dir / "nope.json";
  CHECK_THROWS_AS(validate_run_config(missing), ConfigError);

  CHECK(to_string(parse_margin("5%")) == "5%");
  CHECK(to_string(parse_margin("3")) == "3");
  CHECK_THROWS_AS(parse_margin("x"), ConfigError);
}

TEST_CASE("usage errors exit 1") {
  TempDir dir;
  fixture::write_dual_fixture(dir.path(), 4);
  const auto cfg = (dir / "cfg.json").string();
  CHECK(run_cli({"eval", "--config", cfg, "--benchmark", "coin", "--w", "1.5", "--out", (dir / "o").string()}).code == 1);
  CHECK(run_cli({"eval", "--config", cfg, "--benchmark", "coin", "--w", "0.4", "--sweep-w", "0:1:0.5"}).code == 1);
  CHECK(run_cli({"nonsense"}).code == 1);
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"--help"}).code == 0);
  const auto v = run_cli({"--version"});
  CHECK(v.code == 0);
  CHECK(!v.out.empty());
  CHECK(run_cli({"eval", "--config", (dir / "absent.json").string(), "--benchmark", "coin"}).code == 1);
}

TEST_CASE("dynamic eval, sweep and replay") {
  TempDir dir;
  fixture::write_dual_fixture(dir.path(), 8);
  const auto cfg = (dir / "cfg.json").string();
  auto r = run_cli({"eval", "--config", cfg, "--benchmark", "coin", "--out", (dir / "live").string(), "--record",
                    (dir / "rec").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto report = json::parse(read_text(dir / "live/report.json"));
  CHECK(report["accuracy"] == "100.00");
  CHECK(report["single_system"]["s1"] == "50.00");
  CHECK(report["single_system"]["s2"] == "50.00");
  CHECK(report["chose_s1"] == 4);
  CHECK(jsonl(dir / "live/audit.jsonl").size() == 8);
  CHECK(jsonl(dir / "live/audit.jsonl")[0].contains("latency_ms") == false);

  fixture::write_replay_config(dir.path(), "rec");
  const auto replay = (dir / "replay.json").string();
  for (const char* out : {"a", "b"}) {
    r = run_cli({"eval", "--config", replay, "--benchmark", "coin", "--out", (dir / out).string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  for (const char* f : {"report.json", "manifest.json", "records.jsonl", "records_s1.jsonl", "audit.jsonl"})
    CHECK_MESSAGE(read_text(dir / "a" / f) == read_text(dir / "b" / f), f);
  CHECK(read_text(dir / "a/records.jsonl") == read_text(dir / "live/records.jsonl"));

  r = run_cli({"eval", "--config", replay, "--benchmark", "coin", "--sweep-w", "0:1:0.1", "--out", (dir / "sw").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  int reports = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "sw/sweep"))
    reports += std::filesystem::exists(e.path() / "report.json");
  CHECK(reports == 11);
  CHECK(std::filesystem::exists(dir / "sw/sweep/w0.40/report.json"));
  const auto csv = read_text(dir / "sw/sweep.csv");
  CHECK(first_line(csv) == "w,accuracy,n_correct,n_items,chose_s1,chose_s2,ties");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 12);

  r = run_cli({"eval", "--config", replay, "--benchmark", "coin", "--system", "s2", "--out", (dir / "single").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(json::parse(read_text(dir / "single/report.json"))["accuracy"] == "50.00");

  fixture::write_text(dir / "empty_rec/s1.jsonl", "");
  fixture::write_text(dir / "empty_rec/s2.jsonl", "");
  fixture::write_replay_config(dir.path(), "empty_rec");
  CHECK(run_cli({"eval", "--config", replay, "--benchmark", "coin", "--out", (dir / "miss").string()}).code == 3);
}

TEST_CASE("arbitrate writes answers, audit and summary") {
  TempDir dir;
  fixture::write_dual_fixture(dir.path(), 4);
  fixture::write_jsonl(dir / "prompts.jsonl", {{{"id", "a"}, {"prompt", "Person0 flips"}}, {{"id", "b"}, {"prompt", "Person1 flips"}}});
  auto r = run_cli({"arbitrate", "--config", (dir / "cfg.json").string(), "--prompts", (dir / "prompts.jsonl").string(),
                    "--out", (dir / "arb").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto answers = jsonl(dir / "arb/answers.jsonl");
  REQUIRE(answers.size() == 2);
  CHECK(answers[0]["chosen"] == "s1");
  CHECK(answers[1]["chosen"] == "s2");
  const auto summary = json::parse(read_text(dir / "arb/summary.json"));
  CHECK(summary["chose_s1"] == 1);
  CHECK(summary["chose_s2"] == 1);
  const auto audit = jsonl(dir / "arb/audit.jsonl");
  const auto recomputed = recompute_scores(audit[0]);
  CHECK(recomputed.r1 == doctest::Approx(audit[0]["r1"].get<double>()).epsilon(1e-12));

  fixture::write_text(dir / "dup.jsonl", "{\"id\":\"a\",\"prompt\":\"x\"}\n{\"id\":\"a\",\"prompt\":\"y\"}\n");
  CHECK(run_cli({"arbitrate", "--config", (dir / "cfg.json").string(), "--prompts", (dir / "dup.jsonl").string(),
                 "--out", (dir / "arb2").string()})
            .code == 2);
}

TEST_CASE("analysis outputs") {
  TempDir dir;
  fixture::write_dual_fixture(dir.path(), 8);
  const auto cfg = (dir / "cfg.json").string();
  REQUIRE(run_cli({"eval", "--config", cfg, "--benchmark", "coin", "--out", (dir / "run").string()}).code == 0);
  const auto s1 = "s1=" + (dir / "run/records_s1.jsonl").string();
  const auto s2 = "s2=" + (dir / "run/records_s2.jsonl").string();
  const auto out = (dir / "an").string();

  auto r = run_cli({"analyze", "logprob", "--records", s1, "--records", s2, "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(first_line(read_text(dir / "an/logprob.csv")) == "group,item_id,mean_logprob");
  CHECK(first_line(read_text(dir / "an/logprob_tests.csv")) == "group,metric,statistic,df,p,n");

  r = run_cli({"analyze", "hedge", "--records", s1, "--records", s2, "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(first_line(read_text(dir / "an/hedge.csv")) == "group,item_id,words,hedges,ratio");
  const auto hedge = json::parse(read_text(dir / "an/hedge_summary.json"));
  CHECK(hedge["lexicon"]["terms"].get<int>() > 0);
  CHECK(hedge["tests"][0].contains("skipped"));

  r = run_cli({"analyze", "definitive", "--config", cfg, "--records", s1, "--records", s2, "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(first_line(read_text(dir / "an/definitive.csv")) == "group,item_id,n_sentences,verdict");
  CHECK(first_line(read_text(dir / "an/definitive_ratio.csv")) ==
        "group,n_sentences,n,yes,no,unparseable,definitive_ratio");
  CHECK(run_cli({"analyze", "definitive", "--records", s1, "--records", s2, "--out", out}).code == 1);

  r = run_cli({"analyze", "token-diff", "--a", (dir / "run/records_s1.jsonl").string(), "--b",
               (dir / "run/records_s2.jsonl").string(), "--base", (dir / "run/records_s1.jsonl").string(), "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(first_line(read_text(dir / "an/token_diff.csv")) == "item_id,stage1_a,stage1_b,stage2_a,stage2_b");

  r = run_cli({"analyze", "table", "--report", "dyn=" + (dir / "run/report.json").string(), "--report",
               "base=" + (dir / "run/report.json").string(), "--baseline", "base", "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::filesystem::exists(dir / "an/accuracy_table.csv"));

  fixture::write_jsonl(dir / "items.jsonl", fixture::preference_rows(40));
  r = run_cli({"analyze", "lengths", "--items", (dir / "items.jsonl").string(), "--out", out});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(first_line(read_text(dir / "an/lengths.csv")) == "item_id,category,n_s1,n_s2,flag");
  const auto lengths = json::parse(read_text(dir / "an/lengths_summary.json"));
  CHECK(lengths.dump().find("5%") != std::string::npos);

  CHECK(run_cli({"analyze", "digits", "--s1", (dir / "run/records_s1.jsonl").string(), "--s2",
                 (dir / "run/records_s2.jsonl").string(), "--benchmark", "coin", "--items", (dir / "coin.jsonl").string(),
                 "--out", out})
            .code == 1);
  CHECK(run_cli({"analyze", "logprob", "--records", "nolabel", "--out", out}).code == 1);
}

TEST_CASE("dataset commands") {
  TempDir dir;
  auto rows = fixture::preference_rows(40);
  fixture::write_jsonl(dir / "items.jsonl", rows);
  const auto items = (dir / "items.jsonl").string();

  auto r = run_cli({"dataset", "validate", "--items", items, "--report", (dir / "v.json").string()});
  CHECK_MESSAGE(r.code == 0, r.err);
  CHECK(json::parse(read_text(dir / "v.json"))["categories_covered"] == 10);

  auto bad = rows;
  bad[3]["category"] = "Framing";
  fixture::write_jsonl(dir / "bad.jsonl", bad);
  r = run_cli({"dataset", "validate", "--items", (dir / "bad.jsonl").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("Framing") != std::string::npos);
  CHECK(run_cli({"dataset", "validate", "--items", (dir / "missing.jsonl").string()}).code == 1);

  r = run_cli({"dataset", "export", "--items", items, "--target", "s2", "--out", (dir / "t").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto pairs = jsonl(dir / "t/pairs.jsonl");
  REQUIRE(pairs.size() == rows.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i]["chosen"] == rows[i]["s2_answer"]);
    CHECK(pairs[i]["rejected"] == rows[i]["s1_answer"]);
  }
  CHECK(run_cli({"dataset", "export", "--items", items, "--out", (dir / "t").string()}).code == 1);
  CHECK(run_cli({"dataset", "export", "--items", items, "--target", "s2", "--ratio", "0.5"}).code == 1);
  CHECK(run_cli({"dataset", "export", "--items", items, "--ratio", "1.5"}).code == 1);

  for (const char* out : {"m1", "m2"}) {
    r = run_cli({"dataset", "export", "--items", items, "--ratio", "0.25", "--seed", "7", "--out", (dir / out).string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }
  CHECK(read_text(dir / "m1/pairs_r0.250.jsonl") == read_text(dir / "m2/pairs_r0.250.jsonl"));
  CHECK(read_text(dir / "m1/manifest.json") == read_text(dir / "m2/manifest.json"));
  int s2_winners = 0;
  for (const auto& p : jsonl(dir / "m1/pairs_r0.250.jsonl")) s2_winners += p["winner_system"] == "S2";
  CHECK(s2_winners == 10);

  r = run_cli({"dataset", "split", "--items", items, "--seed", "3", "--out", (dir / "sp").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto train = jsonl(dir / "sp/train.jsonl"), validation = jsonl(dir / "sp/validation.jsonl");
  CHECK(train.size() == 32);
  CHECK(validation.size() == 8);
  std::set<std::string> ids;
  for (const auto& v : train) ids.insert(v["id"].get<std::string>());
  for (const auto& v : validation) CHECK(ids.insert(v["id"].get<std::string>()).second);
}

TEST_CASE("dataset refine and generate with synthetic backends") {
  TempDir dir;
  auto rows = fixture::preference_rows(4);
  std::string long_answer = "slow";
  for (int k = 0; k < 30; ++k) long_answer += " step";
  rows[0]["s2_answer"] = long_answer;
  fixture::write_jsonl(dir / "items.jsonl", rows);
  fixture::write_text(dir / "rw.json",
                      json{{"default", {{"text", "System 1 Answer: short and quick\nSystem 2 Answer: short but careful"}}}}
                          .dump());
  fixture::write_text(dir / "gen.json",
                      json{{"default",
                            {{"text", "Question: Is the new plan realistic?\nSystem 1 Answer: Sure.\nSystem 2 Answer: "
                                      "Probably not without slack."}}}}
                          .dump());
  fixture::write_text(dir / "cfg.json", json{{"backends",
                                              {{"rewriter", {{"kind", "synthetic"}, {"script", "rw.json"}}},
                                               {"generator", {{"kind", "synthetic"}, {"script", "gen.json"}}}}}}
                                             .dump());
  const auto cfg = (dir / "cfg.json").string();
  auto r = run_cli({"dataset", "refine", "--config", cfg, "--items", (dir / "items.jsonl").string(), "--out",
                    (dir / "rf").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto log = jsonl(dir / "rf/refine_log.jsonl");
  REQUIRE(log.size() == 4);
  CHECK(log[0]["status"] == "rewritten");
  CHECK(log[1]["status"] == "unchanged");
  CHECK(jsonl(dir / "rf/refined.jsonl")[0]["s2_answer"] == "short but careful");

  r = run_cli({"dataset", "generate", "--config", cfg, "--seeds", (dir / "items.jsonl").string(), "--per-seed", "2",
               "--out", (dir / "gen").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto generated = jsonl(dir / "gen/generated.jsonl");
  CHECK(generated.size() == 8);
  CHECK(generated[0]["category"] == rows[0]["category"]);
}

TEST_CASE("digit analysis on a numeral benchmark") {
  TempDir dir;
  const auto& gsm = benchmark_spec("GSM8K");
  const std::vector<std::string> golds{"7", "12", "3", "45", "1234.5", "98765", "0.125", "31415.9", "8", "60"};
  std::vector<json> items, s1, s2;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const BenchmarkItem item{fmt::format("g{}", i), fmt::format("Question {}?", i), {}, golds[i]};
    items.push_back(benchmark_item_to_json(item));
    const bool long_answer = golds[i].size() > 3;
    auto answer = [&](bool right) {
      return scripted_generation(std::vector<std::string>{" " + (right ? golds[i] : std::string("999999")) + "."}, {0.1});
    };
    const auto stage1 = scripted_generation(std::vector<std::string>{"Work", "."}, {0.2, 0.1});
    s1.push_back(stage_record_to_json(make_stage_record(gsm, item, stage1, answer(!long_answer))));
    s2.push_back(stage_record_to_json(make_stage_record(gsm, item, stage1, answer(long_answer || i == 0))));
  }
  fixture::write_jsonl(dir / "gsm.jsonl", items);
  fixture::write_jsonl(dir / "s1.jsonl", s1);
  fixture::write_jsonl(dir / "s2.jsonl", s2);
  auto r = run_cli({"analyze", "digits", "--s1", (dir / "s1.jsonl").string(), "--s2", (dir / "s2.jsonl").string(),
                    "--benchmark", "gsm8k", "--items", (dir / "gsm.jsonl").string(), "--out", (dir / "an").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto csv = read_text(dir / "an/digits.csv");
  CHECK(first_line(csv) == "item_id,gold,outcome,total_digits,decimal_digits");
  CHECK(csv.find("g4,1234.5,s2_better,5,1\n") != std::string::npos);
  CHECK(csv.find("g0,7,both_correct,1,0\n") != std::string::npos);
  const auto summary = json::parse(read_text(dir / "an/digits_summary.json"));
  CHECK(summary["outcomes"]["s2_better"] == 4);
  CHECK(summary["outcomes"]["s1_better"] == 5);
  CHECK(summary["outcomes"]["both_correct"] == 1);
  // every s2_better gold has more digits than every s1_better gold, so U is maximal
  CHECK(summary["tests"][0]["u"] == 20.0);
}
