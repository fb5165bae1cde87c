// analyze: logprob | hedge | definitive | token-diff | lengths | digits | table

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <fmt/format.h>

#include "cli_internal.hpp"
#include "dualsys/arbitration.hpp"
#include "dualsys/benchmark.hpp"
#include "dualsys/dataset.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"
#include "dualsys/stats.hpp"
#include "dualsys/text_analysis.hpp"

namespace dualsys::cli {

using json = nlohmann::json;

namespace {

struct Group {
  std::string label;
  std::filesystem::path path;
  std::vector<StageRecord> records;
};

std::vector<Group> load_groups(const std::vector<std::string>& specs, std::size_t min_groups) {
  if (specs.size() < min_groups)
    throw ConfigError(fmt::format("need at least {} --records LABEL=PATH argument(s)", min_groups));
  std::vector<Group> groups;
  std::set<std::string> labels;
  for (const auto& s : specs) {
    auto [label, path] = split_labelled(s);
    if (!labels.insert(label).second) throw ConfigError(fmt::format("label '{}' given twice", label));
    if (!std::filesystem::exists(path)) throw ConfigError(fmt::format("records file '{}' does not exist", path.string()));
    groups.push_back({label, path, {}});
  }
  for (auto& g : groups) g.records = load_stage_records(g.path);
  return groups;
}

/// Records that carry a finished generation for the requested stage.
bool has_generation(const StageRecord& r, int stage) {
  return !(stage == 1 ? r.stage1_generation : r.stage2_generation).tokens.empty();
}

double mean(const std::vector<double>& v) {
  return v.empty() ? std::nan("") : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return std::nan("");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

json describe(const std::vector<double>& v) {
  auto num = [](double x) { return std::isnan(x) ? json(nullptr) : json(x); };
  return {{"n", v.size()}, {"mean", num(mean(v))}, {"sd", num(sample_sd(v))}};
}

/// Welch tests between every pair of groups, first-listed group as sample a.
void pairwise_welch(const std::string& metric, const std::vector<std::pair<std::string, std::vector<double>>>& samples,
                    std::vector<ReportRow>& rows, json& tests) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t j = i + 1; j < samples.size(); ++j) {
      const auto group = samples[i].first + " vs " + samples[j].first;
      try {
        auto r = welch_t(samples[i].second, samples[j].second);
        rows.push_back({group, metric, r});
        tests.push_back({{"group", group},
                         {"test", "welch"},
                         {"t", r.statistic},
                         {"df", r.df},
                         {"p", r.p_value},
                         {"cohens_d", r.extras.at("cohens_d")},
                         {"text", format_t(r)}});
      } catch (const ValidationError& e) {
        tests.push_back({{"group", group}, {"test", "welch"}, {"skipped", e.what()}});
      } catch (const DegenerateTestError& e) {
        tests.push_back({{"group", group}, {"test", "welch"}, {"skipped", e.what()}});
      }
    }
  }
}

struct AnalyzeCommon {
  CommonOptions common;
  std::vector<std::string> records;
  int stage = 1;
};

void add_records_options(CLI::App& sub, AnalyzeCommon& o, bool with_stage) {
  sub.add_option("--records", o.records, "LABEL=PATH of an eval records file (repeatable)")->required();
  if (with_stage) sub.add_option("--stage", o.stage, "Which stage's generation to analyze")->check(CLI::IsMember({1, 2}));
}

// --------------------------------------------------------------------------

void cmd_logprob(const AnalyzeCommon& o, Io io) {
  auto cfg = effective_config(o.common, false);
  auto groups = load_groups(o.records, 1);
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("analyze logprob", cfg);
  manifest.param("stage", o.stage);
  std::string csv = "group,item_id,mean_logprob\n";
  std::vector<std::pair<std::string, std::vector<double>>> samples;
  json summary{{"stage", o.stage}, {"groups", json::object()}, {"tests", json::array()}};
  for (const auto& g : groups) {
    manifest.input(g.label, g.path);
    std::vector<double> values;
    for (const auto& r : g.records) {
      if (!has_generation(r, o.stage)) continue;
      try {
        double v = mean_logprob(o.stage == 1 ? r.stage1_generation : r.stage2_generation);
        values.push_back(v);
        csv += fmt::format("{},{},{}\n", csv_field(g.label), csv_field(r.item_id), number(v));
      } catch (const ValidationError& e) {
        throw ValidationError(fmt::format("{} item '{}': {}", g.path.string(), r.item_id, e.what()));
      }
    }
    if (values.empty())
      throw ValidationError(fmt::format("{} has no token steps for stage {}", g.path.string(), o.stage));
    summary["groups"][g.label] = describe(values);
    samples.emplace_back(g.label, std::move(values));
  }
  std::vector<ReportRow> rows;
  pairwise_welch("mean_logprob", samples, rows, summary["tests"]);
  emit(manifest, dir, "logprob.csv", csv);
  emit(manifest, dir, "logprob_tests.csv", report_csv(rows));
  emit_json(manifest, dir, "logprob_summary.json", summary);
  manifest.write(dir, "logprob_manifest.json");
  for (const auto& [label, v] : samples) io.out << fmt::format("{}: mean log-probability {} (n={})\n", label, number(mean(v)), v.size());
}

// --------------------------------------------------------------------------

struct HedgeOptions : AnalyzeCommon {
  std::string lexicon;
};

void cmd_hedge(const HedgeOptions& o, Io io) {
  auto cfg = effective_config(o.common, false);
  std::optional<HedgeLexicon> loaded;
  if (!o.lexicon.empty()) {
    loaded = HedgeLexicon::load(o.lexicon);
  } else if (cfg.hedge_lexicon) {
    loaded = HedgeLexicon::load(*cfg.hedge_lexicon);
  }
  const HedgeLexicon& lexicon = loaded ? *loaded : HedgeLexicon::builtin();
  auto groups = load_groups(o.records, 1);
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("analyze hedge", cfg);
  manifest.param("stage", o.stage);
  manifest.param("lexicon_sha256", lexicon.digest());
  std::string csv = "group,item_id,words,hedges,ratio\n";
  std::vector<std::pair<std::string, std::vector<double>>> samples;
  json summary{{"stage", o.stage},
               {"lexicon", {{"source", lexicon.source()}, {"sha256", lexicon.digest()}, {"terms", lexicon.size()}}},
               {"groups", json::object()},
               {"tests", json::array()}};
  for (const auto& g : groups) {
    manifest.input(g.label, g.path);
    std::vector<double> values;
    for (const auto& r : g.records) {
      const auto& text = o.stage == 1 ? r.stage1_response : r.stage2_response;
      if (text.empty() && !has_generation(r, o.stage)) continue;
      const auto words = word_tokens(text).size();
      const auto hedges = hedge_count(text, lexicon);
      const double ratio = hedge_ratio(text, lexicon);
      values.push_back(ratio);
      csv += fmt::format("{},{},{},{},{}\n", csv_field(g.label), csv_field(r.item_id), words, hedges, number(ratio));
    }
    summary["groups"][g.label] = describe(values);
    samples.emplace_back(g.label, std::move(values));
  }
  std::vector<ReportRow> rows;
  pairwise_welch("hedge_ratio", samples, rows, summary["tests"]);
  emit(manifest, dir, "hedge.csv", csv);
  emit(manifest, dir, "hedge_tests.csv", report_csv(rows));
  emit_json(manifest, dir, "hedge_summary.json", summary);
  manifest.write(dir, "hedge_manifest.json");
  for (const auto& [label, v] : samples) io.out << fmt::format("{}: mean hedge ratio {} (n={})\n", label, number(mean(v)), v.size());
  io.out << fmt::format("lexicon {} ({} terms, sha256 {})\n", lexicon.source(), lexicon.size(), lexicon.digest());
}

// --------------------------------------------------------------------------

struct DefinitiveOptions : AnalyzeCommon {
  std::vector<int> sentences;
};

void cmd_definitive(const DefinitiveOptions& o, Io io) {
  auto cfg = effective_config(o.common, true);
  const auto& judge_role = cfg.backend("judge");
  auto grid = o.sentences.empty() ? std::vector<int>(kSentenceGrid.begin(), kSentenceGrid.end()) : o.sentences;
  for (int n : grid) {
    if (std::find(kSentenceGrid.begin(), kSentenceGrid.end(), n) == kSentenceGrid.end())
      throw ConfigError(fmt::format("--sentences {} is not one of 1, 3, 6, 9, 12, 15", n));
  }
  auto groups = load_groups(o.records, 2);
  if (groups.size() != 2) throw ConfigError("definitive analysis compares exactly two --records groups");
  std::map<std::string, const StageRecord*> by_id[2];
  for (int k = 0; k < 2; ++k) {
    for (const auto& r : groups[k].records) by_id[k][r.item_id] = &r;
  }
  std::vector<std::string> ids;
  for (const auto& [id, r] : by_id[0]) {
    if (!by_id[1].count(id)) throw ValidationError(fmt::format("item '{}' is missing from {}", id, groups[1].path.string()));
    ids.push_back(id);
  }
  if (by_id[1].size() != ids.size())
    throw ValidationError(fmt::format("{} has items missing from {}", groups[1].path.string(), groups[0].path.string()));
  const auto demos = cfg.judge_demonstrations ? load_demonstrations(*cfg.judge_demonstrations) : builtin_demonstrations();
  auto judge = open_backend(cfg, "judge", o.common);

  struct Job {
    int group;
    std::string id;
    int n;
    Verdict verdict = Verdict::unparseable;
  };
  std::vector<Job> jobs;
  for (int k = 0; k < 2; ++k)
    for (const auto& id : ids)
      for (int n : grid) jobs.push_back({k, id, n});
  parallel_for(jobs.size(), cfg.parallelism, [&](std::size_t i) {
    auto& job = jobs[i];
    const auto& r = *by_id[job.group].at(job.id);
    job.verdict = judge_definitive(*judge, judge_role.params, job.id, r.stage1_prompt, r.stage1_response, job.n, demos).verdict;
  });

  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("analyze definitive", cfg);
  manifest.param("sentences", grid);
  manifest.param("n_demonstrations", demos.size());
  for (const auto& g : groups) manifest.input(g.label, g.path);
  if (cfg.judge_demonstrations) manifest.input("judge_demonstrations", *cfg.judge_demonstrations);

  std::string csv = "group,item_id,n_sentences,verdict\n";
  std::map<std::pair<int, int>, std::array<std::size_t, 3>> tally;  // (group, n) -> yes, no, unparseable
  std::map<std::pair<std::string, int>, std::array<bool, 2>> definitive;
  for (const auto& job : jobs) {
    csv += fmt::format("{},{},{},{}\n", csv_field(groups[job.group].label), csv_field(job.id), job.n, to_string(job.verdict));
    ++tally[{job.group, job.n}][static_cast<std::size_t>(job.verdict)];
    definitive[{job.id, job.n}][job.group] = job.verdict == Verdict::yes;
  }
  std::string ratio_csv = "group,n_sentences,n,yes,no,unparseable,definitive_ratio\n";
  for (int k = 0; k < 2; ++k) {
    for (int n : grid) {
      const auto& t = tally[{k, n}];
      ratio_csv += fmt::format("{},{},{},{},{},{},{}\n", csv_field(groups[k].label), n, ids.size(), t[0], t[1], t[2],
                               number(static_cast<double>(t[0]) / static_cast<double>(ids.size())));
    }
  }
  std::vector<ReportRow> rows;
  json tests = json::array();
  for (int n : grid) {
    std::vector<std::pair<bool, bool>> pairs;
    for (const auto& id : ids) {
      const auto& d = definitive[{id, n}];
      pairs.emplace_back(d[0], d[1]);
    }
    auto r = mcnemar(pairs);
    rows.push_back({fmt::format("n={}", n), "mcnemar_definitive", r});
    tests.push_back({{"n_sentences", n},
                     {"b", r.extras.at("b")},
                     {"c", r.extras.at("c")},
                     {"exact", r.extras.at("exact") != 0.0},
                     {"chi2", r.statistic},
                     {"p", r.p_value},
                     {"text", format_chi2(r)}});
    io.out << fmt::format("n={}: {}, p = {}\n", n, format_chi2(r), number(r.p_value));
  }
  emit(manifest, dir, "definitive.csv", csv);
  emit(manifest, dir, "definitive_ratio.csv", ratio_csv);
  emit(manifest, dir, "definitive_tests.csv", report_csv(rows));
  emit_json(manifest, dir, "definitive_summary.json",
            {{"groups", {groups[0].label, groups[1].label}}, {"n_items", ids.size()}, {"tests", tests}});
  manifest.write(dir, "definitive_manifest.json");
}

// --------------------------------------------------------------------------

struct TokenDiffOptions {
  CommonOptions common;
  std::string a, b, base;
};

void cmd_token_diff(const TokenDiffOptions& o, Io io) {
  auto cfg = effective_config(o.common, false);
  auto report = token_diff_report(load_stage_records(o.a), load_stage_records(o.b), load_stage_records(o.base));
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("analyze token-diff", cfg);
  manifest.input("a", o.a);
  manifest.input("b", o.b);
  manifest.input("base", o.base);
  std::string csv = "item_id,stage1_a,stage1_b,stage2_a,stage2_b\n";
  for (const auto& it : report.items)
    csv += fmt::format("{},{},{},{},{}\n", csv_field(it.item_id), it.stage1_a, it.stage1_b, it.stage2_a, it.stage2_b);
  std::vector<ReportRow> rows;
  for (const auto& [stage, s] : {std::pair{"stage1", &report.stage1}, std::pair{"stage2", &report.stage2}}) {
    if (s->welch) rows.push_back({stage, "token_diff_welch", *s->welch});
    io.out << fmt::format("{}: mean diff a {} b {}{}\n", stage, number(s->mean_a), number(s->mean_b),
                          s->welch ? ", " + format_t(*s->welch) : std::string());
  }
  emit(manifest, dir, "token_diff.csv", csv);
  emit(manifest, dir, "token_diff_tests.csv", report_csv(rows));
  emit_json(manifest, dir, "token_diff_summary.json", token_diff_to_json(report));
  manifest.write(dir, "token_diff_manifest.json");
}

// --------------------------------------------------------------------------

struct LengthsOptions {
  CommonOptions common;
  std::string items;
  std::vector<std::string> margins;
  double alpha = 0.05;
};

void cmd_lengths(const LengthsOptions& o, Io io) {
  auto cfg = effective_config(o.common, false);
  if (!o.margins.empty()) {
    cfg.equivalence_margins.clear();
    for (const auto& m : o.margins) cfg.equivalence_margins.push_back(parse_margin(m));
  }
  const auto items = load_items(o.items);
  const auto& counter = whitespace_counter();
  std::vector<double> s1, s2;
  std::string csv = "item_id,category,n_s1,n_s2,flag\n";
  std::size_t flagged = 0;
  for (const auto& it : items) {
    auto d = length_disparity(it, counter);
    s1.push_back(static_cast<double>(d.n_s1));
    s2.push_back(static_cast<double>(d.n_s2));
    flagged += d.flag;
    csv += fmt::format("{},{},{},{},{}\n", csv_field(it.id), to_string(it.category), d.n_s1, d.n_s2, d.flag ? 1 : 0);
  }
  std::vector<double> pooled = s1;
  pooled.insert(pooled.end(), s2.begin(), s2.end());
  const double pooled_mean = mean(pooled);

  std::vector<ReportRow> rows;
  json tests = json::array();
  pairwise_welch("length_welch", {{"s1", s1}, {"s2", s2}}, rows, tests);
  json tost = json::array();
  for (const auto& m : cfg.equivalence_margins) {
    const double margin = m.relative ? m.value * std::abs(pooled_mean) : m.value;
    auto r = tost_equivalence(s1, s2, margin, o.alpha);
    const auto group = fmt::format("margin={}", to_string(m));
    rows.push_back({group, "tost_lower", r.lower});
    rows.push_back({group, "tost_upper", r.upper});
    tost.push_back({{"margin", to_string(m)},
                    {"margin_tokens", margin},
                    {"equivalent", r.equivalent},
                    {"headline_t", r.headline_t},
                    {"df", r.df},
                    {"p", std::max(r.lower.p_value, r.upper.p_value)},
                    {"text", format_t(TestResult{"tost", r.headline_t, r.df, 0.0, 0, {}})}});
    io.out << fmt::format("margin {} ({:.2f} tokens): {}, {}\n", to_string(m), margin, format_t(TestResult{"tost", r.headline_t, r.df, 0.0, 0, {}}),
                          r.equivalent ? "equivalent" : "not equivalent");
  }
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("analyze lengths", cfg);
  manifest.input("items", o.items);
  manifest.param("token_counter", counter.name);
  manifest.param("alpha", o.alpha);
  emit(manifest, dir, "lengths.csv", csv);
  emit(manifest, dir, "lengths_tests.csv", report_csv(rows));
  emit_json(manifest, dir, "lengths_summary.json",
            {{"token_counter", counter.name},
             {"n_items", items.size()},
             {"n_flagged", flagged},
             {"s1", describe(s1)},
             {"s2", describe(s2)},
             {"welch", tests},
             {"tost", tost}});
  manifest.write(dir, "lengths_manifest.json");
}

// --------------------------------------------------------------------------

struct DigitsOptions {
  CommonOptions common;
  std::string s1, s2, benchmark, items;
};

void cmd_digits(const DigitsOptions& o, Io io) {
  auto cfg = effective_config(o.common, false);
  const auto& spec = benchmark_spec(o.benchmark);
  if (spec.format != AnswerFormat::numeral)
    throw ConfigError(fmt::format("digit analysis needs a numeral benchmark; {} is not one", spec.name));
  std::filesystem::path items_path = o.items;
  if (items_path.empty()) {
    auto it = cfg.benchmarks.find(spec.name);
    if (it == cfg.benchmarks.end()) throw ConfigError(fmt::format("no input file for benchmark {}", spec.name));
    items_path = it->second;
  }
  const auto items = load_benchmark(spec, items_path);
  std::map<std::string, StageRecord> r1, r2;
  for (auto& r : load_stage_records(o.s1)) r1[r.item_id] = std::move(r);
  for (auto& r : load_stage_records(o.s2)) r2[r.item_id] = std::move(r);

  std::map<std::string, std::vector<double>> total, decimals;
  std::map<std::string, std::size_t> counts;
  std::string csv = "item_id,gold,outcome,total_digits,decimal_digits\n";
  for (const auto& item : items) {
    if (!r1.count(item.id) || !r2.count(item.id))
      throw ValidationError(fmt::format("item '{}' is missing from the s1 or s2 records", item.id));
    const bool c1 = r1[item.id].correct.value_or(false);
    const bool c2 = r2[item.id].correct.value_or(false);
    const std::string outcome = c1 && c2 ? "both_correct" : !c1 && !c2 ? "both_wrong" : c1 ? "s1_better" : "s2_better";
    const auto dot = item.gold.find('.');
    double all = 0, frac = 0;
    for (std::size_t i = 0; i < item.gold.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(item.gold[i]))) continue;
      ++all;
      if (dot != std::string::npos && i > dot) ++frac;
    }
    total[outcome].push_back(all);
    decimals[outcome].push_back(frac);
    ++counts[outcome];
    csv += fmt::format("{},{},{},{},{}\n", csv_field(item.id), csv_field(item.gold), outcome, all, frac);
  }
  std::vector<ReportRow> rows;
  json tests = json::array();
  for (const auto& [metric, table] : {std::pair{"total_digits", &total}, std::pair{"decimal_digits", &decimals}}) {
    const auto& a = (*table)["s2_better"];
    const auto& b = (*table)["s1_better"];
    if (a.empty() || b.empty()) {
      tests.push_back({{"metric", metric}, {"skipped", "an outcome group is empty"}});
      continue;
    }
    auto r = mann_whitney_u(a, b);
    rows.push_back({"s2_better vs s1_better", metric, r});
    tests.push_back({{"metric", metric}, {"u", r.statistic}, {"p", r.p_value}, {"exact", r.extras.at("exact") != 0.0}});
    io.out << fmt::format("{}: U = {}, p = {}\n", metric, number(r.statistic), number(r.p_value));
  }
  json count_json = json::object();
  for (const char* k : {"both_correct", "both_wrong", "s1_better", "s2_better"}) count_json[k] = counts[k];
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("analyze digits", cfg);
  manifest.param("benchmark", spec.name);
  manifest.input("benchmark", items_path);
  manifest.input("s1", o.s1);
  manifest.input("s2", o.s2);
  emit(manifest, dir, "digits.csv", csv);
  emit(manifest, dir, "digits_tests.csv", report_csv(rows));
  emit_json(manifest, dir, "digits_summary.json", {{"outcomes", count_json}, {"tests", tests}});
  manifest.write(dir, "digits_manifest.json");
}

// --------------------------------------------------------------------------

struct TableOptions {
  CommonOptions common;
  std::vector<std::string> reports;
  std::string baseline;
};

void cmd_table(const TableOptions& o, Io io) {
  auto cfg = effective_config(o.common, false);
  std::vector<TableRow> rows;
  Manifest manifest("analyze table", cfg);
  std::size_t k = 0;
  for (const auto& spec : o.reports) {
    auto [label, path] = split_labelled(spec);
    if (!std::filesystem::exists(path)) throw ConfigError(fmt::format("report '{}' does not exist", path.string()));
    json j;
    try {
      j = json::parse(read_file(path));
      auto it = std::find_if(rows.begin(), rows.end(), [&](const TableRow& r) { return r.label == label; });
      if (it == rows.end()) {
        rows.push_back({label, {}});
        it = rows.end() - 1;
      }
      it->accuracy.emplace_back(benchmark_spec(j.at("benchmark").get<std::string>()).name,
                                std::stod(j.at("accuracy").get<std::string>()));
    } catch (const json::exception& e) {
      throw ValidationError(fmt::format("report '{}': {}", path.string(), e.what()));
    }
    manifest.input(fmt::format("report{}", k++), path);
  }
  if (std::none_of(rows.begin(), rows.end(), [&](const TableRow& r) { return r.label == o.baseline; }))
    throw ConfigError(fmt::format("baseline '{}' is not among the report labels", o.baseline));
  const auto dir = output_dir(o.common, cfg);
  manifest.param("baseline", o.baseline);
  auto csv = accuracy_table_csv(rows, o.baseline);
  emit(manifest, dir, "accuracy_table.csv", csv);
  manifest.write(dir, "table_manifest.json");
  io.out << csv;
}

}  // namespace

void add_analyze(CLI::App& app, Io io) {
  auto* analyze = app.add_subcommand("analyze", "Statistical and linguistic analyses of eval outputs");
  analyze->require_subcommand(1);

  {
    auto o = std::make_shared<AnalyzeCommon>();
    auto* sub = analyze->add_subcommand("logprob", "Mean token log-probability per response");
    add_common_options(*sub, o->common, false);
    add_records_options(*sub, *o, true);
    sub->callback([o, io] { cmd_logprob(*o, io); });
  }
  {
    auto o = std::make_shared<HedgeOptions>();
    auto* sub = analyze->add_subcommand("hedge", "Hedge-word ratio per response");
    add_common_options(*sub, o->common, false);
    add_records_options(*sub, *o, true);
    sub->add_option("--lexicon", o->lexicon, "Hedge lexicon file (default: built-in)")->check(CLI::ExistingFile);
    sub->callback([o, io] { cmd_hedge(*o, io); });
  }
  {
    auto o = std::make_shared<DefinitiveOptions>();
    auto* sub = analyze->add_subcommand("definitive", "Judge whether reasoning prefixes commit to an answer");
    add_common_options(*sub, o->common, true);
    add_records_options(*sub, *o, false);
    sub->add_option("--sentences", o->sentences, "Prefix lengths (default 1 3 6 9 12 15)");
    sub->callback([o, io] { cmd_definitive(*o, io); });
  }
  {
    auto o = std::make_shared<TokenDiffOptions>();
    auto* sub = analyze->add_subcommand("token-diff", "Token counts of two systems relative to a base model");
    add_common_options(*sub, o->common, false);
    sub->add_option("--a", o->a, "Records of system a")->required()->check(CLI::ExistingFile);
    sub->add_option("--b", o->b, "Records of system b")->required()->check(CLI::ExistingFile);
    sub->add_option("--base", o->base, "Records of the base model")->required()->check(CLI::ExistingFile);
    sub->callback([o, io] { cmd_token_diff(*o, io); });
  }
  {
    auto o = std::make_shared<LengthsOptions>();
    auto* sub = analyze->add_subcommand("lengths", "Answer-length equivalence of a preference dataset");
    add_common_options(*sub, o->common, false);
    sub->add_option("--items", o->items, "Preference items (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--margins", o->margins, "Equivalence margins, e.g. 3 5 7 5%");
    sub->add_option("--alpha", o->alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    sub->callback([o, io] { cmd_lengths(*o, io); });
  }
  {
    auto o = std::make_shared<DigitsOptions>();
    auto* sub = analyze->add_subcommand("digits", "Digit counts of gold answers by which system was right");
    add_common_options(*sub, o->common, false);
    sub->add_option("--s1", o->s1, "Records of s1")->required()->check(CLI::ExistingFile);
    sub->add_option("--s2", o->s2, "Records of s2")->required()->check(CLI::ExistingFile);
    sub->add_option("--benchmark", o->benchmark, "Numeral benchmark name")->required();
    sub->add_option("--items", o->items, "Benchmark file (overrides the config)");
    sub->callback([o, io] { cmd_digits(*o, io); });
  }
  {
    auto o = std::make_shared<TableOptions>();
    auto* sub = analyze->add_subcommand("table", "Accuracy table across benchmarks with deltas to a baseline");
    add_common_options(*sub, o->common, false);
    sub->add_option("--report", o->reports, "LABEL=PATH of an eval report.json (repeatable)")->required();
    sub->add_option("--baseline", o->baseline, "Label of the baseline row")->required();
    sub->callback([o, io] { cmd_table(*o, io); });
  }
}

}  // namespace dualsys::cli
