// dataset: validate | refine | export | split | generate

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "cli_internal.hpp"
#include "dualsys/arbitration.hpp"
#include "dualsys/dataset.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys::cli {

using json = nlohmann::json;

namespace {

std::string items_jsonl(const std::vector<PreferenceItem>& items) {
  std::vector<json> rows;
  rows.reserve(items.size());
  for (const auto& it : items) rows.push_back(item_to_json(it));
  return to_jsonl(rows);
}

std::string pairs_jsonl(const std::vector<TrainingPair>& pairs) {
  std::vector<json> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(pair_to_json(p));
  return to_jsonl(rows);
}

json disparity_json(const Disparity& d) { return {{"n_s1", d.n_s1}, {"n_s2", d.n_s2}, {"flag", d.flag}}; }

// --------------------------------------------------------------------------

struct ValidateOptions {
  std::string items;
  std::string report;
};

/// Exit 0 when every row is valid, 2 when rows were rejected. A missing or
/// unreadable file exits 1 before any row is read.
void cmd_validate(const ValidateOptions& o, Io io) {
  if (!std::filesystem::exists(o.items)) throw ConfigError(fmt::format("items file '{}' does not exist", o.items));
  auto report = validate_file(o.items);
  auto j = validation_report_json(report);
  j["source_sha256"] = sha256_hex(read_file(o.items));
  if (!o.report.empty()) write_file(o.report, j.dump(2) + "\n");
  io.out << fmt::format("{} valid, {} rejected, {}/{} categories covered\n", report.items.size(), report.issues.size(),
                        j["categories_covered"].get<std::size_t>(), kCategoryCount);
  for (auto c : all_categories()) {
    const auto n = report.category_counts[static_cast<std::size_t>(c)];
    io.out << fmt::format("  {:<16} {}\n", to_string(c), n);
    if (n == 0) io.err << fmt::format("warning: no items for category {}\n", to_string(c));
  }
  for (const auto& issue : report.issues)
    io.err << fmt::format("line {}{}: {}\n", issue.line, issue.id.empty() ? "" : " (" + issue.id + ")", issue.reason);
  if (!report.issues.empty())
    throw ValidationError(fmt::format("{} of {} rows rejected", report.issues.size(),
                                      report.issues.size() + report.items.size()));
}

// --------------------------------------------------------------------------

struct RefineOptions {
  CommonOptions common;
  std::string items;
};

void cmd_refine(const RefineOptions& o, Io io) {
  auto cfg = effective_config(o.common, true);
  const auto& role = cfg.backend("rewriter");
  const auto items = load_items(o.items);
  auto rewriter = open_backend(cfg, "rewriter", o.common);
  const auto& counter = whitespace_counter();
  auto outcomes = refine_items(items, *rewriter, role.params, counter, cfg.parallelism);

  std::vector<PreferenceItem> refined;
  std::vector<json> log;
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& out : outcomes) {
    refined.push_back(out.item);
    ++counts[static_cast<int>(out.status)];
    json row{{"id", out.item.id}, {"status", to_string(out.status)}, {"before", disparity_json(out.before)}};
    if (out.after) row["after"] = disparity_json(*out.after);
    if (!out.note.empty()) row["note"] = out.note;
    log.push_back(std::move(row));
  }
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("dataset refine", cfg);
  manifest.input("items", o.items);
  manifest.param("token_counter", counter.name);
  manifest.param("threshold", kDisparityThreshold);
  manifest.param("counts", {{"unchanged", counts[0]}, {"rewritten", counts[1]}, {"needs_review", counts[2]}});
  emit(manifest, dir, "refined.jsonl", items_jsonl(refined));
  emit(manifest, dir, "refine_log.jsonl", to_jsonl(log));
  manifest.write(dir);
  io.out << fmt::format("{} unchanged, {} rewritten, {} need review (counter: {})\n", counts[0], counts[1], counts[2],
                        counter.name);
}

// --------------------------------------------------------------------------

struct ExportOptions {
  CommonOptions common;
  std::string items;
  std::string target;
  std::vector<double> ratios;
};

std::string ratio_label(double r) { return fmt::format("r{:.3f}", r); }

void cmd_export(const ExportOptions& o, Io io) {
  if (o.target.empty() == o.ratios.empty()) throw ConfigError("give exactly one of --target or --ratio");
  auto cfg = effective_config(o.common, false);
  const auto items = load_items(o.items);
  const auto digest = sha256_hex(read_file(o.items));
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("dataset export", cfg);
  manifest.input("items", o.items);
  if (!o.target.empty()) {
    const auto winner = parse_winner(o.target);
    auto pairs = export_pairs(items, winner);
    const auto plan = make_mix_plan(items.size(), winner == Winner::S2 ? 1.0 : 0.0, cfg.seed);
    manifest.param("target", to_string(winner));
    manifest.param("exports", json::array({{{"file", "pairs.jsonl"}, {"plan", export_manifest("target", plan, digest, items.size())}}}));
    emit(manifest, dir, "pairs.jsonl", pairs_jsonl(pairs));
    io.out << fmt::format("exported {} pairs with {} as winner\n", pairs.size(), to_string(winner));
  } else {
    json exports = json::array();
    std::set<std::string> labels;
    for (double r : o.ratios) {
      const auto plan = make_mix_plan(items.size(), r, cfg.seed);
      const auto file = "pairs_" + ratio_label(r) + ".jsonl";
      if (!labels.insert(file).second) throw ConfigError(fmt::format("ratio {} given twice", r));
      auto pairs = export_interpolated(items, plan);
      emit(manifest, dir, file, pairs_jsonl(pairs));
      exports.push_back({{"file", file}, {"plan", export_manifest("interpolated", plan, digest, items.size())}});
      io.out << fmt::format("ratio {}: {} S2 winners, {} S1 winners -> {}\n", number(r), plan.n_s2_winner,
                            plan.n_s1_winner, file);
    }
    manifest.param("exports", exports);
  }
  manifest.write(dir);
}

// --------------------------------------------------------------------------

struct SplitOptions {
  CommonOptions common;
  std::string items;
  double train_fraction = 0.8;
};

void cmd_split(const SplitOptions& o, Io io) {
  auto cfg = effective_config(o.common, false);
  const auto items = load_items(o.items);
  auto split = split_items(items, o.train_fraction, cfg.seed);
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("dataset split", cfg);
  manifest.input("items", o.items);
  manifest.param("train_fraction", o.train_fraction);
  manifest.param("counts", {{"train", split.train.size()}, {"validation", split.validation.size()}});
  emit(manifest, dir, "train.jsonl", items_jsonl(split.train));
  emit(manifest, dir, "validation.jsonl", items_jsonl(split.validation));
  manifest.write(dir);
  io.out << fmt::format("train {}, validation {}\n", split.train.size(), split.validation.size());
}

// --------------------------------------------------------------------------

struct GenerateOptions {
  CommonOptions common;
  std::string seeds;
  int per_seed = 1;
};

void cmd_generate(const GenerateOptions& o, Io io) {
  auto cfg = effective_config(o.common, true);
  const auto& role = cfg.backend("generator");
  const auto seeds = load_items(o.seeds);
  auto generator = open_backend(cfg, "generator", o.common);

  struct Job {
    const PreferenceItem* seed;
    int k;
    std::optional<PreferenceItem> item;
  };
  std::vector<Job> jobs;
  for (const auto& s : seeds)
    for (int k = 1; k <= o.per_seed; ++k) jobs.push_back({&s, k, std::nullopt});
  parallel_for(jobs.size(), cfg.parallelism, [&](std::size_t i) {
    auto& job = jobs[i];
    GenerationRequest req = role.params;
    req.prompt = build_expansion_prompt(job.seed->category, *job.seed);
    if (o.per_seed > 1) req.prompt += fmt::format("\nThis is new item {} of {}; make it differ from the example.", job.k, o.per_seed);
    Generation gen;
    try {
      gen = generator->generate(req);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("generation from seed '{}' failed: {}", job.seed->id, e.what()));
    }
    job.item = parse_generated_item(gen.text, job.seed->category, fmt::format("{}-gen{}", job.seed->id, job.k));
  });

  std::vector<PreferenceItem> generated;
  std::vector<json> failures;
  for (const auto& job : jobs) {
    if (job.item) {
      generated.push_back(*job.item);
    } else {
      failures.push_back({{"seed_id", job.seed->id}, {"k", job.k}, {"reason", "reply lacked the labelled fields"}});
    }
  }
  const auto dir = output_dir(o.common, cfg);
  Manifest manifest("dataset generate", cfg);
  manifest.input("seeds", o.seeds);
  manifest.param("per_seed", o.per_seed);
  emit(manifest, dir, "generated.jsonl", items_jsonl(generated));
  emit(manifest, dir, "generate_failures.jsonl", to_jsonl(failures));
  manifest.write(dir);
  io.out << fmt::format("generated {} item(s), {} unparseable repl(ies); review before use\n", generated.size(),
                        failures.size());
}

}  // namespace

void add_dataset(CLI::App& app, Io io) {
  auto* dataset = app.add_subcommand("dataset", "Preference dataset tooling");
  dataset->require_subcommand(1);
  {
    auto o = std::make_shared<ValidateOptions>();
    auto* sub = dataset->add_subcommand("validate", "Check items and report category coverage");
    sub->add_option("--items", o->items, "Preference items (JSON lines)")->required();
    sub->add_option("--report", o->report, "Also write the report as JSON here");
    sub->callback([o, io] { cmd_validate(*o, io); });
  }
  {
    auto o = std::make_shared<RefineOptions>();
    auto* sub = dataset->add_subcommand("refine", "Rewrite answer pairs whose lengths differ by more than 15 tokens");
    add_common_options(*sub, o->common, true);
    sub->add_option("--items", o->items, "Preference items (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->callback([o, io] { cmd_refine(*o, io); });
  }
  {
    auto o = std::make_shared<ExportOptions>();
    auto* sub = dataset->add_subcommand("export", "Write chosen/rejected training pairs");
    add_common_options(*sub, o->common, false);
    sub->add_option("--items", o->items, "Preference items (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--target", o->target, "s1 or s2: every pair prefers this system");
    sub->add_option("--ratio", o->ratios, "Fractions of S2 winners; one file per ratio")
        ->check(CLI::Range(0.0, 1.0));
    sub->callback([o, io] { cmd_export(*o, io); });
  }
  {
    auto o = std::make_shared<SplitOptions>();
    auto* sub = dataset->add_subcommand("split", "Seeded train/validation split");
    add_common_options(*sub, o->common, false);
    sub->add_option("--items", o->items, "Preference items (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--train-fraction", o->train_fraction, "Share of items in the training split")
        ->capture_default_str();
    sub->callback([o, io] { cmd_split(*o, io); });
  }
  {
    auto o = std::make_shared<GenerateOptions>();
    auto* sub = dataset->add_subcommand("generate", "Draft new items from seed examples with the generator backend");
    add_common_options(*sub, o->common, true);
    sub->add_option("--seeds", o->seeds, "Seed items (JSON lines)")->required()->check(CLI::ExistingFile);
    sub->add_option("--per-seed", o->per_seed, "Drafts per seed item")->check(CLI::PositiveNumber);
    sub->callback([o, io] { cmd_generate(*o, io); });
  }
}

}  // namespace dualsys::cli
