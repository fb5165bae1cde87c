// eval, arbitrate, record and convert.

#include <cmath>
#include <exception>
#include <set>

#include <fmt/format.h>

#include "cli_internal.hpp"
#include "dualsys/arbitration.hpp"
#include "dualsys/benchmark.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys::cli {

using json = nlohmann::json;

namespace {

struct EvalOptions {
  CommonOptions common;
  std::string benchmark;
  std::string items;
  std::string system = "dynamic";
  std::optional<double> w;
  std::string sweep;
  std::string tie_break;
  std::string entropy_source;
};

/// "start:stop:step", inclusive of both ends.
std::vector<double> parse_sweep(const std::string& text) {
  std::vector<double> parts;
  std::size_t from = 0;
  while (true) {
    auto colon = text.find(':', from);
    auto piece = text.substr(from, colon == std::string::npos ? std::string::npos : colon - from);
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(piece, &used));
      if (used != piece.size()) throw std::invalid_argument(piece);
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("--sweep-w expects start:stop:step, got '{}'", text));
    }
    if (colon == std::string::npos) break;
    from = colon + 1;
  }
  if (parts.size() != 3) throw ConfigError(fmt::format("--sweep-w expects start:stop:step, got '{}'", text));
  const double start = parts[0], stop = parts[1], step = parts[2];
  if (!(step > 0.0) || stop < start) throw ConfigError(fmt::format("--sweep-w '{}' describes an empty grid", text));
  const auto n = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> grid;
  for (std::size_t k = 0; k < n; ++k) {
    double w = std::round((start + static_cast<double>(k) * step) * 1e9) / 1e9;
    if (w < 0.0 || w > 1.0) throw ConfigError(fmt::format("sweep value {} is outside [0, 1]", w));
    grid.push_back(w);
  }
  return grid;
}

std::string weight_label(double w) { return fmt::format("w{:.2f}", w); }

StageRecord placeholder_record(const BenchmarkItem& item) {
  StageRecord r;
  r.item_id = item.id;
  r.stage1_prompt = stage1_prompt(item);
  return r;
}

std::string records_jsonl(const std::vector<StageRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(stage_record_to_json(r, true));
  return to_jsonl(rows);
}

std::string errors_jsonl(const std::vector<BenchmarkItem>& items, const std::vector<std::string>& errors) {
  std::vector<json> rows;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!errors[i].empty()) rows.push_back({{"item_id", items[i].id}, {"error", errors[i]}});
  return to_jsonl(rows);
}

std::size_t count_errors(const std::vector<std::string>& errors) {
  return std::count_if(errors.begin(), errors.end(), [](const std::string& e) { return !e.empty(); });
}

/// Rethrows the first per-item failure when nothing succeeded.
void fail_if_all_failed(const std::vector<std::exception_ptr>& failures) {
  if (failures.empty()) return;
  for (const auto& f : failures)
    if (!f) return;
  std::rethrow_exception(failures.front());
}

DualBackendPair make_dual_pair(const RunConfig& cfg, const CommonOptions& opts, double w) {
  DualBackendPair pair;
  pair.system1 = {open_backend(cfg, "s1", opts), cfg.backend("s1").params, "s1"};
  pair.system2 = {open_backend(cfg, "s2", opts), cfg.backend("s2").params, "s2"};
  pair.w = ReliabilityWeight(w);
  pair.tie_break = cfg.tie_break;
  pair.tail_policy = cfg.tail_policy;
  pair.entropy_source = cfg.entropy_source;
  pair.degrade_to_single = cfg.degrade_to_single;
  return pair;
}

void run_single(const EvalOptions& o, const RunConfig& cfg, const BenchmarkSpec& spec,
                const std::vector<BenchmarkItem>& items, Manifest& manifest, const std::filesystem::path& dir,
                Io io) {
  auto backend = open_backend(cfg, o.system, o.common);
  const auto& params = cfg.backend(o.system).params;
  std::vector<StageRecord> records(items.size());
  std::vector<std::string> errors(items.size());
  std::vector<std::exception_ptr> failures(items.size());
  parallel_for(items.size(), cfg.parallelism, [&](std::size_t i) {
    try {
      records[i] = run_two_stage(*backend, params, spec, items[i]);
    } catch (const Error& e) {
      records[i] = placeholder_record(items[i]);
      errors[i] = e.what();
      failures[i] = std::current_exception();
    }
  });
  fail_if_all_failed(failures);
  auto report = score(spec, records, items);
  json j = report_to_json(report, false);
  j["system"] = o.system;
  j["n_errors"] = count_errors(errors);
  emit_json(manifest, dir, "report.json", j);
  emit(manifest, dir, "records.jsonl", records_jsonl(report.records));
  emit(manifest, dir, "errors.jsonl", errors_jsonl(items, errors));
  io.out << fmt::format("{} {}: accuracy {} ({}/{}), {} error(s)\n", spec.name, o.system,
                        format_accuracy(report.accuracy), report.n_correct, report.n_items, count_errors(errors));
}

json dynamic_report(const AccuracyReport& report, double w, const RunConfig& cfg, const BatchSummary& summary,
                    std::size_t n_errors, const json& single) {
  json j = report_to_json(report, false);
  j["system"] = "dynamic";
  j["w"] = w;
  j["tie_break"] = to_string(cfg.tie_break);
  j["entropy_source"] = to_string(cfg.entropy_source);
  j["chose_s1"] = summary.chose_s1;
  j["chose_s2"] = summary.chose_s2;
  j["ties"] = summary.ties;
  j["n_errors"] = n_errors;
  j["single_system"] = single;
  return j;
}

void run_dynamic(const EvalOptions& o, const RunConfig& cfg, const BenchmarkSpec& spec,
                 const std::vector<BenchmarkItem>& items, const std::vector<double>& grid, bool sweep,
                 Manifest& manifest, const std::filesystem::path& dir, Io io) {
  const DualBackendPair base = make_dual_pair(cfg, o.common, grid.front());
  validate_pair([&] {
    auto p = base;
    p.stage_two = [](const std::string&, const Generation&) { return std::string(); };
    return p;
  }());

  std::vector<std::optional<ArbitratedAnswer>> answers(items.size());
  std::vector<std::string> errors(items.size());
  std::vector<std::exception_ptr> failures(items.size());
  parallel_for(items.size(), cfg.parallelism, [&](std::size_t i) {
    auto pair = base;
    const auto& item = items[i];
    pair.stage_two = [&spec, &item](const std::string&, const Generation& g) { return stage2_prompt(spec, item, g.text); };
    try {
      answers[i] = dynamic_generate(pair, stage1_prompt(item), item.id);
    } catch (const Error& e) {
      errors[i] = e.what();
      failures[i] = std::current_exception();
    }
  });
  fail_if_all_failed(failures);

  // Each system's own two-stage records, from the same generations.
  json single = json::object();
  for (const auto side : {SystemId::system1, SystemId::system2}) {
    std::vector<StageRecord> records;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& a = answers[i];
      const auto& out = side == SystemId::system1 ? (a ? a->s1 : std::nullopt) : (a ? a->s2 : std::nullopt);
      records.push_back(out ? make_stage_record(spec, items[i], out->stage1, out->stage2.value_or(Generation{}))
                            : placeholder_record(items[i]));
    }
    auto report = score(spec, records, items);
    const std::string key = side == SystemId::system1 ? "s1" : "s2";
    single[key] = format_accuracy(report.accuracy);
    emit(manifest, dir, "records_" + key + ".jsonl", records_jsonl(report.records));
  }
  emit(manifest, dir, "errors.jsonl", errors_jsonl(items, errors));

  std::string sweep_csv = "w,accuracy,n_correct,n_items,chose_s1,chose_s2,ties\n";
  std::set<std::string> labels;
  for (double w : grid) {
    std::vector<BatchEntry> entries;
    std::vector<StageRecord> records;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!answers[i]) {
        entries.push_back({items[i].id, std::nullopt, errors[i]});
        records.push_back(placeholder_record(items[i]));
        continue;
      }
      auto a = rearbitrate(*answers[i], ReliabilityWeight(w), cfg.tie_break);
      const auto& out = a.chosen_output();
      records.push_back(make_stage_record(spec, items[i], out.stage1, out.stage2.value_or(Generation{})));
      entries.push_back({items[i].id, std::move(a), ""});
    }
    auto summary = summarize(entries);
    auto report = score(spec, records, items);
    auto j = dynamic_report(report, w, cfg, summary, count_errors(errors), single);
    std::string prefix;
    if (sweep) {
      const auto label = weight_label(w);
      if (!labels.insert(label).second) throw ConfigError(fmt::format("sweep grid repeats {}", label));
      prefix = "sweep/" + label + "/";
    }
    emit_json(manifest, dir, prefix + "report.json", j);
    emit(manifest, dir, prefix + "records.jsonl", records_jsonl(report.records));
    write_audit_log(dir / (prefix + "audit.jsonl"), entries, o.common.timings);
    manifest.output(prefix + "audit.jsonl");
    sweep_csv += fmt::format("{},{},{},{},{},{},{}\n", number(w), format_accuracy(report.accuracy), report.n_correct,
                             report.n_items, summary.chose_s1, summary.chose_s2, summary.ties);
    io.out << fmt::format("{} dynamic w={}: accuracy {} ({}/{}), s1 chosen {}, s2 chosen {}\n", spec.name, number(w),
                          format_accuracy(report.accuracy), report.n_correct, report.n_items, summary.chose_s1,
                          summary.chose_s2);
  }
  if (sweep) emit(manifest, dir, "sweep.csv", sweep_csv);
}

void cmd_eval(const EvalOptions& o, Io io) {
  if (o.w && !o.sweep.empty()) throw ConfigError("--w and --sweep-w are mutually exclusive");
  auto cfg = effective_config(o.common, true);
  if (!o.tie_break.empty()) cfg.tie_break = parse_tie_break(o.tie_break);
  if (!o.entropy_source.empty()) cfg.entropy_source = parse_entropy_source(o.entropy_source);
  if (o.w) cfg.w = *o.w;
  const auto& spec = benchmark_spec(o.benchmark);
  std::filesystem::path items_path;
  if (!o.items.empty()) {
    items_path = o.items;
  } else if (auto it = cfg.benchmarks.find(spec.name); it != cfg.benchmarks.end()) {
    items_path = it->second;
  } else {
    throw ConfigError(fmt::format("no input file for benchmark {} (use --items or the config's benchmarks map)", spec.name));
  }
  if (!std::filesystem::exists(items_path))
    throw ConfigError(fmt::format("benchmark file '{}' does not exist", items_path.string()));
  const bool sweep = !o.sweep.empty();
  const auto grid = sweep ? parse_sweep(o.sweep) : std::vector<double>{cfg.w};
  if (o.system == "dynamic") {
    cfg.backend("s1");
    cfg.backend("s2");
  } else {
    if (sweep) throw ConfigError("--sweep-w applies to --system dynamic only");
    cfg.backend(o.system);
  }
  const auto items = load_benchmark(spec, items_path);
  const auto dir = output_dir(o.common, cfg);

  Manifest manifest("eval", cfg);
  manifest.param("benchmark", spec.name);
  manifest.param("system", o.system);
  manifest.param("n_items", items.size());
  if (sweep) {
    manifest.param("sweep_w", grid);
  } else if (o.system == "dynamic") {
    manifest.param("w", cfg.w);
  }
  manifest.input("benchmark", items_path);
  if (o.system == "dynamic") {
    run_dynamic(o, cfg, spec, items, grid, sweep, manifest, dir, io);
  } else {
    run_single(o, cfg, spec, items, manifest, dir, io);
  }
  manifest.write(dir);
}

// --------------------------------------------------------------------------

struct ArbitrateOptions {
  CommonOptions common;
  std::string prompts;
  std::optional<double> w;
  std::string tie_break;
};

void cmd_arbitrate(const ArbitrateOptions& o, Io io) {
  auto cfg = effective_config(o.common, true);
  if (o.w) cfg.w = *o.w;
  if (!o.tie_break.empty()) cfg.tie_break = parse_tie_break(o.tie_break);
  if (cfg.entropy_source != EntropySource::stage1)
    throw ConfigError("arbitrate generates a single stage; set entropy_source to stage1");
  std::vector<BatchItem> items;
  std::set<std::string> seen;
  for (const auto& line : read_jsonl(o.prompts)) {
    const auto& j = line.value;
    if (!j.is_object() || !j.contains("id") || !j.contains("prompt") || !j["id"].is_string() || !j["prompt"].is_string())
      throw ValidationError(fmt::format("{} line {}: expected {{\"id\": str, \"prompt\": str}}", o.prompts, line.line));
    auto id = j["id"].get<std::string>();
    if (!seen.insert(id).second) throw ValidationError(fmt::format("{} line {}: duplicate id '{}'", o.prompts, line.line, id));
    items.push_back({id, j["prompt"].get<std::string>()});
  }
  auto pair = make_dual_pair(cfg, o.common, cfg.w);
  validate_pair(pair);
  const auto dir = output_dir(o.common, cfg);
  auto result = arbitrate_batch(pair, items, cfg.parallelism);

  Manifest manifest("arbitrate", cfg);
  manifest.param("w", cfg.w);
  manifest.param("n_items", items.size());
  manifest.input("prompts", o.prompts);
  std::vector<json> answers;
  for (const auto& e : result.entries) {
    if (e.answer) {
      answers.push_back({{"id", e.id}, {"chosen", to_string(e.answer->decision.chosen)}, {"text", e.answer->chosen_text}});
    } else {
      answers.push_back({{"id", e.id}, {"error", e.error}});
    }
  }
  emit(manifest, dir, "answers.jsonl", to_jsonl(answers));
  write_audit_log(dir / "audit.jsonl", result.entries, o.common.timings);
  manifest.output("audit.jsonl");
  const auto& s = result.summary;
  emit_json(manifest, dir, "summary.json",
            {{"n_items", items.size()},
             {"chose_s1", s.chose_s1},
             {"chose_s2", s.chose_s2},
             {"ties", s.ties},
             {"errored", s.errored},
             {"mean_r1", s.mean_r1},
             {"mean_r2", s.mean_r2}});
  manifest.write(dir);
  io.out << fmt::format("arbitrated {} prompt(s): s1 {}, s2 {}, errors {}\n", items.size(), s.chose_s1, s.chose_s2,
                        s.errored);
}

// --------------------------------------------------------------------------

struct RecordOptions {
  CommonOptions common;
  std::string role;
  std::string requests;
  std::string transcript;
};

void cmd_record(const RecordOptions& o, Io io) {
  auto cfg = effective_config(o.common, true);
  const auto& role = cfg.backend(o.role);
  std::vector<GenerationRequest> requests;
  for (const auto& line : read_jsonl(o.requests)) {
    const auto& j = line.value;
    if (!j.is_object() || !j.contains("prompt") || !j["prompt"].is_string())
      throw ValidationError(fmt::format("{} line {}: expected an object with a string 'prompt'", o.requests, line.line));
    GenerationRequest req = role.params;
    req.prompt = j["prompt"].get<std::string>();
    req.max_tokens = j.value("max_tokens", req.max_tokens);
    req.temperature = j.value("temperature", req.temperature);
    req.top_logprobs = j.value("top_logprobs", req.top_logprobs);
    validate_request(req);
    requests.push_back(std::move(req));
  }
  auto backend = make_backend(role.backend);
  auto gens = record_transcript(*backend, requests, o.transcript);
  io.out << fmt::format("recorded {} generation(s) from '{}' into {}\n", gens.size(), o.role, o.transcript);
}

// --------------------------------------------------------------------------

struct ConvertOptions {
  std::string benchmark;
  std::vector<std::string> inputs;
  std::string out;
};

void cmd_convert(const ConvertOptions& o, Io io) {
  const auto& spec = benchmark_spec(o.benchmark);
  std::vector<std::filesystem::path> inputs(o.inputs.begin(), o.inputs.end());
  for (const auto& p : inputs)
    if (!std::filesystem::exists(p)) throw ConfigError(fmt::format("input '{}' does not exist", p.string()));
  auto rows = convert_public(spec, inputs);
  write_file(o.out, to_jsonl(rows));
  io.out << fmt::format("converted {} {} item(s) into {}\n", rows.size(), spec.name, o.out);
}

}  // namespace

void add_eval(CLI::App& app, Io io) {
  auto o = std::make_shared<EvalOptions>();
  auto* sub = app.add_subcommand("eval", "Two-stage benchmark evaluation");
  add_common_options(*sub, o->common, true);
  sub->add_option("--benchmark", o->benchmark, "Benchmark name, e.g. gsm8k or coin")->required();
  sub->add_option("--items", o->items, "Benchmark file (overrides the config's benchmarks map)");
  sub->add_option("--system", o->system, "s1, s2 or dynamic")
      ->check(CLI::IsMember({"s1", "s2", "dynamic"}))
      ->capture_default_str();
  auto* w = sub->add_option("--w", o->w, "Reliability weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--sweep-w", o->sweep, "Weight grid start:stop:step; one report per weight")->excludes(w);
  sub->add_option("--tie-break", o->tie_break, "s1 or s2");
  sub->add_option("--entropy-source", o->entropy_source, "stage1, stage2 or concat");
  sub->callback([o, io] { cmd_eval(*o, io); });
}

void add_arbitrate(CLI::App& app, Io io) {
  auto o = std::make_shared<ArbitrateOptions>();
  auto* sub = app.add_subcommand("arbitrate", "Arbitrate free-form prompts between s1 and s2");
  add_common_options(*sub, o->common, true);
  sub->add_option("--prompts", o->prompts, "JSON lines with id and prompt")->required()->check(CLI::ExistingFile);
  sub->add_option("--w", o->w, "Reliability weight in [0, 1]")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--tie-break", o->tie_break, "s1 or s2");
  sub->callback([o, io] { cmd_arbitrate(*o, io); });
}

void add_record(CLI::App& app, Io io) {
  auto o = std::make_shared<RecordOptions>();
  auto* sub = app.add_subcommand("record", "Capture a replay transcript for a list of prompts");
  add_common_options(*sub, o->common, false);
  sub->add_option("--role", o->role, "Backend role from the config")->required();
  sub->add_option("--requests", o->requests, "JSON lines with a prompt per line")->required()->check(CLI::ExistingFile);
  sub->add_option("--transcript", o->transcript, "Transcript file to append to")->required();
  sub->callback([o, io] { cmd_record(*o, io); });
}

void add_convert(CLI::App& app, Io io) {
  auto o = std::make_shared<ConvertOptions>();
  auto* sub = app.add_subcommand("convert", "Convert a public benchmark release to canonical rows");
  sub->add_option("--benchmark", o->benchmark, "Benchmark name")->required();
  sub->add_option("--input", o->inputs, "Release file; PIQA and SIQA also take the labels file")->required();
  sub->add_option("--out", o->out, "Output JSON-lines file")->required();
  sub->callback([o, io] { cmd_convert(*o, io); });
}

}  // namespace dualsys::cli
