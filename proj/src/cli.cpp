#include "dualsys/cli.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "cli_internal.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys::cli {

using json = nlohmann::json;

void add_common_options(CLI::App& app, CommonOptions& opts, bool with_backends) {
  app.add_option("--config", opts.config_path, "Run configuration (JSON)");
  app.add_option("--out", opts.out_dir, "Output directory (overrides output_dir)");
  app.add_option("--seed", opts.seed, "Root seed (overrides seed)");
  if (with_backends) {
    app.add_option("--parallelism", opts.parallelism, "Items in flight (overrides parallelism)")
        ->check(CLI::PositiveNumber);
    app.add_option("--record", opts.record_dir, "Append every backend call to <dir>/<role>.jsonl");
    app.add_flag("--timings", opts.timings, "Include wall-clock latencies in audit logs");
  }
}

RunConfig effective_config(const CommonOptions& opts, bool required) {
  RunConfig cfg;
  if (!opts.config_path.empty()) {
    cfg = load_run_config(opts.config_path);
  } else if (required) {
    throw ConfigError("--config is required for this command");
  }
  if (opts.parallelism) cfg.parallelism = *opts.parallelism;
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  validate_run_config(cfg);
  return cfg;
}

std::filesystem::path output_dir(const CommonOptions& opts, const RunConfig& cfg) {
  return opts.out_dir.empty() ? cfg.output_dir : std::filesystem::path(opts.out_dir);
}

std::shared_ptr<Backend> open_backend(const RunConfig& cfg, const std::string& role, const CommonOptions& opts) {
  auto backend = make_backend(cfg.backend(role).backend);
  if (opts.record_dir.empty()) return backend;
  auto writer = std::make_shared<TranscriptWriter>(std::filesystem::path(opts.record_dir) / (role + ".jsonl"));
  return std::make_shared<RecordingBackend>(std::move(backend), std::move(writer));
}

Manifest::Manifest(std::string command, const RunConfig& cfg)
    : command_(std::move(command)), config_(run_config_summary(cfg)), config_digest_(cfg.digest), seed_(cfg.seed) {}

void Manifest::input(const std::string& role, const std::filesystem::path& path) {
  inputs_[role] = {{"path", path.generic_string()}, {"sha256", sha256_hex(read_file(path))}};
}

void Manifest::write(const std::filesystem::path& dir, const std::string& filename) const {
  auto outputs = outputs_;
  std::sort(outputs.begin(), outputs.end());
  json j{{"tool", "dualsys"},
         {"version", DUALSYS_VERSION},
         {"command", command_},
         {"config_sha256", config_digest_.empty() ? json(nullptr) : json(config_digest_)},
         {"config", config_},
         {"seed", seed_},
         {"parameters", params_},
         {"inputs", inputs_},
         {"outputs", outputs}};
  write_file(dir / filename, j.dump(2) + "\n");
}

void emit(Manifest& manifest, const std::filesystem::path& dir, const std::string& name, const std::string& contents) {
  write_file(dir / name, contents);
  manifest.output(name);
}

void emit_json(Manifest& manifest, const std::filesystem::path& dir, const std::string& name, const json& j) {
  emit(manifest, dir, name, j.dump(2) + "\n");
}

std::pair<std::string, std::filesystem::path> split_labelled(const std::string& text) {
  auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == text.size())
    throw ConfigError(fmt::format("expected LABEL=PATH, got '{}'", text));
  return {text.substr(0, eq), text.substr(eq + 1)};
}

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{}", v);
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Io io{out, err};
  CLI::App app{"Entropy-guided arbitration between intuitive and deliberative models", "dualsys"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DUALSYS_VERSION);
  add_eval(app, io);
  add_arbitrate(app, io);
  add_analyze(app, io);
  add_dataset(app, io);
  add_record(app, io);
  add_convert(app, io);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::usage);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::internal);
  }
  return 0;
}

}  // namespace dualsys::cli
