#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dualsys/run_config.hpp"

namespace dualsys::cli {

struct Io {
  std::ostream& out;
  std::ostream& err;
};

/// Flags shared by every command that talks to a backend or writes a run directory.
struct CommonOptions {
  std::string config_path;
  std::string out_dir;
  std::optional<int> parallelism;
  std::optional<std::uint64_t> seed;
  std::string record_dir;
  bool timings = false;
};

void add_common_options(CLI::App& app, CommonOptions& opts, bool with_backends);

/// Loads the config when one was given (or when `required`) and applies flag overrides.
RunConfig effective_config(const CommonOptions& opts, bool required);

std::filesystem::path output_dir(const CommonOptions& opts, const RunConfig& cfg);

/// The backend for `role`, wrapped in a transcript recorder when --record is set.
std::shared_ptr<Backend> open_backend(const RunConfig& cfg, const std::string& role, const CommonOptions& opts);

/// Run manifest. Holds nothing time- or host-dependent so replays compare byte for byte.
class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg);
  void param(const std::string& key, nlohmann::json value) { params_[key] = std::move(value); }
  void input(const std::string& role, const std::filesystem::path& path);
  void output(const std::string& name) { outputs_.push_back(name); }
  void write(const std::filesystem::path& dir, const std::string& filename = "manifest.json") const;

 private:
  std::string command_;
  nlohmann::json config_;
  std::string config_digest_;
  std::uint64_t seed_;
  nlohmann::json params_ = nlohmann::json::object();
  nlohmann::json inputs_ = nlohmann::json::object();
  std::vector<std::string> outputs_;
};

/// Writes `contents` to dir/name and records the name in the manifest.
void emit(Manifest& manifest, const std::filesystem::path& dir, const std::string& name, const std::string& contents);
void emit_json(Manifest& manifest, const std::filesystem::path& dir, const std::string& name, const nlohmann::json& j);

/// Splits "LABEL=PATH". Throws ConfigError when there is no '='.
std::pair<std::string, std::filesystem::path> split_labelled(const std::string& text);

/// Shortest round-trip decimal for CSV cells.
std::string number(double v);

void add_eval(CLI::App& app, Io io);
void add_arbitrate(CLI::App& app, Io io);
void add_analyze(CLI::App& app, Io io);
void add_dataset(CLI::App& app, Io io);
void add_record(CLI::App& app, Io io);
void add_convert(CLI::App& app, Io io);

}  // namespace dualsys::cli
