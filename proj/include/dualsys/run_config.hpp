#pragma once

// Experiment configuration: one JSON file naming the backends, arbitration
// settings, benchmark inputs and analysis options. String values may refer
// to environment variables as ${NAME}; relative paths resolve against the
// directory holding the file.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualsys/arbitration.hpp"
#include "dualsys/model_client.hpp"

namespace dualsys {

/// A configured backend and the sampling parameters sent to it.
struct BackendRole {
  BackendConfig backend;
  GenerationRequest params;
};

/// An equivalence margin in tokens, or a fraction of the pooled mean when `relative`.
struct MarginSpec {
  double value = 0.0;
  bool relative = false;
};

std::string to_string(const MarginSpec& m);
/// "3" is 3 tokens, "5%" is 5 percent of the pooled mean.
MarginSpec parse_margin(const std::string& text);

struct RunConfig {
  std::map<std::string, BackendRole> backends;  // keys: s1, s2, judge, rewriter, generator
  double w = ReliabilityWeight::kDefault;
  TieBreak tie_break = TieBreak::prefer_s1;
  TailPolicy tail_policy = TailPolicy::single_bucket;
  EntropySource entropy_source = EntropySource::stage1;
  bool degrade_to_single = false;
  std::map<std::string, std::filesystem::path> benchmarks;  // canonical benchmark name -> file
  std::filesystem::path output_dir = "runs/latest";
  int parallelism = 1;
  std::uint64_t seed = 0;
  std::vector<MarginSpec> equivalence_margins = {{3, false}, {5, false}, {7, false}, {0.05, true}};
  std::optional<std::filesystem::path> hedge_lexicon;
  std::optional<std::filesystem::path> judge_demonstrations;
  /// SHA-256 of the file as written, before interpolation. Empty for defaults.
  std::string digest;

  /// Throws ConfigError when `role` is not configured.
  const BackendRole& backend(const std::string& role) const;
};

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the process environment.
std::optional<std::string> process_env(const std::string& name);

/// Replaces every ${NAME}; "$$" stands for a literal "$". Throws ConfigError
/// for unset variables and unterminated references.
std::string interpolate_env(std::string_view text, const EnvLookup& env);

/// Builds a config from a parsed document. Unknown keys are errors.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                           const EnvLookup& env = process_env);

RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env = process_env);

/// Checks ranges and that every referenced input file exists.
void validate_run_config(const RunConfig& cfg);

/// Backend kinds, models and arbitration settings for run manifests. Never
/// contains credentials.
nlohmann::json run_config_summary(const RunConfig& cfg);

}  // namespace dualsys
