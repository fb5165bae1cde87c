#include "dualsys/run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "dualsys/benchmark.hpp"
#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {

using json = nlohmann::json;

namespace {

const std::set<std::string> kRoles = {"s1", "s2", "judge", "rewriter", "generator"};

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
  }
}

json interpolate_tree(const json& node, const EnvLookup& env) {
  if (node.is_string()) return interpolate_env(node.get<std::string>(), env);
  if (node.is_array()) {
    json out = json::array();
    for (const auto& v : node) out.push_back(interpolate_tree(v, env));
    return out;
  }
  if (node.is_object()) {
    json out = json::object();
    for (const auto& [k, v] : node.items()) out[k] = interpolate_tree(v, env);
    return out;
  }
  return node;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

BackendRole parse_backend(const json& j, const std::string& role, const std::filesystem::path& base) {
  const std::string where = "backends." + role;
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  reject_unknown_keys(j,
                      {"kind", "url", "model", "api_key_env", "transcript", "script", "timeout_ms", "max_retries",
                       "retry_base_delay_ms", "max_in_flight", "max_tokens", "temperature", "top_logprobs"},
                      where);
  BackendRole r;
  auto& b = r.backend;
  b.name = role;
  b.kind = parse_backend_kind(j.value("kind", "synthetic"));
  b.endpoint_url = j.value("url", "");
  b.model_tag = j.value("model", role);
  b.auth_token_env_var = j.value("api_key_env", "");
  if (j.contains("transcript")) b.transcript_path = resolve(base, j["transcript"].get<std::string>());
  if (j.contains("script")) b.script_path = resolve(base, j["script"].get<std::string>());
  b.request_timeout = std::chrono::milliseconds(j.value("timeout_ms", 120'000));
  b.max_retries = j.value("max_retries", 3);
  b.retry_base_delay = std::chrono::milliseconds(j.value("retry_base_delay_ms", 500));
  b.max_in_flight = j.value("max_in_flight", 4);
  r.params.model_tag = b.model_tag;
  r.params.max_tokens = j.value("max_tokens", r.params.max_tokens);
  r.params.temperature = j.value("temperature", r.params.temperature);
  r.params.top_logprobs = j.value("top_logprobs", r.params.top_logprobs);
  return r;
}

}  // namespace

std::string to_string(const MarginSpec& m) {
  return m.relative ? fmt::format("{:g}%", m.value * 100.0) : fmt::format("{:g}", m.value);
}

MarginSpec parse_margin(const std::string& text) {
  std::string s = text;
  bool relative = !s.empty() && s.back() == '%';
  if (relative) s.pop_back();
  double v = 0.0;
  try {
    std::size_t used = 0;
    v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("equivalence margin '{}' is not a number or percentage", text));
  }
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(fmt::format("equivalence margin '{}' must be positive", text));
  return {relative ? v / 100.0 : v, relative};
}

const BackendRole& RunConfig::backend(const std::string& role) const {
  auto it = backends.find(role);
  if (it == backends.end()) throw ConfigError(fmt::format("no '{}' backend configured", role));
  return it->second;
}

std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

std::string interpolate_env(std::string_view text, const EnvLookup& env) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] != '$') {
      out += text[i++];
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '$') {
      out += '$';
      i += 2;
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '{') {
      auto close = text.find('}', i + 2);
      if (close == std::string_view::npos)
        throw ConfigError(fmt::format("unterminated variable reference in '{}'", text));
      std::string name(text.substr(i + 2, close - i - 2));
      if (name.empty()) throw ConfigError(fmt::format("empty variable reference in '{}'", text));
      auto value = env(name);
      if (!value) throw ConfigError(fmt::format("environment variable '{}' is not set", name));
      out += *value;
      i = close + 1;
      continue;
    }
    out += text[i++];
  }
  return out;
}

RunConfig parse_run_config(const json& raw, const std::filesystem::path& base_dir, const EnvLookup& env) {
  if (!raw.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown_keys(raw,
                      {"backends", "w", "tie_break", "tail_policy", "entropy_source", "degrade_to_single",
                       "benchmarks", "output_dir", "parallelism", "seed", "equivalence_margins", "hedge_lexicon",
                       "judge_demonstrations"},
                      "config");
  const json doc = interpolate_tree(raw, env);
  RunConfig cfg;
  try {
    if (doc.contains("backends")) {
      const auto& bs = doc["backends"];
      if (!bs.is_object()) throw ConfigError("backends must be an object");
      for (const auto& [role, spec] : bs.items()) {
        if (!kRoles.count(role)) throw ConfigError(fmt::format("unknown backend role '{}' (expected s1, s2, judge, rewriter, generator)", role));
        cfg.backends[role] = parse_backend(spec, role, base_dir);
      }
    }
    cfg.w = doc.value("w", cfg.w);
    if (doc.contains("tie_break")) cfg.tie_break = parse_tie_break(doc["tie_break"].get<std::string>());
    if (doc.contains("tail_policy")) cfg.tail_policy = parse_tail_policy(doc["tail_policy"].get<std::string>());
    if (doc.contains("entropy_source"))
      cfg.entropy_source = parse_entropy_source(doc["entropy_source"].get<std::string>());
    cfg.degrade_to_single = doc.value("degrade_to_single", false);
    if (doc.contains("benchmarks")) {
      for (const auto& [name, path] : doc["benchmarks"].items()) {
        const auto& spec = benchmark_spec(name);
        cfg.benchmarks[spec.name] = resolve(base_dir, path.get<std::string>());
      }
    }
    if (doc.contains("output_dir")) cfg.output_dir = resolve(base_dir, doc["output_dir"].get<std::string>());
    cfg.parallelism = doc.value("parallelism", cfg.parallelism);
    cfg.seed = doc.value("seed", cfg.seed);
    if (doc.contains("equivalence_margins")) {
      cfg.equivalence_margins.clear();
      for (const auto& m : doc["equivalence_margins"])
        cfg.equivalence_margins.push_back(parse_margin(m.is_string() ? m.get<std::string>() : m.dump()));
    }
    if (doc.contains("hedge_lexicon")) cfg.hedge_lexicon = resolve(base_dir, doc["hedge_lexicon"].get<std::string>());
    if (doc.contains("judge_demonstrations"))
      cfg.judge_demonstrations = resolve(base_dir, doc["judge_demonstrations"].get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  } catch (const ValidationError& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const EnvLookup& env) {
  if (!std::filesystem::exists(path)) throw ConfigError(fmt::format("config file '{}' does not exist", path.string()));
  const auto text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config file '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  auto cfg = parse_run_config(doc, path.parent_path(), env);
  cfg.digest = sha256_hex(text);
  validate_run_config(cfg);
  return cfg;
}

void validate_run_config(const RunConfig& cfg) {
  if (!(cfg.w >= 0.0 && cfg.w <= 1.0)) throw ConfigError(fmt::format("w = {} is outside [0, 1]", cfg.w));
  if (cfg.parallelism < 1) throw ConfigError(fmt::format("parallelism must be at least 1, got {}", cfg.parallelism));
  if (cfg.equivalence_margins.empty()) throw ConfigError("equivalence_margins must not be empty");
  auto must_exist = [](const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::exists(p)) throw ConfigError(fmt::format("{} '{}' does not exist", what, p.string()));
  };
  for (const auto& [role, r] : cfg.backends) {
    try {
      validate_config(r.backend);
      validate_request([&] {
        auto req = r.params;
        req.prompt = "x";
        return req;
      }());
    } catch (const Error& e) {
      throw ConfigError(fmt::format("backend '{}': {}", role, e.what()));
    }
    if (r.backend.kind == BackendKind::recorded) must_exist(r.backend.transcript_path, role + " transcript");
    if (r.backend.kind == BackendKind::synthetic) must_exist(r.backend.script_path, role + " script");
  }
  for (const auto& [name, path] : cfg.benchmarks) must_exist(path, name + " benchmark file");
  if (cfg.hedge_lexicon) must_exist(*cfg.hedge_lexicon, "hedge lexicon");
  if (cfg.judge_demonstrations) must_exist(*cfg.judge_demonstrations, "judge demonstrations");
}

json run_config_summary(const RunConfig& cfg) {
  json backends = json::object();
  for (const auto& [role, r] : cfg.backends) {
    backends[role] = {{"mode", to_string(r.backend.kind)},
                      {"model", r.params.model_tag},
                      {"max_tokens", r.params.max_tokens},
                      {"temperature", r.params.temperature},
                      {"top_logprobs", r.params.top_logprobs}};
  }
  json margins = json::array();
  for (const auto& m : cfg.equivalence_margins) margins.push_back(to_string(m));
  return {{"backends", backends},
          {"w", cfg.w},
          {"tie_break", to_string(cfg.tie_break)},
          {"tail_policy", to_string(cfg.tail_policy)},
          {"entropy_source", to_string(cfg.entropy_source)},
          {"degrade_to_single", cfg.degrade_to_single},
          {"parallelism", cfg.parallelism},
          {"seed", cfg.seed},
          {"equivalence_margins", margins}};
}

}  // namespace dualsys
