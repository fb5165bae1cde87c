#include "dualsys/model_client.hpp"

#include <cmath>
#include <fstream>
#include <optional>

#include <fmt/format.h>

#include "dualsys/errors.hpp"
#include "dualsys/io.hpp"

namespace dualsys {

using nlohmann::json;

void validate_request(const GenerationRequest& req) {
  if (req.prompt.empty()) throw ValidationError("generation request has an empty prompt");
  if (req.max_tokens <= 0) throw ValidationError(fmt::format("max_tokens must be positive, got {}", req.max_tokens));
  if (!(req.temperature >= 0.0)) throw ValidationError(fmt::format("temperature must be >= 0, got {}", req.temperature));
  if (req.top_logprobs < 1 || req.top_logprobs > 20) {
    throw ValidationError(fmt::format("top_logprobs must be in [1, 20], got {}", req.top_logprobs));
  }
}

std::string to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

FinishReason parse_finish_reason(const std::string& text) {
  if (text == "stop") return FinishReason::stop;
  if (text == "length") return FinishReason::length;
  return FinishReason::error;
}

std::vector<double> entropy_series(const Generation& gen, TailPolicy policy) {
  std::vector<double> out;
  out.reserve(gen.steps.size());
  for (const auto& step : gen.steps) out.push_back(token_entropy(step, policy));
  return out;
}

TokenDistribution distribution_from_logprobs(const std::vector<std::pair<std::string, double>>& top) {
  TokenDistribution dist;
  double mass = 0.0;
  for (const auto& [token, lp] : top) {
    if (std::isnan(lp) || lp > 0.0) throw ValidationError(fmt::format("invalid logprob {} for token '{}'", lp, token));
    dist.entries.push_back(TokenProb::from_logprob(token, lp));
    mass += dist.entries.back().probability;
  }
  double tail = 1.0 - mass;
  if (tail < -kMassTolerance) {
    throw ValidationError(fmt::format("reported token probabilities sum to {:.9f} > 1", mass));
  }
  dist.tail_mass = tail < 0.0 ? 0.0 : tail;
  return dist;
}

json generation_to_json(const Generation& gen) {
  json steps = json::array();
  for (const auto& step : gen.steps) {
    json entries = json::array();
    for (const auto& e : step.entries) {
      if (e.probability > 0.0) entries.push_back(json::array({e.token, e.log_probability()}));
    }
    steps.push_back(std::move(entries));
  }
  return json{{"text", gen.text},
              {"tokens", gen.tokens},
              {"steps", std::move(steps)},
              {"finish_reason", to_string(gen.finish_reason)}};
}

Generation generation_from_json(const json& j) {
  Generation gen;
  try {
    gen.text = j.at("text").get<std::string>();
    gen.tokens = j.at("tokens").get<std::vector<std::string>>();
    for (const auto& step : j.at("steps")) {
      std::vector<std::pair<std::string, double>> top;
      for (const auto& e : step) top.emplace_back(e.at(0).get<std::string>(), e.at(1).get<double>());
      gen.steps.push_back(distribution_from_logprobs(top));
    }
    gen.finish_reason = parse_finish_reason(j.value("finish_reason", "stop"));
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed generation record: {}", e.what()));
  }
  if (gen.tokens.size() != gen.steps.size()) {
    throw ValidationError(fmt::format("generation has {} tokens but {} steps", gen.tokens.size(), gen.steps.size()));
  }
  return gen;
}

json request_params_json(const GenerationRequest& req) {
  return json{{"model_tag", req.model_tag},
              {"max_tokens", req.max_tokens},
              {"temperature", req.temperature},
              {"top_logprobs", req.top_logprobs}};
}

std::string request_digest(const GenerationRequest& req) {
  const json key{{"prompt", req.prompt}, {"params", request_params_json(req)}};
  return sha256_hex(key.dump(-1, ' ', false, json::error_handler_t::replace));
}

std::string to_string(BackendKind k) {
  switch (k) {
    case BackendKind::http: return "http";
    case BackendKind::recorded: return "recorded";
    case BackendKind::synthetic: return "synthetic";
  }
  return "synthetic";
}

BackendKind parse_backend_kind(const std::string& text) {
  if (text == "http") return BackendKind::http;
  if (text == "recorded") return BackendKind::recorded;
  if (text == "synthetic") return BackendKind::synthetic;
  throw ConfigError(fmt::format("unknown backend kind '{}' (expected http, recorded or synthetic)", text));
}

void validate_config(const BackendConfig& cfg) {
  const auto label = cfg.name.empty() ? to_string(cfg.kind) : cfg.name;
  switch (cfg.kind) {
    case BackendKind::http:
      if (cfg.endpoint_url.empty()) throw ConfigError(fmt::format("backend '{}': endpoint_url is required", label));
      break;
    case BackendKind::recorded:
      if (cfg.transcript_path.empty()) throw ConfigError(fmt::format("backend '{}': transcript_path is required", label));
      break;
    case BackendKind::synthetic:
      if (cfg.script_path.empty()) throw ConfigError(fmt::format("backend '{}': script_path is required", label));
      break;
  }
  if (cfg.max_retries < 0) throw ConfigError(fmt::format("backend '{}': max_retries must be >= 0", label));
  if (cfg.max_in_flight < 1) throw ConfigError(fmt::format("backend '{}': max_in_flight must be >= 1", label));
}

std::shared_ptr<Backend> make_backend(const BackendConfig& cfg) {
  validate_config(cfg);
  switch (cfg.kind) {
    case BackendKind::http: return std::make_shared<HttpBackend>(cfg);
    case BackendKind::recorded: return std::make_shared<RecordedBackend>(cfg.transcript_path);
    case BackendKind::synthetic: return SyntheticBackend::from_script_file(cfg.script_path);
  }
  throw ConfigError("unreachable backend kind");
}

Generation generate(const BackendConfig& cfg, const GenerationRequest& req) {
  return make_backend(cfg)->generate(req);
}

// --- recorded ---------------------------------------------------------------

RecordedBackend::RecordedBackend(const std::filesystem::path& transcript) {
  for (const auto& row : read_jsonl(transcript)) {
    const auto& j = row.value;
    if (!j.is_object() || !j.contains("prompt_digest")) {
      throw ValidationError(fmt::format("{}:{}: transcript record lacks prompt_digest", transcript.string(), row.line));
    }
    // Later records for the same key win, so re-recording overrides.
    records_[j["prompt_digest"].get<std::string>()] = generation_from_json(j);
  }
}

Generation RecordedBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  const auto digest = request_digest(req);
  const auto it = records_.find(digest);
  if (it == records_.end()) {
    throw CacheMissError(digest, fmt::format("transcript has no record for request digest {} (model '{}', "
                                             "temperature {}, max_tokens {}, top_logprobs {})",
                                             digest, req.model_tag, req.temperature, req.max_tokens,
                                             req.top_logprobs));
  }
  return it->second;
}

// --- synthetic --------------------------------------------------------------

SyntheticBackend::SyntheticBackend(Script script) : script_(std::move(script)) {}

Generation SyntheticBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  return script_(req);
}

std::shared_ptr<SyntheticBackend> SyntheticBackend::from_script_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("synthetic script '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  struct Rule {
    std::string contains;
    Generation gen;
  };
  auto to_gen = [&](const json& r) {
    if (r.contains("text")) return scripted_generation(r.at("text").get<std::string>(), r.value("entropy", 0.0));
    const auto tokens = r.at("tokens").get<std::vector<std::string>>();
    std::vector<double> ent = r.contains("entropies") ? r["entropies"].get<std::vector<double>>()
                                                      : std::vector<double>(tokens.size(), 0.0);
    return scripted_generation(tokens, ent);
  };
  std::vector<Rule> rules;
  std::optional<Generation> fallback;
  try {
    for (const auto& r : doc.value("rules", json::array())) rules.push_back({r.at("contains").get<std::string>(), to_gen(r)});
    if (doc.contains("default")) fallback = to_gen(doc["default"]);
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("synthetic script '{}': {}", path.string(), e.what()));
  }
  return std::make_shared<SyntheticBackend>([rules = std::move(rules), fallback](const GenerationRequest& req) {
    for (const auto& r : rules) {
      if (req.prompt.find(r.contains) != std::string::npos) return r.gen;
    }
    if (fallback) return *fallback;
    throw CacheMissError(request_digest(req), "synthetic script has no rule matching the prompt");
  });
}

TokenDistribution distribution_with_entropy(const std::string& chosen, double target) {
  if (!(target >= 0.0) || !std::isfinite(target)) {
    throw ValidationError(fmt::format("target entropy {} must be finite and >= 0", target));
  }
  if (target == 0.0) return distribution_from_logprobs({{chosen, 0.0}});
  // One heavy entry p plus k-1 equal light entries; entropy falls monotonically
  // from ln k at p = 1/k to 0 at p = 1, so bisect on p.
  const auto k = static_cast<std::size_t>(std::floor(std::exp(target))) + 2;
  const double rest = static_cast<double>(k - 1);
  auto entropy_at = [&](double p) {
    const double q = (1.0 - p) / rest;
    double h = -p * std::log(p);
    if (q > 0.0) h -= (1.0 - p) * std::log(q);
    return h;
  };
  double lo = 1.0 / static_cast<double>(k);
  double hi = 1.0;
  for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (entropy_at(mid) > target ? lo : hi) = mid;
  }
  // Entries are stored in logprob form so a transcript round trip is exact.
  const double p = 0.5 * (lo + hi);
  const double q = (1.0 - p) / rest;
  std::vector<std::pair<std::string, double>> top{{chosen, std::log(p)}};
  for (std::size_t i = 1; i < k; ++i) top.emplace_back(fmt::format("<alt{}>", i), std::log(q));
  return distribution_from_logprobs(top);
}

Generation scripted_generation(const std::vector<std::string>& tokens, const std::vector<double>& entropies) {
  if (tokens.size() != entropies.size()) {
    throw ValidationError(fmt::format("scripted generation: {} tokens but {} entropies", tokens.size(), entropies.size()));
  }
  Generation gen;
  gen.tokens = tokens;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    gen.text += tokens[i];
    gen.steps.push_back(distribution_with_entropy(tokens[i], entropies[i]));
  }
  return gen;
}

Generation scripted_generation(const std::string& text, double entropy) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ' ') {
      tokens.push_back(text.substr(start, i - start));
      start = i;
    }
  }
  if (text.empty()) tokens.clear();
  return scripted_generation(tokens, std::vector<double>(tokens.size(), entropy));
}

// --- transcripts ------------------------------------------------------------

TranscriptWriter::TranscriptWriter(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

void TranscriptWriter::append(const GenerationRequest& req, const Generation& gen) {
  json rec = generation_to_json(gen);
  rec["prompt_digest"] = request_digest(req);
  rec["params"] = request_params_json(req);
  const auto line = rec.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw IoError(fmt::format("cannot append to transcript '{}'", path_.string()));
  out << line;
  if (!out) throw IoError(fmt::format("write to transcript '{}' failed", path_.string()));
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<TranscriptWriter> writer)
    : inner_(std::move(inner)), writer_(std::move(writer)) {}

Generation RecordingBackend::generate(const GenerationRequest& req) {
  auto gen = inner_->generate(req);
  writer_->append(req, gen);
  return gen;
}

std::vector<Generation> record_transcript(Backend& backend, const std::vector<GenerationRequest>& requests,
                                          const std::filesystem::path& transcript) {
  TranscriptWriter writer(transcript);
  std::vector<Generation> out;
  out.reserve(requests.size());
  for (const auto& req : requests) {
    out.push_back(backend.generate(req));
    writer.append(req, out.back());
  }
  return out;
}

}  // namespace dualsys
