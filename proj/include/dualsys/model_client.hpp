#pragma once

// Generation backends. Every backend returns the emitted tokens together
// with one TokenDistribution per token so entropy can be computed downstream.
//
//   HttpBackend       OpenAI-compatible /chat/completions with logprobs
//   RecordedBackend   replays a transcript file keyed by request digest
//   SyntheticBackend  scripted generations for tests and offline demos

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "dualsys/entropy.hpp"

namespace dualsys {

struct GenerationRequest {
  std::string prompt;
  int max_tokens = 1024;
  double temperature = 0.0;
  int top_logprobs = 20;
  std::string model_tag;
};

/// Throws ValidationError on an empty prompt or out-of-range sampling parameters.
void validate_request(const GenerationRequest& req);

enum class FinishReason { stop, length, error };

std::string to_string(FinishReason r);
FinishReason parse_finish_reason(const std::string& text);

struct Generation {
  std::string text;
  std::vector<std::string> tokens;
  std::vector<TokenDistribution> steps;
  FinishReason finish_reason = FinishReason::stop;

  friend bool operator==(const Generation&, const Generation&) = default;
};

/// Per-token entropies of a generation.
std::vector<double> entropy_series(const Generation& gen, TailPolicy policy = TailPolicy::single_bucket);

/// Builds a step distribution from wire logprobs: p = exp(logprob), tail = 1 - sum(p).
/// Throws ValidationError if the reported mass exceeds 1 beyond tolerance.
TokenDistribution distribution_from_logprobs(const std::vector<std::pair<std::string, double>>& top);

/// Transcript / wire-neutral JSON form of a generation: {text, tokens, steps, finish_reason},
/// where steps is a list of [[token, logprob], ...] lists.
nlohmann::json generation_to_json(const Generation& gen);
Generation generation_from_json(const nlohmann::json& j);

/// Hex SHA-256 over the prompt and sampling parameters. Cache key for replay.
std::string request_digest(const GenerationRequest& req);
nlohmann::json request_params_json(const GenerationRequest& req);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual Generation generate(const GenerationRequest& req) = 0;
  /// "http", "recorded" or "synthetic".
  virtual std::string mode() const = 0;
};

enum class BackendKind { http, recorded, synthetic };

std::string to_string(BackendKind k);
BackendKind parse_backend_kind(const std::string& text);

struct BackendConfig {
  BackendKind kind = BackendKind::synthetic;
  std::string name;
  std::string endpoint_url;  // http: base URL, e.g. http://localhost:8000/v1
  std::string model_tag;
  std::string auth_token_env_var;
  std::filesystem::path transcript_path;  // recorded
  std::filesystem::path script_path;      // synthetic
  std::chrono::milliseconds request_timeout{120'000};
  int max_retries = 3;
  std::chrono::milliseconds retry_base_delay{500};
  int max_in_flight = 4;
};

/// Throws ConfigError when a kind-specific field is missing.
void validate_config(const BackendConfig& cfg);

std::shared_ptr<Backend> make_backend(const BackendConfig& cfg);

/// Convenience wrapper matching the functional contract.
Generation generate(const BackendConfig& cfg, const GenerationRequest& req);

// --------------------------------------------------------------------------

class HttpBackend : public Backend {
 public:
  explicit HttpBackend(BackendConfig cfg);
  Generation generate(const GenerationRequest& req) override;
  std::string mode() const override { return "http"; }

  /// Parses one chat-completions response body. Exposed for tests.
  static Generation parse_response(const nlohmann::json& body);
  static nlohmann::json build_request(const GenerationRequest& req);

 private:
  BackendConfig cfg_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string bearer_;
  std::counting_semaphore<> in_flight_;
};

class RecordedBackend : public Backend {
 public:
  explicit RecordedBackend(const std::filesystem::path& transcript);
  /// Throws CacheMissError carrying the request digest when the request was never recorded.
  Generation generate(const GenerationRequest& req) override;
  std::string mode() const override { return "recorded"; }
  std::size_t size() const { return records_.size(); }

 private:
  std::unordered_map<std::string, Generation> records_;
};

class SyntheticBackend : public Backend {
 public:
  using Script = std::function<Generation(const GenerationRequest&)>;

  explicit SyntheticBackend(Script script);
  Generation generate(const GenerationRequest& req) override;
  std::string mode() const override { return "synthetic"; }

  /// Rule file: {"rules": [{"contains": str, "tokens": [...], "entropies": [...]}...],
  /// "default": {"tokens": [...], "entropies": [...]}}. First matching rule wins.
  /// A rule may give {"text": str, "entropy": x} instead of tokens and entropies.
  static std::shared_ptr<SyntheticBackend> from_script_file(const std::filesystem::path& path);

 private:
  Script script_;
};

/// A distribution whose top entry is `chosen` and whose entropy is `target` nats.
TokenDistribution distribution_with_entropy(const std::string& chosen, double target);

/// Generation emitting `tokens` with per-step entropies `entropies` (same length).
Generation scripted_generation(const std::vector<std::string>& tokens, const std::vector<double>& entropies);

/// Same, splitting `text` on spaces (spaces stay attached to the following token).
Generation scripted_generation(const std::string& text, double entropy);

// --------------------------------------------------------------------------

/// Append-only transcript writer. Thread safe.
class TranscriptWriter {
 public:
  explicit TranscriptWriter(std::filesystem::path path);
  void append(const GenerationRequest& req, const Generation& gen);

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

/// Backend decorator that records every successful call.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::shared_ptr<TranscriptWriter> writer);
  Generation generate(const GenerationRequest& req) override;
  std::string mode() const override { return inner_->mode(); }

 private:
  std::shared_ptr<Backend> inner_;
  std::shared_ptr<TranscriptWriter> writer_;
};

/// Runs every request against `backend` and appends the results to `transcript`.
std::vector<Generation> record_transcript(Backend& backend, const std::vector<GenerationRequest>& requests,
                                          const std::filesystem::path& transcript);

}  // namespace dualsys
