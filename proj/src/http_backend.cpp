#include <httplib.h>

#include <cstdlib>
#include <thread>

#include <fmt/format.h>

#include "dualsys/errors.hpp"
#include "dualsys/model_client.hpp"

namespace dualsys {

using nlohmann::json;

namespace {

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

// Releases one in-flight slot on scope exit.
class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

}  // namespace

HttpBackend::HttpBackend(BackendConfig cfg) : cfg_(std::move(cfg)), in_flight_(cfg_.max_in_flight) {
  validate_config(cfg_);
  const auto scheme_end = cfg_.endpoint_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ConfigError(fmt::format("endpoint_url '{}' lacks a scheme (http:// or https://)", cfg_.endpoint_url));
  }
  const auto path_start = cfg_.endpoint_url.find('/', scheme_end + 3);
  scheme_host_port_ = cfg_.endpoint_url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : cfg_.endpoint_url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();

  if (!cfg_.auth_token_env_var.empty()) {
    const char* token = std::getenv(cfg_.auth_token_env_var.c_str());
    if (token == nullptr || *token == '\0') {
      throw ConfigError(fmt::format("environment variable {} (auth token for backend '{}') is not set",
                                    cfg_.auth_token_env_var, cfg_.name));
    }
    bearer_ = token;
  }
}

json HttpBackend::build_request(const GenerationRequest& req) {
  return json{{"model", req.model_tag},
              {"messages", json::array({json{{"role", "user"}, {"content", req.prompt}}})},
              {"max_tokens", req.max_tokens},
              {"temperature", req.temperature},
              {"logprobs", true},
              {"top_logprobs", req.top_logprobs},
              {"stream", false}};
}

Generation HttpBackend::parse_response(const json& body) {
  if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty()) {
    throw TransportError("chat completion response has no choices");
  }
  const auto& choice = body["choices"][0];
  const auto logprobs = choice.find("logprobs");
  if (logprobs == choice.end() || !logprobs->is_object() || !logprobs->contains("content") ||
      !(*logprobs)["content"].is_array()) {
    throw CapabilityError(
        "endpoint returned no token logprobs; enable logprobs/top_logprobs on the server "
        "(entropy arbitration needs per-token distributions)");
  }

  Generation gen;
  try {
    const auto& message = choice.at("message");
    if (message.contains("content") && message["content"].is_string()) gen.text = message["content"].get<std::string>();
    for (const auto& step : (*logprobs)["content"]) {
      const auto token = step.at("token").get<std::string>();
      const double chosen_lp = step.at("logprob").get<double>();
      std::vector<std::pair<std::string, double>> top;
      bool has_chosen = false;
      if (step.contains("top_logprobs") && step["top_logprobs"].is_array()) {
        for (const auto& alt : step["top_logprobs"]) {
          const auto t = alt.at("token").get<std::string>();
          has_chosen = has_chosen || t == token;
          // Servers report -9999 or -inf for underflowed candidates.
          const double lp = alt.at("logprob").is_number() ? alt["logprob"].get<double>() : -1e4;
          top.emplace_back(t, lp);
        }
      }
      if (!has_chosen) top.emplace_back(token, chosen_lp);
      gen.tokens.push_back(token);
      gen.steps.push_back(distribution_from_logprobs(top));
    }
    gen.finish_reason = choice.contains("finish_reason") && choice["finish_reason"].is_string()
                            ? parse_finish_reason(choice["finish_reason"].get<std::string>())
                            : FinishReason::stop;
  } catch (const json::exception& e) {
    throw TransportError(fmt::format("malformed chat completion response: {}", e.what()));
  }
  return gen;
}

Generation HttpBackend::generate(const GenerationRequest& req) {
  validate_request(req);
  const auto body = build_request(req).dump(-1, ' ', false, json::error_handler_t::replace);
  const auto path = path_prefix_ + "/chat/completions";

  SlotGuard slot(in_flight_);
  httplib::Client client(scheme_host_port_);
  const auto timeout_s = std::chrono::duration_cast<std::chrono::seconds>(cfg_.request_timeout).count();
  const auto timeout_us = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.request_timeout).count() % 1'000'000;
  client.set_connection_timeout(timeout_s, timeout_us);
  client.set_read_timeout(timeout_s, timeout_us);
  client.set_write_timeout(timeout_s, timeout_us);
  if (!bearer_.empty()) client.set_bearer_token_auth(bearer_);

  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(cfg_.retry_base_delay * (1 << (attempt - 1)));
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) {
      json parsed;
      try {
        parsed = json::parse(res->body);
      } catch (const json::parse_error& e) {
        throw TransportError(fmt::format("{}{}: response is not JSON: {}", scheme_host_port_, path, e.what()));
      }
      return parse_response(parsed);
    }
    last_error = fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 300));
    if (!retryable_status(res->status)) {
      throw TransportError(fmt::format("{}{} rejected the request ({})", scheme_host_port_, path, last_error));
    }
  }
  throw TransportError(fmt::format("{}{} failed after {} attempts: {}", scheme_host_port_, path,
                                   cfg_.max_retries + 1, last_error));
}

}  // namespace dualsys
