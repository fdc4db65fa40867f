#include "opindist/http_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "opindist/errors.hpp"

namespace opindist {

using json = nlohmann::json;

std::string api_key_from_env() {
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0') {
    throw AuthFailure(std::string(kApiKeyEnv) + " is not set");
  }
  return key;
}

std::string build_chat_request_body(const CompletionRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  json body{
      {"model", request.model_id},
      {"messages", std::move(messages)},
      {"temperature", request.temperature},
      {"top_p", request.top_p},
      {"max_tokens", request.max_tokens},
      {"n", 1},
  };
  if (request.logprobs_k) {
    body["logprobs"] = true;
    body["top_logprobs"] = *request.logprobs_k;
  }
  return body.dump();
}

CompletionExchange parse_chat_completion(const CompletionRequest& request, std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw MalformedProviderResponse(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw MalformedProviderResponse("response has no choices");
  }
  const auto& choice = j["choices"][0];
  if (!choice.contains("message") || !choice["message"].is_object()) {
    throw MalformedProviderResponse("choice has no message");
  }
  CompletionExchange exchange;
  exchange.request = request;
  if (const auto& content = choice["message"].value("content", json()); content.is_string()) {
    exchange.text = content.get<std::string>();
  }
  if (j.contains("system_fingerprint") && j["system_fingerprint"].is_string()) {
    exchange.provider_fingerprint = j["system_fingerprint"].get<std::string>();
  }

  const json* tokens = nullptr;
  if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
    const auto& lp = choice["logprobs"];
    if (lp.contains("content") && lp["content"].is_array() && !lp["content"].empty()) {
      tokens = &lp["content"];
    }
  }
  if (request.logprobs_k && tokens != nullptr) {
    const auto& first = (*tokens)[0];
    if (!first.contains("top_logprobs") || !first["top_logprobs"].is_array()) {
      throw MalformedProviderResponse("first token has no top_logprobs");
    }
    std::vector<TokenLogprob> candidates;
    for (const auto& c : first["top_logprobs"]) {
      if (!c.contains("token") || !c.contains("logprob") || !c["logprob"].is_number()) {
        throw MalformedProviderResponse("top_logprobs entry lacks token or logprob");
      }
      const double lp = c["logprob"].get<double>();
      if (!std::isfinite(lp)) continue;
      candidates.push_back({c["token"].get<std::string>(), std::min(lp, 0.0)});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const TokenLogprob& a, const TokenLogprob& b) { return a.logprob > b.logprob; });
    if (candidates.size() > static_cast<std::size_t>(*request.logprobs_k)) {
      candidates.resize(static_cast<std::size_t>(*request.logprobs_k));
    }
    exchange.first_token_candidates = std::move(candidates);
  }
  return exchange;
}

HttpBackend::HttpBackend(HttpBackendConfig config, Clock& clock)
    : config_(std::move(config)),
      clock_(clock),
      limiter_(config_.requests_per_minute, clock),
      rng_(config_.jitter_seed) {
  if (config_.api_key.empty()) {
    throw AuthFailure("HTTP backend needs an API key");
  }
  if (config_.backoff.max_attempts < 1) {
    throw ConfigError("backoff.max_attempts must be >= 1");
  }
}

std::string HttpBackend::describe() const { return "http(" + config_.base_url + config_.path + ")"; }

CompletionExchange HttpBackend::complete(const CompletionRequest& request) {
  request.validate();
  const std::string body = build_chat_request_body(request);
  const httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_write_timeout(config_.timeout);

  std::string last_failure;
  for (int attempt = 1; attempt <= config_.backoff.max_attempts; ++attempt) {
    if (attempt > 1) {
      std::chrono::milliseconds wait;
      {
        std::lock_guard lock(rng_mutex_);
        wait = config_.backoff.delay(attempt - 1, rng_);
      }
      clock_.sleep_for(wait);
    }
    limiter_.acquire();
    ++attempts_;
    const auto started = std::chrono::steady_clock::now();
    auto result = client.Post(config_.path, headers, body, "application/json");
    if (!result) {
      last_failure = "transport error: " + httplib::to_string(result.error());
      continue;
    }
    const int status = result->status;
    if (status == 200) {
      auto exchange = parse_chat_completion(request, result->body);
      exchange.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
      return exchange;
    }
    if (status == 401 || status == 403) {
      throw AuthFailure("provider rejected credentials (HTTP " + std::to_string(status) + ")");
    }
    if (status == 429 || status >= 500) {
      last_failure = "HTTP " + std::to_string(status);
      continue;
    }
    throw ProviderError("provider returned HTTP " + std::to_string(status) + ": " + result->body.substr(0, 200));
  }
  throw RetriesExhausted("gave up after " + std::to_string(config_.backoff.max_attempts) +
                         " attempts; last failure: " + last_failure);
}

}  // namespace opindist
