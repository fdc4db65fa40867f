#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <string_view>

#include "opindist/backend.hpp"
#include "opindist/rate_limiter.hpp"

namespace opindist {

inline constexpr const char* kApiKeyEnv = "OPINDIST_API_KEY";

struct HttpBackendConfig {
  // scheme://host[:port], e.g. https://api.openai.com or http://127.0.0.1:8080
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string api_key;
  std::uint32_t requests_per_minute = 60;
  BackoffPolicy backoff;
  std::chrono::seconds timeout{60};
  std::uint64_t jitter_seed = 0x6f70696e;
};

/// Reads the API key from OPINDIST_API_KEY; throws AuthFailure when unset.
std::string api_key_from_env();

/// Chat-completions request body for an OpenAI-compatible endpoint.
std::string build_chat_request_body(const CompletionRequest& request);

/// Parses a chat-completions response body. Throws MalformedProviderResponse
/// when the reply lacks choices[0].message. Candidates are left empty when
/// the provider did not return log-probabilities.
CompletionExchange parse_chat_completion(const CompletionRequest& request, std::string_view body);

/// Client for OpenAI-compatible chat-completions endpoints. Retries HTTP 429,
/// 5xx and transport errors with exponential backoff and jitter; requests
/// are paced by a shared RateLimiter. Safe for concurrent callers.
class HttpBackend final : public CompletionBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config, Clock& clock = SteadyClock::instance());

  CompletionExchange complete(const CompletionRequest& request) override;
  std::string describe() const override;

  /// Number of HTTP attempts made so far, including retries.
  std::uint64_t attempts() const noexcept { return attempts_.load(); }

 private:
  HttpBackendConfig config_;
  Clock& clock_;
  RateLimiter limiter_;
  std::atomic<std::uint64_t> attempts_{0};
  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
};

}  // namespace opindist
