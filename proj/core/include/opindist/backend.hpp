#pragma once

// Transport-neutral completion types and the backend interface shared by
// the HTTP client, the replay store and the synthetic model.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace opindist {

struct ChatMessage {
  std::string role;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

/// Provider ceiling on top-logprobs candidates per token.
inline constexpr int kMaxLogprobsK = 20;

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 5;
  std::optional<int> logprobs_k;
  std::string model_id;
  // Instance id, method and iteration index; see RequestTag.
  std::string request_tag;

  /// Throws ConfigError when a field is outside its documented range.
  void validate() const;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;

  friend bool operator==(const TokenLogprob&, const TokenLogprob&) = default;
};

struct CompletionExchange {
  CompletionRequest request;
  std::string text;
  // Top candidates for the first generated token, sorted by logprob
  // descending. Absent when the provider returned no log-probabilities.
  std::optional<std::vector<TokenLogprob>> first_token_candidates;
  std::int64_t latency_ms = 0;
  std::optional<std::string> provider_fingerprint;
  // UTC timestamp written by the record store; empty when never recorded.
  std::string recorded_at;
};

/// Structured form of CompletionRequest::request_tag: "<id>#<method>#<iteration>".
/// Instance ids may themselves contain '#'; parsing splits on the last two.
struct RequestTag {
  std::string instance_id;
  std::string method;
  int iteration = 0;

  std::string str() const;
  static RequestTag parse(std::string_view tag);
};

/// Hex SHA-256 over every request field that influences the reply.
std::string replay_key(const CompletionRequest& request);

/// One JSON line: {key, request, text, candidates, ts, latency_ms, fingerprint}.
std::string exchange_to_json_line(const CompletionExchange& exchange);
CompletionExchange exchange_from_json_line(std::string_view line);

class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;

  virtual CompletionExchange complete(const CompletionRequest& request) = 0;

  /// Short human-readable identity, recorded in run manifests.
  virtual std::string describe() const = 0;
};

}  // namespace opindist
