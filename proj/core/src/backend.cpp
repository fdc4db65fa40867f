#include "opindist/backend.hpp"

#include <cmath>

#include <json.hpp>

#include "opindist/errors.hpp"
#include "sha256.hpp"

namespace opindist {

using ordered_json = nlohmann::ordered_json;

void CompletionRequest::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be finite and >= 0");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw ConfigError("top_p must lie in (0, 1]");
  }
  if (max_tokens < 1) {
    throw ConfigError("max_tokens must be >= 1");
  }
  if (logprobs_k && (*logprobs_k < 1 || *logprobs_k > kMaxLogprobsK)) {
    throw ConfigError("logprobs_k must lie in [1, " + std::to_string(kMaxLogprobsK) + "]");
  }
  if (messages.empty()) {
    throw ConfigError("request has no messages");
  }
}

std::string RequestTag::str() const { return instance_id + "#" + method + "#" + std::to_string(iteration); }

RequestTag RequestTag::parse(std::string_view tag) {
  const auto last = tag.rfind('#');
  if (last == std::string_view::npos || last == 0) {
    throw Error("malformed request tag '" + std::string(tag) + "'");
  }
  const auto middle = tag.rfind('#', last - 1);
  if (middle == std::string_view::npos) {
    throw Error("malformed request tag '" + std::string(tag) + "'");
  }
  RequestTag out;
  out.instance_id = std::string(tag.substr(0, middle));
  out.method = std::string(tag.substr(middle + 1, last - middle - 1));
  try {
    out.iteration = std::stoi(std::string(tag.substr(last + 1)));
  } catch (const std::exception&) {
    throw Error("malformed request tag '" + std::string(tag) + "'");
  }
  return out;
}

namespace {

ordered_json request_to_json(const CompletionRequest& r) {
  ordered_json messages = ordered_json::array();
  for (const auto& m : r.messages) {
    messages.push_back(ordered_json{{"role", m.role}, {"content", m.content}});
  }
  return ordered_json{
      {"model_id", r.model_id},
      {"messages", std::move(messages)},
      {"temperature", r.temperature},
      {"top_p", r.top_p},
      {"max_tokens", r.max_tokens},
      {"logprobs_k", r.logprobs_k ? ordered_json(*r.logprobs_k) : ordered_json(nullptr)},
      {"request_tag", r.request_tag},
  };
}

CompletionRequest request_from_json(const ordered_json& j) {
  CompletionRequest r;
  r.model_id = j.at("model_id").get<std::string>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
  }
  r.temperature = j.at("temperature").get<double>();
  r.top_p = j.at("top_p").get<double>();
  r.max_tokens = j.at("max_tokens").get<int>();
  if (!j.at("logprobs_k").is_null()) {
    r.logprobs_k = j.at("logprobs_k").get<int>();
  }
  r.request_tag = j.at("request_tag").get<std::string>();
  return r;
}

}  // namespace

std::string replay_key(const CompletionRequest& request) {
  // Positional array so the digest input never depends on object key order.
  ordered_json messages = ordered_json::array();
  for (const auto& m : request.messages) {
    messages.push_back(ordered_json::array({m.role, m.content}));
  }
  const ordered_json canonical = ordered_json::array({
      "opindist-replay-v1",
      request.model_id,
      std::move(messages),
      request.temperature,
      request.top_p,
      request.logprobs_k ? ordered_json(*request.logprobs_k) : ordered_json(nullptr),
      request.max_tokens,
      request.request_tag,
  });
  return detail::sha256_hex(canonical.dump());
}

std::string exchange_to_json_line(const CompletionExchange& e) {
  ordered_json candidates = nullptr;
  if (e.first_token_candidates) {
    candidates = ordered_json::array();
    for (const auto& c : *e.first_token_candidates) {
      candidates.push_back(ordered_json::array({c.token, c.logprob}));
    }
  }
  const ordered_json line{
      {"key", replay_key(e.request)},
      {"request", request_to_json(e.request)},
      {"text", e.text},
      {"candidates", std::move(candidates)},
      {"ts", e.recorded_at},
      {"latency_ms", e.latency_ms},
      {"fingerprint", e.provider_fingerprint ? ordered_json(*e.provider_fingerprint) : ordered_json(nullptr)},
  };
  return line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

CompletionExchange exchange_from_json_line(std::string_view line) {
  try {
    const auto j = ordered_json::parse(line);
    CompletionExchange e;
    e.request = request_from_json(j.at("request"));
    e.text = j.at("text").get<std::string>();
    if (const auto& c = j.at("candidates"); !c.is_null()) {
      std::vector<TokenLogprob> candidates;
      for (const auto& pair : c) {
        candidates.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
      }
      e.first_token_candidates = std::move(candidates);
    }
    e.recorded_at = j.value("ts", std::string{});
    e.latency_ms = j.value("latency_ms", std::int64_t{0});
    if (j.contains("fingerprint") && !j.at("fingerprint").is_null()) {
      e.provider_fingerprint = j.at("fingerprint").get<std::string>();
    }
    if (j.contains("key") && j.at("key").get<std::string>() != replay_key(e.request)) {
      throw Error("stored key does not match its request");
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("malformed exchange record: ") + ex.what());
  }
}

}  // namespace opindist
