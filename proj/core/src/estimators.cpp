#include "opindist/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <regex>

#include "opindist/errors.hpp"

namespace opindist {

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::direct: return "direct";
    case Method::mce: return "mce";
    case Method::lpe: return "lpe";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "direct") return Method::direct;
  if (text == "mce" || text == "mc") return Method::mce;
  if (text == "lpe" || text == "lp") return Method::lpe;
  throw ConfigError("unknown estimation method '" + std::string(text) + "'");
}

void EstimatorConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
  if (top_k_logprobs < 1 || top_k_logprobs > kMaxLogprobsK) {
    throw ConfigError("top_k_logprobs must lie in [1, " + std::to_string(kMaxLogprobsK) + "]");
  }
  if (max_tokens < 1 || direct_max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
  if (direct_samples < 1) throw ConfigError("direct_samples must be >= 1");
}

std::string EstimatorConfig::label() const {
  if (method == Method::direct) {
    return "Direct";
  }
  char t[32];
  std::snprintf(t, sizeof t, "%g", temperature);
  return std::string(method == Method::mce ? "MC" : "LP") + " T=" + t;
}

namespace {

std::string tag_method(const EstimatorConfig& config) {
  std::string m(to_string(config.method));
  if (config.seed) m += ".s" + std::to_string(*config.seed);
  return m;
}

CompletionRequest make_request(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                               const EstimatorConfig& config, const EstimationContext& ctx, int iteration) {
  CompletionRequest r;
  r.messages.assign(prompt.begin(), prompt.end());
  r.temperature = config.temperature;
  r.top_p = config.top_p;
  r.max_tokens = config.method == Method::direct ? config.direct_max_tokens : config.max_tokens;
  if (config.method == Method::lpe) r.logprobs_k = config.top_k_logprobs;
  r.model_id = ctx.model_id;
  r.request_tag = RequestTag{instance.id, tag_method(config), iteration}.str();
  return r;
}

void require_method(const EstimatorConfig& config, Method expected) {
  config.validate();
  if (config.method != expected) {
    throw ConfigError("estimator invoked with method " + std::string(to_string(config.method)));
  }
}

}  // namespace

OpinionDistribution parse_direct_distribution(std::string_view text, const ClassVocabulary& vocab) {
  static const std::regex pair_re(R"(([A-Za-z][A-Za-z_'-]*)\s*[:=]?\s*\(?\s*(\d+(?:\.\d+)?|\.\d+)\s*(%?))");
  const std::string raw(text);

  struct Pair {
    std::size_t cls;
    double value;
    bool percent;
  };
  std::vector<Pair> pairs;
  for (auto it = std::sregex_iterator(raw.begin(), raw.end(), pair_re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    if (auto cls = vocab.classify(m[1].str())) {
      pairs.push_back({*cls, std::stod(m[2].str()), m[3].length() > 0});
    }
  }
  if (pairs.empty()) {
    throw DirectParseFailure(raw, "no label/value pairs");
  }

  bool any_percent = false;
  double bare_sum = 0.0;
  for (const auto& p : pairs) {
    any_percent = any_percent || p.percent;
    if (!p.percent) bare_sum += p.value;
  }
  const bool bare_as_percent = !any_percent && bare_sum > 1.5;

  std::vector<double> probs(vocab.class_count(), 0.0);
  std::vector<bool> seen(vocab.class_count(), false);
  for (const auto& p : pairs) {
    if (seen[p.cls]) {
      throw DirectParseFailure(raw, "class listed twice");
    }
    seen[p.cls] = true;
    const double v = (p.percent || bare_as_percent) ? p.value / 100.0 : p.value;
    if (v < 0.0 || v > 1.0) {
      throw DirectParseFailure(raw, "value outside [0, 1]");
    }
    probs[p.cls] = v;
  }
  for (bool s : seen) {
    if (!s) throw DirectParseFailure(raw, "missing class");
  }
  double sum = 0.0;
  for (double v : probs) sum += v;
  constexpr double slack = 1e-9;
  if (sum < 0.98 - slack || sum > 1.02 + slack) {
    throw DirectParseFailure(raw, "values sum to " + std::to_string(sum));
  }
  for (double& v : probs) v /= sum;
  return OpinionDistribution(std::move(probs));
}

ResponseTally tally_responses(std::span<const std::string> responses, const ClassVocabulary& vocab) {
  ResponseTally tally;
  tally.class_counts.assign(vocab.class_count(), 0);
  for (const auto& r : responses) {
    if (auto c = vocab.classify(r)) {
      ++tally.class_counts[*c];
      ++tally.valid;
    } else {
      tally.invalid.push_back(r);
    }
  }
  return tally;
}

std::optional<std::vector<double>> lp_iteration_distribution(std::span<const TokenLogprob> candidates,
                                                             const ClassVocabulary& vocab, int k) {
  std::vector<double> mass(vocab.class_count(), 0.0);
  double total = 0.0;
  const auto limit = std::min(candidates.size(), static_cast<std::size_t>(std::max(k, 0)));
  for (std::size_t i = 0; i < limit; ++i) {
    if (auto c = vocab.classify(candidates[i].token)) {
      const double p = std::exp(candidates[i].logprob);
      mass[*c] += p;
      total += p;
    }
  }
  if (!(total > 0.0)) {
    return std::nullopt;
  }
  for (double& m : mass) m /= total;
  return mass;
}

EstimateResult direct_estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                               const EstimatorConfig& config, const EstimationContext& ctx) {
  require_method(config, Method::direct);
  std::vector<double> sum(ctx.vocab.class_count(), 0.0);
  EstimateResult result{OpinionDistribution::uniform(ctx.vocab.class_count()), 0, 0, {}, {}, {}};
  std::string last_raw;
  std::string last_reason;
  for (int s = 0; s < config.direct_samples; ++s) {
    const auto exchange = ctx.backend.complete(make_request(instance, prompt, config, ctx, s));
    result.exchange_keys.push_back(replay_key(exchange.request));
    ++result.iterations;
    try {
      const auto dist = parse_direct_distribution(exchange.text, ctx.vocab);
      for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += dist[c];
      ++result.valid_iterations;
    } catch (const DirectParseFailure& e) {
      last_raw = e.raw();
      last_reason = e.reason();
      result.invalid_samples.push_back(exchange.text);
    }
  }
  if (result.valid_iterations == 0) {
    throw DirectParseFailure(last_raw, last_reason);
  }
  for (double& v : sum) v /= static_cast<double>(result.valid_iterations);
  result.dist = OpinionDistribution(std::move(sum));
  return result;
}

EstimateResult mc_estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                           const EstimatorConfig& config, const EstimationContext& ctx) {
  require_method(config, Method::mce);
  std::vector<std::string> responses;
  responses.reserve(static_cast<std::size_t>(config.iterations));
  EstimateResult result{OpinionDistribution::uniform(ctx.vocab.class_count()), 0, 0, {}, {}, {}};
  for (int m = 0; m < config.iterations; ++m) {
    auto exchange = ctx.backend.complete(make_request(instance, prompt, config, ctx, m));
    result.exchange_keys.push_back(replay_key(exchange.request));
    responses.push_back(std::move(exchange.text));
  }
  auto tally = tally_responses(responses, ctx.vocab);
  if (tally.valid == 0) {
    throw AllResponsesInvalid(instance.id, config.iterations);
  }
  std::vector<double> probs(tally.class_counts.size());
  for (std::size_t c = 0; c < probs.size(); ++c) {
    probs[c] = static_cast<double>(tally.class_counts[c]) / static_cast<double>(tally.valid);
  }
  result.dist = OpinionDistribution(std::move(probs));
  result.iterations = config.iterations;
  result.valid_iterations = tally.valid;
  result.class_counts = std::move(tally.class_counts);
  result.invalid_samples = std::move(tally.invalid);
  return result;
}

EstimateResult lp_estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                           const EstimatorConfig& config, const EstimationContext& ctx) {
  require_method(config, Method::lpe);
  std::vector<double> sum(ctx.vocab.class_count(), 0.0);
  EstimateResult result{OpinionDistribution::uniform(ctx.vocab.class_count()), 0, 0, {}, {}, {}};
  for (int m = 0; m < config.iterations; ++m) {
    const auto exchange = ctx.backend.complete(make_request(instance, prompt, config, ctx, m));
    result.exchange_keys.push_back(replay_key(exchange.request));
    if (!exchange.first_token_candidates) {
      throw CapabilityMissing("backend returned no log-probabilities for " + exchange.request.request_tag);
    }
    if (auto dist = lp_iteration_distribution(*exchange.first_token_candidates, ctx.vocab, config.top_k_logprobs)) {
      for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += (*dist)[c];
      ++result.valid_iterations;
    } else {
      result.invalid_samples.push_back(exchange.text);
    }
  }
  result.iterations = config.iterations;
  if (result.valid_iterations == 0) {
    throw AllResponsesInvalid(instance.id, config.iterations);
  }
  for (double& v : sum) v /= static_cast<double>(result.valid_iterations);
  result.dist = OpinionDistribution(std::move(sum));
  return result;
}

EstimateResult estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                        const EstimatorConfig& config, const EstimationContext& ctx) {
  switch (config.method) {
    case Method::direct: return direct_estimate(instance, prompt, config, ctx);
    case Method::mce: return mc_estimate(instance, prompt, config, ctx);
    case Method::lpe: return lp_estimate(instance, prompt, config, ctx);
  }
  throw ConfigError("unknown estimation method");
}

}  // namespace opindist
