#include "opindist/synthetic_backend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "opindist/errors.hpp"
#include "sha256.hpp"

namespace opindist {

const std::vector<double>& SyntheticProfile::base_for(const std::string& instance_id) const {
  if (auto it = per_instance.find(instance_id); it != per_instance.end()) {
    return it->second;
  }
  if (fallback) {
    return *fallback;
  }
  throw ConfigError("synthetic profile has no distribution for instance " + instance_id);
}

std::vector<double> tempered_distribution(std::span<const double> base, double temperature) {
  const double t = std::max(temperature, 1e-6);
  std::vector<double> logits(base.size(), -std::numeric_limits<double>::infinity());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < base.size(); ++c) {
    if (base[c] > 0.0) {
      logits[c] = std::log(base[c]) / t;
      top = std::max(top, logits[c]);
    }
  }
  if (!std::isfinite(top)) {
    throw ConfigError("synthetic base distribution has no positive mass");
  }
  std::vector<double> q(base.size(), 0.0);
  double sum = 0.0;
  for (std::size_t c = 0; c < base.size(); ++c) {
    if (std::isfinite(logits[c])) {
      q[c] = std::exp(logits[c] - top);
      sum += q[c];
    }
  }
  for (double& v : q) v /= sum;
  return q;
}

SyntheticBackend::SyntheticBackend(SyntheticProfile profile, std::uint64_t seed)
    : profile_(std::move(profile)), seed_(seed) {
  if (profile_.surface_forms.size() < 2) {
    throw ConfigError("synthetic profile needs at least two surface forms");
  }
}

std::string SyntheticBackend::describe() const { return "synthetic(seed=" + std::to_string(seed_) + ")"; }

CompletionExchange SyntheticBackend::complete(const CompletionRequest& request) {
  request.validate();
  const RequestTag tag = RequestTag::parse(request.request_tag);
  const auto& base = profile_.base_for(tag.instance_id);
  if (base.size() != profile_.surface_forms.size()) {
    throw ConfigError("synthetic base distribution size does not match surface forms");
  }
  const auto q = tempered_distribution(base, request.temperature);

  CompletionExchange exchange;
  exchange.request = request;
  exchange.provider_fingerprint = "synthetic-v1";

  if (tag.method.starts_with("direct")) {
    std::string text;
    for (std::size_t c = 0; c < q.size(); ++c) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%s%s: %.2f%%", c == 0 ? "" : ", ", profile_.surface_forms[c].c_str(),
                    q[c] * 100.0);
      text += buf;
    }
    exchange.text = std::move(text);
    return exchange;
  }

  const std::uint64_t h =
      detail::sha256_u64("synthetic-v1\x1f" + std::to_string(seed_) + "\x1f" + request.request_tag);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  std::size_t chosen = q.size() - 1;
  double cumulative = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c) {
    cumulative += q[c];
    if (q[c] > 0.0 && u < cumulative) {
      chosen = c;
      break;
    }
  }
  while (q[chosen] == 0.0 && chosen > 0) --chosen;
  exchange.text = profile_.surface_forms[chosen];

  if (request.logprobs_k) {
    std::vector<TokenLogprob> candidates;
    for (std::size_t c = 0; c < q.size(); ++c) {
      if (q[c] > 0.0) candidates.push_back({profile_.surface_forms[c], std::log(q[c])});
    }
    candidates.push_back({kSyntheticDistractor, kSyntheticDistractorLogprob});
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const TokenLogprob& a, const TokenLogprob& b) { return a.logprob > b.logprob; });
    if (candidates.size() > static_cast<std::size_t>(*request.logprobs_k)) {
      candidates.resize(static_cast<std::size_t>(*request.logprobs_k));
    }
    exchange.first_token_candidates = std::move(candidates);
  }
  return exchange;
}

}  // namespace opindist
