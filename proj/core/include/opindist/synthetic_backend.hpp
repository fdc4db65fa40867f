#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opindist/backend.hpp"

namespace opindist {

/// Base distributions the synthetic model samples from, per instance id.
struct SyntheticProfile {
  // Reply text per class; class order matches the vocabulary.
  std::vector<std::string> surface_forms{"no", "yes"};
  std::map<std::string, std::vector<double>> per_instance;
  // Used for ids absent from per_instance; throws when unset.
  std::optional<std::vector<double>> fallback;

  const std::vector<double>& base_for(const std::string& instance_id) const;
};

/// Off-vocabulary token appended to every candidate list.
inline constexpr const char* kSyntheticDistractor = "As";
inline constexpr double kSyntheticDistractorLogprob = -8.0;

/// Temperature applied to a base distribution: q_c proportional to
/// p_c^(1/T'), with T' = max(T, 1e-6). Zero-mass classes stay at zero.
std::vector<double> tempered_distribution(std::span<const double> base, double temperature);

/// Deterministic stand-in for a chat model. Each request draws one class
/// from the tempered base distribution of its instance, using a uniform
/// derived from (seed, request_tag) alone. With logprobs requested it
/// returns ln q_c for every positive-mass class plus a distractor at -8.
/// Requests tagged with method "direct" get a "label: pct%" reply of q.
class SyntheticBackend final : public CompletionBackend {
 public:
  SyntheticBackend(SyntheticProfile profile, std::uint64_t seed);

  CompletionExchange complete(const CompletionRequest& request) override;
  std::string describe() const override;

  const SyntheticProfile& profile() const noexcept { return profile_; }

 private:
  SyntheticProfile profile_;
  std::uint64_t seed_;
};

}  // namespace opindist
