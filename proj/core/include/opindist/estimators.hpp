#pragma once

// Opinion-distribution estimators over a chat model:
//   direct  - ask the model for the distribution and parse its reply
//   mce     - relative frequency of valid answers over M sampled replies
//   lpe     - first-token top-k probabilities, normalized over class-matching
//             candidates and averaged over the valid iterations

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "opindist/backend.hpp"
#include "opindist/core.hpp"

namespace opindist {

enum class Method { direct, mce, lpe };

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view text);

inline constexpr double kTemperatureHigh = 2.0;
inline constexpr double kTemperatureMedium = 0.8;
// Stand-in for zero; some endpoints reject exactly 0 together with logprobs.
inline constexpr double kTemperatureNearZero = 1e-6;

struct EstimatorConfig {
  Method method = Method::mce;
  int iterations = 10;
  double temperature = 1.0;
  double top_p = 1.0;
  int top_k_logprobs = 10;
  // Folded into request tags so differently seeded runs get distinct replay keys.
  std::optional<std::uint64_t> seed;
  int max_tokens = 5;
  int direct_max_tokens = 48;
  // Direct replies averaged per instance; one call unless raised.
  int direct_samples = 1;

  void validate() const;

  /// Column label, e.g. "MC T=2", "LP T=0.8", "MC T=1e-06", "Direct".
  std::string label() const;
};

struct EstimateResult {
  OpinionDistribution dist;
  int iterations = 0;        // M, requests issued
  int valid_iterations = 0;  // M*, requests that matched a class
  // Per-class match counts (mce only); dist[c] == class_counts[c] / M*.
  std::vector<std::size_t> class_counts;
  std::vector<std::string> invalid_samples;
  // Replay keys of every exchange that contributed, in iteration order.
  std::vector<std::string> exchange_keys;
};

struct EstimationContext {
  CompletionBackend& backend;
  const ClassVocabulary& vocab;
  std::string model_id;
};

/// Parses "label: value" pairs from a direct reply. Values may be percents
/// ("70%") or unit-interval numbers; bare numbers summing above 1.5 are read
/// as percents. Every class must appear exactly once and the total must lie
/// in [0.98, 1.02], after which the values are renormalized.
/// Throws DirectParseFailure otherwise.
OpinionDistribution parse_direct_distribution(std::string_view text, const ClassVocabulary& vocab);

struct ResponseTally {
  std::vector<std::size_t> class_counts;
  int valid = 0;
  std::vector<std::string> invalid;
};

/// Indicator counts over sampled replies: the MCE numerators and M*.
ResponseTally tally_responses(std::span<const std::string> responses, const ClassVocabulary& vocab);

/// One LPE iteration: the top `k` candidates are mapped to classes and
/// exp(logprob) is summed per class, then normalized across classes.
/// nullopt when no candidate matches any class.
std::optional<std::vector<double>> lp_iteration_distribution(std::span<const TokenLogprob> candidates,
                                                             const ClassVocabulary& vocab, int k);

EstimateResult direct_estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                               const EstimatorConfig& config, const EstimationContext& ctx);

/// Throws AllResponsesInvalid when M* == 0.
EstimateResult mc_estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                           const EstimatorConfig& config, const EstimationContext& ctx);

/// Throws CapabilityMissing when an exchange carries no log-probabilities
/// and AllResponsesInvalid when no iteration has a matching candidate.
EstimateResult lp_estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                           const EstimatorConfig& config, const EstimationContext& ctx);

/// Dispatches on config.method.
EstimateResult estimate(const AnnotatedInstance& instance, std::span<const ChatMessage> prompt,
                        const EstimatorConfig& config, const EstimationContext& ctx);

}  // namespace opindist
