#pragma once

// Opinion distributions over a fixed set of answer classes, vote
// aggregation, entropy and the mapping from free-text model replies to
// class indices.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace opindist {

/// A point on the probability simplex over C >= 2 classes.
///
/// Used both for human soft labels and for model estimates. Construction
/// validates the simplex constraints; the object is immutable afterwards.
class OpinionDistribution {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit OpinionDistribution(std::vector<double> probs);

  /// Relative vote frequencies. Throws EmptyVotes on an empty list and
  /// InvalidDistribution when a vote is outside [0, class_count).
  static OpinionDistribution from_votes(std::span<const int> votes, std::size_t class_count);

  static OpinionDistribution uniform(std::size_t class_count);

  std::size_t class_count() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t c) const { return probs_.at(c); }

  /// Index of the largest mass; ties go to the lowest class index.
  std::size_t argmax() const noexcept;
  double max() const noexcept;

  friend bool operator==(const OpinionDistribution&, const OpinionDistribution&) = default;

 private:
  std::vector<double> probs_;
};

/// Shannon entropy in nats. Zero-mass classes contribute nothing.
double entropy(const OpinionDistribution& dist);

/// Identifier recorded in run manifests for the normalization below.
inline constexpr std::string_view kNormalizationPolicy = "lower+trim+strip-trailing[.,!?]/v1";

/// Lowercases ASCII letters, trims surrounding whitespace and strips
/// trailing '.', ',', '!' and '?'. Idempotent.
std::string normalize_response(std::string_view raw);

/// Accepted surface forms per class. Forms are stored normalized and no
/// form may belong to two classes.
class ClassVocabulary {
 public:
  explicit ClassVocabulary(std::vector<std::vector<std::string>> forms_per_class);

  /// The binary scheme used throughout: no = 0, yes = 1.
  static ClassVocabulary yes_no();

  std::size_t class_count() const noexcept { return forms_.size(); }
  const std::vector<std::string>& forms(std::size_t c) const { return forms_.at(c); }
  std::string_view normalization_policy() const noexcept { return kNormalizationPolicy; }

  /// Class whose forms contain normalize_response(raw), or nullopt.
  std::optional<std::size_t> classify(std::string_view raw) const;

 private:
  std::vector<std::vector<std::string>> forms_;
};

inline std::optional<std::size_t> classify_response(std::string_view raw, const ClassVocabulary& vocab) {
  return vocab.classify(raw);
}

/// Class indices of the binary scheme.
inline constexpr std::size_t kClassNo = 0;
inline constexpr std::size_t kClassYes = 1;

struct AnnotatedInstance {
  std::string id;
  std::string text;
  std::vector<int> votes;
  OpinionDistribution human_dist;
  std::string dataset;

  std::size_t annotator_count() const noexcept { return votes.size(); }
};

/// Builds an instance whose soft label is derived from `votes`.
AnnotatedInstance make_instance(std::string id, std::string text, std::vector<int> votes,
                                std::size_t class_count, std::string dataset);

}  // namespace opindist
