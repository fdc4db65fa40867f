#include "opindist/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

#include "opindist/errors.hpp"

namespace opindist {

OpinionDistribution::OpinionDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    throw InvalidDistribution("an opinion distribution needs at least two classes");
  }
  double sum = 0.0;
  for (double p : probs_) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kSumTolerance) {
      throw InvalidDistribution("probability outside [0, 1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InvalidDistribution("probabilities sum to " + std::to_string(sum));
  }
}

OpinionDistribution OpinionDistribution::from_votes(std::span<const int> votes, std::size_t class_count) {
  if (votes.empty()) {
    throw EmptyVotes();
  }
  std::vector<std::size_t> counts(class_count, 0);
  for (int v : votes) {
    if (v < 0 || static_cast<std::size_t>(v) >= class_count) {
      throw InvalidDistribution("vote " + std::to_string(v) + " outside class range");
    }
    ++counts[static_cast<std::size_t>(v)];
  }
  // count / n is the correctly rounded value of the exact rational.
  const auto n = static_cast<double>(votes.size());
  std::vector<double> probs(class_count);
  for (std::size_t c = 0; c < class_count; ++c) {
    probs[c] = static_cast<double>(counts[c]) / n;
  }
  return OpinionDistribution(std::move(probs));
}

OpinionDistribution OpinionDistribution::uniform(std::size_t class_count) {
  return OpinionDistribution(std::vector<double>(class_count, 1.0 / static_cast<double>(class_count)));
}

std::size_t OpinionDistribution::argmax() const noexcept {
  return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double OpinionDistribution::max() const noexcept { return probs_[argmax()]; }

double entropy(const OpinionDistribution& dist) {
  double h = 0.0;
  for (double p : dist.probs()) {
    if (p > 0.0) {
      h -= p * std::log(p);
    }
  }
  return h;
}

namespace {

bool is_space(char ch) {
  return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
}

bool is_trailing_punct(char ch) { return ch == '.' || ch == ',' || ch == '!' || ch == '?'; }

}  // namespace

std::string normalize_response(std::string_view raw) {
  std::size_t begin = 0;
  while (begin < raw.size() && is_space(raw[begin])) {
    ++begin;
  }
  std::size_t end = raw.size();
  while (end > begin && (is_space(raw[end - 1]) || is_trailing_punct(raw[end - 1]))) {
    --end;
  }
  std::string out(raw.substr(begin, end - begin));
  for (char& ch : out) {
    if (ch >= 'A' && ch <= 'Z') {
      ch = static_cast<char>(ch - 'A' + 'a');
    }
  }
  return out;
}

ClassVocabulary::ClassVocabulary(std::vector<std::vector<std::string>> forms_per_class)
    : forms_(std::move(forms_per_class)) {
  if (forms_.size() < 2) {
    throw InvalidDistribution("a class vocabulary needs at least two classes");
  }
  std::set<std::string> seen;
  for (const auto& forms : forms_) {
    if (forms.empty()) {
      throw Error("class vocabulary has a class without surface forms");
    }
    for (const auto& form : forms) {
      if (form.empty() || normalize_response(form) != form) {
        throw Error("surface form '" + form + "' is not normalized");
      }
      if (!seen.insert(form).second) {
        throw Error("surface form '" + form + "' assigned to more than one class");
      }
    }
  }
}

ClassVocabulary ClassVocabulary::yes_no() { return ClassVocabulary({{"no"}, {"yes"}}); }

std::optional<std::size_t> ClassVocabulary::classify(std::string_view raw) const {
  const std::string key = normalize_response(raw);
  if (key.empty()) {
    return std::nullopt;
  }
  for (std::size_t c = 0; c < forms_.size(); ++c) {
    if (std::find(forms_[c].begin(), forms_[c].end(), key) != forms_[c].end()) {
      return c;
    }
  }
  return std::nullopt;
}

AnnotatedInstance make_instance(std::string id, std::string text, std::vector<int> votes,
                                std::size_t class_count, std::string dataset) {
  auto dist = OpinionDistribution::from_votes(votes, class_count);
  return AnnotatedInstance{std::move(id), std::move(text), std::move(votes), std::move(dist),
                           std::move(dataset)};
}

}  // namespace opindist
