#pragma once

#include <stdexcept>
#include <string>

namespace opindist {

// Every failure surfaced by the library derives from Error so callers can
// catch the whole family in one place.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyVotes : public Error {
 public:
  EmptyVotes() : Error("vote list is empty") {}
};

class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(std::size_t lhs, std::size_t rhs)
      : Error("class count mismatch: " + std::to_string(lhs) + " vs " + std::to_string(rhs)) {}
};

class EmptyInput : public Error {
 public:
  explicit EmptyInput(const std::string& what) : Error("empty input: " + what) {}
};

class DirectParseFailure : public Error {
 public:
  DirectParseFailure(std::string raw, const std::string& reason)
      : Error("cannot parse direct distribution (" + reason + ")"), raw_(std::move(raw)), reason_(reason) {}

  const std::string& raw() const noexcept { return raw_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string raw_;
  std::string reason_;
};

// No sampled response (MCE) or no iteration's candidates (LPE) matched a class.
class AllResponsesInvalid : public Error {
 public:
  AllResponsesInvalid(const std::string& instance_id, int iterations)
      : Error("all " + std::to_string(iterations) + " responses invalid for instance " + instance_id) {}
};

class CapabilityMissing : public Error {
 public:
  using Error::Error;
};

class RetriesExhausted : public Error {
 public:
  using Error::Error;
};

class AuthFailure : public Error {
 public:
  using Error::Error;
};

class MalformedProviderResponse : public Error {
 public:
  using Error::Error;
};

// Non-retryable provider rejection (4xx other than auth and rate limiting).
class ProviderError : public Error {
 public:
  using Error::Error;
};

class ReplayMiss : public Error {
 public:
  explicit ReplayMiss(const std::string& key) : Error("no recorded exchange for key " + key) {}
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class RunAborted : public Error {
 public:
  using Error::Error;
};

}  // namespace opindist
