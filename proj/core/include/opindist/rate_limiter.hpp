#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <mutex>
#include <random>

namespace opindist {

/// Time source used by the rate limiter and retry loop, replaceable in tests.
class Clock {
 public:
  using duration = std::chrono::steady_clock::duration;
  using time_point = std::chrono::steady_clock::time_point;

  virtual ~Clock() = default;
  virtual time_point now() = 0;
  virtual void sleep_for(duration d) = 0;
};

class SteadyClock final : public Clock {
 public:
  time_point now() override { return std::chrono::steady_clock::now(); }
  void sleep_for(duration d) override;

  static SteadyClock& instance();
};

/// Fake clock: sleeping advances time instantly.
class ManualClock final : public Clock {
 public:
  time_point now() override;
  void sleep_for(duration d) override;
  void advance(duration d) { sleep_for(d); }

 private:
  std::mutex mutex_;
  time_point now_{};
};

/// Sliding-window limiter: at most `requests_per_minute` acquisitions in any
/// 60 second window. Zero disables limiting.
class RateLimiter {
 public:
  RateLimiter(std::uint32_t requests_per_minute, Clock& clock);

  /// Blocks until a request may be issued and records it.
  void acquire();

  std::uint32_t requests_per_minute() const noexcept { return rpm_; }

 private:
  std::uint32_t rpm_;
  Clock& clock_;
  std::mutex mutex_;
  std::deque<Clock::time_point> issued_;
};

struct BackoffPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_delay{500};
  std::chrono::milliseconds max_delay{30'000};
  // Fraction of the nominal delay that jitter may remove.
  double jitter = 0.5;

  /// Delay before retry number `retry` (1-based): initial * 2^(retry-1),
  /// capped at max_delay, then scaled by a factor in [1 - jitter, 1].
  std::chrono::milliseconds delay(int retry, std::mt19937_64& rng) const;
};

}  // namespace opindist
