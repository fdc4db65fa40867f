#include "opindist/rate_limiter.hpp"

#include <algorithm>
#include <thread>

namespace opindist {

void SteadyClock::sleep_for(duration d) { std::this_thread::sleep_for(d); }

SteadyClock& SteadyClock::instance() {
  static SteadyClock clock;
  return clock;
}

Clock::time_point ManualClock::now() {
  std::lock_guard lock(mutex_);
  return now_;
}

void ManualClock::sleep_for(duration d) {
  std::lock_guard lock(mutex_);
  if (d > duration::zero()) now_ += d;
}

RateLimiter::RateLimiter(std::uint32_t requests_per_minute, Clock& clock)
    : rpm_(requests_per_minute), clock_(clock) {}

void RateLimiter::acquire() {
  if (rpm_ == 0) return;
  constexpr auto window = std::chrono::minutes(1);
  // Holding the lock while sleeping serializes waiters in arrival order.
  std::lock_guard lock(mutex_);
  for (;;) {
    const auto now = clock_.now();
    while (!issued_.empty() && issued_.front() + window <= now) {
      issued_.pop_front();
    }
    if (issued_.size() < rpm_) {
      issued_.push_back(now);
      return;
    }
    clock_.sleep_for(issued_.front() + window - now);
  }
}

std::chrono::milliseconds BackoffPolicy::delay(int retry, std::mt19937_64& rng) const {
  const int shift = std::clamp(retry - 1, 0, 30);
  const auto nominal = std::min<std::int64_t>(max_delay.count(), initial_delay.count() << shift);
  // 53-bit uniform in [0, 1); std::uniform_real_distribution is not portable.
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const double factor = 1.0 - std::clamp(jitter, 0.0, 1.0) * u;
  return std::chrono::milliseconds(static_cast<std::int64_t>(static_cast<double>(nominal) * factor));
}

}  // namespace opindist
