#pragma once

#include <atomic>
#include <chrono>
#include <cmath>

#include "oneshot/error.hpp"

namespace oneshot {

using Duration = std::chrono::nanoseconds;
using TimePoint = std::chrono::time_point<std::chrono::steady_clock, Duration>;

inline Duration seconds(double s) {
  return std::chrono::duration_cast<Duration>(std::chrono::duration<double>(s));
}

inline double to_seconds(Duration d) { return std::chrono::duration<double>(d).count(); }

inline double to_seconds(TimePoint t) { return to_seconds(t.time_since_epoch()); }

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimePoint now() const = 0;
};

class SteadyClock final : public Clock {
 public:
  TimePoint now() const override {
    return std::chrono::time_point_cast<Duration>(std::chrono::steady_clock::now());
  }
};

// Manually advanced clock starting at the epoch. Never moves backwards.
class VirtualClock final : public Clock {
 public:
  TimePoint now() const override { return TimePoint(Duration(ticks_.load(std::memory_order_acquire))); }

  void advance(Duration d) {
    if (d.count() < 0) throw UsageError("virtual clock cannot move backwards");
    ticks_.fetch_add(d.count(), std::memory_order_acq_rel);
  }

  void advance_to(TimePoint t) {
    auto current = ticks_.load(std::memory_order_acquire);
    const auto target = t.time_since_epoch().count();
    while (current < target && !ticks_.compare_exchange_weak(current, target, std::memory_order_acq_rel)) {
    }
  }

 private:
  std::atomic<Duration::rep> ticks_{0};
};

}  // namespace oneshot
