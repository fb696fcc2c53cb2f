#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <string>

#include <fmt/format.h>

namespace ssfc {

/// Seconds on some fixed origin. Logical clocks start at 0.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() const = 0;
};

class ManualClock final : public Clock {
 public:
  explicit ManualClock(double start = 0.0) : t_(start) {}
  double now() const override { return t_.load(); }
  void set(double t) { t_.store(t); }
  void advance(double dt) { t_.store(t_.load() + dt); }

 private:
  std::atomic<double> t_;
};

/// Wall clock, seconds since the Unix epoch.
class SystemClock final : public Clock {
 public:
  double now() const override {
    using namespace std::chrono;
    return duration<double>(system_clock::now().time_since_epoch()).count();
  }
};

/// UTC ISO-8601 with millisecond precision; `t` is seconds since the Unix
/// epoch (logical time 0 renders as 1970-01-01T00:00:00.000Z).
inline std::string iso8601(double t) {
  const double whole = std::floor(t);
  auto secs = static_cast<std::time_t>(whole);
  int millis = static_cast<int>(std::lround((t - whole) * 1000.0));
  if (millis == 1000) {
    ++secs;
    millis = 0;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, millis);
}

}  // namespace ssfc
