#pragma once

// Security function wrapper: validates its configuration, registers with the
// controller, keeps the session alive, and forwards plausible attack
// observations from a simulated detector. Deregisters on shutdown.

#include <chrono>
#include <concepts>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <stop_token>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "ssfc/clock.hpp"
#include "ssfc/core.hpp"
#include "ssfc/fcc_controller.hpp"

namespace ssfc {

/// Report probability per tick for one attack class.
struct ClassReportSpec {
  ClassId attack_class;
  double probability = 0.0;
  double strength_mbps = 0.0;
};

struct WrapperConfig {
  InstanceId function_id;
  FunctionId group_id;
  std::string fcc_endpoint;  // http://host:port, unused by in-process transports
  double link_capacity = 0.0;  // Mbit/s
  double keepalive_period = 10.0;
  double tick = 1.0;
  std::vector<ClassReportSpec> attack_source;

  void validate() const {
    if (function_id.empty()) throw Error(ErrorCode::config_invalid, "wrapper needs a function id");
    if (group_id.empty()) throw Error(ErrorCode::config_invalid, "wrapper '" + function_id.str() + "' needs a group id");
    if (!(link_capacity > 0.0))
      throw Error(ErrorCode::config_invalid, "wrapper '" + function_id.str() + "': link capacity must be > 0");
    if (!(keepalive_period > 0.0))
      throw Error(ErrorCode::config_invalid, "wrapper '" + function_id.str() + "': keepalive period must be > 0");
    if (!(tick > 0.0)) throw Error(ErrorCode::config_invalid, "wrapper '" + function_id.str() + "': tick must be > 0");
    for (const auto& s : attack_source)
      if (!(s.probability >= 0.0 && s.probability <= 1.0))
        throw Error(ErrorCode::config_invalid,
                    "wrapper '" + function_id.str() + "': probability for '" + s.attack_class.str() + "' outside [0,1]");
  }
};

struct AttackObservation {
  ClassId attack_class;
  double strength_mbps = 0.0;
  double time = 0.0;
};

enum class ReportVerdict { accept, reject };

/// A wrapper cannot see more attack traffic than its link carries.
inline ReportVerdict validate_report(const AttackObservation& obs, const WrapperConfig& config) {
  return obs.strength_mbps > config.link_capacity ? ReportVerdict::reject : ReportVerdict::accept;
}

/// FNV-1a, used to derive per-wrapper seeds that do not depend on the
/// standard library's hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Per tick, each class independently emits one observation with its
/// configured probability. Identical seed and sources give identical streams.
class AttackGenerator {
 public:
  AttackGenerator(std::vector<ClassReportSpec> sources, std::uint64_t seed) : sources_(std::move(sources)), rng_(seed) {}

  void set_sources(std::vector<ClassReportSpec> sources) { sources_ = std::move(sources); }
  const std::vector<ClassReportSpec>& sources() const noexcept { return sources_; }

  std::vector<AttackObservation> next_tick(double time) {
    std::vector<AttackObservation> out;
    for (const auto& s : sources_) {
      // 53 random bits in [0,1); unlike std::bernoulli_distribution the
      // mapping is identical across standard libraries.
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      if (u < s.probability) out.push_back({s.attack_class, s.strength_mbps, time});
    }
    return out;
  }

 private:
  std::vector<ClassReportSpec> sources_;
  std::mt19937_64 rng_;
};

inline std::vector<AttackObservation> simulate_attacks(const WrapperConfig& config, std::size_t ticks,
                                                       std::uint64_t seed, double start = 0.0) {
  AttackGenerator gen(config.attack_source, seed);
  std::vector<AttackObservation> out;
  for (std::size_t i = 0; i < ticks; ++i) {
    auto obs = gen.next_tick(start + static_cast<double>(i) * config.tick);
    out.insert(out.end(), obs.begin(), obs.end());
  }
  return out;
}

/// How a wrapper talks to the controller. Failures throw ssfc::Error; an
/// unreachable controller is ErrorCode::unreachable.
template <class T>
concept FccTransport = requires(T& t, const InstanceId& id, const FunctionId& g, const std::string& token,
                                const AttackReport& report) {
  { t.register_function(id, g, 1.0) } -> std::same_as<std::string>;
  { t.keepalive(id, token) } -> std::same_as<std::string>;
  t.report_attack(report);
  t.deregister(id, token);
};

/// Calls an in-process controller directly.
class DirectTransport {
 public:
  explicit DirectTransport(FccController& controller) : controller_(&controller) {}

  std::string register_function(const InstanceId& id, const FunctionId& group, double capacity) {
    return controller_->register_function(id, group, capacity);
  }
  std::string keepalive(const InstanceId& id, const std::string& token) { return controller_->keepalive(id, token); }
  void report_attack(const AttackReport& r) { controller_->report_attack(r); }
  void deregister(const InstanceId& id, const std::string& token) { controller_->deregister(id, token); }

 private:
  FccController* controller_;
};

inline ErrorCode error_code_from_string(std::string_view s) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::scenario_invalid); ++i)
    if (to_string(static_cast<ErrorCode>(i)) == s) return static_cast<ErrorCode>(i);
  return ErrorCode::invalid_argument;
}

/// Speaks the controller's HTTP/JSON API.
class HttpTransport {
 public:
  explicit HttpTransport(const std::string& endpoint, double timeout_seconds = 2.0) : client_(endpoint) {
    const auto usec = static_cast<long>(timeout_seconds * 1e6);
    client_.set_connection_timeout(usec / 1000000, usec % 1000000);
    client_.set_read_timeout(usec / 1000000, usec % 1000000);
  }

  std::string register_function(const InstanceId& id, const FunctionId& group, double capacity) {
    nlohmann::json j{{"function_id", id.str()}, {"group_id", group.str()}, {"link_capacity_mbps", capacity}};
    return token_of(check(client_.Post("/api/register", j.dump(), "application/json")));
  }

  std::string keepalive(const InstanceId& id, const std::string& token) {
    nlohmann::json j{{"function_id", id.str()}, {"token", token}};
    return token_of(check(client_.Post("/api/keepalive", j.dump(), "application/json")));
  }

  void report_attack(const AttackReport& r) {
    nlohmann::json j{{"function_id", r.function_id.str()},
                     {"token", r.token},
                     {"attack_class", r.attack_class.str()},
                     {"strength_mbps", r.strength}};
    check(client_.Post("/api/attack", j.dump(), "application/json"));
  }

  void deregister(const InstanceId& id, const std::string& token) {
    nlohmann::json j{{"function_id", id.str()}, {"token", token}};
    check(client_.Delete("/api/register", j.dump(), "application/json"));
  }

 private:
  static std::string check(const httplib::Result& res) {
    if (!res) throw Error(ErrorCode::unreachable, "controller unreachable: " + httplib::to_string(res.error()));
    if (res->status >= 200 && res->status < 300) return res->body;
    ErrorCode code = ErrorCode::invalid_argument;
    std::string message = res->body;
    try {
      const auto j = nlohmann::json::parse(res->body);
      code = error_code_from_string(j.value("error", ""));
      message = j.value("message", message);
    } catch (const nlohmann::json::exception&) {
    }
    throw Error(code, "HTTP " + std::to_string(res->status) + ": " + message);
  }

  static std::string token_of(const std::string& body) { return nlohmann::json::parse(body).at("token").get<std::string>(); }

  httplib::Client client_;
};

enum class WrapperStatus { running, stopped, config_invalid, registration_failed, token_rejected };

inline std::string_view to_string(WrapperStatus s) {
  switch (s) {
    case WrapperStatus::running: return "running";
    case WrapperStatus::stopped: return "stopped";
    case WrapperStatus::config_invalid: return "config_invalid";
    case WrapperStatus::registration_failed: return "registration_failed";
    case WrapperStatus::token_rejected: return "token_rejected";
  }
  return "?";
}

struct WrapperStats {
  std::size_t observations = 0;
  std::size_t rejected_locally = 0;
  std::size_t sent = 0;
  std::size_t refused_by_fcc = 0;
  std::size_t keepalives = 0;
  std::size_t reregistrations = 0;
};

/// Time source plus a way to wait; logical runs pass a no-op sleeper.
struct WrapperTiming {
  std::shared_ptr<const Clock> clock;
  std::function<void(double)> sleep = [](double) {};
  int registration_attempts = 3;
  double retry_base_delay = 0.1;  // doubled after each failed attempt
};

template <FccTransport Transport>
class WrapperAgent {
 public:
  WrapperAgent(WrapperConfig config, Transport transport, WrapperTiming timing, std::uint64_t seed)
      : config_(std::move(config)),
        transport_(std::move(transport)),
        timing_(std::move(timing)),
        generator_(config_.attack_source, seed) {}

  const WrapperConfig& config() const noexcept { return config_; }
  WrapperStatus status() const {
    std::shared_lock lock(token_mutex_);
    return status_;
  }
  WrapperStats stats() const {
    std::scoped_lock lock(stats_mutex_);
    return stats_;
  }
  /// Every report handed to the transport, in order.
  std::vector<AttackObservation> sent_reports() const {
    std::scoped_lock lock(stats_mutex_);
    return sent_;
  }
  std::optional<double> last_keepalive() const {
    std::shared_lock lock(token_mutex_);
    return last_keepalive_;
  }

  /// Validate the configuration, then register with bounded exponential
  /// retry. Returns the resulting status (running on success).
  WrapperStatus start() {
    try {
      config_.validate();
    } catch (const Error&) {
      std::unique_lock lock(token_mutex_);
      status_ = WrapperStatus::config_invalid;
      return status_;
    }
    std::unique_lock lock(token_mutex_);
    status_ = register_locked() ? WrapperStatus::running : WrapperStatus::registration_failed;
    return status_;
  }

  /// Rotates the session token. One re-registration is attempted if the
  /// controller rejects the session.
  void keepalive_now() {
    std::unique_lock lock(token_mutex_);
    if (status_ != WrapperStatus::running) return;
    try {
      token_ = transport_.keepalive(config_.function_id, token_);
      last_keepalive_ = timing_.clock->now();
      std::scoped_lock s(stats_mutex_);
      ++stats_.keepalives;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::unreachable) return;
      recover_locked();
    }
  }

  /// One detector tick: draw observations, drop implausible ones, report the rest.
  void report_tick() {
    std::vector<AttackObservation> observations;
    {
      std::scoped_lock lock(generator_mutex_);
      observations = generator_.next_tick(timing_.clock->now());
    }
    for (const auto& obs : observations) {
      {
        std::scoped_lock s(stats_mutex_);
        ++stats_.observations;
      }
      if (validate_report(obs, config_) == ReportVerdict::reject) {
        std::scoped_lock s(stats_mutex_);
        ++stats_.rejected_locally;
        continue;
      }
      send(obs);
    }
  }

  /// Logical-time driver: keepalive when due, then one detector tick.
  void step() {
    if (status() != WrapperStatus::running) return;
    const double now = timing_.clock->now();
    bool due = false;
    {
      std::shared_lock lock(token_mutex_);
      due = !last_keepalive_ || now - *last_keepalive_ >= config_.keepalive_period;
    }
    if (due) keepalive_now();
    report_tick();
  }

  void set_attack_sources(std::vector<ClassReportSpec> sources) {
    std::scoped_lock lock(generator_mutex_);
    generator_.set_sources(std::move(sources));
  }

  /// Deregisters; no report is sent afterwards.
  void shutdown() {
    std::unique_lock lock(token_mutex_);
    if (status_ != WrapperStatus::running) return;
    try {
      transport_.deregister(config_.function_id, token_);
    } catch (const Error&) {
    }
    status_ = WrapperStatus::stopped;
  }

 private:
  bool register_locked() {
    double delay = timing_.retry_base_delay;
    for (int attempt = 0; attempt < timing_.registration_attempts; ++attempt) {
      try {
        token_ = transport_.register_function(config_.function_id, config_.group_id, config_.link_capacity);
        last_keepalive_ = timing_.clock->now();
        return true;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::unreachable) return false;
      }
      if (attempt + 1 < timing_.registration_attempts) {
        timing_.sleep(delay);
        delay *= 2;
      }
    }
    return false;
  }

  void recover_locked() {
    {
      std::scoped_lock s(stats_mutex_);
      ++stats_.reregistrations;
    }
    if (reregistered_ || !register_locked()) {
      status_ = WrapperStatus::token_rejected;
      return;
    }
    reregistered_ = true;
  }

  void send(const AttackObservation& obs) {
    bool rejected_session = false;
    {
      std::shared_lock lock(token_mutex_);
      if (status_ != WrapperStatus::running) return;
      try {
        transport_.report_attack(AttackReport{config_.function_id, obs.attack_class, obs.strength_mbps, obs.time, token_});
        std::scoped_lock s(stats_mutex_);
        ++stats_.sent;
        sent_.push_back(obs);
      } catch (const Error& e) {
        std::scoped_lock s(stats_mutex_);
        ++stats_.sent;
        sent_.push_back(obs);
        ++stats_.refused_by_fcc;
        rejected_session = e.code() == ErrorCode::invalid_token || e.code() == ErrorCode::expired ||
                           e.code() == ErrorCode::unknown_function;
      }
    }
    if (rejected_session) {
      std::unique_lock lock(token_mutex_);
      if (status_ == WrapperStatus::running) recover_locked();
    }
  }

  WrapperConfig config_;
  Transport transport_;
  WrapperTiming timing_;

  // Reports hold it shared while using the token, keepalive holds it
  // exclusively while rotating, so no stale token leaves after a refresh.
  mutable std::shared_mutex token_mutex_;
  std::string token_;
  std::optional<double> last_keepalive_;
  WrapperStatus status_ = WrapperStatus::stopped;
  bool reregistered_ = false;

  std::mutex generator_mutex_;
  AttackGenerator generator_;

  mutable std::mutex stats_mutex_;
  WrapperStats stats_;
  std::vector<AttackObservation> sent_;
};

/// Runs a wrapper against wall-clock time until `stop` is requested:
/// keepalive and report loops on separate threads, deregistration on exit.
template <FccTransport Transport>
WrapperStatus run_lifecycle(WrapperAgent<Transport>& agent, std::stop_token stop) {
  if (agent.start() != WrapperStatus::running) return agent.status();

  auto loop = [&agent](std::stop_token st, double period, auto body) {
    std::mutex m;
    std::condition_variable_any cv;
    while (!st.stop_requested() && agent.status() == WrapperStatus::running) {
      std::unique_lock lock(m);
      if (cv.wait_for(lock, st, std::chrono::duration<double>(period), [] { return false; })) break;
      if (st.stop_requested()) break;
      lock.unlock();
      body();
    }
  };
  {
    std::jthread keepalive([&](std::stop_token st) { loop(st, agent.config().keepalive_period, [&] { agent.keepalive_now(); }); });
    std::jthread reports([&](std::stop_token st) { loop(st, agent.config().tick, [&] { agent.report_tick(); }); });
    std::stop_callback forward(stop, [&] {
      keepalive.request_stop();
      reports.request_stop();
    });
    while (!stop.stop_requested() && agent.status() == WrapperStatus::running)
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    keepalive.request_stop();
    reports.request_stop();
  }
  const auto terminal = agent.status();
  agent.shutdown();
  return terminal == WrapperStatus::running ? WrapperStatus::stopped : terminal;
}

}  // namespace ssfc
