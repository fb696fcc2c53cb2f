#pragma once

// Function Chaining Controller.
//
// Wrappers register function instances, keep their sessions alive and report
// attacks. Each chain element (group) keeps an attack counter. Two periodic
// checks turn the counters into an order:
//
//   imminent (every imminent_check_period): fires when some counter reaches
//     imminent_multiplier * regular_threshold.
//   regular (every regular_check_period): fires when some counter reaches
//     regular_threshold; when none does, the default order is restored unless
//     a manual order is in force.
//
// A firing check sorts the groups by counter, most attacks first, ties by
// default-order position. Applying a new order bumps the epoch and zeroes all
// counters; a regular check also zeroes them, so a counter measures attacks
// per regular period.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ssfc/chain_order.hpp"
#include "ssfc/clock.hpp"
#include "ssfc/core.hpp"
#include "ssfc/token.hpp"

namespace ssfc {

struct ControllerConfig {
  std::int64_t regular_threshold = 100;
  std::int64_t imminent_multiplier = 3;
  double imminent_check_period = 10.0;
  double regular_check_period = 300.0;
  ChainOrder default_order;
  double keepalive_timeout = 30.0;

  std::int64_t imminent_threshold() const { return imminent_multiplier * regular_threshold; }

  void validate() const {
    if (regular_threshold <= 0) throw Error(ErrorCode::config_invalid, "regular_threshold must be > 0");
    if (imminent_threshold() <= regular_threshold)
      throw Error(ErrorCode::config_invalid, "imminent threshold must exceed the regular threshold");
    if (!(imminent_check_period > 0.0) || !(regular_check_period > 0.0))
      throw Error(ErrorCode::config_invalid, "check periods must be > 0");
    if (!(keepalive_timeout > 0.0)) throw Error(ErrorCode::config_invalid, "keepalive_timeout must be > 0");
    if (default_order.empty()) throw Error(ErrorCode::config_invalid, "default_order must not be empty");
    if (default_order.has_duplicates()) throw Error(ErrorCode::config_invalid, "default_order repeats a group");
  }
};

enum class Trigger { initial, imminent, regular, reset, manual, membership };

inline std::string_view to_string(Trigger t) {
  switch (t) {
    case Trigger::initial: return "initial";
    case Trigger::imminent: return "imminent";
    case Trigger::regular: return "regular";
    case Trigger::reset: return "reset";
    case Trigger::manual: return "manual";
    case Trigger::membership: return "membership";
  }
  return "?";
}

struct AttackReport {
  InstanceId function_id;
  ClassId attack_class;
  double strength = 0.0;  // Mbit/s
  double timestamp = 0.0;
  std::string token;
};

struct RegisteredFunction {
  InstanceId function_id;
  FunctionId group_id;
  double link_capacity = 0.0;  // Mbit/s
  std::string session_token;
  double last_keepalive = 0.0;
  std::int64_t attack_counter = 0;
  double attack_bandwidth_accum = 0.0;
};

struct GroupCounter {
  FunctionId group;
  std::int64_t attack_counter = 0;
  double attack_bandwidth_accum = 0.0;
};

struct ReorderEvent {
  double time = 0.0;
  Trigger trigger = Trigger::initial;
  ChainOrder from;
  ChainOrder to;
  std::uint64_t epoch = 0;
  std::map<FunctionId, std::int64_t> counters;  // at decision time
};

struct Decision {
  Trigger trigger;
  ChainOrder order;
  std::map<FunctionId, std::int64_t> counters;
};

struct ControllerStatus {
  double time = 0.0;
  ChainOrder current_order;
  ChainOrder default_order;
  std::uint64_t epoch = 0;
  bool manual_active = false;
  std::vector<GroupCounter> groups;  // current order
  std::vector<RegisteredFunction> registry;
  std::vector<ReorderEvent> recent_events;
};

/// Called with (from, to, epoch) whenever a new order must be enforced in the
/// network. Throwing aborts the change.
using ChainEnforcer = std::function<void(const ChainOrder&, const ChainOrder&, std::uint64_t)>;

class FccController {
 public:
  static constexpr std::size_t kRecentEvents = 50;

  FccController(ControllerConfig config, std::shared_ptr<const Clock> clock, ChainEnforcer enforcer,
                TokenSigner signer = TokenSigner{})
      : config_(std::move(config)), clock_(std::move(clock)), enforcer_(std::move(enforcer)), signer_(std::move(signer)) {
    config_.validate();
    const double t = clock_->now();
    for (const auto& g : config_.default_order) chained_.insert(g);
    if (enforcer_) enforcer_(ChainOrder{}, config_.default_order, 0);
    current_ = config_.default_order;
    next_imminent_ = t + config_.imminent_check_period;
    next_regular_ = t + config_.regular_check_period;
    events_.push_back({t, Trigger::initial, ChainOrder{}, current_, 0, counters_locked()});
    publish_locked();
  }

  FccController(const FccController&) = delete;
  FccController& operator=(const FccController&) = delete;

  const ControllerConfig& config() const noexcept { return config_; }

  std::string register_function(const InstanceId& id, const FunctionId& group, double link_capacity) {
    std::scoped_lock lock(mutex_);
    if (id.empty()) throw Error(ErrorCode::invalid_argument, "empty function id");
    if (!(link_capacity > 0.0)) throw Error(ErrorCode::invalid_argument, "link capacity must be > 0");
    if (registry_.contains(id)) throw Error(ErrorCode::duplicate_registration, "'" + id.str() + "' is already registered");
    if (!config_.default_order.contains(group))
      throw Error(ErrorCode::unknown_group, "group '" + group.str() + "' is not part of the chain");

    const double t = clock_->now();
    RegisteredFunction rf{id, group, link_capacity, {}, t, 0, 0.0};
    rf.session_token = issue_token_locked(id, t);
    evicted_.erase(id);
    registry_.emplace(id, rf);

    if (!chained_.contains(group)) {
      chained_.insert(group);
      ChainOrder next = current_;
      next.ids.push_back(group);
      apply_locked(next, Trigger::membership, counters_locked());
    }
    publish_locked();
    return rf.session_token;
  }

  /// Graceful removal from the registry. The group stays chained.
  void deregister(const InstanceId& id, const std::string& token) {
    std::scoped_lock lock(mutex_);
    authenticate_locked(id, token);
    registry_.erase(id);
    publish_locked();
  }

  /// Validates the session and rotates its token; the old one is dead.
  std::string keepalive(const InstanceId& id, const std::string& token) {
    std::scoped_lock lock(mutex_);
    auto& rf = authenticate_locked(id, token);
    const double t = clock_->now();
    rf.last_keepalive = t;
    rf.session_token = issue_token_locked(id, t);
    publish_locked();
    return rf.session_token;
  }

  /// Counts an attack if the reported strength is plausible for the
  /// reporter's link (strength <= link capacity).
  bool report_attack(const AttackReport& report) {
    std::scoped_lock lock(mutex_);
    auto& rf = authenticate_locked(report.function_id, report.token);
    if (!(report.strength > 0.0)) throw Error(ErrorCode::invalid_argument, "attack strength must be > 0");
    if (report.strength > rf.link_capacity)
      throw Error(ErrorCode::implausible_strength,
                  fmt::format("strength {} Mbit/s exceeds link capacity {} Mbit/s", report.strength, rf.link_capacity));
    ++rf.attack_counter;
    rf.attack_bandwidth_accum += report.strength;
    auto& g = group_counters_[rf.group_id];
    ++g.first;
    g.second += report.strength;
    publish_locked();
    return true;
  }

  /// What a check of the given kind would do now. Only returns an order that
  /// differs from the current one.
  std::optional<Decision> decide(Trigger trigger) const {
    std::scoped_lock lock(mutex_);
    auto [fired, decision] = decide_locked(trigger);
    if (decision && decision->order == current_) return std::nullopt;
    return decision;
  }

  /// Runs one check and applies its outcome atomically.
  std::optional<ReorderEvent> run_check(Trigger trigger) {
    std::scoped_lock lock(mutex_);
    auto ev = run_check_locked(trigger);
    publish_locked();
    return ev;
  }

  /// Enforces an order now. Returns the epoch in force afterwards; applying
  /// the current order changes nothing.
  std::uint64_t apply_order(const ChainOrder& order, Trigger trigger = Trigger::manual) {
    std::scoped_lock lock(mutex_);
    apply_locked(order, trigger, counters_locked());
    publish_locked();
    return epoch_;
  }

  /// Evicts silent instances and runs every check due at the clock's time.
  /// When both checks fall due together only the regular one runs.
  std::vector<ReorderEvent> tick() {
    std::scoped_lock lock(mutex_);
    const double t = clock_->now();
    std::vector<ReorderEvent> out;
    evict_locked(t, out);
    for (;;) {
      const bool regular_due = t >= next_regular_;
      const bool imminent_due = t >= next_imminent_;
      if (!regular_due && !imminent_due) break;
      if (regular_due && next_regular_ <= next_imminent_) {
        if (next_imminent_ == next_regular_) next_imminent_ += config_.imminent_check_period;
        next_regular_ += config_.regular_check_period;
        if (auto ev = run_check_locked(Trigger::regular)) out.push_back(*ev);
      } else {
        next_imminent_ += config_.imminent_check_period;
        if (auto ev = run_check_locked(Trigger::imminent)) out.push_back(*ev);
      }
    }
    publish_locked();
    return out;
  }

  /// Consistent snapshot; never waits on a mutation in progress.
  ControllerStatus status() const {
    std::scoped_lock lock(snapshot_mutex_);
    return *snapshot_;
  }

  std::vector<ReorderEvent> events() const {
    std::scoped_lock lock(mutex_);
    return events_;
  }

  ChainOrder current_order() const {
    std::scoped_lock lock(mutex_);
    return current_;
  }

  std::uint64_t epoch() const {
    std::scoped_lock lock(mutex_);
    return epoch_;
  }

 private:
  std::string issue_token_locked(const InstanceId& id, double t) {
    const auto serial = ++token_serial_;
    current_serial_[id] = serial;
    return signer_.sign(TokenClaims{id.str(), serial, t, t + config_.keepalive_timeout});
  }

  RegisteredFunction& authenticate_locked(const InstanceId& id, const std::string& token) {
    const auto claims = signer_.verify(token);
    if (!claims || claims->subject != id.str()) throw Error(ErrorCode::invalid_token, "invalid token");
    auto it = registry_.find(id);
    if (it == registry_.end()) {
      if (evicted_.contains(id)) throw Error(ErrorCode::expired, "'" + id.str() + "' was evicted");
      throw Error(ErrorCode::unknown_function, "'" + id.str() + "' is not registered");
    }
    if (claims->serial != current_serial_[id]) throw Error(ErrorCode::invalid_token, "token was rotated");
    if (claims->expires_at <= clock_->now()) throw Error(ErrorCode::expired, "token expired");
    return it->second;
  }

  std::map<FunctionId, std::int64_t> counters_locked() const {
    std::map<FunctionId, std::int64_t> out;
    for (const auto& g : current_) {
      auto it = group_counters_.find(g);
      out[g] = it == group_counters_.end() ? 0 : it->second.first;
    }
    return out;
  }

  ChainOrder effective_default_locked() const {
    ChainOrder out;
    for (const auto& g : config_.default_order)
      if (chained_.contains(g)) out.ids.push_back(g);
    return out;
  }

  ChainOrder most_attacks_first_locked(const std::map<FunctionId, std::int64_t>& counters) const {
    ChainOrder out = effective_default_locked();
    std::ranges::stable_sort(out.ids, std::greater<>{}, [&](const FunctionId& g) { return counters.at(g); });
    return out;
  }

  /// (threshold fired, candidate decision)
  std::pair<bool, std::optional<Decision>> decide_locked(Trigger trigger) const {
    const auto counters = counters_locked();
    std::int64_t max = 0;
    for (const auto& [g, c] : counters) max = std::max(max, c);

    if (trigger == Trigger::imminent) {
      if (max >= config_.imminent_threshold())
        return {true, Decision{Trigger::imminent, most_attacks_first_locked(counters), counters}};
      return {false, std::nullopt};
    }
    if (trigger == Trigger::regular) {
      if (max >= config_.regular_threshold)
        return {true, Decision{Trigger::regular, most_attacks_first_locked(counters), counters}};
      if (!manual_active_) return {false, Decision{Trigger::reset, effective_default_locked(), counters}};
      return {false, std::nullopt};
    }
    return {false, std::nullopt};
  }

  std::optional<ReorderEvent> run_check_locked(Trigger trigger) {
    auto [fired, decision] = decide_locked(trigger);
    if (fired) manual_active_ = false;
    std::optional<ReorderEvent> ev;
    if (decision && decision->order != current_) ev = apply_locked(decision->order, decision->trigger, decision->counters);
    if (trigger == Trigger::regular) reset_counters_locked();
    return ev;
  }

  std::optional<ReorderEvent> apply_locked(const ChainOrder& order, Trigger trigger,
                                           std::map<FunctionId, std::int64_t> counters) {
    const auto members = effective_default_locked();
    if (!order.is_permutation_of(members.ids))
      throw Error(ErrorCode::invalid_order,
                  "order '" + order.to_string() + "' is not a permutation of '" + members.to_string() + "'");
    if (order == current_) return std::nullopt;
    const auto next_epoch = epoch_ + 1;
    if (enforcer_) enforcer_(current_, order, next_epoch);
    ReorderEvent ev{clock_->now(), trigger, current_, order, next_epoch, std::move(counters)};
    current_ = order;
    epoch_ = next_epoch;
    if (trigger == Trigger::manual) manual_active_ = true;
    else if (trigger == Trigger::imminent || trigger == Trigger::regular) manual_active_ = false;
    reset_counters_locked();
    events_.push_back(ev);
    return ev;
  }

  void reset_counters_locked() {
    group_counters_.clear();
    for (auto& [id, rf] : registry_) {
      rf.attack_counter = 0;
      rf.attack_bandwidth_accum = 0.0;
    }
  }

  void evict_locked(double t, std::vector<ReorderEvent>& out) {
    std::set<FunctionId> affected;
    for (auto it = registry_.begin(); it != registry_.end();) {
      if (t - it->second.last_keepalive > config_.keepalive_timeout) {
        affected.insert(it->second.group_id);
        evicted_.insert(it->first);
        it = registry_.erase(it);
      } else {
        ++it;
      }
    }
    for (const auto& g : affected) {
      const bool still_present =
          std::ranges::any_of(registry_, [&](const auto& kv) { return kv.second.group_id == g; });
      if (still_present || !chained_.contains(g)) continue;
      chained_.erase(g);
      ChainOrder next;
      for (const auto& id : current_)
        if (id != g) next.ids.push_back(id);
      if (auto ev = apply_locked(next, Trigger::membership, counters_locked())) out.push_back(*ev);
    }
  }

  void publish_locked() {
    auto snap = std::make_shared<ControllerStatus>();
    snap->time = clock_->now();
    snap->current_order = current_;
    snap->default_order = effective_default_locked();
    snap->epoch = epoch_;
    snap->manual_active = manual_active_;
    for (const auto& g : current_) {
      auto it = group_counters_.find(g);
      snap->groups.push_back(it == group_counters_.end() ? GroupCounter{g, 0, 0.0}
                                                         : GroupCounter{g, it->second.first, it->second.second});
    }
    for (const auto& [id, rf] : registry_) snap->registry.push_back(rf);
    const auto first = events_.size() > kRecentEvents ? events_.end() - kRecentEvents : events_.begin();
    snap->recent_events.assign(first, events_.end());
    std::scoped_lock lock(snapshot_mutex_);
    snapshot_ = std::move(snap);
  }

  ControllerConfig config_;
  std::shared_ptr<const Clock> clock_;
  ChainEnforcer enforcer_;
  TokenSigner signer_;

  mutable std::mutex mutex_;
  std::map<InstanceId, RegisteredFunction> registry_;
  std::map<InstanceId, std::uint64_t> current_serial_;
  std::set<InstanceId> evicted_;
  std::set<FunctionId> chained_;
  std::map<FunctionId, std::pair<std::int64_t, double>> group_counters_;
  ChainOrder current_;
  std::uint64_t epoch_ = 0;
  std::uint64_t token_serial_ = 0;
  bool manual_active_ = false;
  double next_imminent_ = 0.0;
  double next_regular_ = 0.0;
  std::vector<ReorderEvent> events_;

  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const ControllerStatus> snapshot_;
};

}  // namespace ssfc
