#pragma once

// A single simulated SDN switch that chains security functions with flow
// rules, walks packets through them, and reconfigures the chain.
//
// Port layout: every function is attached by two switch ports, one towards
// the function (switch -> function) and one back from it. The external
// network and the protected service each have one port.
//
// Two reconfiguration modes exist. In legacy mode rules match on in_port only
// and a reorder rewrites them in place, so a packet already inside the chain
// continues on the new rules. In epoch_counter mode the ingress stamps every
// packet with the current epoch, rules match (in_port, epoch), and a reorder
// only adds rules for a fresh epoch; in-flight packets finish on the rules of
// the epoch they were stamped with, which stay until they idle out.

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "ssfc/chain_order.hpp"
#include "ssfc/core.hpp"

namespace ssfc {

using Port = std::uint32_t;
/// Per-packet chain epoch. Eight bits wide, wraps at 256.
using Epoch = std::uint8_t;
using PacketId = std::uint64_t;

enum class ReconfigMode { legacy, epoch_counter };

inline std::string_view to_string(ReconfigMode m) {
  return m == ReconfigMode::legacy ? "legacy" : "epoch_counter";
}

struct FunctionAttachment {
  FunctionId function;
  Port to_function = 0;    // switch port facing the function's input
  Port from_function = 0;  // switch port receiving the function's output
  std::set<ClassId> filtered_classes;
};

class Topology {
 public:
  static constexpr Port kIngressPort = 1;
  static constexpr Port kServicePort = 2;

  Topology() = default;

  /// Attaches functions in the given sequence; function i gets ports
  /// 2i+3 (to) and 2i+4 (from).
  explicit Topology(const std::vector<FunctionId>& functions, std::string switch_name = "s1")
      : switch_name_(std::move(switch_name)) {
    for (const auto& f : functions) attach(f, {});
  }

  void attach(const FunctionId& f, std::set<ClassId> filtered) {
    if (find(f)) throw Error(ErrorCode::topology_error, "function '" + f.str() + "' attached twice");
    const Port base = static_cast<Port>(3 + 2 * attachments_.size());
    attachments_.push_back({f, base, base + 1, std::move(filtered)});
  }

  const std::string& switch_name() const noexcept { return switch_name_; }
  const std::vector<FunctionAttachment>& attachments() const noexcept { return attachments_; }
  std::size_t function_count() const noexcept { return attachments_.size(); }

  std::vector<FunctionId> functions() const {
    std::vector<FunctionId> out;
    for (const auto& a : attachments_) out.push_back(a.function);
    return out;
  }

  const FunctionAttachment* find(const FunctionId& f) const {
    auto it = std::ranges::find(attachments_, f, &FunctionAttachment::function);
    return it == attachments_.end() ? nullptr : &*it;
  }

  const FunctionAttachment& at(const FunctionId& f) const {
    const auto* a = find(f);
    if (!a) throw Error(ErrorCode::topology_error, "function '" + f.str() + "' is not attached");
    return *a;
  }

  /// Function whose input is reached through `port`, if any.
  const FunctionAttachment* by_to_port(Port port) const {
    auto it = std::ranges::find(attachments_, port, &FunctionAttachment::to_function);
    return it == attachments_.end() ? nullptr : &*it;
  }

  const FunctionAttachment* by_from_port(Port port) const {
    auto it = std::ranges::find(attachments_, port, &FunctionAttachment::from_function);
    return it == attachments_.end() ? nullptr : &*it;
  }

 private:
  std::string switch_name_ = "s1";
  std::vector<FunctionAttachment> attachments_;
};

struct FlowMatch {
  Port in_port = 0;
  std::optional<Epoch> epoch;  // nullopt: epoch-agnostic

  friend auto operator<=>(const FlowMatch&, const FlowMatch&) = default;
};

struct FlowRule {
  static constexpr int kEpochPriority = 200;
  static constexpr int kAgnosticPriority = 100;

  FlowMatch match;
  Port out_port = 0;
  int priority = kAgnosticPriority;
  double idle_expiry = 30.0;  // seconds once superseded

  friend bool operator==(const FlowRule&, const FlowRule&) = default;
};

struct FlowDelta {
  std::vector<FlowRule> added;
  std::vector<FlowRule> removed;
  std::vector<FlowRule> modified;  // new versions of rules whose action changed

  bool empty() const noexcept { return added.empty() && removed.empty() && modified.empty(); }
  std::size_t size() const noexcept { return added.size() + removed.size() + modified.size(); }
};

enum class TraceOutcome { delivered, dropped_no_flow, dropped_by_function };

inline std::string_view to_string(TraceOutcome o) {
  switch (o) {
    case TraceOutcome::delivered: return "delivered";
    case TraceOutcome::dropped_no_flow: return "dropped_no_flow";
    case TraceOutcome::dropped_by_function: return "dropped_by_function";
  }
  return "?";
}

/// One switch traversal. `function` is the function reached through out_port
/// (empty when the packet leaves towards the service or is dropped).
struct Hop {
  Port in_port = 0;
  std::optional<Port> out_port;
  std::optional<FunctionId> function;
};

struct PacketTrace {
  PacketId packet_id = 0;
  std::optional<Epoch> injected_epoch;
  std::vector<FunctionId> visited;
  TraceOutcome outcome = TraceOutcome::dropped_no_flow;
  std::vector<Hop> hops;
  bool loop_aborted = false;

  bool visits_any_twice() const {
    std::set<FunctionId> seen;
    for (const auto& f : visited)
      if (!seen.insert(f).second) return true;
    return false;
  }
};

enum class HazardKind { drop, duplicate_traversal, skip };

inline std::string_view to_string(HazardKind k) {
  switch (k) {
    case HazardKind::drop: return "drop";
    case HazardKind::duplicate_traversal: return "duplicate_traversal";
    case HazardKind::skip: return "skip";
  }
  return "?";
}

struct Hazard {
  HazardKind kind;
  PacketId packet_id = 0;
  std::string detail;
};

/// Where an in-flight packet currently is.
struct AtSwitchPort {
  Port port;
};
struct InsideFunction {
  FunctionId function;  // completes this function, then re-enters the switch
};
using PacketPosition = std::variant<AtSwitchPort, InsideFunction>;

struct InFlightPacket {
  PacketId id = 0;
  std::optional<Epoch> stamp;
  ClassId traffic_class;
  std::vector<FunctionId> visited;  // functions already completed
  PacketPosition position = AtSwitchPort{Topology::kIngressPort};
  /// The chain the packet must traverse; hazards are judged against it.
  ChainOrder required;
};

struct ReconfigResult {
  FlowDelta delta;
  std::vector<Hazard> hazards;
  std::vector<PacketTrace> traces;  // replay of each in-flight packet
};

/// Writes one line per hop: `packet_id epoch switch in_port function_id out_port`.
/// Missing values print as '-'.
inline void write_trace(std::ostream& os, const PacketTrace& trace, const std::string& switch_name) {
  for (const auto& hop : trace.hops) {
    os << trace.packet_id << ' ';
    if (trace.injected_epoch) os << static_cast<unsigned>(*trace.injected_epoch);
    else os << '-';
    os << ' ' << switch_name << ' ' << hop.in_port << ' ' << (hop.function ? hop.function->str() : "-") << ' ';
    if (hop.out_port) os << *hop.out_port;
    else os << '-';
    os << '\n';
  }
}

class NetworkSim {
 public:
  struct Options {
    ReconfigMode mode = ReconfigMode::epoch_counter;
    double idle_expiry = 30.0;
  };

  explicit NetworkSim(Topology topology) : NetworkSim(std::move(topology), Options{}) {}
  NetworkSim(Topology topology, Options options)
      : topology_(std::move(topology)), options_(options), table_(std::make_shared<const Table>()) {}

  const Topology& topology() const noexcept { return topology_; }
  ReconfigMode mode() const {
    std::scoped_lock lock(write_mutex_);
    return options_.mode;
  }
  std::optional<Epoch> current_epoch() const { return snapshot()->current_epoch; }
  std::optional<ChainOrder> current_order() const { return snapshot()->current_order; }
  double now() const {
    std::scoped_lock lock(write_mutex_);
    return now_;
  }

  std::vector<FlowRule> rules() const {
    std::vector<FlowRule> out;
    for (const auto& [m, e] : snapshot()->rules) out.push_back(e.rule);
    return out;
  }

  /// Epochs that still have rules installed.
  std::set<Epoch> live_epochs() const {
    std::set<Epoch> out;
    for (const auto& [m, e] : snapshot()->rules)
      if (m.epoch) out.insert(*m.epoch);
    return out;
  }

  void advance_to(double t) {
    std::scoped_lock lock(write_mutex_);
    now_ = std::max(now_, t);
  }

  /// Installs flows so a packet stamped with `epoch` visits exactly `order`,
  /// then the protected service. Rules of older epochs stay until they idle
  /// out; in legacy mode the epoch-agnostic rules are rewritten in place.
  FlowDelta install_order(const ChainOrder& order, Epoch epoch) {
    std::scoped_lock lock(write_mutex_);
    return install_locked(order, epoch, options_.mode);
  }

  /// Installs one raw rule as-is, replacing any rule with the same match.
  /// Bypasses chain validation; meant for fault injection.
  void add_rule(const FlowRule& rule) {
    std::scoped_lock lock(write_mutex_);
    auto next = std::make_shared<Table>(*table_);
    next->rules.insert_or_assign(rule.match, Entry{rule, std::nullopt});
    table_ = std::move(next);
  }

  /// Walks a packet that enters from the external network already carrying
  /// `stamped_epoch`.
  PacketTrace inject_probe(Epoch stamped_epoch, const ClassId& traffic_class = ClassId{}) const {
    InFlightPacket p;
    p.id = next_packet_id();
    p.stamp = stamped_epoch;
    p.traffic_class = traffic_class;
    return walk(*snapshot(), p);
  }

  /// Walks an external packet; the ingress stamps it with the current epoch
  /// in epoch_counter mode.
  PacketTrace inject_packet(const ClassId& traffic_class = ClassId{}) const {
    auto snap = snapshot();
    InFlightPacket p;
    p.id = next_packet_id();
    p.stamp = snap->current_epoch;
    p.traffic_class = traffic_class;
    return walk(*snap, p);
  }

  /// Continues an in-flight packet from its current position.
  PacketTrace resume(const InFlightPacket& packet) const { return walk(*snapshot(), packet); }

  /// Moves from `old_order` to `new_order` and replays every in-flight packet
  /// against the mutated table, classifying drop / duplicate / skip hazards
  /// against each packet's required chain.
  ReconfigResult reconfigure(const ChainOrder& old_order, const ChainOrder& new_order,
                             const std::vector<InFlightPacket>& in_flight, ReconfigMode mode) {
    ReconfigResult result;
    std::shared_ptr<const Table> snap;
    {
      std::scoped_lock lock(write_mutex_);
      options_.mode = mode;
      if (old_order != new_order || table_->current_order != new_order) {
        const Epoch next = table_->current_epoch ? static_cast<Epoch>(*table_->current_epoch + 1) : Epoch{0};
        result.delta = install_locked(new_order, next, mode);
      }
      snap = table_;
    }
    for (const auto& p : in_flight) {
      auto trace = walk(*snap, p);
      classify(p, trace, result.hazards);
      result.traces.push_back(std::move(trace));
    }
    return result;
  }

  /// Removes rules of superseded epochs idle longer than their expiry.
  /// Rules of the current epoch are never removed.
  std::size_t expire_flows(double now) {
    std::scoped_lock lock(write_mutex_);
    now_ = std::max(now_, now);
    auto next = std::make_shared<Table>(*table_);
    std::size_t removed = 0;
    for (auto it = next->rules.begin(); it != next->rules.end();) {
      const auto& e = it->second;
      if (e.superseded_at && now_ - *e.superseded_at > e.rule.idle_expiry) {
        it = next->rules.erase(it);
        ++removed;
      } else {
        ++it;
      }
    }
    if (removed) table_ = std::move(next);
    return removed;
  }

  /// Hop budget before a walk is declared looping.
  std::size_t hop_limit() const noexcept { return 4 * std::max<std::size_t>(1, topology_.function_count()); }

 private:
  struct Entry {
    FlowRule rule;
    std::optional<double> superseded_at;
  };

  struct Table {
    std::map<FlowMatch, Entry> rules;
    std::optional<Epoch> current_epoch;
    std::optional<ChainOrder> current_order;
    std::map<Epoch, ChainOrder> epoch_orders;
  };

  std::shared_ptr<const Table> snapshot() const {
    std::scoped_lock lock(write_mutex_);
    return table_;
  }

  PacketId next_packet_id() const {
    std::scoped_lock lock(id_mutex_);
    return ++last_packet_id_;
  }

  std::map<FlowMatch, FlowRule> desired_rules(const ChainOrder& order, std::optional<Epoch> epoch) const {
    std::map<FlowMatch, FlowRule> out;
    const int prio = epoch ? FlowRule::kEpochPriority : FlowRule::kAgnosticPriority;
    Port in = Topology::kIngressPort;
    for (const auto& f : order) {
      const auto& att = topology_.at(f);
      FlowMatch m{in, epoch};
      out[m] = FlowRule{m, att.to_function, prio, options_.idle_expiry};
      in = att.from_function;
    }
    FlowMatch m{in, epoch};
    out[m] = FlowRule{m, Topology::kServicePort, prio, options_.idle_expiry};
    return out;
  }

  FlowDelta install_locked(const ChainOrder& order, Epoch epoch, ReconfigMode mode) {
    if (order.has_duplicates()) throw Error(ErrorCode::invalid_order, "order '" + order.to_string() + "' repeats a function");
    for (const auto& f : order) topology_.at(f);

    auto next = std::make_shared<Table>(*table_);
    FlowDelta delta;
    const auto wanted = desired_rules(order, mode == ReconfigMode::epoch_counter ? std::optional<Epoch>(epoch) : std::nullopt);

    if (mode == ReconfigMode::epoch_counter) {
      auto known = next->epoch_orders.find(epoch);
      const bool live = std::ranges::any_of(next->rules, [&](const auto& kv) { return kv.first.epoch == epoch; });
      if (live && known != next->epoch_orders.end() && known->second != order)
        throw Error(ErrorCode::epoch_collision,
                    "epoch " + std::to_string(epoch) + " still has live flows for another order");
    } else {
      // Epoch-agnostic rules that the new chain no longer uses.
      for (auto it = next->rules.begin(); it != next->rules.end();) {
        if (!it->first.epoch && !wanted.contains(it->first)) {
          delta.removed.push_back(it->second.rule);
          it = next->rules.erase(it);
        } else {
          ++it;
        }
      }
    }

    for (const auto& [m, rule] : wanted) {
      auto it = next->rules.find(m);
      if (it == next->rules.end()) {
        next->rules.emplace(m, Entry{rule, std::nullopt});
        delta.added.push_back(rule);
      } else if (it->second.rule != rule) {
        it->second = Entry{rule, std::nullopt};
        delta.modified.push_back(rule);
      } else {
        it->second.superseded_at.reset();
      }
    }

    if (mode == ReconfigMode::epoch_counter) {
      for (auto& [m, e] : next->rules)
        if (m.epoch && *m.epoch != epoch && !e.superseded_at) e.superseded_at = now_;
    }

    if (delta.empty() && next->current_epoch == epoch && next->current_order == order) return delta;
    next->current_epoch = epoch;
    next->current_order = order;
    next->epoch_orders[epoch] = order;
    table_ = std::move(next);
    return delta;
  }

  static const FlowRule* lookup(const Table& table, Port in_port, std::optional<Epoch> stamp) {
    if (stamp) {
      auto it = table.rules.find(FlowMatch{in_port, stamp});
      if (it != table.rules.end()) return &it->second.rule;
    }
    auto it = table.rules.find(FlowMatch{in_port, std::nullopt});
    return it == table.rules.end() ? nullptr : &it->second.rule;
  }

  PacketTrace walk(const Table& table, const InFlightPacket& packet) const {
    PacketTrace trace;
    trace.packet_id = packet.id;
    trace.injected_epoch = packet.stamp;
    trace.visited = packet.visited;

    auto pass_function = [&](const FunctionAttachment& att) -> bool {
      trace.visited.push_back(att.function);
      if (!packet.traffic_class.empty() && att.filtered_classes.contains(packet.traffic_class)) {
        trace.outcome = TraceOutcome::dropped_by_function;
        return false;
      }
      return true;
    };

    Port at = Topology::kIngressPort;
    if (const auto* pos = std::get_if<AtSwitchPort>(&packet.position)) {
      at = pos->port;
    } else {
      const auto& att = topology_.at(std::get<InsideFunction>(packet.position).function);
      if (!pass_function(att)) return trace;
      at = att.from_function;
    }

    for (std::size_t hops = 0;; ++hops) {
      if (hops >= hop_limit()) {
        trace.outcome = TraceOutcome::dropped_no_flow;
        trace.loop_aborted = true;
        return trace;
      }
      const FlowRule* rule = lookup(table, at, packet.stamp);
      if (!rule) {
        trace.hops.push_back({at, std::nullopt, std::nullopt});
        trace.outcome = TraceOutcome::dropped_no_flow;
        return trace;
      }
      if (rule->out_port == Topology::kServicePort) {
        trace.hops.push_back({at, rule->out_port, std::nullopt});
        trace.outcome = TraceOutcome::delivered;
        return trace;
      }
      const auto* att = topology_.by_to_port(rule->out_port);
      if (!att) {
        trace.hops.push_back({at, rule->out_port, std::nullopt});
        trace.outcome = TraceOutcome::dropped_no_flow;
        return trace;
      }
      trace.hops.push_back({at, rule->out_port, att->function});
      if (!pass_function(*att)) return trace;
      at = att->from_function;
    }
  }

  static void classify(const InFlightPacket& p, const PacketTrace& trace, std::vector<Hazard>& out) {
    if (trace.outcome == TraceOutcome::dropped_no_flow) {
      out.push_back({HazardKind::drop, p.id, trace.loop_aborted ? "loop guard" : "no matching flow"});
    }
    if (trace.visits_any_twice()) {
      out.push_back({HazardKind::duplicate_traversal, p.id, ChainOrder(trace.visited).to_string()});
    }
    if (trace.outcome == TraceOutcome::delivered) {
      std::vector<std::string> missed;
      for (const auto& f : p.required)
        if (std::ranges::find(trace.visited, f) == trace.visited.end()) missed.push_back(f.str());
      if (!missed.empty()) {
        std::string detail = "skipped";
        for (const auto& m : missed) detail += " " + m;
        out.push_back({HazardKind::skip, p.id, detail});
      }
    }
  }

  Topology topology_;
  Options options_;
  mutable std::mutex write_mutex_;
  std::shared_ptr<const Table> table_;
  double now_ = 0.0;
  mutable std::mutex id_mutex_;
  mutable PacketId last_packet_id_ = 0;
};

/// In-flight packets a chain in `order` could hold at one instant: one at the
/// ingress and one inside each function.
inline std::vector<InFlightPacket> packets_along(const ChainOrder& order, std::optional<Epoch> stamp,
                                                 PacketId first_id = 1) {
  std::vector<InFlightPacket> out;
  InFlightPacket p;
  p.stamp = stamp;
  p.required = order;
  p.id = first_id;
  out.push_back(p);
  for (std::size_t i = 0; i < order.size(); ++i) {
    InFlightPacket q;
    q.id = first_id + i + 1;
    q.stamp = stamp;
    q.required = order;
    q.visited.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(i));
    q.position = InsideFunction{order[i]};
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace ssfc
