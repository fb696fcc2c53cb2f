#pragma once

// Experiment harness: the order calculator, the all-permutations trace check,
// and the attack-driven controller run.

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "ssfc/chain_evaluator.hpp"
#include "ssfc/fcc_controller.hpp"
#include "ssfc/json_io.hpp"
#include "ssfc/network_sim.hpp"
#include "ssfc/scenario.hpp"
#include "ssfc/wrapper_agent.hpp"

namespace ssfc {

// ---------------------------------------------------------------- table1

struct OrderTableRow {
  OrderEvaluation eval;
  std::size_t rank = 0;  // 1-based position in the ranking
  bool optimal = false;
};

struct OrderTable {
  std::vector<OrderTableRow> rows;  // permutations of the declared function sequence
  std::int64_t best_total = 0;
};

inline OrderTable order_table(const Scenario& sc) {
  if (sc.functions.empty()) throw Error(ErrorCode::scenario_invalid, "scenario declares no functions");
  if (!sc.composition) throw Error(ErrorCode::scenario_invalid, "scenario declares no composition");
  for (const auto& f : sc.functions)
    if (!(f.per_instance_throughput > 0.0))
      throw Error(ErrorCode::scenario_invalid, "function '" + f.id.str() + "' needs throughput_mbps");
  const auto ranked = rank_orders(*sc.composition, sc.functions);

  std::vector<FunctionId> declared;
  for (const auto& f : sc.functions) declared.push_back(f.id);

  OrderTable table;
  table.best_total = ranked.front().total_instances;
  for (auto& perm : permutations(declared)) {
    const ChainOrder order(std::move(perm));
    const auto pos = std::ranges::find(ranked, order, &OrderEvaluation::order);
    OrderTableRow row{*pos, static_cast<std::size_t>(pos - ranked.begin()) + 1, pos->total_instances == table.best_total};
    table.rows.push_back(std::move(row));
  }
  return table;
}

/// Text rendering; `sorted` lists rows by rank instead of declaration order.
inline std::string render_order_table(const OrderTable& table, bool sorted = false) {
  auto rows = table.rows;
  if (sorted) std::ranges::sort(rows, {}, &OrderTableRow::rank);

  std::size_t width = std::string_view("ordering").size();
  for (const auto& r : rows) width = std::max(width, r.eval.order.to_string().size());
  const std::size_t n = rows.empty() ? 0 : rows.front().eval.per_function_instances.size();

  std::string out = fmt::format("{:<{}}", "ordering", width);
  for (std::size_t i = 0; i < n; ++i) out += fmt::format(" {:>5}", fmt::format("#{}", i + 1));
  out += fmt::format(" {:>6} {:>5}\n", "total", "rank");
  for (const auto& r : rows) {
    out += fmt::format("{:<{}}", r.eval.order.to_string(), width);
    for (const auto& [id, count] : r.eval.per_function_instances) out += fmt::format(" {:>5}", count);
    out += fmt::format(" {:>6} {:>5}{}\n", r.eval.total_instances, r.rank, r.optimal ? " *" : "");
  }
  std::vector<std::string> best;
  for (const auto& r : table.rows)
    if (r.optimal) best.push_back(r.eval.order.to_string());
  std::ranges::sort(best);
  out += fmt::format("optimal (total {}): {}\n", table.best_total, fmt::join(best, "; "));
  return out;
}

// ---------------------------------------------------------------- trace

struct TraceCheck {
  ChainOrder order;
  PacketTrace trace;
  bool pass = false;
};

inline constexpr std::size_t kMaxTracedFunctions = 5;

/// Installs every permutation of the attached functions on a fresh switch
/// and checks that a same-epoch probe visits exactly that order.
inline std::vector<TraceCheck> trace_orders(const Topology& topology, ReconfigMode mode = ReconfigMode::epoch_counter) {
  if (topology.function_count() > kMaxTracedFunctions)
    throw Error(ErrorCode::too_many_functions, "trace supports at most 5 functions");
  std::vector<TraceCheck> out;
  Epoch epoch = 0;
  for (auto& perm : permutations(topology.functions())) {
    NetworkSim net(topology, {mode, 30.0});
    ChainOrder order(std::move(perm));
    net.install_order(order, epoch);
    auto trace = net.inject_probe(epoch);
    const bool pass = trace.outcome == TraceOutcome::delivered && trace.visited == order.ids;
    out.push_back({std::move(order), std::move(trace), pass});
    ++epoch;
  }
  return out;
}

inline std::string render_trace_matrix(const std::vector<TraceCheck>& checks) {
  std::size_t width = std::string_view("installed order").size();
  for (const auto& c : checks) width = std::max(width, c.order.to_string().size());
  std::string out = fmt::format("{:<{}}  {:<{}}  {}\n", "installed order", width, "visited", width, "result");
  std::size_t passed = 0;
  for (const auto& c : checks) {
    passed += c.pass ? 1 : 0;
    out += fmt::format("{:<{}}  {:<{}}  {}\n", c.order.to_string(), width, ChainOrder(c.trace.visited).to_string(), width,
                       c.pass ? "pass" : fmt::format("FAIL ({})", to_string(c.trace.outcome)));
  }
  out += fmt::format("{}/{} orders traced correctly\n", passed, checks.size());
  return out;
}

// ---------------------------------------------------------------- run

struct TimelineRow {
  double time = 0.0;
  Trigger trigger = Trigger::initial;
  ChainOrder order;
  std::uint64_t epoch = 0;
  std::map<FunctionId, std::int64_t> counters;
};

struct RunArtifacts {
  std::vector<std::string> event_log;
  std::vector<TimelineRow> timeline;
  std::map<HazardKind, std::size_t> hazards;
  std::vector<PacketTrace> probe_traces;
  std::size_t probe_mismatches = 0;
  nlohmann::json summary;
  std::string trace_log;  // hop lines of every probe
};

struct RunOptions {
  std::optional<std::uint64_t> seed;
  bool realtime = false;
  /// Keeps running with no attacks after the last phase until this returns true.
  std::function<bool()> keep_running;
  /// Polled every tick; returning true ends the run early.
  std::function<bool()> stop;
  /// Called once the controller exists, e.g. to expose it over HTTP.
  std::function<void(FccController&)> on_controller;
  std::function<void(const std::string&)> on_event;
};

inline std::string format_counters(const std::map<FunctionId, std::int64_t>& counters) {
  std::vector<std::string> parts;
  for (const auto& [g, c] : counters) parts.push_back(fmt::format("{}:{}", g.str(), c));
  return fmt::format("{}", fmt::join(parts, ","));
}

inline std::string timeline_csv(const std::vector<TimelineRow>& rows) {
  std::string out = "time,trigger,order,epoch\n";
  for (const auto& r : rows)
    out += fmt::format("{:.3f},{},{},{}\n", r.time, to_string(r.trigger), r.order.to_string("-"), r.epoch);
  return out;
}

/// Drives the controller, wrappers and switch tick by tick in a fixed order:
/// wrapper keepalives and reports, scheduled manual orders, controller checks,
/// flow expiry, probes. Deterministic for a given scenario and seed.
inline RunArtifacts run_scenario(const Scenario& sc, const RunOptions& options = {}) {
  if (!sc.controller) throw Error(ErrorCode::scenario_invalid, "scenario has no controller section");
  if (sc.phases.empty()) throw Error(ErrorCode::scenario_invalid, "scenario has no phases");
  const std::uint64_t seed = options.seed.value_or(sc.seed);

  RunArtifacts art;
  std::mutex art_mutex;
  // Real-time runs stamp API timestamps with wall-clock time; logs stay
  // relative to the start of the run.
  const double origin = options.realtime ? std::floor(SystemClock().now()) : 0.0;
  auto clock = std::make_shared<ManualClock>(origin);
  NetworkSim net(sc.topology, {sc.mode, sc.idle_expiry});
  PacketId in_flight_ids = 1'000'000;

  std::mutex log_mutex;
  auto log = [&](std::string line) {
    std::scoped_lock lock(log_mutex);
    if (options.on_event) options.on_event(line);
    art.event_log.push_back(std::move(line));
  };

  // Runs under the controller's lock, possibly on an HTTP thread.
  ChainEnforcer enforcer = [&](const ChainOrder& from, const ChainOrder& to, std::uint64_t epoch) {
    if (from.empty() && !net.current_order()) {
      net.install_order(to, static_cast<Epoch>(epoch));
      return;
    }
    auto in_flight = packets_along(from, net.current_epoch(), in_flight_ids);
    in_flight_ids += in_flight.size();
    auto result = net.reconfigure(from, to, in_flight, sc.mode);
    for (const auto& h : result.hazards) {
      {
        std::scoped_lock lock(art_mutex);
        ++art.hazards[h.kind];
      }
      log(fmt::format("t={:.3f} hazard kind={} packet={} {}", clock->now() - origin, to_string(h.kind), h.packet_id, h.detail));
    }
  };

  FccController controller(*sc.controller, clock, enforcer);
  std::size_t events_seen = controller.events().size();
  log(fmt::format("t={:.3f} initial order={} epoch=0 mode={}", 0.0, sc.controller->default_order.to_string("-"),
                  to_string(sc.mode)));
  if (options.on_controller) options.on_controller(controller);

  WrapperTiming timing{clock};
  std::vector<std::unique_ptr<WrapperAgent<DirectTransport>>> wrappers;
  for (const auto& wc : sc.wrappers) {
    auto agent = std::make_unique<WrapperAgent<DirectTransport>>(wc, DirectTransport(controller), timing,
                                                                 seed ^ stable_hash(wc.function_id.str()));
    const auto st = agent->start();
    log(fmt::format("t={:.3f} register {} group={} status={}", 0.0, wc.function_id.str(), wc.group_id.str(), to_string(st)));
    wrappers.push_back(std::move(agent));
  }

  // Logs reorders not seen yet, whatever applied them (checks, scheduled or
  // HTTP manual orders, membership changes).
  auto log_new_events = [&] {
    const auto all = controller.events();
    for (; events_seen < all.size(); ++events_seen) {
      const auto& ev = all[events_seen];
      log(fmt::format("t={:.3f} reorder trigger={} from={} to={} epoch={} counters={}", ev.time - origin, to_string(ev.trigger),
                      ev.from.to_string("-"), ev.to.to_string("-"), ev.epoch, format_counters(ev.counters)));
    }
  };

  const auto benign = sc.benign_class().value_or(ClassId{});
  const double total = sc.duration();
  std::size_t phase_index = static_cast<std::size_t>(-1);
  double phase_end = 0.0;
  std::size_t manual_next = 0;
  auto manual_orders = sc.manual_orders;
  std::ranges::stable_sort(manual_orders, {}, &ScheduledOrder::time);

  auto set_phase = [&](std::size_t i) {
    phase_index = i;
    const AttackPhase* phase = i < sc.phases.size() ? &sc.phases[i] : nullptr;
    for (auto& w : wrappers) {
      std::vector<ClassReportSpec> sources;
      if (phase) {
        auto it = phase->reports.find(w->config().function_id);
        if (it != phase->reports.end()) sources = it->second;
      }
      w->set_attack_sources(std::move(sources));
    }
    if (phase) log(fmt::format("t={:.3f} phase {} duration={:.3f}", clock->now() - origin, phase->name, phase->duration));
    else log(fmt::format("t={:.3f} phase idle", clock->now() - origin));
  };

  const auto steps = static_cast<std::int64_t>(std::llround(total / sc.tick));
  const auto probe_every = std::max<std::int64_t>(1, std::llround(sc.probe_period / sc.tick));
  for (std::int64_t step = 1;; ++step) {
    const bool past_end = step > steps;
    if (past_end && !(options.keep_running && options.keep_running())) break;
    if (options.stop && options.stop()) break;
    if (options.realtime) std::this_thread::sleep_for(std::chrono::duration<double>(sc.tick));

    const double t = static_cast<double>(step) * sc.tick;
    clock->set(origin + t);
    net.advance_to(t);
    // A phase covers (start, end]; the first tick after its end belongs to the next one.
    if (past_end) {
      if (phase_index != sc.phases.size()) set_phase(sc.phases.size());
    } else {
      while (phase_index == static_cast<std::size_t>(-1) || (t > phase_end + 1e-9 && phase_index + 1 < sc.phases.size())) {
        const std::size_t next = phase_index == static_cast<std::size_t>(-1) ? 0 : phase_index + 1;
        phase_end += sc.phases[next].duration;
        clock->set(origin + t);
        set_phase(next);
      }
    }

    for (auto& w : wrappers) w->step();

    while (manual_next < manual_orders.size() && manual_orders[manual_next].time <= t + 1e-9) {
      controller.apply_order(manual_orders[manual_next].order, Trigger::manual);
      ++manual_next;
    }

    controller.tick();
    log_new_events();
    if (const auto removed = net.expire_flows(t)) log(fmt::format("t={:.3f} expired {} stale flows", t, removed));

    if (step % probe_every == 0) {
      auto trace = net.inject_packet(benign);
      const auto expected = net.current_order().value_or(ChainOrder{});
      const bool ok = trace.outcome == TraceOutcome::delivered && trace.visited == expected.ids;
      if (!ok) ++art.probe_mismatches;
      std::ostringstream hops;
      write_trace(hops, trace, sc.topology.switch_name());
      art.trace_log += hops.str();
      log(fmt::format("t={:.3f} probe id={} epoch={} visited={} outcome={}{}", t, trace.packet_id,
                      trace.injected_epoch ? std::to_string(*trace.injected_epoch) : "-",
                      ChainOrder(trace.visited).to_string("-"), to_string(trace.outcome), ok ? "" : " MISMATCH"));
      art.probe_traces.push_back(std::move(trace));
    }
  }

  log_new_events();
  for (const auto& ev : controller.events()) art.timeline.push_back({ev.time - origin, ev.trigger, ev.to, ev.epoch, ev.counters});

  WrapperStats totals;
  for (const auto& w : wrappers) {
    const auto s = w->stats();
    totals.observations += s.observations;
    totals.rejected_locally += s.rejected_locally;
    totals.sent += s.sent;
    totals.refused_by_fcc += s.refused_by_fcc;
    totals.keepalives += s.keepalives;
  }

  std::map<std::string, std::size_t> triggers;
  for (const auto& r : art.timeline) ++triggers[std::string(to_string(r.trigger))];
  nlohmann::json hazards = {{"drop", art.hazards[HazardKind::drop]},
                            {"duplicate_traversal", art.hazards[HazardKind::duplicate_traversal]},
                            {"skip", art.hazards[HazardKind::skip]}};
  const auto status = controller.status();
  art.summary = {{"scenario", sc.name},
                 {"seed", seed},
                 {"duration_s", clock->now() - origin},
                 {"mode", std::string(to_string(sc.mode))},
                 {"default_order", to_json(status.default_order)},
                 {"final_order", to_json(status.current_order)},
                 {"epoch", status.epoch},
                 {"reorders", art.timeline.size() - 1},
                 {"triggers", triggers},
                 {"hazards", hazards},
                 {"probes", {{"total", art.probe_traces.size()}, {"mismatched", art.probe_mismatches}}},
                 {"reports",
                  {{"observed", totals.observations},
                   {"rejected_locally", totals.rejected_locally},
                   {"sent", totals.sent},
                   {"refused_by_fcc", totals.refused_by_fcc}}},
                 {"keepalives", totals.keepalives}};
  return art;
}

}  // namespace ssfc
