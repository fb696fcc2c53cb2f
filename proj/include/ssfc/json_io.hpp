#pragma once

// JSON views of controller state, shared by the HTTP API and run summaries.

#include <string>

#include <nlohmann/json.hpp>

#include "ssfc/clock.hpp"
#include "ssfc/fcc_controller.hpp"

namespace ssfc {

inline nlohmann::json to_json(const ChainOrder& order) {
  auto j = nlohmann::json::array();
  for (const auto& id : order) j.push_back(id.str());
  return j;
}

inline ChainOrder order_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::invalid_order, "order must be an array of group ids");
  ChainOrder out;
  for (const auto& e : j) {
    if (!e.is_string()) throw Error(ErrorCode::invalid_order, "order entries must be strings");
    out.ids.emplace_back(e.get<std::string>());
  }
  return out;
}

inline nlohmann::json to_json(const ReorderEvent& ev) {
  nlohmann::json counters = nlohmann::json::object();
  for (const auto& [g, c] : ev.counters) counters[g.str()] = c;
  return {{"time", iso8601(ev.time)},
          {"trigger", std::string(to_string(ev.trigger))},
          {"from", to_json(ev.from)},
          {"to", to_json(ev.to)},
          {"epoch", ev.epoch},
          {"counters", counters}};
}

inline nlohmann::json to_json(const ControllerStatus& s) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : s.groups)
    groups.push_back({{"group_id", g.group.str()},
                      {"attack_counter", g.attack_counter},
                      {"attack_bandwidth_mbps", g.attack_bandwidth_accum}});
  nlohmann::json registry = nlohmann::json::array();
  for (const auto& r : s.registry)
    registry.push_back({{"function_id", r.function_id.str()},
                        {"group_id", r.group_id.str()},
                        {"link_capacity_mbps", r.link_capacity},
                        {"last_keepalive", iso8601(r.last_keepalive)},
                        {"attack_counter", r.attack_counter},
                        {"attack_bandwidth_mbps", r.attack_bandwidth_accum}});
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : s.recent_events) events.push_back(to_json(e));
  return {{"time", iso8601(s.time)},
          {"epoch", s.epoch},
          {"current_order", to_json(s.current_order)},
          {"default_order", to_json(s.default_order)},
          {"manual_active", s.manual_active},
          {"groups", groups},
          {"registry", registry},
          {"events", events}};
}

}  // namespace ssfc
