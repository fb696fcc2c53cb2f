#pragma once

// Scenario files (YAML). Every section is optional at parse time; each
// command checks for the sections it needs. Validation problems are
// collected as `file:line: message` diagnostics.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "ssfc/chain_order.hpp"
#include "ssfc/fcc_controller.hpp"
#include "ssfc/function_model.hpp"
#include "ssfc/network_sim.hpp"
#include "ssfc/traffic_model.hpp"
#include "ssfc/wrapper_agent.hpp"

namespace ssfc {

struct AttackPhase {
  std::string name;
  double duration = 0.0;
  std::map<InstanceId, std::vector<ClassReportSpec>> reports;  // wrappers not listed stay silent
};

struct ScheduledOrder {
  double time = 0.0;
  ChainOrder order;
};

struct Scenario {
  std::string name;
  std::filesystem::path source;
  std::uint64_t seed = 1;

  std::vector<TrafficClass> classes;
  std::optional<TrafficComposition> composition;
  std::vector<SecurityFunctionSpec> functions;
  Topology topology;

  ReconfigMode mode = ReconfigMode::epoch_counter;
  double idle_expiry = 30.0;

  std::optional<ControllerConfig> controller;
  std::vector<WrapperConfig> wrappers;
  std::vector<AttackPhase> phases;
  std::vector<ScheduledOrder> manual_orders;

  double tick = 1.0;
  double probe_period = 30.0;

  double duration() const {
    double total = 0.0;
    for (const auto& p : phases) total += p.duration;
    return total;
  }

  const SecurityFunctionSpec* function(const FunctionId& id) const {
    for (const auto& f : functions)
      if (f.id == id) return &f;
    return nullptr;
  }

  std::optional<ClassId> benign_class() const {
    for (const auto& c : classes)
      if (c.is_benign()) return c.id;
    return std::nullopt;
  }
};

class ScenarioError : public Error {
 public:
  explicit ScenarioError(std::vector<std::string> diagnostics)
      : Error(ErrorCode::scenario_invalid, join(diagnostics)), diagnostics_(std::move(diagnostics)) {}
  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  static std::string join(const std::vector<std::string>& d) {
    std::string out;
    for (const auto& s : d) out += s + "\n";
    return out;
  }
  std::vector<std::string> diagnostics_;
};

namespace detail {

class ScenarioParser {
 public:
  explicit ScenarioParser(std::string file) : file_(std::move(file)) {}

  Scenario parse(const YAML::Node& root) {
    Scenario sc;
    if (!root.IsMap()) {
      fail(root, "scenario must be a mapping");
      throw ScenarioError(diags_);
    }
    known_keys(root, {"name", "seed", "classes", "composition", "functions", "topology", "network", "controller",
                      "wrappers", "run", "phases", "manual_orders"});
    sc.name = scalar<std::string>(root, "name", "");
    sc.seed = scalar<std::uint64_t>(root, "seed", 1);

    parse_classes(root["classes"], sc);
    parse_composition(root["composition"], sc);
    parse_functions(root["functions"], sc);
    parse_topology(root["topology"], sc);
    parse_network(root["network"], sc);
    parse_controller(root["controller"], sc);
    parse_wrappers(root["wrappers"], sc);
    parse_run(root["run"], sc);
    parse_phases(root["phases"], sc);
    parse_manual_orders(root["manual_orders"], sc);
    cross_check(root, sc);

    if (!diags_.empty()) throw ScenarioError(diags_);
    return sc;
  }

  void fail(const YAML::Node& at, const std::string& message) {
    const auto m = at.Mark();
    if (m.is_null()) diags_.push_back(file_ + ": " + message);
    else diags_.push_back(file_ + ":" + std::to_string(m.line + 1) + ": " + message);
  }

  const std::vector<std::string>& diagnostics() const noexcept { return diags_; }

 private:
  // Misspelled keys would otherwise fall back to defaults silently.
  void known_keys(const YAML::Node& n, std::initializer_list<std::string_view> keys) {
    if (!n.IsMap()) return;
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (std::ranges::find(keys, std::string_view(key)) == keys.end()) fail(kv.first, "unknown key '" + key + "'");
    }
  }

  template <class T>
  T scalar(const YAML::Node& parent, const char* key, T fallback) {
    const auto n = parent[key];
    if (!n) return fallback;
    return as<T>(n, key, fallback);
  }

  template <class T>
  T as(const YAML::Node& n, const std::string& what, T fallback) {
    try {
      return n.as<T>();
    } catch (const YAML::Exception&) {
      fail(n, "'" + what + "' has the wrong type");
      return fallback;
    }
  }

  template <class T>
  T required(const YAML::Node& parent, const char* key, T fallback) {
    const auto n = parent[key];
    if (!n) {
      fail(parent, std::string("missing '") + key + "'");
      return fallback;
    }
    return as<T>(n, key, fallback);
  }

  std::vector<FunctionId> id_list(const YAML::Node& n, const std::string& what) {
    std::vector<FunctionId> out;
    if (!n.IsSequence()) {
      fail(n, "'" + what + "' must be a list");
      return out;
    }
    for (const auto& e : n) out.emplace_back(as<std::string>(e, what, ""));
    return out;
  }

  void parse_classes(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    if (!n.IsSequence()) return fail(n, "'classes' must be a list");
    std::set<ClassId> seen;
    int benign = 0;
    for (const auto& c : n) {
      known_keys(c, {"id", "kind", "attack_type"});
      TrafficClass tc;
      tc.id = ClassId(required<std::string>(c, "id", ""));
      const auto kind = scalar<std::string>(c, "kind", "attack");
      if (kind == "benign") {
        tc.kind = ClassKind::benign;
        ++benign;
      } else if (kind == "attack") {
        tc.kind = ClassKind::attack;
        tc.attack_type = scalar<std::string>(c, "attack_type", tc.id.str());
      } else {
        fail(c["kind"], "class kind must be 'benign' or 'attack'");
      }
      if (!seen.insert(tc.id).second) fail(c, "duplicate class id '" + tc.id.str() + "'");
      sc.classes.push_back(tc);
    }
    if (benign != 1) fail(n, "exactly one class must have kind 'benign' (found " + std::to_string(benign) + ")");
  }

  void parse_composition(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    known_keys(n, {"classes", "total_bandwidth_mbps", "total_packet_rate"});
    const auto entries = n["classes"];
    if (!entries || !entries.IsSequence()) return fail(n, "composition needs a 'classes' list");
    const double total_bw = scalar<double>(n, "total_bandwidth_mbps", 0.0);
    const double total_pps = scalar<double>(n, "total_packet_rate", 0.0);
    std::vector<ClassLoad> loads;
    double share_sum = 0.0;
    bool by_share = false;
    for (const auto& e : entries) {
      known_keys(e, {"class", "share", "bandwidth_mbps", "packet_rate"});
      ClassLoad load;
      load.id = ClassId(required<std::string>(e, "class", ""));
      if (e["share"]) {
        by_share = true;
        const double s = as<double>(e["share"], "share", 0.0);
        if (s < 0.0 || s > 1.0) fail(e["share"], "share must be in [0,1]");
        share_sum += s;
        load.bandwidth = s * total_bw;
        load.packet_rate = s * total_pps;
      } else {
        load.bandwidth = required<double>(e, "bandwidth_mbps", 0.0);
        load.packet_rate = scalar<double>(e, "packet_rate", 0.0);
      }
      if (load.bandwidth < 0.0 || load.packet_rate < 0.0) fail(e, "rates and bandwidths must be >= 0");
      loads.push_back(load);
    }
    if (by_share) {
      if (!(total_bw > 0.0)) fail(n, "share-based composition needs total_bandwidth_mbps > 0");
      if (std::abs(share_sum - 1.0) > 1e-9) fail(n, "shares sum to " + std::to_string(share_sum) + ", expected 1");
    }
    // Declared classes missing from the list carry no load but stay
    // addressable, so any function may filter them.
    if (!sc.classes.empty()) {
      std::vector<ClassLoad> ordered;
      for (const auto& c : sc.classes) {
        auto it = std::ranges::find(loads, c.id, &ClassLoad::id);
        ordered.push_back(it != loads.end() ? *it : ClassLoad{c.id, 0.0, 0.0});
      }
      for (const auto& l : loads)
        if (std::ranges::find(sc.classes, l.id, &TrafficClass::id) == sc.classes.end()) ordered.push_back(l);
      loads = std::move(ordered);
    }
    try {
      sc.composition = TrafficComposition(std::move(loads));
    } catch (const Error& e) {
      fail(n, e.what());
    }
  }

  void parse_functions(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    if (!n.IsSequence()) return fail(n, "'functions' must be a list");
    for (const auto& f : n) {
      known_keys(f, {"id", "name", "filters", "throughput_mbps", "demand"});
      SecurityFunctionSpec spec;
      spec.id = FunctionId(required<std::string>(f, "id", ""));
      spec.display_name = scalar<std::string>(f, "name", spec.id.str());
      if (const auto filters = f["filters"]) {
        if (!filters.IsSequence()) fail(filters, "'filters' must be a list of class ids");
        else
          for (const auto& c : filters) spec.filtered_classes.emplace(as<std::string>(c, "filters", ""));
      }
      spec.per_instance_throughput = scalar<double>(f, "throughput_mbps", 0.0);
      if (f["throughput_mbps"] && !(spec.per_instance_throughput > 0.0))
        fail(f["throughput_mbps"], "throughput_mbps must be > 0");
      if (const auto d = f["demand"]) {
        spec.demand.per_unit_cost = scalar<double>(d, "per_unit", 0.0);
        spec.demand.per_byte_cost = scalar<double>(d, "per_byte", 0.0);
        if (spec.demand.per_unit_cost < 0.0 || spec.demand.per_byte_cost < 0.0)
          fail(d, "demand coefficients must be >= 0");
      }
      if (sc.function(spec.id)) fail(f, "duplicate function id '" + spec.id.str() + "'");
      sc.functions.push_back(spec);
      function_nodes_.insert_or_assign(spec.id, static_cast<const YAML::Node&>(f));
    }
  }

  void parse_topology(const YAML::Node& n, Scenario& sc) {
    std::vector<FunctionId> attach;
    std::string sw = "s1";
    if (n) {
      known_keys(n, {"switch", "functions"});
      sw = scalar<std::string>(n, "switch", "s1");
      if (n["functions"]) attach = id_list(n["functions"], "topology.functions");
    }
    if (attach.empty())
      for (const auto& f : sc.functions) attach.push_back(f.id);
    Topology topo({}, sw);
    for (const auto& id : attach) {
      const auto* spec = sc.function(id);
      try {
        topo.attach(id, spec ? spec->filtered_classes : std::set<ClassId>{});
      } catch (const Error& e) {
        fail(n ? n : YAML::Node(), e.what());
      }
    }
    sc.topology = std::move(topo);
  }

  void parse_network(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    known_keys(n, {"mode", "idle_expiry"});
    const auto mode = scalar<std::string>(n, "mode", "epoch_counter");
    if (mode == "legacy") sc.mode = ReconfigMode::legacy;
    else if (mode == "epoch_counter") sc.mode = ReconfigMode::epoch_counter;
    else fail(n["mode"], "network.mode must be 'legacy' or 'epoch_counter'");
    sc.idle_expiry = scalar<double>(n, "idle_expiry", 30.0);
    if (!(sc.idle_expiry > 0.0)) fail(n["idle_expiry"], "idle_expiry must be > 0");
  }

  void parse_controller(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    known_keys(n, {"regular_threshold", "imminent_multiplier", "imminent_check_period", "regular_check_period",
                   "keepalive_timeout", "default_order"});
    ControllerConfig c;
    c.regular_threshold = scalar<std::int64_t>(n, "regular_threshold", 100);
    c.imminent_multiplier = scalar<std::int64_t>(n, "imminent_multiplier", 3);
    c.imminent_check_period = scalar<double>(n, "imminent_check_period", 10.0);
    c.regular_check_period = scalar<double>(n, "regular_check_period", 300.0);
    c.keepalive_timeout = scalar<double>(n, "keepalive_timeout", 30.0);
    if (n["default_order"]) c.default_order = ChainOrder(id_list(n["default_order"], "controller.default_order"));
    else c.default_order = ChainOrder(sc.topology.functions());
    try {
      c.validate();
    } catch (const Error& e) {
      fail(n, e.what());
    }
    sc.controller = c;
    controller_node_ = n;
  }

  void parse_wrappers(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    if (!n.IsSequence()) return fail(n, "'wrappers' must be a list");
    std::set<InstanceId> seen;
    for (const auto& w : n) {
      known_keys(w, {"id", "group", "link_capacity_mbps", "keepalive_period", "fcc_endpoint"});
      WrapperConfig wc;
      wc.function_id = InstanceId(required<std::string>(w, "id", ""));
      wc.group_id = FunctionId(required<std::string>(w, "group", ""));
      wc.link_capacity = required<double>(w, "link_capacity_mbps", 0.0);
      wc.keepalive_period = scalar<double>(w, "keepalive_period", 10.0);
      wc.fcc_endpoint = scalar<std::string>(w, "fcc_endpoint", "");
      try {
        wc.validate();
      } catch (const Error& e) {
        fail(w, e.what());
      }
      if (!seen.insert(wc.function_id).second) fail(w, "duplicate wrapper id '" + wc.function_id.str() + "'");
      if (!sc.topology.find(wc.group_id)) fail(w["group"] ? w["group"] : w, "wrapper group '" + wc.group_id.str() + "' is not attached");
      sc.wrappers.push_back(wc);
    }
  }

  void parse_run(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    known_keys(n, {"tick", "probe_period"});
    sc.tick = scalar<double>(n, "tick", 1.0);
    sc.probe_period = scalar<double>(n, "probe_period", 30.0);
    if (!(sc.tick > 0.0)) fail(n["tick"], "tick must be > 0");
    if (!(sc.probe_period > 0.0)) fail(n["probe_period"], "probe_period must be > 0");
  }

  void parse_phases(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    if (!n.IsSequence()) return fail(n, "'phases' must be a list");
    for (const auto& p : n) {
      known_keys(p, {"name", "duration", "reports"});
      AttackPhase phase;
      phase.name = scalar<std::string>(p, "name", "phase" + std::to_string(sc.phases.size() + 1));
      phase.duration = required<double>(p, "duration", 0.0);
      if (!(phase.duration > 0.0)) fail(p, "phase duration must be > 0");
      if (const auto r = p["reports"]) {
        if (!r.IsMap()) {
          fail(r, "'reports' must map wrapper ids to report sources");
        } else {
          for (const auto& kv : r) {
            const InstanceId wid(kv.first.as<std::string>());
            if (std::ranges::find(sc.wrappers, wid, &WrapperConfig::function_id) == sc.wrappers.end())
              fail(kv.first, "unknown wrapper '" + wid.str() + "'");
            if (!kv.second.IsSequence()) {
              fail(kv.second, "report sources must be a list");
              continue;
            }
            for (const auto& s : kv.second) {
              known_keys(s, {"class", "probability", "strength_mbps"});
              ClassReportSpec spec;
              spec.attack_class = ClassId(required<std::string>(s, "class", ""));
              spec.probability = required<double>(s, "probability", 0.0);
              spec.strength_mbps = scalar<double>(s, "strength_mbps", 1.0);
              if (spec.probability < 0.0 || spec.probability > 1.0) fail(s, "probability must be in [0,1]");
              if (!(spec.strength_mbps > 0.0)) fail(s, "strength_mbps must be > 0");
              if (!sc.classes.empty() &&
                  std::ranges::find(sc.classes, spec.attack_class, &TrafficClass::id) == sc.classes.end())
                fail(s, "unknown class '" + spec.attack_class.str() + "'");
              phase.reports[wid].push_back(spec);
            }
          }
        }
      }
      sc.phases.push_back(std::move(phase));
    }
  }

  void parse_manual_orders(const YAML::Node& n, Scenario& sc) {
    if (!n) return;
    if (!n.IsSequence()) return fail(n, "'manual_orders' must be a list");
    for (const auto& m : n) {
      known_keys(m, {"time", "order"});
      ScheduledOrder so;
      so.time = required<double>(m, "time", 0.0);
      if (m["order"]) so.order = ChainOrder(id_list(m["order"], "order"));
      else fail(m, "missing 'order'");
      if (sc.controller && !so.order.is_permutation_of(sc.controller->default_order.ids))
        fail(m, "manual order is not a permutation of the default order");
      sc.manual_orders.push_back(so);
    }
  }

  void cross_check(const YAML::Node& root, Scenario& sc) {
    std::set<ClassId> known;
    for (const auto& c : sc.classes) known.insert(c.id);
    for (const auto& f : sc.functions)
      for (const auto& c : f.filtered_classes)
        if (!known.empty() && !known.contains(c))
          fail(function_nodes_[f.id]["filters"], "function '" + f.id.str() + "' filters unknown class '" + c.str() + "'");
    if (sc.composition && !known.empty())
      for (const auto& e : sc.composition->entries())
        if (!known.contains(e.id)) fail(root["composition"], "composition uses unknown class '" + e.id.str() + "'");
    if (sc.controller) {
      for (const auto& g : sc.controller->default_order)
        if (!sc.topology.find(g))
          fail(controller_node_["default_order"] ? controller_node_["default_order"] : controller_node_,
               "default_order names unattached function '" + g.str() + "'");
    }
  }

  std::string file_;
  std::vector<std::string> diags_;
  std::map<FunctionId, YAML::Node> function_nodes_;
  YAML::Node controller_node_;
};

}  // namespace detail

inline Scenario parse_scenario(const std::string& text, const std::string& file = "<scenario>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ScenarioError({file + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg});
  }
  detail::ScenarioParser parser(file);
  auto sc = parser.parse(root);
  sc.source = file;
  return sc;
}

/// Accepts a YAML file, or a directory holding scenario.yaml, or a path that
/// names one once ".yaml" is appended.
inline std::filesystem::path resolve_scenario_path(const std::filesystem::path& p) {
  namespace fs = std::filesystem;
  if (fs::is_directory(p)) return p / "scenario.yaml";
  if (!fs::exists(p)) {
    auto with_ext = p;
    with_ext += ".yaml";
    if (fs::exists(with_ext)) return with_ext;
  }
  return p;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  const auto file = resolve_scenario_path(path);
  YAML::Node root;
  try {
    root = YAML::LoadFile(file.string());
  } catch (const YAML::BadFile&) {
    throw ScenarioError({file.string() + ": cannot read scenario file"});
  } catch (const YAML::ParserException& e) {
    throw ScenarioError({file.string() + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg});
  }
  detail::ScenarioParser parser(file.string());
  auto sc = parser.parse(root);
  sc.source = file;
  return sc;
}

}  // namespace ssfc
