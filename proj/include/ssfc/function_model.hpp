#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>

#include "ssfc/core.hpp"
#include "ssfc/traffic_model.hpp"

namespace ssfc {

/// Linear resource-demand generation: a constant cost per unit (packet) plus
/// a cost proportional to unit size. Demand units are abstract.
struct DemandModel {
  double per_unit_cost = 0.0;
  double per_byte_cost = 0.0;
};

struct SecurityFunctionSpec {
  FunctionId id;
  std::string display_name;
  std::set<ClassId> filtered_classes;  // empty only for pass-through test functions
  double per_instance_throughput = 0.0;  // Mbit/s
  DemandModel demand;

  void validate() const {
    if (id.empty()) throw Error(ErrorCode::invalid_argument, "security function with empty id");
    if (!(per_instance_throughput > 0.0))
      throw Error(ErrorCode::invalid_argument,
                  "function '" + id.str() + "': per-instance throughput must be > 0");
    if (!(demand.per_unit_cost >= 0.0) || !(demand.per_byte_cost >= 0.0))
      throw Error(ErrorCode::invalid_argument, "function '" + id.str() + "': negative demand coefficient");
  }
};

namespace detail {
// Absorbs representation error from k * capacity round trips so an exact
// multiple of the capacity does not round up to k + 1.
inline constexpr double kInstanceSlack = 1e-9;
}  // namespace detail

/// Replicas needed to carry the offered (pre-filter) load. A deployed chain
/// position always has at least one instance.
inline std::int64_t instances_required(const SecurityFunctionSpec& spec, double offered_bandwidth) {
  if (!(spec.per_instance_throughput > 0.0))
    throw Error(ErrorCode::invalid_argument, "per-instance throughput must be > 0");
  if (!(offered_bandwidth >= 0.0)) throw Error(ErrorCode::invalid_argument, "offered bandwidth must be >= 0");
  const double ratio = offered_bandwidth / spec.per_instance_throughput;
  const double needed = std::ceil(ratio * (1.0 - detail::kInstanceSlack));
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(needed));
}

inline std::int64_t instances_required(const SecurityFunctionSpec& spec, const TrafficComposition& offered) {
  return instances_required(spec, offered.total_bandwidth());
}

inline double resource_demand(const SecurityFunctionSpec& spec, std::uint64_t packets, std::uint64_t bytes) {
  return static_cast<double>(packets) * spec.demand.per_unit_cost +
         static_cast<double>(bytes) * spec.demand.per_byte_cost;
}

}  // namespace ssfc
