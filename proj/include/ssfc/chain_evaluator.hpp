#pragma once

// Resource demand of a chain order: each position is sized on the traffic
// that survives the functions upstream of it. Putting the function that
// eliminates the dominant attack class first keeps that traffic off every
// later position.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "ssfc/chain_order.hpp"
#include "ssfc/function_model.hpp"
#include "ssfc/traffic_model.hpp"

namespace ssfc {

struct OrderEvaluation {
  ChainOrder order;
  std::vector<std::pair<FunctionId, std::int64_t>> per_function_instances;  // chain order
  std::int64_t total_instances = 0;
  std::vector<TrafficComposition> link_compositions;  // N+1 links
};

/// Upper bound for exhaustive ranking (8! = 40320 evaluations).
inline constexpr std::size_t kMaxRankedFunctions = 8;

inline OrderEvaluation evaluate_order(const ChainOrder& order, const TrafficComposition& input,
                                      std::span<const SecurityFunctionSpec> specs) {
  std::map<FunctionId, const SecurityFunctionSpec*> by_id;
  for (const auto& s : specs) by_id.emplace(s.id, &s);

  std::vector<SecurityFunctionSpec> chain;
  chain.reserve(order.size());
  for (const auto& id : order) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::unknown_function, "order references unregistered function '" + id.str() + "'");
    chain.push_back(*it->second);
  }
  if (order.has_duplicates() || order.size() != specs.size())
    throw Error(ErrorCode::invalid_order, "order '" + order.to_string() + "' is not a permutation of the function set");

  OrderEvaluation eval;
  eval.order = order;
  eval.link_compositions = propagate_chain(input, chain);
  for (std::size_t i = 0; i < chain.size(); ++i) {
    const auto n = instances_required(chain[i], eval.link_compositions[i]);
    eval.per_function_instances.emplace_back(chain[i].id, n);
    eval.total_instances += n;
  }
  return eval;
}

/// Every permutation, ascending by total instances; equal totals keep the
/// lexicographic order of their function-id sequences.
inline std::vector<OrderEvaluation> rank_orders(const TrafficComposition& input,
                                                std::span<const SecurityFunctionSpec> specs) {
  if (specs.empty()) throw Error(ErrorCode::invalid_argument, "no functions to rank");
  if (specs.size() > kMaxRankedFunctions)
    throw Error(ErrorCode::too_many_functions,
                std::to_string(specs.size()) + " functions exceed the enumeration bound of " +
                    std::to_string(kMaxRankedFunctions));

  std::vector<FunctionId> ids;
  for (const auto& s : specs) ids.push_back(s.id);
  std::ranges::sort(ids);

  std::vector<OrderEvaluation> out;
  for (auto& perm : permutations(ids)) out.push_back(evaluate_order(ChainOrder(std::move(perm)), input, specs));
  std::ranges::stable_sort(out, {}, &OrderEvaluation::total_instances);
  return out;
}

}  // namespace ssfc
