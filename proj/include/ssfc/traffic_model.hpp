#pragma once

// Traffic as workload classes, and how total class filtering reshapes it
// along a chain.
//
// A composition stores absolute per-class bandwidth and packet rate; shares
// are always derived (bandwidth_i / total). Dropping class k therefore yields
//
//   P_out(t_i) = P_in(t_i) / (1 - P_in(t_k))   for i != k,   P_out(t_k) = 0
//
// without ever evaluating the quotient, so long chains do not accumulate
// normalization error and the singular case P_in(t_k) = 1 simply leaves the
// all-zero EMPTY composition.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>
#include <ranges>
#include <set>
#include <string>
#include <vector>

#include "ssfc/core.hpp"

namespace ssfc {

enum class ClassKind { benign, attack };

struct TrafficClass {
  ClassId id;
  ClassKind kind = ClassKind::benign;
  std::string attack_type;  // empty for benign

  bool is_benign() const noexcept { return kind == ClassKind::benign; }
};

/// Checks the class-universe invariants: unique ids, exactly one benign class.
inline void validate_class_universe(const std::vector<TrafficClass>& classes) {
  std::set<ClassId> seen;
  int benign = 0;
  for (const auto& c : classes) {
    if (c.id.empty()) throw Error(ErrorCode::invalid_argument, "traffic class with empty id");
    if (!seen.insert(c.id).second)
      throw Error(ErrorCode::invalid_argument, "duplicate traffic class id '" + c.id.str() + "'");
    if (c.is_benign()) ++benign;
  }
  if (benign != 1)
    throw Error(ErrorCode::invalid_argument,
                "class universe must contain exactly one benign class, found " + std::to_string(benign));
}

struct ClassLoad {
  ClassId id;
  double packet_rate = 0.0;  // packets/s
  double bandwidth = 0.0;    // Mbit/s
};

class TrafficComposition {
 public:
  TrafficComposition() = default;

  explicit TrafficComposition(std::vector<ClassLoad> entries) : entries_(std::move(entries)) {
    std::set<ClassId> seen;
    for (const auto& e : entries_) {
      if (!seen.insert(e.id).second)
        throw Error(ErrorCode::invalid_argument, "duplicate class '" + e.id.str() + "' in composition");
      if (!(e.bandwidth >= 0.0) || !(e.packet_rate >= 0.0))
        throw Error(ErrorCode::invalid_argument, "negative rate or bandwidth for class '" + e.id.str() + "'");
    }
  }

  /// Builds a composition from shares of a total bandwidth. Shares must sum
  /// to 1 within 1e-9 unless total_bandwidth is 0.
  static TrafficComposition from_shares(const std::vector<std::pair<ClassId, double>>& shares,
                                        double total_bandwidth, double total_packet_rate = 0.0) {
    double sum = 0.0;
    for (const auto& [id, s] : shares) {
      if (!(s >= 0.0 && s <= 1.0))
        throw Error(ErrorCode::invalid_argument, "share of '" + id.str() + "' outside [0,1]");
      sum += s;
    }
    if (total_bandwidth > 0.0 && std::abs(sum - 1.0) > kShareTolerance)
      throw Error(ErrorCode::invalid_argument, "shares sum to " + std::to_string(sum) + ", expected 1");
    std::vector<ClassLoad> entries;
    entries.reserve(shares.size());
    for (const auto& [id, s] : shares)
      entries.push_back({id, s * total_packet_rate, s * total_bandwidth});
    return TrafficComposition(std::move(entries));
  }

  static constexpr double kShareTolerance = 1e-9;

  const std::vector<ClassLoad>& entries() const noexcept { return entries_; }

  bool contains(const ClassId& id) const { return find(id) != nullptr; }

  const ClassLoad& at(const ClassId& id) const {
    const ClassLoad* e = find(id);
    if (!e) throw Error(ErrorCode::unknown_class, "class '" + id.str() + "' not in composition");
    return *e;
  }

  double total_bandwidth() const noexcept {
    double total = 0.0;
    for (const auto& e : entries_) total += e.bandwidth;
    return total;
  }

  double total_packet_rate() const noexcept {
    double total = 0.0;
    for (const auto& e : entries_) total += e.packet_rate;
    return total;
  }

  /// The EMPTY composition: no bandwidth on the link at all.
  bool is_empty() const noexcept { return total_bandwidth() <= 0.0; }

  double share(const ClassId& id) const {
    const double total = total_bandwidth();
    return total > 0.0 ? at(id).bandwidth / total : 0.0;
  }

  /// Shares in entry order; all zero for the EMPTY composition.
  std::vector<double> shares() const {
    const double total = total_bandwidth();
    std::vector<double> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(total > 0.0 ? e.bandwidth / total : 0.0);
    return out;
  }

  /// Returns a copy with the given class carrying no traffic.
  TrafficComposition without(const ClassId& id) const {
    TrafficComposition out = *this;
    for (auto& e : out.entries_) {
      if (e.id == id) {
        e.bandwidth = 0.0;
        e.packet_rate = 0.0;
        return out;
      }
    }
    throw Error(ErrorCode::unknown_class, "class '" + id.str() + "' not in composition");
  }

  friend bool operator==(const TrafficComposition& a, const TrafficComposition& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.id != y.id || x.bandwidth != y.bandwidth || x.packet_rate != y.packet_rate) return false;
    }
    return true;
  }

 private:
  const ClassLoad* find(const ClassId& id) const {
    auto it = std::ranges::find(entries_, id, &ClassLoad::id);
    return it == entries_.end() ? nullptr : &*it;
  }

  std::vector<ClassLoad> entries_;
};

/// Drops every packet of one class. Surviving classes keep their absolute
/// bandwidth and packet rate, so their shares rise by 1/(1 - P_in(dropped)).
/// When the dropped class held all traffic the result is EMPTY.
inline TrafficComposition filter_class(const TrafficComposition& input, const ClassId& dropped) {
  return input.without(dropped);
}

/// Anything that names the classes it eliminates (a SecurityFunctionSpec, a
/// test double, ...).
template <class F>
concept ClassFilter = requires(const F& f) {
  { f.id };
  requires std::ranges::input_range<decltype(f.filtered_classes)>;
  requires std::convertible_to<std::ranges::range_value_t<decltype(f.filtered_classes)>, ClassId>;
};

template <ClassFilter F>
TrafficComposition apply_function(const TrafficComposition& input, const F& function) {
  TrafficComposition out = input;
  for (const ClassId& c : function.filtered_classes) out = filter_class(out, c);
  return out;
}

/// Feeds each function's output into the next. Returns N+1 compositions: the
/// input link, each inter-function link, and the link to the protected service.
template <std::ranges::forward_range Chain>
  requires ClassFilter<std::ranges::range_value_t<Chain>>
std::vector<TrafficComposition> propagate_chain(const TrafficComposition& input, const Chain& chain) {
  if (std::ranges::empty(chain)) throw Error(ErrorCode::invalid_argument, "chain must not be empty");
  std::vector<TrafficComposition> links{input};
  std::set<std::decay_t<decltype(std::ranges::begin(chain)->id)>> ids;
  for (const auto& f : chain) {
    if (!ids.insert(f.id).second) throw Error(ErrorCode::invalid_argument, "duplicate function in chain");
    links.push_back(apply_function(links.back(), f));
  }
  return links;
}

}  // namespace ssfc
