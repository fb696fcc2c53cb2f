#pragma once

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "ssfc/core.hpp"

namespace ssfc {

/// The order in which traffic visits the chain's functions.
struct ChainOrder {
  std::vector<FunctionId> ids;

  ChainOrder() = default;
  explicit ChainOrder(std::vector<FunctionId> v) : ids(std::move(v)) {}
  ChainOrder(std::initializer_list<const char*> names) {
    for (const char* n : names) ids.emplace_back(n);
  }

  std::size_t size() const noexcept { return ids.size(); }
  bool empty() const noexcept { return ids.empty(); }
  auto begin() const { return ids.begin(); }
  auto end() const { return ids.end(); }
  const FunctionId& operator[](std::size_t i) const { return ids[i]; }

  bool has_duplicates() const {
    std::set<FunctionId> seen(ids.begin(), ids.end());
    return seen.size() != ids.size();
  }

  bool contains(const FunctionId& id) const { return std::ranges::find(ids, id) != ids.end(); }

  /// True when this is a permutation of exactly `set`.
  bool is_permutation_of(const std::vector<FunctionId>& set) const {
    if (set.size() != ids.size() || has_duplicates()) return false;
    return std::ranges::is_permutation(ids, set);
  }

  std::string to_string(std::string_view sep = " -- ") const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out += sep;
      out += ids[i].str();
    }
    return out;
  }

  friend bool operator==(const ChainOrder&, const ChainOrder&) = default;
  friend auto operator<=>(const ChainOrder&, const ChainOrder&) = default;
};

/// All permutations of `items`, in lexicographic order of their positions in
/// `items` (so the input sequence comes first).
template <class T>
std::vector<std::vector<T>> permutations(const std::vector<T>& items) {
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::vector<T>> out;
  do {
    std::vector<T> perm;
    perm.reserve(idx.size());
    for (std::size_t i : idx) perm.push_back(items[i]);
    out.push_back(std::move(perm));
  } while (std::next_permutation(idx.begin(), idx.end()));
  return out;
}

}  // namespace ssfc
