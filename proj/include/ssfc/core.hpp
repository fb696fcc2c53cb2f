#pragma once

// Identifier and error vocabulary shared by every ssfc module.

#include <compare>
#include <functional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace ssfc {

/// Opaque string identifier, distinct per Tag so class ids and function ids
/// cannot be mixed up.
template <class Tag>
class StrongId {
 public:
  StrongId() = default;
  explicit StrongId(std::string value) : value_(std::move(value)) {}
  explicit StrongId(const char* value) : value_(value) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const StrongId&, const StrongId&) = default;
  friend bool operator==(const StrongId&, const StrongId&) = default;

  friend std::ostream& operator<<(std::ostream& os, const StrongId& id) { return os << id.value_; }

 private:
  std::string value_;
};

struct ClassIdTag {};
struct FunctionIdTag {};
struct InstanceIdTag {};

/// A traffic (workload) class.
using ClassId = StrongId<ClassIdTag>;
/// A chain element: a security function group as placed in the chain.
using FunctionId = StrongId<FunctionIdTag>;
/// A single wrapper-registered function instance, e.g. "dps-1".
using InstanceId = StrongId<InstanceIdTag>;

enum class ErrorCode {
  invalid_argument,
  degenerate_input,
  unknown_class,
  unknown_function,
  invalid_order,
  too_many_functions,
  topology_error,
  epoch_collision,
  duplicate_registration,
  unknown_group,
  invalid_token,
  expired,
  implausible_strength,
  config_invalid,
  registration_failed,
  token_rejected,
  unreachable,
  scenario_invalid,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::unknown_class: return "unknown_class";
    case ErrorCode::unknown_function: return "unknown_function";
    case ErrorCode::invalid_order: return "invalid_order";
    case ErrorCode::too_many_functions: return "too_many_functions";
    case ErrorCode::topology_error: return "topology_error";
    case ErrorCode::epoch_collision: return "epoch_collision";
    case ErrorCode::duplicate_registration: return "duplicate_registration";
    case ErrorCode::unknown_group: return "unknown_group";
    case ErrorCode::invalid_token: return "invalid_token";
    case ErrorCode::expired: return "expired";
    case ErrorCode::implausible_strength: return "implausible_strength";
    case ErrorCode::config_invalid: return "config_invalid";
    case ErrorCode::registration_failed: return "registration_failed";
    case ErrorCode::token_rejected: return "token_rejected";
    case ErrorCode::unreachable: return "unreachable";
    case ErrorCode::scenario_invalid: return "scenario_invalid";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ssfc

template <class Tag>
struct std::hash<ssfc::StrongId<Tag>> {
  std::size_t operator()(const ssfc::StrongId<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
