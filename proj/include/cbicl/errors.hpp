#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cbicl {

enum class ErrorKind {
  InvalidInput,
  ShapeMismatch,
  RegimeError,
  AssumptionViolated,
  OutOfRange,
  BudgetExceeded,
  GenerationFailed,
  FormatError,
  ValidationError,
  ProviderRejected,
  ProviderProtocolError,
  OfflineError,
  TransportError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::RegimeError: return "RegimeError";
    case ErrorKind::AssumptionViolated: return "AssumptionViolated";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::BudgetExceeded: return "BudgetExceeded";
    case ErrorKind::GenerationFailed: return "GenerationFailed";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::ProviderRejected: return "ProviderRejected";
    case ErrorKind::ProviderProtocolError: return "ProviderProtocolError";
    case ErrorKind::OfflineError: return "OfflineError";
    case ErrorKind::TransportError: return "TransportError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable kind.
/// what() is prefixed with the kind name, e.g. "ShapeMismatch: K differs".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cbicl
