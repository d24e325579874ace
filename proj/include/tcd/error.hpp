#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tcd {

/// Raised when a caller breaks a documented precondition (size mismatch,
/// out-of-range parameter, empty input where one is required).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dataset, scenario or config file does not match its schema.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BackendErrorKind {
  transport,
  malformed_response,
  missing_logprobs,
  unmatched_signature,
  invalid_input,
};

inline const char* to_string(BackendErrorKind kind) {
  switch (kind) {
    case BackendErrorKind::transport: return "transport";
    case BackendErrorKind::malformed_response: return "malformed_response";
    case BackendErrorKind::missing_logprobs: return "missing_logprobs";
    case BackendErrorKind::unmatched_signature: return "unmatched_signature";
    case BackendErrorKind::invalid_input: return "invalid_input";
  }
  return "unknown";
}

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  BackendErrorKind kind() const noexcept { return kind_; }

 private:
  BackendErrorKind kind_;
};

/// Judge could not produce a reply (transport failure after retries, or a
/// recorded reply that does not exist).
class JudgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractViolation(message);
}

}  // namespace tcd
