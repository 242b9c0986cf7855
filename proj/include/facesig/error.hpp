#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace facesig {

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  zero_norm,
  no_comparable_patches,
  degenerate_statistic,
  missing_critical_value,
  empty_input,
  invariant_violation,
  bad_magic,
  unsupported_version,
  truncated,
  derived_mismatch,
  parse_error,
  io_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::zero_norm: return "zero_norm";
    case ErrorCode::no_comparable_patches: return "no_comparable_patches";
    case ErrorCode::degenerate_statistic: return "degenerate_statistic";
    case ErrorCode::missing_critical_value: return "missing_critical_value";
    case ErrorCode::empty_input: return "empty_input";
    case ErrorCode::invariant_violation: return "invariant_violation";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::unsupported_version: return "unsupported_version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::derived_mismatch: return "derived_mismatch";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Re-raises `e` with `context` prepended, keeping its code.
[[noreturn]] inline void rethrow_with_context(const Error& e, std::string_view context) {
  throw Error(e.code(), std::string(context) + ": " + e.what());
}

}  // namespace facesig
