#pragma once

#include <stdexcept>
#include <string>

namespace treff {

enum class ErrorCode {
  invalid_argument,
  dim_mismatch,
  zero_norm,
  out_of_range,
  non_finite,
  io,
  bad_magic,
  unsupported_version,
  truncated,
  vocab_mismatch,
  insufficient_data,
  unknown_method,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::dim_mismatch: return "dimension mismatch";
    case ErrorCode::zero_norm: return "zero-norm row";
    case ErrorCode::out_of_range: return "index out of range";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::io: return "i/o failure";
    case ErrorCode::bad_magic: return "bad magic";
    case ErrorCode::unsupported_version: return "unsupported version";
    case ErrorCode::truncated: return "truncated payload";
    case ErrorCode::vocab_mismatch: return "vocabulary mismatch";
    case ErrorCode::insufficient_data: return "insufficient data";
    case ErrorCode::unknown_method: return "unknown method";
  }
  return "error";
}

// All library failures are reported through this one exception type; the code
// lets callers (and tests) distinguish the cause without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace treff
