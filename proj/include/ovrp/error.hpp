#pragma once

#include <stdexcept>
#include <string>

namespace ovrp {

/// Machine-readable failure categories. The CLI prints these as the `code`
/// field of its structured error messages.
enum class ErrorCode {
  invalid_argument,
  length_mismatch,
  internal_error,
  degenerate_stratum,
  numeric_failure,
  schema_mismatch,
  category_range,
  empty_input,
  share_sum,
  unknown_level,
  config,
  io,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ovrp
