#include "ovrp/error.hpp"

namespace ovrp {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::length_mismatch: return "length-mismatch";
    case ErrorCode::internal_error: return "internal-error";
    case ErrorCode::degenerate_stratum: return "degenerate-stratum";
    case ErrorCode::numeric_failure: return "numeric-failure";
    case ErrorCode::schema_mismatch: return "schema-mismatch";
    case ErrorCode::category_range: return "category-range";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::share_sum: return "share-sum";
    case ErrorCode::unknown_level: return "unknown-level";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

}  // namespace ovrp
