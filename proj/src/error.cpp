#include "energylens/error.hpp"

namespace energylens {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid-argument";
    case ErrorKind::io: return "io";
    case ErrorKind::missing_column: return "missing-column";
    case ErrorKind::parse_failure: return "parse-failure";
    case ErrorKind::invariant_violation: return "invariant-violation";
    case ErrorKind::empty_dataset: return "empty-dataset";
    case ErrorKind::n_too_large: return "n-too-large";
    case ErrorKind::degenerate_split: return "degenerate-split";
    case ErrorKind::non_finite_result: return "non-finite-result";
    case ErrorKind::non_finite_gradient: return "non-finite-gradient";
    case ErrorKind::insufficient_data: return "insufficient-data";
    case ErrorKind::mixed_context: return "mixed-context";
    case ErrorKind::schema_mismatch: return "schema-mismatch";
    case ErrorKind::bounds_violation: return "bounds-violation";
    case ErrorKind::degenerate_data: return "degenerate-data";
    case ErrorKind::singular_system: return "singular-system";
    case ErrorKind::missing_latency: return "missing-latency";
    case ErrorKind::missing_power: return "missing-power";
    case ErrorKind::length_mismatch: return "length-mismatch";
    case ErrorKind::zero_actual: return "zero-actual";
    case ErrorKind::zero_variance_actual: return "zero-variance-actual";
    case ErrorKind::no_pairs: return "no-pairs";
    case ErrorKind::degenerate_ranks: return "degenerate-ranks";
    case ErrorKind::empty_after_filter: return "empty-after-filter";
    case ErrorKind::non_finite_prediction: return "non-finite-prediction";
  }
  return "unknown";
}

}  // namespace energylens
