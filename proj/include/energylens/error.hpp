#pragma once

#include <stdexcept>
#include <string>

namespace energylens {

enum class ErrorKind {
  invalid_argument,
  io,
  missing_column,
  parse_failure,
  invariant_violation,
  empty_dataset,
  n_too_large,
  degenerate_split,
  non_finite_result,
  non_finite_gradient,
  insufficient_data,
  mixed_context,
  schema_mismatch,
  bounds_violation,
  degenerate_data,
  singular_system,
  missing_latency,
  missing_power,
  length_mismatch,
  zero_actual,
  zero_variance_actual,
  no_pairs,
  degenerate_ranks,
  empty_after_filter,
  non_finite_prediction,
};

const char* to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace energylens
