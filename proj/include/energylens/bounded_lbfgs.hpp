#pragma once

#include <Eigen/Core>

#include <functional>

namespace energylens {

/// Box-constrained limited-memory BFGS.
///
/// Variables sitting on a bound with the gradient pushing outward are held
/// fixed for the iteration; the two-loop recursion runs on the remaining
/// free subspace and the step is projected back into the box with an Armijo
/// backtracking search along the projection arc. Bounds may be infinite and
/// lower == upper pins a variable.
struct BoundedLbfgsOptions {
  int max_iters = 500;
  int memory = 10;
  /// Stop when the projected gradient infinity-norm drops to this value.
  double gtol = 1e-8;
  /// Stop when the relative decrease of f in one step drops to this value.
  double ftol = 1e-12;
  double armijo = 1e-4;
  int max_backtracks = 60;
};

enum class StopReason {
  gradient_tolerance,
  function_tolerance,
  max_iterations,
  line_search_failure,
  non_finite_start,
};

const char* to_string(StopReason reason) noexcept;

struct BoundedLbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  StopReason reason = StopReason::max_iterations;

  /// True unless the search could not make a single step.
  bool usable() const {
    return reason != StopReason::non_finite_start &&
           !(reason == StopReason::line_search_failure && iterations == 0);
  }
};

/// Returns f(x) and writes the gradient into `grad` (already sized).
/// Returning +inf or NaN marks x as infeasible for the line search.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

BoundedLbfgsResult minimize_bounded(const Objective& objective, Eigen::VectorXd x0,
                                    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                    const BoundedLbfgsOptions& options = {});

/// Projected gradient: zero where a bound blocks descent.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

}  // namespace energylens
