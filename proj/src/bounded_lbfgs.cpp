#include "energylens/bounded_lbfgs.hpp"

#include <cmath>
#include <deque>

#include "energylens/error.hpp"

namespace energylens {

const char* to_string(StopReason reason) noexcept {
  switch (reason) {
    case StopReason::gradient_tolerance: return "gradient_tolerance";
    case StopReason::function_tolerance: return "function_tolerance";
    case StopReason::max_iterations: return "max_iterations";
    case StopReason::line_search_failure: return "line_search_failure";
    case StopReason::non_finite_start: return "non_finite_start";
  }
  return "unknown";
}

namespace {

struct CorrectionPair {
  Eigen::VectorXd s, y;
  double rho;
};

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

/// Indices blocked by a bound (gradient would push the point out of the box).
Eigen::Array<bool, Eigen::Dynamic, 1> blocked_set(const Eigen::VectorXd& x,
                                                  const Eigen::VectorXd& g,
                                                  const Eigen::VectorXd& lower,
                                                  const Eigen::VectorXd& upper) {
  Eigen::Array<bool, Eigen::Dynamic, 1> blocked(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    blocked(i) = lower(i) == upper(i) || (x(i) <= lower(i) && g(i) > 0.0) ||
                 (x(i) >= upper(i) && g(i) < 0.0);
  }
  return blocked;
}

Eigen::VectorXd masked(Eigen::VectorXd v, const Eigen::Array<bool, Eigen::Dynamic, 1>& blocked) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (blocked(i)) v(i) = 0.0;
  return v;
}

/// Two-loop recursion restricted to the free subspace.
Eigen::VectorXd lbfgs_direction(const Eigen::VectorXd& g, const std::deque<CorrectionPair>& pairs,
                                const Eigen::Array<bool, Eigen::Dynamic, 1>& blocked) {
  Eigen::VectorXd q = masked(g, blocked);
  std::vector<double> alpha(pairs.size());
  for (std::size_t k = pairs.size(); k-- > 0;) {
    const auto& p = pairs[k];
    alpha[k] = p.rho * masked(p.s, blocked).dot(q);
    q -= alpha[k] * masked(p.y, blocked);
  }
  double gamma = 1.0;
  if (!pairs.empty()) {
    const auto& last = pairs.back();
    const Eigen::VectorXd ys = masked(last.y, blocked);
    const double yy = ys.squaredNorm();
    const double sy = masked(last.s, blocked).dot(ys);
    if (yy > 0.0 && sy > 0.0) gamma = sy / yy;
  }
  Eigen::VectorXd r = gamma * q;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto& p = pairs[k];
    const double beta = p.rho * masked(p.y, blocked).dot(r);
    r += (alpha[k] - beta) * masked(p.s, blocked);
  }
  return -masked(r, blocked);
}

}  // namespace

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& x, const Eigen::VectorXd& grad,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
  return masked(grad, blocked_set(x, grad, lower, upper));
}

BoundedLbfgsResult minimize_bounded(const Objective& objective, Eigen::VectorXd x0,
                                    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                    const BoundedLbfgsOptions& options) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n)
    throw Error(ErrorKind::invalid_argument, "bound vectors do not match the start point");
  if ((lower.array() > upper.array()).any())
    throw Error(ErrorKind::invalid_argument, "lower bound exceeds upper bound");

  BoundedLbfgsResult result;
  result.x = project(x0, lower, upper);
  Eigen::VectorXd g(n);
  result.f = objective(result.x, g);
  if (!std::isfinite(result.f) || !g.allFinite()) {
    result.reason = StopReason::non_finite_start;
    return result;
  }

  std::deque<CorrectionPair> pairs;
  Eigen::VectorXd g_new(n);

  for (int iter = 0; iter < options.max_iters; ++iter) {
    const auto blocked = blocked_set(result.x, g, lower, upper);
    const Eigen::VectorXd pg = masked(g, blocked);
    if (pg.lpNorm<Eigen::Infinity>() <= options.gtol) {
      result.reason = StopReason::gradient_tolerance;
      return result;
    }

    Eigen::VectorXd d = lbfgs_direction(g, pairs, blocked);
    if (!(d.dot(g) < 0.0) || !d.allFinite()) {
      pairs.clear();
      d = -pg;
    }

    // First step (no curvature yet) is scaled to unit length.
    double step = pairs.empty() ? std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>()) : 1.0;
    Eigen::VectorXd x_new(n);
    double f_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = project(result.x + step * d, lower, upper);
      const double decrease = g.dot(x_new - result.x);
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && g_new.allFinite() &&
          f_new <= result.f + options.armijo * decrease && decrease < 0.0) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted && !pairs.empty()) {
      // Memory may be stale; retry once along the projected steepest descent.
      pairs.clear();
      d = -pg;
      step = std::min(1.0, 1.0 / d.lpNorm<Eigen::Infinity>());
      for (int bt = 0; bt < options.max_backtracks; ++bt) {
        x_new = project(result.x + step * d, lower, upper);
        const double decrease = g.dot(x_new - result.x);
        f_new = objective(x_new, g_new);
        if (std::isfinite(f_new) && g_new.allFinite() &&
            f_new <= result.f + options.armijo * decrease && decrease < 0.0) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (!accepted) {
      result.reason = StopReason::line_search_failure;
      return result;
    }

    const Eigen::VectorXd s = x_new - result.x;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * y.squaredNorm() && sy > 0.0) {
      pairs.push_back({s, y, 1.0 / sy});
      if (static_cast<int>(pairs.size()) > options.memory) pairs.pop_front();
    }

    const double f_old = result.f;
    result.x = x_new;
    result.f = f_new;
    g = g_new;
    result.iterations = iter + 1;

    const double scale = std::max({std::abs(f_old), std::abs(f_new), 1e-300});
    if ((f_old - f_new) <= options.ftol * scale) {
      const auto pg_now = projected_gradient(result.x, g, lower, upper);
      result.reason = pg_now.lpNorm<Eigen::Infinity>() <= options.gtol
                          ? StopReason::gradient_tolerance
                          : StopReason::function_tolerance;
      return result;
    }
  }
  result.reason = StopReason::max_iterations;
  return result;
}

}  // namespace energylens
