#pragma once

// Closed-form per-inference energy model:
//
//   E = alpha_p * T_in  / (B^beta_p + eps_p) * tp^gamma1_p * pp^gamma2_p     (prefill)
//     + alpha_d * T_out / (B^beta_d + eps_d) * tp^gamma1_d * pp^gamma2_d     (decode)
//     + delta1 * tp + delta2 * pp                                            (overhead)
//
// Everything here is header-only and templated on the scalar type so the
// same code can be evaluated in long double by the test oracles.

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include "energylens/error.hpp"

namespace energylens {

inline constexpr int kNumParams = 12;

/// Field order of the parameter vector. Gradients and JSON use this order.
inline constexpr std::array<std::string_view, kNumParams> kParamNames = {
    "alpha_p",  "alpha_d",  "beta_p",   "beta_d", "eps_p",  "eps_d",
    "gamma1_p", "gamma2_p", "gamma1_d", "gamma2_d", "delta1", "delta2"};

enum ParamIndex : int {
  kAlphaP = 0, kAlphaD, kBetaP, kBetaD, kEpsP, kEpsD,
  kGamma1P, kGamma2P, kGamma1D, kGamma2D, kDelta1, kDelta2
};

template <typename Scalar>
struct EnergyParams {
  using Vector = Eigen::Matrix<Scalar, kNumParams, 1>;

  Scalar alpha_p{0}, alpha_d{0};
  Scalar beta_p{0}, beta_d{0};
  Scalar eps_p{0}, eps_d{0};
  Scalar gamma1_p{0}, gamma2_p{0}, gamma1_d{0}, gamma2_d{0};
  Scalar delta1{0}, delta2{0};

  Vector to_vector() const {
    Vector v;
    v << alpha_p, alpha_d, beta_p, beta_d, eps_p, eps_d, gamma1_p, gamma2_p, gamma1_d, gamma2_d,
        delta1, delta2;
    return v;
  }

  template <typename Derived>
  static EnergyParams from_vector(const Eigen::MatrixBase<Derived>& v) {
    EnergyParams p;
    p.alpha_p = v(kAlphaP);
    p.alpha_d = v(kAlphaD);
    p.beta_p = v(kBetaP);
    p.beta_d = v(kBetaD);
    p.eps_p = v(kEpsP);
    p.eps_d = v(kEpsD);
    p.gamma1_p = v(kGamma1P);
    p.gamma2_p = v(kGamma2P);
    p.gamma1_d = v(kGamma1D);
    p.gamma2_d = v(kGamma2D);
    p.delta1 = v(kDelta1);
    p.delta2 = v(kDelta2);
    return p;
  }

  template <typename To>
  EnergyParams<To> cast() const {
    return EnergyParams<To>::from_vector(to_vector().template cast<To>());
  }

  bool operator==(const EnergyParams&) const = default;
};

using Params = EnergyParams<double>;

/// Fitting box. alpha, eps and delta are unbounded above.
inline Eigen::Matrix<double, kNumParams, 1> param_lower_bounds() {
  Eigen::Matrix<double, kNumParams, 1> lo;
  lo << 0, 0, 0, 0, 0, 0, -3, -3, -3, -3, 0, 0;
  return lo;
}

inline Eigen::Matrix<double, kNumParams, 1> param_upper_bounds() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  Eigen::Matrix<double, kNumParams, 1> hi;
  hi << inf, inf, 3, 3, inf, inf, 3, 3, 3, 3, inf, inf;
  return hi;
}

/// Name of the first parameter that is non-finite or outside the box.
inline std::optional<std::string> find_bounds_violation(const Params& p) {
  const auto v = p.to_vector();
  const auto lo = param_lower_bounds();
  const auto hi = param_upper_bounds();
  for (int i = 0; i < kNumParams; ++i) {
    if (!std::isfinite(v(i)) || v(i) < lo(i) || v(i) > hi(i)) return std::string(kParamNames[i]);
  }
  return std::nullopt;
}

/// One evaluation point of the formula.
template <typename Scalar>
struct FormulaInput {
  Scalar tp{1}, pp{1}, batch_size{1}, max_tokens{1}, input_tokens{1};
};

/// Lower clamp on the batch denominators B^beta + eps.
inline constexpr double kDenominatorFloor = 1e-12;

template <typename Scalar>
struct EnergyTerms {
  Scalar prefill{0}, decode{0}, overhead{0};
  Scalar total() const { return prefill + decode + overhead; }
};

template <typename Scalar>
EnergyTerms<Scalar> energy_terms(const EnergyParams<Scalar>& p, const FormulaInput<Scalar>& in) {
  using std::max;
  using std::pow;
  const Scalar floor_d = static_cast<Scalar>(kDenominatorFloor);
  const Scalar den_p = max(pow(in.batch_size, p.beta_p) + p.eps_p, floor_d);
  const Scalar den_d = max(pow(in.batch_size, p.beta_d) + p.eps_d, floor_d);
  EnergyTerms<Scalar> t;
  t.prefill = p.alpha_p * in.input_tokens / den_p * pow(in.tp, p.gamma1_p) * pow(in.pp, p.gamma2_p);
  t.decode = p.alpha_d * in.max_tokens / den_d * pow(in.tp, p.gamma1_d) * pow(in.pp, p.gamma2_d);
  t.overhead = p.delta1 * in.tp + p.delta2 * in.pp;
  return t;
}

/// Predicted Joules per inference. Throws non_finite_result on overflow.
template <typename Scalar>
Scalar eval_energy(const EnergyParams<Scalar>& p, const FormulaInput<Scalar>& in) {
  const Scalar e = energy_terms(p, in).total();
  if (!std::isfinite(static_cast<double>(e))) {
    throw Error(ErrorKind::non_finite_result, "energy formula overflowed");
  }
  return e;
}

template <typename Scalar>
Scalar eval_energy(const EnergyParams<Scalar>& p, Scalar tp, Scalar pp, Scalar batch_size,
                   Scalar max_tokens, Scalar input_tokens) {
  return eval_energy(p, FormulaInput<Scalar>{tp, pp, batch_size, max_tokens, input_tokens});
}

/// Analytic partial derivatives in kParamNames order. Partials with respect
/// to beta and eps are zero where the denominator floor is active.
template <typename Scalar>
Eigen::Matrix<Scalar, kNumParams, 1> grad_energy(const EnergyParams<Scalar>& p,
                                                 const FormulaInput<Scalar>& in) {
  using std::log;
  using std::pow;
  const Scalar floor_d = static_cast<Scalar>(kDenominatorFloor);
  const Scalar log_b = log(in.batch_size);
  const Scalar log_tp = log(in.tp);
  const Scalar log_pp = log(in.pp);

  const Scalar b_pow_p = pow(in.batch_size, p.beta_p);
  const Scalar b_pow_d = pow(in.batch_size, p.beta_d);
  const Scalar raw_p = b_pow_p + p.eps_p;
  const Scalar raw_d = b_pow_d + p.eps_d;
  const bool floored_p = !(raw_p > floor_d);
  const bool floored_d = !(raw_d > floor_d);
  const Scalar den_p = floored_p ? floor_d : raw_p;
  const Scalar den_d = floored_d ? floor_d : raw_d;

  const Scalar shape_p = in.input_tokens / den_p * pow(in.tp, p.gamma1_p) * pow(in.pp, p.gamma2_p);
  const Scalar shape_d = in.max_tokens / den_d * pow(in.tp, p.gamma1_d) * pow(in.pp, p.gamma2_d);
  const Scalar prefill = p.alpha_p * shape_p;
  const Scalar decode = p.alpha_d * shape_d;

  Eigen::Matrix<Scalar, kNumParams, 1> g;
  g(kAlphaP) = shape_p;
  g(kAlphaD) = shape_d;
  g(kBetaP) = floored_p ? Scalar(0) : -prefill * b_pow_p * log_b / den_p;
  g(kBetaD) = floored_d ? Scalar(0) : -decode * b_pow_d * log_b / den_d;
  g(kEpsP) = floored_p ? Scalar(0) : -prefill / den_p;
  g(kEpsD) = floored_d ? Scalar(0) : -decode / den_d;
  g(kGamma1P) = prefill * log_tp;
  g(kGamma2P) = prefill * log_pp;
  g(kGamma1D) = decode * log_tp;
  g(kGamma2D) = decode * log_pp;
  g(kDelta1) = in.tp;
  g(kDelta2) = in.pp;

  if (!g.allFinite()) throw Error(ErrorKind::non_finite_gradient, "energy gradient overflowed");
  return g;
}

}  // namespace energylens
