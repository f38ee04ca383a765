#include "energylens/energy_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "energylens/bounded_lbfgs.hpp"
#include "energylens/rng.hpp"

namespace energylens {

const char* to_string(Loss loss) noexcept {
  return loss == Loss::sq_rel ? "sq-rel" : "sq-abs-log";
}

Loss parse_loss(std::string_view text) {
  if (text == "sq-rel") return Loss::sq_rel;
  if (text == "sq-abs-log") return Loss::sq_abs_log;
  throw Error(ErrorKind::invalid_argument, "unknown loss '" + std::string(text) + "'");
}

namespace {

using Vec12 = Eigen::Matrix<double, kNumParams, 1>;
constexpr double kInf = std::numeric_limits<double>::infinity();

/// Value and gradient of the loss with respect to the parameters (unscaled).
double loss_and_gradient(const Params& params, std::span<const FormulaSample> samples, Loss loss,
                         Vec12* grad) {
  const Vec12 theta = params.to_vector();
  double total = 0.0;
  if (grad) grad->setZero();
  for (const auto& s : samples) {
    Vec12 g;
    try {
      g = grad_energy(params, s.input);
    } catch (const Error&) {
      return kInf;
    }
    // The formula is linear in alpha and delta, so the prediction is
    // recovered from those partials without a second evaluation.
    const double pred = theta(kAlphaP) * g(kAlphaP) + theta(kAlphaD) * g(kAlphaD) +
                        theta(kDelta1) * g(kDelta1) + theta(kDelta2) * g(kDelta2);
    if (!std::isfinite(pred)) return kInf;
    double r = 0.0;
    double dr_dpred = 0.0;
    if (loss == Loss::sq_abs_log) {
      if (!(pred > 0.0)) return kInf;
      r = std::log(pred) - std::log(s.target);
      dr_dpred = 1.0 / pred;
    } else {
      r = (pred - s.target) / s.target;
      dr_dpred = 1.0 / s.target;
    }
    total += r * r;
    if (grad) *grad += (2.0 * r * dr_dpred) * g;
  }
  const double n = static_cast<double>(samples.size());
  if (grad) *grad /= n;
  return total / n;
}

struct StartPlan {
  Vec12 heuristic;
  Vec12 scale;
  double alpha_p0, alpha_d0, delta0;
};

StartPlan plan_starts(std::span<const FormulaSample> samples, const FormulaMask& mask) {
  double mean_target = 0.0, mean_load_p = 0.0, mean_load_d = 0.0;
  std::size_t min_idx = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    mean_target += s.target;
    mean_load_p += s.input.input_tokens / (s.input.batch_size + 1.0);
    mean_load_d += s.input.max_tokens / (s.input.batch_size + 1.0);
    if (s.target < samples[min_idx].target) min_idx = i;
  }
  const double n = static_cast<double>(samples.size());
  mean_target /= n;
  mean_load_p /= n;
  mean_load_d /= n;

  StartPlan plan;
  plan.alpha_p0 = 0.4 * mean_target / mean_load_p;
  plan.alpha_d0 = 0.4 * mean_target / mean_load_d;
  const auto& smallest = samples[min_idx];
  plan.delta0 = mask.overhead
                    ? 0.2 * smallest.target / (smallest.input.tp + smallest.input.pp)
                    : 0.0;

  Params p;
  p.alpha_p = plan.alpha_p0;
  p.alpha_d = plan.alpha_d0;
  p.beta_p = p.beta_d = 1.0;
  p.eps_p = p.eps_d = 1.0;
  p.delta1 = p.delta2 = plan.delta0;
  plan.heuristic = p.to_vector();

  plan.scale.setOnes();
  plan.scale(kAlphaP) = plan.alpha_p0;
  plan.scale(kAlphaD) = plan.alpha_d0;
  if (mask.overhead) {
    const double ds = std::max(plan.delta0, 1e-3 * mean_target);
    plan.scale(kDelta1) = plan.scale(kDelta2) = ds;
  }
  return plan;
}

Vec12 random_start(const StartPlan& plan, const FormulaMask& mask, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto log_uniform = [&](double lo, double hi) {
    return std::exp(std::log(lo) + u(rng) * (std::log(hi) - std::log(lo)));
  };
  const auto uniform = [&](double lo, double hi) { return lo + u(rng) * (hi - lo); };
  Params p;
  p.alpha_p = log_uniform(plan.alpha_p0 * 1e-2, plan.alpha_p0 * 1e2);
  p.alpha_d = log_uniform(plan.alpha_d0 * 1e-2, plan.alpha_d0 * 1e2);
  p.beta_p = uniform(0.1, 2.0);
  p.beta_d = uniform(0.1, 2.0);
  p.eps_p = log_uniform(1e-2, 1e1);
  p.eps_d = log_uniform(1e-2, 1e1);
  p.gamma1_p = uniform(-1.5, 1.5);
  p.gamma2_p = uniform(-1.5, 1.5);
  p.gamma1_d = uniform(-1.5, 1.5);
  p.gamma2_d = uniform(-1.5, 1.5);
  if (mask.overhead) {
    p.delta1 = log_uniform(plan.delta0 * 1e-2, plan.delta0 * 1e1);
    p.delta2 = log_uniform(plan.delta0 * 1e-2, plan.delta0 * 1e1);
  }
  return p.to_vector();
}

}  // namespace

double formula_loss(const Params& params, std::span<const FormulaSample> samples, Loss loss) {
  return loss_and_gradient(params, samples, loss, nullptr);
}

FitResult fit_formula(std::span<const FormulaSample> samples, const FitOptions& options,
                      const FormulaMask& mask) {
  const int free_params = mask.overhead ? kNumParams : kNumParams - 2;
  if (static_cast<int>(samples.size()) <= free_params) {
    throw Error(ErrorKind::insufficient_data,
                "need more than " + std::to_string(free_params) + " observations, got " +
                    std::to_string(samples.size()));
  }
  if (options.n_starts < 1) throw Error(ErrorKind::invalid_argument, "n_starts must be >= 1");
  for (const auto& s : samples) {
    if (!(std::isfinite(s.target) && s.target > 0.0))
      throw Error(ErrorKind::invariant_violation, "fit targets must be positive");
  }

  const StartPlan plan = plan_starts(samples, mask);
  Vec12 lower = param_lower_bounds();
  Vec12 upper = param_upper_bounds();
  if (!mask.overhead) {
    upper(kDelta1) = upper(kDelta2) = 0.0;
  }
  const Eigen::VectorXd scaled_lower = lower.cwiseQuotient(plan.scale);
  const Eigen::VectorXd scaled_upper = upper.cwiseQuotient(plan.scale);

  const Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
    const Vec12 theta = plan.scale.cwiseProduct(x);
    Vec12 g;
    const double f = loss_and_gradient(Params::from_vector(theta), samples, options.loss, &g);
    grad = plan.scale.cwiseProduct(g);
    return f;
  };

  BoundedLbfgsOptions lbfgs;
  lbfgs.max_iters = options.max_iters;

  FitResult best;
  best.n_train = static_cast<int>(samples.size());
  best.n_starts = options.n_starts;
  best.seed = options.seed;
  best.loss = options.loss;
  best.converged = false;
  best.train_loss = kInf;
  bool have_usable = false;
  Eigen::VectorXd fallback_x;
  double fallback_f = kInf;

  // Starts are independent; sequential execution defines the tie-break order.
  for (int start = 0; start < options.n_starts; ++start) {
    Vec12 theta0;
    if (start == 0) {
      theta0 = plan.heuristic;
    } else {
      Rng rng = derive_rng(options.seed, {static_cast<std::uint64_t>(start)});
      theta0 = random_start(plan, mask, rng);
    }
    const Eigen::VectorXd x0 = theta0.cwiseQuotient(plan.scale);
    const auto run = minimize_bounded(objective, x0, scaled_lower, scaled_upper, lbfgs);
    if (run.usable()) {
      ++best.converged_starts;
      if (!have_usable || run.f < best.train_loss) {
        have_usable = true;
        best.train_loss = run.f;
        best.params = Params::from_vector(Vec12(plan.scale.cwiseProduct(run.x)));
      }
    } else if (!have_usable && (fallback_x.size() == 0 || run.f < fallback_f)) {
      fallback_x = run.x;
      fallback_f = run.f;
    }
  }

  if (have_usable) {
    best.converged = true;
  } else {
    best.params = Params::from_vector(Vec12(plan.scale.cwiseProduct(fallback_x)));
    best.train_loss = fallback_f;
  }
  return best;
}

FitResult fit(const Dataset& data, const FitOptions& options) {
  if (data.size() < kNumParams + 1) {
    throw Error(ErrorKind::insufficient_data, "need at least " + std::to_string(kNumParams + 1) +
                                                  " records, got " + std::to_string(data.size()));
  }
  const auto ctx = contexts(data);
  if (ctx.size() > 1) {
    throw Error(ErrorKind::mixed_context,
                std::to_string(ctx.size()) + " (model, hardware, modality) contexts in one fit");
  }
  std::vector<FormulaSample> samples;
  samples.reserve(data.size());
  for (const auto& r : data.records) samples.push_back({r.formula_input(), r.energy_j});
  return fit_formula(samples, options);
}

nlohmann::ordered_json params_to_json(const FitResult& result) {
  nlohmann::ordered_json j;
  j["schema"] = kParamsSchema;
  const auto v = result.params.to_vector();
  nlohmann::ordered_json params;
  for (int i = 0; i < kNumParams; ++i) params[std::string(kParamNames[i])] = v(i);
  j["params"] = params;
  nlohmann::ordered_json fit_block;
  fit_block["loss"] = to_string(result.loss);
  fit_block["n_train"] = result.n_train;
  fit_block["seed"] = result.seed;
  fit_block["train_loss"] = result.train_loss;
  fit_block["n_starts"] = result.n_starts;
  fit_block["converged_starts"] = result.converged_starts;
  fit_block["converged"] = result.converged;
  j["fit"] = fit_block;
  return j;
}

FitResult params_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", std::string()) != kParamsSchema)
    throw Error(ErrorKind::schema_mismatch, std::string("expected schema ") + kParamsSchema);
  if (!j.contains("params") || !j["params"].is_object())
    throw Error(ErrorKind::schema_mismatch, "missing 'params' object");
  const auto& pj = j["params"];
  Eigen::Matrix<double, kNumParams, 1> v;
  for (int i = 0; i < kNumParams; ++i) {
    const std::string name(kParamNames[i]);
    if (!pj.contains(name) || !pj[name].is_number())
      throw Error(ErrorKind::schema_mismatch, "missing numeric parameter '" + name + "'");
    v(i) = pj[name].get<double>();
  }
  FitResult result;
  result.params = Params::from_vector(v);
  if (auto bad = find_bounds_violation(result.params))
    throw Error(ErrorKind::bounds_violation, "parameter '" + *bad + "' outside its box");
  if (j.contains("fit")) {
    try {
      const auto& f = j["fit"];
      if (f.contains("loss")) result.loss = parse_loss(f["loss"].get<std::string>());
      result.n_train = f.value("n_train", 0);
      result.seed = f.value("seed", std::uint64_t{0});
      result.train_loss = f.value("train_loss", 0.0);
      result.n_starts = f.value("n_starts", 0);
      result.converged_starts = f.value("converged_starts", 0);
      result.converged = f.value("converged", true);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::schema_mismatch, std::string("bad 'fit' block: ") + e.what());
    }
  }
  return result;
}

void save_params(const FitResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << params_to_json(result).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

FitResult load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace energylens
