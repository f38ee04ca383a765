#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <json.hpp>

#include "energylens/dataset.hpp"
#include "energylens/energy_formula.hpp"

namespace energylens {

enum class Loss {
  sq_rel,      ///< mean squared relative error
  sq_abs_log,  ///< mean squared error of log-energy
};

const char* to_string(Loss loss) noexcept;
Loss parse_loss(std::string_view text);

struct FitOptions {
  int n_starts = 16;
  std::uint64_t seed = 0;
  int max_iters = 500;
  Loss loss = Loss::sq_abs_log;
};

struct FitResult {
  Params params;
  double train_loss = 0.0;
  int n_train = 0;
  int n_starts = 0;
  int converged_starts = 0;
  std::uint64_t seed = 0;
  Loss loss = Loss::sq_abs_log;
  /// False when no start managed a single line-search step; params are then
  /// the best-effort start point.
  bool converged = true;

  bool operator==(const FitResult&) const = default;
};

/// One observation for the generic formula fitter.
struct FormulaSample {
  FormulaInput<double> input;
  double target = 0.0;
};

/// Which blocks of the formula are free during a fit.
struct FormulaMask {
  bool overhead = true;
};

/// Loss of `params` on `samples` (no gradient).
double formula_loss(const Params& params, std::span<const FormulaSample> samples, Loss loss);

/// Bound-constrained multi-start fit of the formula to arbitrary positive
/// targets. Used directly for energy and, with the overhead block pinned to
/// zero, for the latency surrogate of the proxy baseline.
FitResult fit_formula(std::span<const FormulaSample> samples, const FitOptions& options,
                      const FormulaMask& mask = {});

/// Fits energy_j of a single-context dataset. Needs at least 13 records.
FitResult fit(const Dataset& data, const FitOptions& options = {});

inline double predict(const Params& params, const ProfilingRecord& r) {
  return eval_energy(params, r.formula_input());
}

inline constexpr const char* kParamsSchema = "energylens-params-v1";

nlohmann::ordered_json params_to_json(const FitResult& result);
FitResult params_from_json(const nlohmann::json& j);
void save_params(const FitResult& result, const std::filesystem::path& path);
FitResult load_params(const std::filesystem::path& path);

}  // namespace energylens
