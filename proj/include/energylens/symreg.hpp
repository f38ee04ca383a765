#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "energylens/dataset.hpp"
#include "energylens/expr.hpp"

namespace energylens::symreg {

/// Fixed feature order used by every expression.
enum FeatureIndex : int {
  kFeatTp = 0,
  kFeatPp,
  kFeatParallelism,  ///< tp * pp
  kFeatTpPlusPp,
  kFeatBatch,
  kFeatMaxTokens,
  kFeatInputTokens,
  kFeatRatio,  ///< batch_size / max_tokens
  kNumFeatures
};

const std::vector<std::string>& feature_names();

std::array<double, kNumFeatures> build_features(const ProfilingRecord& record);
Eigen::MatrixXd build_feature_matrix(const Dataset& data);

struct SRConfig {
  int population_size = 500;
  int generations = 40;
  int tournament_size = 5;
  double crossover_rate = 0.9;
  double mutation_rate = 0.1;
  /// Per-node complexity penalty, as a fraction of the target variance.
  double parsimony_coefficient = 1e-3;
  std::uint64_t seed = 0;
  /// Indices into the fixed feature order; empty means all.
  std::vector<int> feature_set;
  std::vector<Op> functions = {Op::add, Op::sub, Op::mul, Op::div, Op::pow,
                               Op::neg, Op::log, Op::exp};
  int max_depth = 8;
  int init_min_depth = 2;
  int init_max_depth = 4;
  /// Best individuals per generation whose constants are refined.
  int refine_count = 30;
  int refine_sweeps = 30;
  /// Joint least-squares iterations applied to every new offspring's
  /// constants before it is scored.
  int offspring_polish_iters = 10;
  double validation_fraction = 0.25;

  void validate() const;
};

struct FrontEntry {
  Expr expr;
  double test_mse = 0.0;
  std::size_t node_count = 0;
};

struct SRResult {
  /// Sorted by node_count; mse strictly decreasing along the front.
  std::vector<FrontEntry> pareto_front;
  Expr best;
  double best_fitness = 0.0;
  double best_validation_mse = 0.0;
  /// Best penalized fitness after each generation.
  std::vector<double> fitness_history;
};

double mean_squared_error(const Expr& expr, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

/// Fits the expression's constants on (x, y): `sweeps` rounds of coordinate
/// descent (each line-minimizes every constant in turn), then up to `sweeps`
/// joint Levenberg-Marquardt steps. Returns the final mse.
double refine_constants(Expr& expr, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        int sweeps);

SRResult run_sr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SRConfig& config);

/// Target is energy_j. Needs at least 20 records.
SRResult run_sr(const Dataset& data, const SRConfig& config);

/// Structural motifs searched for in discovered expressions.
struct MotifHits {
  /// A division whose denominator involves parallelism or batch size and
  /// whose quotient involves a token count.
  bool token_load_ratio = false;
  /// A logarithm wrapped around such a ratio.
  bool log_compression = false;
};

MotifHits detect_motifs(const Expr& expr);

nlohmann::ordered_json result_to_json(const SRResult& result);

}  // namespace energylens::symreg
