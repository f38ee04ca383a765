#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "energylens/dataset.hpp"
#include "energylens/energy_model.hpp"
#include "energylens/rng.hpp"

namespace energylens {

/// Raw input columns shared by the linear and tree baselines:
/// tp, pp, batch_size, max_tokens, total_input_tokens.
inline constexpr int kNumRawFeatures = 5;

std::array<double, kNumRawFeatures> raw_features(const ProfilingRecord& r);
const std::vector<std::string>& raw_feature_names();
Eigen::MatrixXd raw_feature_matrix(const Dataset& data);
Eigen::VectorXd energy_vector(const Dataset& data);

inline constexpr const char* kBaselineSchema = "energylens-baseline-v1";

// ---------------------------------------------------------------- linear

struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  double lambda = 0.0;
  /// Set when the requested system was singular and the fit fell back to a
  /// tiny ridge term.
  bool singular_fallback = false;
};

inline constexpr double kSingularFallbackLambda = 1e-8;

/// Ridge least squares on centred columns. Rows of x are samples.
LinearModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda = 0.0);
LinearModel fit_linear(const Dataset& data, double lambda = 0.0);
double predict_linear(const LinearModel& model, std::span<const double> features);
double predict_linear(const LinearModel& model, const ProfilingRecord& r);

// ---------------------------------------------------------------- trees

/// Flat binary tree. A node with feature < 0 is a leaf.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;  ///< go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> features) const;
  int depth() const;
  std::size_t leaf_count() const;
};

struct TreeOptions {
  int max_depth = 12;
  int min_leaf = 2;
  /// Candidate features per split; 0 or >= d means all.
  int max_features = 0;
};

/// Variance-reduction CART on the given rows. Ties between candidate splits
/// go to the lowest feature index, then the lowest threshold. `rng` is only
/// consumed when features are subsampled.
RegressionTree fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::span<const std::size_t> rows, const TreeOptions& options, Rng& rng);

enum class EnsembleKind { bagged, boosted };

struct TreeEnsemble {
  EnsembleKind kind = EnsembleKind::bagged;
  std::vector<RegressionTree> trees;
  double learning_rate = 1.0;
  double initial = 0.0;
};

struct ForestOptions {
  int n_trees = 100;
  int max_depth = 12;
  int min_leaf = 2;
  /// 0 means ceil(sqrt(d)).
  int max_features = 0;
  std::uint64_t seed = 0;
};

struct BoostingOptions {
  int n_trees = 100;
  int max_depth = 3;
  double learning_rate = 0.1;
  int min_leaf = 1;
  std::uint64_t seed = 0;
};

TreeEnsemble fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const ForestOptions& options = {});
TreeEnsemble fit_forest(const Dataset& data, const ForestOptions& options = {});
TreeEnsemble fit_boosting(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const BoostingOptions& options = {});
TreeEnsemble fit_boosting(const Dataset& data, const BoostingOptions& options = {});
double predict_ensemble(const TreeEnsemble& model, std::span<const double> features);
double predict_ensemble(const TreeEnsemble& model, const ProfilingRecord& r);

// ---------------------------------------------------------------- latency x power

enum class PowerMode { per_config_table, global_mean };

const char* to_string(PowerMode mode) noexcept;
PowerMode parse_power_mode(std::string_view text);

struct ProxyOptions {
  PowerMode power_mode = PowerMode::per_config_table;
  FitOptions fit;
};

/// Latency surrogate times a power estimate, with one global scale factor.
/// The surrogate is the energy formula with its overhead block pinned to zero,
/// fitted to measured latency.
struct LatencyProxyModel {
  Params latency_params;
  PowerMode power_mode = PowerMode::per_config_table;
  std::map<std::pair<int, int>, double> power_table;
  double mean_power_w = 0.0;
  double scale = 1.0;
  FitResult latency_fit;
};

LatencyProxyModel fit_latency_proxy(const Dataset& data, const ProxyOptions& options = {});
double predict_latency(const LatencyProxyModel& model, const ProfilingRecord& r);
/// Power used for a configuration; unseen (tp, pp) fall back to the mean.
double proxy_power(const LatencyProxyModel& model, int tp, int pp);
double predict_proxy(const LatencyProxyModel& model, const ProfilingRecord& r);

/// Minimizer of sum_i |k * pred_i - actual_i| / actual_i over k > 0.
double mape_optimal_scale(std::span<const double> pred, std::span<const double> actual);

// ---------------------------------------------------------------- serialization

nlohmann::ordered_json to_json(const LinearModel& model);
nlohmann::ordered_json to_json(const TreeEnsemble& model);
nlohmann::ordered_json to_json(const LatencyProxyModel& model);
LinearModel linear_from_json(const nlohmann::json& j);
TreeEnsemble ensemble_from_json(const nlohmann::json& j);
LatencyProxyModel proxy_from_json(const nlohmann::json& j);

}  // namespace energylens
