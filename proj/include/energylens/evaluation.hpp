#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "energylens/dataset.hpp"

namespace energylens {

/// 100 * mean(|pred - actual| / actual). Every actual must be positive.
double mape(std::span<const double> pred, std::span<const double> actual);
/// 1 - SS_res / SS_tot; throws zero_variance_actual when SS_tot = 0.
double r_squared(std::span<const double> pred, std::span<const double> actual);
double rmse(std::span<const double> pred, std::span<const double> actual);

/// Everything except (tp, pp).
struct ScenarioKey {
  std::string model_id, hardware_id, modality;
  int batch_size = 0;
  int max_tokens = 0;
  std::int64_t total_input_tokens = 0;

  auto operator<=>(const ScenarioKey&) const = default;
};

struct ScenarioEntry {
  int tp = 1;
  int pp = 1;
  double actual = 0.0;
  double predicted = 0.0;
};

struct Scenario {
  ScenarioKey key;
  /// Sorted by (tp, pp); repeated measurements of one (tp, pp) are averaged.
  std::vector<ScenarioEntry> entries;

  std::size_t pair_count() const { return entries.size() * (entries.size() - 1) / 2; }
};

/// Groups records by scenario key, in key order. Keys with fewer than two
/// distinct (tp, pp) are dropped.
std::vector<Scenario> group_scenarios(const Dataset& data, std::span<const double> predictions);

std::size_t total_pairs(std::span<const Scenario> scenarios);

/// Fraction of unordered pairs whose predicted order matches the measured
/// order. Pairs with |actual_i - actual_j| <= tie_tolerance are skipped;
/// predicted ties count as wrong.
double pairwise_accuracy(std::span<const Scenario> scenarios, double tie_tolerance = 0.0);

struct SpearmanResult {
  double rho = 0.0;       ///< unweighted mean over usable scenarios
  std::size_t used = 0;
  std::size_t excluded = 0;  ///< scenarios whose ranks were all tied
};

/// Average ranks for ties.
std::vector<double> average_ranks(std::span<const double> values);
SpearmanResult spearman_rho(std::span<const Scenario> scenarios);

struct TopOneResult {
  double top1 = 0.0;
  double mean_regret_pct = 0.0;
};

/// Index of the smallest value; ties go to the earliest entry, which is the
/// lexicographically lowest (tp, pp) in a grouped scenario.
std::size_t argmin_entry(std::span<const ScenarioEntry> entries, bool use_prediction);
TopOneResult top1_and_regret(std::span<const Scenario> scenarios);

struct EvalReport {
  double mape = 0.0;
  double r2 = 0.0;
  double rmse = 0.0;
  double pairwise_accuracy = 0.0;
  /// 0 when every scenario's predictions are fully tied.
  double spearman_rho = 0.0;
  double top1_accuracy = 0.0;
  double mean_regret_pct = 0.0;
  std::size_t n_scenarios = 0;
  std::size_t n_pairs = 0;
  std::size_t n_test = 0;
  std::size_t spearman_excluded = 0;
};

using Predictor = std::function<double(const ProfilingRecord&)>;

/// Scores `predictor` on `test`. Fit it on data disjoint from `test`.
EvalReport evaluate(const Predictor& predictor, const Dataset& test);
EvalReport evaluate_predictions(const Dataset& test, std::span<const double> predictions);

struct LeaderboardRow {
  std::string method;
  std::string dataset;
  std::size_t n_train = 0;
  EvalReport report;
};

inline constexpr const char* kReportSchema = "energylens-report-v1";

void write_leaderboard_csv(std::span<const LeaderboardRow> rows, std::ostream& out);
nlohmann::ordered_json report_to_json(std::span<const LeaderboardRow> rows);
/// Fixed-width table for terminals.
void write_leaderboard_table(std::span<const LeaderboardRow> rows, std::ostream& out);

}  // namespace energylens
