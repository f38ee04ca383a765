#include "energylens/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "energylens/error.hpp"
#include "energylens/format.hpp"

namespace energylens {

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size())
    throw Error(ErrorKind::length_mismatch, "prediction and actual lengths differ (" +
                                                std::to_string(pred.size()) + " vs " +
                                                std::to_string(actual.size()) + ")");
  if (actual.empty()) throw Error(ErrorKind::length_mismatch, "metrics need at least one value");
}

}  // namespace

double mape(std::span<const double> pred, std::span<const double> actual) {
  check_lengths(pred, actual);
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (!(actual[i] > 0.0))
      throw Error(ErrorKind::zero_actual, "actual value at index " + std::to_string(i) + " is not positive");
    sum += std::abs(pred[i] - actual[i]) / actual[i];
  }
  return 100.0 * sum / static_cast<double>(actual.size());
}

double r_squared(std::span<const double> pred, std::span<const double> actual) {
  check_lengths(pred, actual);
  const double mean = std::accumulate(actual.begin(), actual.end(), 0.0) / static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot == 0.0) throw Error(ErrorKind::zero_variance_actual, "R^2 is undefined for constant actuals");
  return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> pred, std::span<const double> actual) {
  check_lengths(pred, actual);
  double sum = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) sum += (pred[i] - actual[i]) * (pred[i] - actual[i]);
  return std::sqrt(sum / static_cast<double>(actual.size()));
}

std::vector<Scenario> group_scenarios(const Dataset& data, std::span<const double> predictions) {
  if (predictions.size() != data.size())
    throw Error(ErrorKind::length_mismatch, "one prediction per record is required");
  struct Acc {
    double actual = 0.0, predicted = 0.0;
    int count = 0;
  };
  std::map<ScenarioKey, std::map<std::pair<int, int>, Acc>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    ScenarioKey key{r.model_id, r.hardware_id, r.modality, r.batch_size, r.max_tokens,
                    r.total_input_tokens};
    Acc& acc = groups[key][{r.tp, r.pp}];
    acc.actual += r.energy_j;
    acc.predicted += predictions[i];
    ++acc.count;
  }
  std::vector<Scenario> out;
  for (auto& [key, configs] : groups) {
    if (configs.size() < 2) continue;
    Scenario s{key, {}};
    for (const auto& [tp_pp, acc] : configs)
      s.entries.push_back({tp_pp.first, tp_pp.second, acc.actual / acc.count, acc.predicted / acc.count});
    out.push_back(std::move(s));
  }
  return out;
}

std::size_t total_pairs(std::span<const Scenario> scenarios) {
  std::size_t n = 0;
  for (const auto& s : scenarios) n += s.pair_count();
  return n;
}

double pairwise_accuracy(std::span<const Scenario> scenarios, double tie_tolerance) {
  std::size_t correct = 0, counted = 0;
  for (const auto& s : scenarios) {
    const auto& e = s.entries;
    for (std::size_t i = 0; i < e.size(); ++i) {
      for (std::size_t j = i + 1; j < e.size(); ++j) {
        const double da = e[i].actual - e[j].actual;
        if (std::abs(da) <= tie_tolerance) continue;
        ++counted;
        const double dp = e[i].predicted - e[j].predicted;
        if (dp != 0.0 && (dp > 0.0) == (da > 0.0)) ++correct;
      }
    }
  }
  if (counted == 0) throw Error(ErrorKind::no_pairs, "no comparable configuration pairs");
  return static_cast<double>(correct) / static_cast<double>(counted);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

SpearmanResult spearman_rho(std::span<const Scenario> scenarios) {
  SpearmanResult result;
  double sum = 0.0;
  for (const auto& s : scenarios) {
    std::vector<double> a, p;
    for (const auto& e : s.entries) {
      a.push_back(e.actual);
      p.push_back(e.predicted);
    }
    const auto ra = average_ranks(a);
    const auto rp = average_ranks(p);
    const double n = static_cast<double>(ra.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0, va = 0.0, vp = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
      cov += (ra[i] - mean) * (rp[i] - mean);
      va += (ra[i] - mean) * (ra[i] - mean);
      vp += (rp[i] - mean) * (rp[i] - mean);
    }
    if (va == 0.0 || vp == 0.0) {
      ++result.excluded;
      continue;
    }
    sum += cov / std::sqrt(va * vp);
    ++result.used;
  }
  if (result.used == 0)
    throw Error(ErrorKind::degenerate_ranks, "every scenario has fully tied ranks");
  result.rho = sum / static_cast<double>(result.used);
  return result;
}

std::size_t argmin_entry(std::span<const ScenarioEntry> entries, bool use_prediction) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const double v = use_prediction ? entries[i].predicted : entries[i].actual;
    const double b = use_prediction ? entries[best].predicted : entries[best].actual;
    if (v < b) best = i;
  }
  return best;
}

TopOneResult top1_and_regret(std::span<const Scenario> scenarios) {
  if (scenarios.empty()) throw Error(ErrorKind::no_pairs, "no scenarios to rank");
  std::size_t hits = 0;
  double regret = 0.0;
  for (const auto& s : scenarios) {
    const std::size_t pick = argmin_entry(s.entries, true);
    const std::size_t oracle = argmin_entry(s.entries, false);
    if (pick == oracle) ++hits;
    const double best = s.entries[oracle].actual;
    regret += 100.0 * (s.entries[pick].actual - best) / best;
  }
  const double n = static_cast<double>(scenarios.size());
  return {static_cast<double>(hits) / n, regret / n};
}

EvalReport evaluate_predictions(const Dataset& test, std::span<const double> predictions) {
  if (test.empty()) throw Error(ErrorKind::empty_dataset, "empty test set");
  if (predictions.size() != test.size())
    throw Error(ErrorKind::length_mismatch, "one prediction per test record is required");
  std::vector<double> actual;
  actual.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!std::isfinite(predictions[i]))
      throw Error(ErrorKind::non_finite_prediction,
                  "prediction for test record " + std::to_string(i) + " is not finite");
    actual.push_back(test.records[i].energy_j);
  }
  EvalReport report;
  report.n_test = test.size();
  report.mape = mape(predictions, actual);
  report.r2 = r_squared(predictions, actual);
  report.rmse = rmse(predictions, actual);
  const auto scenarios = group_scenarios(test, predictions);
  report.n_scenarios = scenarios.size();
  report.n_pairs = total_pairs(scenarios);
  report.pairwise_accuracy = pairwise_accuracy(scenarios);
  try {
    const auto sp = spearman_rho(scenarios);
    report.spearman_rho = sp.rho;
    report.spearman_excluded = sp.excluded;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::degenerate_ranks) throw;
    report.spearman_rho = 0.0;
    report.spearman_excluded = scenarios.size();
  }
  const auto top = top1_and_regret(scenarios);
  report.top1_accuracy = top.top1;
  report.mean_regret_pct = top.mean_regret_pct;
  return report;
}

EvalReport evaluate(const Predictor& predictor, const Dataset& test) {
  std::vector<double> predictions;
  predictions.reserve(test.size());
  for (const auto& r : test.records) predictions.push_back(predictor(r));
  return evaluate_predictions(test, predictions);
}

void write_leaderboard_csv(std::span<const LeaderboardRow> rows, std::ostream& out) {
  out << "method,dataset,n_train,mape,r2,rmse,pairwise,spearman,top1,regret\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    out << row.method << ',' << row.dataset << ',' << row.n_train << ',' << format_double(r.mape)
        << ',' << format_double(r.r2) << ',' << format_double(r.rmse) << ','
        << format_double(r.pairwise_accuracy) << ',' << format_double(r.spearman_rho) << ','
        << format_double(r.top1_accuracy) << ',' << format_double(r.mean_regret_pct) << '\n';
  }
}

nlohmann::ordered_json report_to_json(std::span<const LeaderboardRow> rows) {
  nlohmann::ordered_json j;
  j["schema"] = kReportSchema;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    const auto& r = row.report;
    arr.push_back({{"method", row.method},
                   {"dataset", row.dataset},
                   {"n_train", row.n_train},
                   {"n_test", r.n_test},
                   {"mape", r.mape},
                   {"r2", r.r2},
                   {"rmse", r.rmse},
                   {"pairwise_accuracy", r.pairwise_accuracy},
                   {"spearman_rho", r.spearman_rho},
                   {"top1_accuracy", r.top1_accuracy},
                   {"mean_regret_pct", r.mean_regret_pct},
                   {"n_scenarios", r.n_scenarios},
                   {"n_pairs", r.n_pairs},
                   {"spearman_excluded", r.spearman_excluded}});
  }
  j["results"] = std::move(arr);
  return j;
}

void write_leaderboard_table(std::span<const LeaderboardRow> rows, std::ostream& out) {
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %-16s %7s %8s %7s %10s %8s %8s %6s %8s\n", "method",
                "dataset", "n_train", "MAPE%", "R2", "RMSE", "pairwise", "spearman", "top1",
                "regret%");
  out << line;
  for (const auto& row : rows) {
    const auto& r = row.report;
    std::snprintf(line, sizeof line, "%-12s %-16s %7zu %8.2f %7.4f %10.2f %8.4f %8.4f %6.3f %8.3f\n",
                  row.method.c_str(), row.dataset.c_str(), row.n_train, r.mape, r.r2, r.rmse,
                  r.pairwise_accuracy, r.spearman_rho, r.top1_accuracy, r.mean_regret_pct);
    out << line;
  }
}

}  // namespace energylens
