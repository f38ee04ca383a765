#include <algorithm>
#include <cmath>
#include <numeric>

#include "energylens/baselines.hpp"
#include "energylens/error.hpp"

namespace energylens {

const char* to_string(PowerMode mode) noexcept {
  return mode == PowerMode::per_config_table ? "per-config" : "mean";
}

PowerMode parse_power_mode(std::string_view text) {
  if (text == "per-config") return PowerMode::per_config_table;
  if (text == "mean") return PowerMode::global_mean;
  throw Error(ErrorKind::invalid_argument,
              "unknown power mode '" + std::string(text) + "' (expected per-config or mean)");
}

double mape_optimal_scale(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size() || pred.empty())
    throw Error(ErrorKind::length_mismatch, "scale fit needs equal, non-empty inputs");
  // sum_i w_i |k - r_i| with r_i = actual/pred and w_i = pred/actual is
  // minimized at a weighted median of r.
  struct Item {
    double ratio, weight;
  };
  std::vector<Item> items;
  items.reserve(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(pred[i] > 0.0) || !(actual[i] > 0.0))
      throw Error(ErrorKind::invalid_argument, "scale fit needs positive predictions and targets");
    items.push_back({actual[i] / pred[i], pred[i] / actual[i]});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.ratio < b.ratio; });
  const double total =
      std::accumulate(items.begin(), items.end(), 0.0, [](double s, const Item& it) { return s + it.weight; });
  double acc = 0.0;
  for (const auto& it : items) {
    acc += it.weight;
    if (acc >= 0.5 * total) return it.ratio;
  }
  return items.back().ratio;
}

LatencyProxyModel fit_latency_proxy(const Dataset& data, const ProxyOptions& options) {
  if (data.empty()) throw Error(ErrorKind::empty_dataset, "no records to fit the proxy on");
  LatencyProxyModel model;
  model.power_mode = options.power_mode;

  std::vector<FormulaSample> samples;
  samples.reserve(data.size());
  std::map<std::pair<int, int>, std::pair<double, int>> power_acc;
  double power_sum = 0.0;
  int power_count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    if (!r.latency_s)
      throw Error(ErrorKind::missing_latency, "record " + std::to_string(i) + " has no latency_s");
    samples.push_back({r.formula_input(), *r.latency_s});
    if (r.avg_power_w) {
      auto& [sum, count] = power_acc[{r.tp, r.pp}];
      sum += *r.avg_power_w;
      ++count;
      power_sum += *r.avg_power_w;
      ++power_count;
    } else if (options.power_mode == PowerMode::per_config_table) {
      throw Error(ErrorKind::missing_power, "record " + std::to_string(i) + " has no avg_power_w");
    }
  }
  if (power_count == 0) throw Error(ErrorKind::missing_power, "no record carries avg_power_w");
  model.mean_power_w = power_sum / power_count;
  if (options.power_mode == PowerMode::per_config_table)
    for (const auto& [key, acc] : power_acc) model.power_table[key] = acc.first / acc.second;

  model.latency_fit = fit_formula(samples, options.fit, FormulaMask{.overhead = false});
  model.latency_params = model.latency_fit.params;

  std::vector<double> pred, actual;
  pred.reserve(data.size());
  actual.reserve(data.size());
  for (const auto& r : data.records) {
    pred.push_back(predict_latency(model, r) * proxy_power(model, r.tp, r.pp));
    actual.push_back(r.energy_j);
  }
  model.scale = mape_optimal_scale(pred, actual);
  return model;
}

double predict_latency(const LatencyProxyModel& model, const ProfilingRecord& r) {
  return eval_energy(model.latency_params, r.formula_input());
}

double proxy_power(const LatencyProxyModel& model, int tp, int pp) {
  if (model.power_mode == PowerMode::global_mean) return model.mean_power_w;
  const auto it = model.power_table.find({tp, pp});
  return it == model.power_table.end() ? model.mean_power_w : it->second;
}

double predict_proxy(const LatencyProxyModel& model, const ProfilingRecord& r) {
  return model.scale * predict_latency(model, r) * proxy_power(model, r.tp, r.pp);
}

nlohmann::ordered_json to_json(const LatencyProxyModel& model) {
  nlohmann::ordered_json j;
  j["schema"] = kBaselineSchema;
  j["kind"] = "latency_proxy";
  j["power_mode"] = to_string(model.power_mode);
  j["scale"] = model.scale;
  j["mean_power_w"] = model.mean_power_w;
  auto table = nlohmann::ordered_json::array();
  for (const auto& [key, watts] : model.power_table)
    table.push_back({{"tp", key.first}, {"pp", key.second}, {"power_w", watts}});
  j["power_table"] = std::move(table);
  j["latency"] = params_to_json(model.latency_fit);
  return j;
}

LatencyProxyModel proxy_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", std::string()) != kBaselineSchema ||
      j.value("kind", std::string()) != "latency_proxy")
    throw Error(ErrorKind::schema_mismatch, "expected a latency-proxy baseline document");
  try {
    LatencyProxyModel model;
    model.power_mode = parse_power_mode(j.at("power_mode").get<std::string>());
    model.scale = j.at("scale").get<double>();
    model.mean_power_w = j.at("mean_power_w").get<double>();
    for (const auto& e : j.at("power_table"))
      model.power_table[{e.at("tp").get<int>(), e.at("pp").get<int>()}] = e.at("power_w").get<double>();
    model.latency_fit = params_from_json(j.at("latency"));
    model.latency_params = model.latency_fit.params;
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("latency proxy: ") + e.what());
  }
}

}  // namespace energylens
