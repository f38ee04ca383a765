#include "energylens/selector.hpp"

#include <algorithm>
#include <cmath>

#include "energylens/error.hpp"
#include "energylens/format.hpp"

namespace energylens {

bool Constraints::admits(const ConfigPoint& p) const {
  if (max_gpus && p.tp * p.pp > *max_gpus) return false;
  return !feasible || feasible(p);
}

std::vector<ConfigPoint> enumerate(const ConfigSpace& space, const Constraints& constraints) {
  space.validate();
  std::vector<ConfigPoint> points;
  for (int tp : space.tp_values)
    for (int pp : space.pp_values)
      for (int batch : space.batch_values)
        for (int max_tokens : space.max_token_values) {
          const ConfigPoint p{tp, pp, batch, max_tokens};
          if (constraints.admits(p)) points.push_back(p);
        }
  if (points.empty())
    throw Error(ErrorKind::empty_after_filter, "no configuration satisfies the constraints");
  return points;
}

namespace {

std::string describe(const ConfigPoint& p) {
  return "tp=" + std::to_string(p.tp) + " pp=" + std::to_string(p.pp) +
         " batch=" + std::to_string(p.batch_size) + " max_tokens=" + std::to_string(p.max_tokens);
}

double energy_at(const Params& params, const ConfigPoint& p, std::int64_t input_tokens) {
  try {
    return eval_energy(params, FormulaInput<double>{static_cast<double>(p.tp), static_cast<double>(p.pp),
                                                    static_cast<double>(p.batch_size),
                                                    static_cast<double>(p.max_tokens),
                                                    static_cast<double>(input_tokens)});
  } catch (const Error&) {
    throw Error(ErrorKind::non_finite_prediction, "energy is not finite at " + describe(p));
  }
}

}  // namespace

RankedConfigs select(const SelectionRequest& request) {
  if (auto bad = find_bounds_violation(request.params))
    throw Error(ErrorKind::bounds_violation, "parameter " + *bad);
  if (request.input_tokens < 1)
    throw Error(ErrorKind::invalid_argument, "input tokens must be positive");
  RankedConfigs ranking;
  for (const auto& p : enumerate(request.space, request.constraints))
    ranking.push_back({p, energy_at(request.params, p, request.input_tokens), false});
  std::sort(ranking.begin(), ranking.end(), [](const RankedConfig& a, const RankedConfig& b) {
    if (a.energy_j != b.energy_j) return a.energy_j < b.energy_j;
    return a.point < b.point;
  });
  for (std::size_t i = 0; i + 1 < ranking.size(); ++i) {
    if (ranking[i].energy_j == ranking[i + 1].energy_j) ranking[i].tied = ranking[i + 1].tied = true;
  }
  return ranking;
}

const char* to_string(SweepAxis axis) noexcept {
  switch (axis) {
    case SweepAxis::tp: return "tp";
    case SweepAxis::pp: return "pp";
    case SweepAxis::batch_size: return "batch_size";
    case SweepAxis::max_tokens: return "max_tokens";
  }
  return "";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  if (text == "tp") return SweepAxis::tp;
  if (text == "pp") return SweepAxis::pp;
  if (text == "batch" || text == "batch_size") return SweepAxis::batch_size;
  if (text == "max_tokens") return SweepAxis::max_tokens;
  throw Error(ErrorKind::invalid_argument, "unknown sweep axis '" + std::string(text) + "'");
}

std::vector<WhatIfRow> whatif(const Params& params, const ConfigPoint& base,
                              std::int64_t input_tokens, SweepAxis axis,
                              const std::vector<int>& values, const ConfigSpace& grid) {
  if (values.empty()) throw Error(ErrorKind::invalid_argument, "sweep needs at least one value");
  if (input_tokens < 1) throw Error(ErrorKind::invalid_argument, "input tokens must be positive");
  const std::vector<int>* fitted = nullptr;
  switch (axis) {
    case SweepAxis::tp: fitted = &grid.tp_values; break;
    case SweepAxis::pp: fitted = &grid.pp_values; break;
    case SweepAxis::batch_size: fitted = &grid.batch_values; break;
    case SweepAxis::max_tokens: fitted = &grid.max_token_values; break;
  }
  const auto [lo, hi] = std::minmax_element(fitted->begin(), fitted->end());
  std::vector<WhatIfRow> rows;
  for (int v : values) {
    if (v < 1) throw Error(ErrorKind::invalid_argument, "sweep values must be positive");
    ConfigPoint p = base;
    switch (axis) {
      case SweepAxis::tp: p.tp = v; break;
      case SweepAxis::pp: p.pp = v; break;
      case SweepAxis::batch_size: p.batch_size = v; break;
      case SweepAxis::max_tokens: p.max_tokens = v; break;
    }
    const bool outside = fitted->empty() || v < *lo || v > *hi;
    rows.push_back({v, energy_at(params, p, input_tokens), outside});
  }
  return rows;
}

void write_ranking_csv(const RankedConfigs& ranking, std::ostream& out) {
  out << "rank,tp,pp,batch_size,max_tokens,energy_j,tied\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& r = ranking[i];
    out << (i + 1) << ',' << r.point.tp << ',' << r.point.pp << ',' << r.point.batch_size << ','
        << r.point.max_tokens << ',' << format_double(r.energy_j) << ',' << (r.tied ? "true" : "false")
        << '\n';
  }
}

nlohmann::ordered_json ranking_to_json(const RankedConfigs& ranking, std::int64_t input_tokens) {
  nlohmann::ordered_json j;
  j["input_tokens"] = input_tokens;
  auto arr = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& r = ranking[i];
    arr.push_back({{"rank", i + 1},
                   {"tp", r.point.tp},
                   {"pp", r.point.pp},
                   {"batch_size", r.point.batch_size},
                   {"max_tokens", r.point.max_tokens},
                   {"energy_j", r.energy_j},
                   {"tied", r.tied}});
  }
  j["ranking"] = std::move(arr);
  return j;
}

void write_whatif_csv(const std::vector<WhatIfRow>& rows, SweepAxis axis, std::ostream& out) {
  out << to_string(axis) << ",energy_j,extrapolated\n";
  for (const auto& r : rows)
    out << r.value << ',' << format_double(r.energy_j) << ',' << (r.extrapolated ? "true" : "false")
        << '\n';
}

nlohmann::ordered_json whatif_to_json(const std::vector<WhatIfRow>& rows, SweepAxis axis,
                                      const ConfigPoint& base, std::int64_t input_tokens) {
  nlohmann::ordered_json j;
  j["axis"] = to_string(axis);
  j["base"] = {{"tp", base.tp},
               {"pp", base.pp},
               {"batch_size", base.batch_size},
               {"max_tokens", base.max_tokens},
               {"input_tokens", input_tokens}};
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows)
    arr.push_back({{"value", r.value}, {"energy_j", r.energy_j}, {"extrapolated", r.extrapolated}});
  j["rows"] = std::move(arr);
  return j;
}

}  // namespace energylens
