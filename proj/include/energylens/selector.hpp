#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "energylens/dataset.hpp"
#include "energylens/energy_formula.hpp"

namespace energylens {

struct Constraints {
  /// Upper bound on tp * pp.
  std::optional<int> max_gpus;
  /// Extra runnability check, e.g. memory; unset means every point is feasible.
  std::function<bool(const ConfigPoint&)> feasible;

  bool admits(const ConfigPoint& p) const;
};

/// Cartesian product in (tp, pp, batch, max_tokens) nesting order, minus
/// points rejected by `constraints`.
std::vector<ConfigPoint> enumerate(const ConfigSpace& space, const Constraints& constraints = {});

struct SelectionRequest {
  Params params;
  ConfigSpace space;
  std::int64_t input_tokens = 512;
  Constraints constraints;
};

struct RankedConfig {
  ConfigPoint point;
  double energy_j = 0.0;
  /// Same predicted energy as a neighbouring entry.
  bool tied = false;
};

/// Sorted by predicted energy, then (tp, pp, batch, max_tokens).
using RankedConfigs = std::vector<RankedConfig>;

RankedConfigs select(const SelectionRequest& request);

enum class SweepAxis { tp, pp, batch_size, max_tokens };

const char* to_string(SweepAxis axis) noexcept;
SweepAxis parse_sweep_axis(std::string_view text);

struct WhatIfRow {
  int value = 0;
  double energy_j = 0.0;
  /// Value lies outside the range spanned by the fitted grid on this axis.
  bool extrapolated = false;
};

/// One-dimensional sweep around `base`. `grid` supplies the fitted range used
/// for the extrapolation flag.
std::vector<WhatIfRow> whatif(const Params& params, const ConfigPoint& base,
                              std::int64_t input_tokens, SweepAxis axis,
                              const std::vector<int>& values, const ConfigSpace& grid = {});

void write_ranking_csv(const RankedConfigs& ranking, std::ostream& out);
nlohmann::ordered_json ranking_to_json(const RankedConfigs& ranking, std::int64_t input_tokens);
void write_whatif_csv(const std::vector<WhatIfRow>& rows, SweepAxis axis, std::ostream& out);
nlohmann::ordered_json whatif_to_json(const std::vector<WhatIfRow>& rows, SweepAxis axis,
                                      const ConfigPoint& base, std::int64_t input_tokens);

}  // namespace energylens
