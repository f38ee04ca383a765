#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "energylens/energy_formula.hpp"

namespace energylens {

/// One measured (configuration, workload, energy) observation.
struct ProfilingRecord {
  std::string model_id;
  std::string hardware_id;
  std::string modality;
  int tp = 1;
  int pp = 1;
  int batch_size = 1;
  int max_tokens = 1;
  std::int64_t total_input_tokens = 1;
  double energy_j = 0.0;
  std::optional<double> latency_s;
  std::optional<double> avg_power_w;
  std::optional<int> repeat_index;
  /// Set when energy disagrees with latency x power beyond the consistency factor.
  bool flagged = false;

  FormulaInput<double> formula_input() const {
    return {double(tp), double(pp), double(batch_size), double(max_tokens),
            double(total_input_tokens)};
  }

  bool operator==(const ProfilingRecord&) const = default;
};

/// (model, hardware, modality): the unit a single parameter set is fitted to.
struct ContextKey {
  std::string model_id, hardware_id, modality;
  auto operator<=>(const ContextKey&) const = default;
};

inline ContextKey context_of(const ProfilingRecord& r) {
  return {r.model_id, r.hardware_id, r.modality};
}

struct Dataset {
  std::vector<ProfilingRecord> records;
  std::string source;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
};

struct ConfigPoint {
  int tp = 1;
  int pp = 1;
  int batch_size = 1;
  int max_tokens = 1;

  auto operator<=>(const ConfigPoint&) const = default;
};

/// Discrete serving-parameter grid; each axis strictly increasing.
struct ConfigSpace {
  std::vector<int> tp_values{1, 2, 4};
  std::vector<int> pp_values{1, 2, 4};
  std::vector<int> batch_values{1, 2, 4, 8, 16, 32};
  std::vector<int> max_token_values{64, 128, 256, 512};

  /// Throws invalid_argument on an empty, non-positive or unsorted axis.
  void validate() const;
  std::size_t cardinality() const {
    return tp_values.size() * pp_values.size() * batch_values.size() * max_token_values.size();
  }
};

/// Input-token values of the default synthetic benchmark.
inline std::vector<std::int64_t> default_input_tokens() { return {128, 512, 2048}; }

/// Planted parameters of the default synthetic benchmark.
Params default_ground_truth_params();

struct NoiseModel {
  enum class Kind { none, lognormal } kind = Kind::none;
  double sigma = 0.0;

  static NoiseModel none() { return {}; }
  static NoiseModel lognormal(double s) { return {Kind::lognormal, s}; }
};

struct GroundTruthSpec {
  Params params = default_ground_truth_params();
  NoiseModel noise;
  std::uint64_t seed = 0;
};

struct SyntheticOptions {
  std::string model_id = "synthetic-7b";
  std::string hardware_id = "sim-gpu";
  std::string modality = "text";
  /// Average power at tp*pp = 1 (Watts).
  double power_base_w = 250.0;
  /// Per-config power is power_base_w * (tp*pp)^power_exponent.
  double power_exponent = 0.8;
};

inline constexpr const char* kGeneratorVersion = "energylens-synth-1";

struct LoadOptions {
  /// Energy may deviate from latency*power by at most this factor before the
  /// record is flagged.
  double consistency_factor = 2.0;
};

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options = {});
Dataset parse_csv(std::istream& in, std::string source, const LoadOptions& options = {});
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// JSON sidecar `{source, seed, generator_version}` written next to a generated CSV.
void write_sidecar(const std::filesystem::path& csv_path, const std::string& source,
                   std::uint64_t seed);

/// n records uniformly without replacement.
Dataset sample_random(const Dataset& data, std::size_t n, std::uint64_t seed);

/// Same draw as sample_random, plus the records that were not drawn (in
/// original order).
std::pair<Dataset, Dataset> holdout(const Dataset& data, std::size_t n, std::uint64_t seed);

/// Latin hypercube design on [0,1)^axes: each column holds one point per
/// stratum [k/n, (k+1)/n). Rows are points.
Eigen::MatrixXd lhs_unit_design(std::size_t n, std::size_t axes, std::uint64_t seed);

/// Maps u in [0,1) to the discrete value whose cell centre (j+0.5)/m is
/// nearest; exact ties go to the lower value.
int snap_to_grid(double u, std::span<const int> values);

std::vector<ConfigPoint> sample_lhs(const ConfigSpace& space, std::size_t n, std::uint64_t seed);

/// LHS over the configuration axes, resolved against measured records. With
/// `input_tokens` set, only records of that workload are candidates;
/// otherwise input length is stratified as a fifth axis. Draws that snap to
/// an unmeasured cell fall back to the nearest measured record.
Dataset sample_lhs_records(const Dataset& data, std::optional<std::int64_t> input_tokens,
                           std::size_t n, std::uint64_t seed);

/// Train size max(1, floor(fraction*N)), test gets the remainder (at least 1).
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

Dataset generate_synthetic(const ConfigSpace& space, std::span<const std::int64_t> input_tokens,
                           const GroundTruthSpec& truth, const SyntheticOptions& options = {});

/// Distinct contexts in order of first appearance.
std::vector<ContextKey> contexts(const Dataset& data);
Dataset filter_context(const Dataset& data, const ContextKey& key);

}  // namespace energylens
