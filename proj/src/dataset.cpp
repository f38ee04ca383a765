#include "energylens/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "energylens/format.hpp"
#include "energylens/rng.hpp"

namespace energylens {

namespace {

constexpr std::array<const char*, 9> kMandatoryColumns = {
    "model_id", "hardware_id", "modality", "tp", "pp",
    "batch_size", "max_tokens", "total_input_tokens", "energy_j"};

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        current += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& text, std::size_t line, const std::string& column) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || text.empty()) {
    throw Error(ErrorKind::parse_failure,
                "line " + std::to_string(line) + ", column '" + column + "': cannot parse '" +
                    text + "'");
  }
  return value;
}

using RecordKey = std::tuple<std::string, std::string, std::string, int, int, int, int,
                             std::int64_t, int>;

RecordKey key_of(const ProfilingRecord& r) {
  return {r.model_id, r.hardware_id,  r.modality,           r.tp,
          r.pp,       r.batch_size,   r.max_tokens,         r.total_input_tokens,
          r.repeat_index.value_or(-1)};
}

std::optional<std::string> record_violation(const ProfilingRecord& r) {
  if (r.tp < 1) return "tp must be >= 1";
  if (r.pp < 1) return "pp must be >= 1";
  if (r.batch_size < 1) return "batch_size must be >= 1";
  if (r.max_tokens < 1) return "max_tokens must be >= 1";
  if (r.total_input_tokens < 1) return "total_input_tokens must be >= 1";
  if (!(std::isfinite(r.energy_j) && r.energy_j > 0)) return "energy_j must be positive";
  if (r.latency_s && !(std::isfinite(*r.latency_s) && *r.latency_s > 0))
    return "latency_s must be positive";
  if (r.avg_power_w && !(std::isfinite(*r.avg_power_w) && *r.avg_power_w > 0))
    return "avg_power_w must be positive";
  return std::nullopt;
}

bool inconsistent(const ProfilingRecord& r, double factor) {
  if (!r.latency_s || !r.avg_power_w) return false;
  const double implied = *r.latency_s * *r.avg_power_w;
  const double ratio = r.energy_j / implied;
  return ratio > factor || ratio < 1.0 / factor;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows, std::string source) {
  Dataset out;
  out.source = std::move(source);
  out.records.reserve(rows.size());
  for (std::size_t i : rows) out.records.push_back(data.records[i]);
  return out;
}

/// First `n` positions of a seeded partial Fisher-Yates shuffle.
std::vector<std::size_t> shuffled_indices(std::size_t total, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = derive_rng(seed);
  for (std::size_t i = 0; i < n && i + 1 < total; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, total - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  return idx;
}

template <typename T>
std::vector<T> distinct_sorted(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

void validate_axis(const std::vector<int>& axis, const char* name) {
  if (axis.empty()) throw Error(ErrorKind::invalid_argument, std::string(name) + " is empty");
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (axis[i] < 1)
      throw Error(ErrorKind::invalid_argument, std::string(name) + " values must be positive");
    if (i > 0 && axis[i] <= axis[i - 1])
      throw Error(ErrorKind::invalid_argument,
                  std::string(name) + " values must be strictly increasing");
  }
}

}  // namespace

void ConfigSpace::validate() const {
  validate_axis(tp_values, "tp_values");
  validate_axis(pp_values, "pp_values");
  validate_axis(batch_values, "batch_values");
  validate_axis(max_token_values, "max_token_values");
}

Params default_ground_truth_params() {
  Params p;
  p.alpha_p = 0.05;
  p.alpha_d = 1.2;
  p.beta_p = 0.85;
  p.beta_d = 0.75;
  p.eps_p = 0.3;
  p.eps_d = 0.5;
  p.gamma1_p = -0.7;
  p.gamma2_p = -0.2;
  p.gamma1_d = -0.5;
  p.gamma2_d = 0.15;
  p.delta1 = 15.0;
  p.delta2 = 25.0;
  return p;
}

Dataset parse_csv(std::istream& in, std::string source, const LoadOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    header = split_fields(line);
    break;
  }
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[trim(header[i])] = i;
  for (const char* name : kMandatoryColumns) {
    if (!col.count(name)) throw Error(ErrorKind::missing_column, std::string("'") + name + "'");
  }
  const auto optional_col = [&](const char* name) -> std::optional<std::size_t> {
    auto it = col.find(name);
    return it == col.end() ? std::nullopt : std::optional<std::size_t>(it->second);
  };
  const auto latency_col = optional_col("latency_s");
  const auto power_col = optional_col("avg_power_w");
  const auto repeat_col = optional_col("repeat_index");

  Dataset data;
  data.source = std::move(source);
  std::set<RecordKey> seen;
  std::vector<std::string> violations;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::parse_failure, "line " + std::to_string(line_no) + ": expected " +
                                                std::to_string(header.size()) + " fields, got " +
                                                std::to_string(fields.size()));
    }
    const auto field = [&](const char* name) { return trim(fields[col.at(name)]); };

    ProfilingRecord r;
    r.model_id = field("model_id");
    r.hardware_id = field("hardware_id");
    r.modality = field("modality");
    r.tp = parse_number<int>(field("tp"), line_no, "tp");
    r.pp = parse_number<int>(field("pp"), line_no, "pp");
    r.batch_size = parse_number<int>(field("batch_size"), line_no, "batch_size");
    r.max_tokens = parse_number<int>(field("max_tokens"), line_no, "max_tokens");
    r.total_input_tokens =
        parse_number<std::int64_t>(field("total_input_tokens"), line_no, "total_input_tokens");
    r.energy_j = parse_number<double>(field("energy_j"), line_no, "energy_j");
    if (latency_col && !trim(fields[*latency_col]).empty())
      r.latency_s = parse_number<double>(trim(fields[*latency_col]), line_no, "latency_s");
    if (power_col && !trim(fields[*power_col]).empty())
      r.avg_power_w = parse_number<double>(trim(fields[*power_col]), line_no, "avg_power_w");
    if (repeat_col && !trim(fields[*repeat_col]).empty())
      r.repeat_index = parse_number<int>(trim(fields[*repeat_col]), line_no, "repeat_index");

    if (auto why = record_violation(r)) {
      violations.push_back("line " + std::to_string(line_no) + ": " + *why);
      continue;
    }
    if (!seen.insert(key_of(r)).second) {
      violations.push_back("line " + std::to_string(line_no) +
                           ": duplicate configuration key without repeat_index");
      continue;
    }
    r.flagged = inconsistent(r, options.consistency_factor);
    data.records.push_back(std::move(r));
  }

  if (!violations.empty()) {
    std::string msg;
    for (std::size_t i = 0; i < violations.size() && i < 10; ++i) {
      if (i) msg += "; ";
      msg += violations[i];
    }
    if (violations.size() > 10) msg += "; ... (" + std::to_string(violations.size()) + " rows)";
    throw Error(ErrorKind::invariant_violation, msg);
  }
  if (data.records.empty()) throw Error(ErrorKind::empty_dataset, data.source);
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  return parse_csv(in, path.string(), options);
}

void write_csv(const Dataset& data, std::ostream& out) {
  const bool any_latency = std::any_of(data.records.begin(), data.records.end(),
                                       [](const auto& r) { return r.latency_s.has_value(); });
  const bool any_power = std::any_of(data.records.begin(), data.records.end(),
                                     [](const auto& r) { return r.avg_power_w.has_value(); });
  const bool any_repeat = std::any_of(data.records.begin(), data.records.end(),
                                      [](const auto& r) { return r.repeat_index.has_value(); });
  out << "model_id,hardware_id,modality,tp,pp,batch_size,max_tokens,total_input_tokens,energy_j";
  if (any_latency) out << ",latency_s";
  if (any_power) out << ",avg_power_w";
  if (any_repeat) out << ",repeat_index";
  out << '\n';
  for (const auto& r : data.records) {
    out << quote_if_needed(r.model_id) << ',' << quote_if_needed(r.hardware_id) << ','
        << quote_if_needed(r.modality) << ',' << r.tp << ',' << r.pp << ',' << r.batch_size << ','
        << r.max_tokens << ',' << r.total_input_tokens << ',' << format_double(r.energy_j);
    if (any_latency) out << ',' << (r.latency_s ? format_double(*r.latency_s) : "");
    if (any_power) out << ',' << (r.avg_power_w ? format_double(*r.avg_power_w) : "");
    if (any_repeat) out << ',' << (r.repeat_index ? std::to_string(*r.repeat_index) : "");
    out << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  write_csv(data, out);
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

void write_sidecar(const std::filesystem::path& csv_path, const std::string& source,
                   std::uint64_t seed) {
  auto sidecar = csv_path;
  sidecar.replace_extension(".json");
  nlohmann::ordered_json j;
  j["source"] = source;
  j["seed"] = seed;
  j["generator_version"] = kGeneratorVersion;
  std::ofstream out(sidecar, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + sidecar.string());
  out << j.dump(2) << '\n';
}

std::pair<Dataset, Dataset> holdout(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n > data.size()) {
    throw Error(ErrorKind::n_too_large, "requested " + std::to_string(n) + " of " +
                                            std::to_string(data.size()) + " records");
  }
  const auto idx = shuffled_indices(data.size(), n, seed);
  std::vector<std::size_t> drawn(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  std::vector<std::size_t> rest(idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end());
  std::sort(rest.begin(), rest.end());
  const std::string tag = "#sample(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")";
  return {subset(data, drawn, data.source + tag), subset(data, rest, data.source + tag + "~rest")};
}

Dataset sample_random(const Dataset& data, std::size_t n, std::uint64_t seed) {
  return holdout(data, n, seed).first;
}

Eigen::MatrixXd lhs_unit_design(std::size_t n, std::size_t axes, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, "LHS needs n >= 1");
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(axes));
  Rng rng = derive_rng(seed, {0x6c6873});
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  std::vector<std::size_t> strata(n);
  for (std::size_t a = 0; a < axes; ++a) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      double u = (static_cast<double>(strata[i]) + jitter(rng)) / static_cast<double>(n);
      // Keep u inside its stratum when rounding lands on the upper edge.
      const double upper = static_cast<double>(strata[i] + 1) / static_cast<double>(n);
      if (u >= upper) u = std::nextafter(upper, 0.0);
      design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = u;
    }
  }
  return design;
}

int snap_to_grid(double u, std::span<const int> values) {
  if (values.empty()) throw Error(ErrorKind::invalid_argument, "cannot snap to an empty axis");
  const double m = static_cast<double>(values.size());
  std::size_t best = 0;
  double best_dist = std::abs(2.0 * m * u - 1.0);
  for (std::size_t j = 1; j < values.size(); ++j) {
    const double dist = std::abs(2.0 * m * u - static_cast<double>(2 * j + 1));
    if (dist < best_dist) {
      best = j;
      best_dist = dist;
    }
  }
  return values[best];
}

std::vector<ConfigPoint> sample_lhs(const ConfigSpace& space, std::size_t n, std::uint64_t seed) {
  space.validate();
  const Eigen::MatrixXd design = lhs_unit_design(n, 4, seed);
  std::vector<ConfigPoint> points(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    points[i] = {snap_to_grid(design(row, 0), space.tp_values),
                 snap_to_grid(design(row, 1), space.pp_values),
                 snap_to_grid(design(row, 2), space.batch_values),
                 snap_to_grid(design(row, 3), space.max_token_values)};
  }
  return points;
}

Dataset sample_lhs_records(const Dataset& data, std::optional<std::int64_t> input_tokens,
                           std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!input_tokens || data.records[i].total_input_tokens == *input_tokens)
      candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw Error(ErrorKind::empty_dataset, "no records with total_input_tokens=" +
                                              std::to_string(input_tokens.value_or(0)));
  }

  std::array<std::vector<std::int64_t>, 5> axes;
  for (std::size_t i : candidates) {
    const auto& r = data.records[i];
    axes[0].push_back(r.tp);
    axes[1].push_back(r.pp);
    axes[2].push_back(r.batch_size);
    axes[3].push_back(r.max_tokens);
    axes[4].push_back(r.total_input_tokens);
  }
  for (auto& a : axes) a = distinct_sorted(std::move(a));
  const std::size_t n_axes = input_tokens ? 4 : 5;

  // Grid position of each candidate record, per axis.
  const auto position = [&](const ProfilingRecord& r) {
    const std::array<std::int64_t, 5> v = {r.tp, r.pp, r.batch_size, r.max_tokens,
                                           r.total_input_tokens};
    std::array<std::size_t, 5> pos{};
    for (std::size_t a = 0; a < 5; ++a)
      pos[a] = static_cast<std::size_t>(std::lower_bound(axes[a].begin(), axes[a].end(), v[a]) -
                                        axes[a].begin());
    return pos;
  };

  const Eigen::MatrixXd design = lhs_unit_design(n, n_axes, seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<std::size_t, 5> target{};
    for (std::size_t a = 0; a < n_axes; ++a) {
      std::vector<int> cell_ids(axes[a].size());
      std::iota(cell_ids.begin(), cell_ids.end(), 0);
      target[a] = static_cast<std::size_t>(
          snap_to_grid(design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)),
                       cell_ids));
    }
    std::size_t best = candidates.front();
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t c : candidates) {
      const auto pos = position(data.records[c]);
      std::size_t dist = 0;
      for (std::size_t a = 0; a < n_axes; ++a)
        dist += pos[a] > target[a] ? pos[a] - target[a] : target[a] - pos[a];
      if (dist < best_dist) {
        best = c;
        best_dist = dist;
        if (dist == 0) break;
      }
    }
    chosen.push_back(best);
  }
  return subset(data, chosen,
                data.source + "#lhs(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")");
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction,
                                  std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw Error(ErrorKind::degenerate_split, "train fraction must lie in (0,1)");
  const std::size_t total = data.size();
  if (total < 2) throw Error(ErrorKind::degenerate_split, "need at least 2 records to split");
  std::size_t n_train = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(total))));
  n_train = std::min(n_train, total - 1);
  const auto idx = shuffled_indices(total, total, seed);
  std::span<const std::size_t> all(idx);
  const std::string tag = "#split(" + std::to_string(seed) + ")";
  return {subset(data, all.first(n_train), data.source + tag + ":train"),
          subset(data, all.subspan(n_train), data.source + tag + ":test")};
}

Dataset generate_synthetic(const ConfigSpace& space, std::span<const std::int64_t> input_tokens,
                           const GroundTruthSpec& truth, const SyntheticOptions& options) {
  space.validate();
  if (input_tokens.empty())
    throw Error(ErrorKind::invalid_argument, "input token list is empty");
  for (auto t : input_tokens)
    if (t < 1) throw Error(ErrorKind::invalid_argument, "input token values must be positive");
  if (truth.noise.sigma < 0.0) throw Error(ErrorKind::invalid_argument, "noise sigma must be >= 0");
  if (auto bad = find_bounds_violation(truth.params))
    throw Error(ErrorKind::bounds_violation, "planted parameter " + *bad);
  if (!(options.power_base_w > 0.0))
    throw Error(ErrorKind::invalid_argument, "power base must be positive");

  Dataset data;
  data.source = std::string("synthetic(seed=") + std::to_string(truth.seed) + ")";
  data.records.reserve(space.cardinality() * input_tokens.size());
  Rng rng = derive_rng(truth.seed, {0x6e6f697365});
  std::normal_distribution<double> normal(0.0, 1.0);
  const bool noisy = truth.noise.kind == NoiseModel::Kind::lognormal && truth.noise.sigma > 0.0;

  for (int tp : space.tp_values) {
    for (int pp : space.pp_values) {
      const double power =
          options.power_base_w * std::pow(static_cast<double>(tp * pp), options.power_exponent);
      for (int batch : space.batch_values) {
        for (int max_tokens : space.max_token_values) {
          for (std::int64_t tin : input_tokens) {
            ProfilingRecord r;
            r.model_id = options.model_id;
            r.hardware_id = options.hardware_id;
            r.modality = options.modality;
            r.tp = tp;
            r.pp = pp;
            r.batch_size = batch;
            r.max_tokens = max_tokens;
            r.total_input_tokens = tin;
            const double clean = eval_energy(truth.params, r.formula_input());
            r.energy_j = noisy ? clean * std::exp(truth.noise.sigma * normal(rng)) : clean;
            r.avg_power_w = power;
            r.latency_s = clean / power;
            data.records.push_back(std::move(r));
          }
        }
      }
    }
  }
  return data;
}

std::vector<ContextKey> contexts(const Dataset& data) {
  std::vector<ContextKey> out;
  std::set<ContextKey> seen;
  for (const auto& r : data.records) {
    auto key = context_of(r);
    if (seen.insert(key).second) out.push_back(std::move(key));
  }
  return out;
}

Dataset filter_context(const Dataset& data, const ContextKey& key) {
  Dataset out;
  out.source = data.source;
  for (const auto& r : data.records)
    if (context_of(r) == key) out.records.push_back(r);
  return out;
}

}  // namespace energylens
