#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "energylens/dataset.hpp"
#include "energylens/error.hpp"

using namespace energylens;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an energylens::Error");
  return ErrorKind::invalid_argument;
}

Dataset small_synthetic() {
  ConfigSpace space;
  space.batch_values = {1, 8};
  space.max_token_values = {64};
  const std::vector<std::int64_t> tokens{512};
  return generate_synthetic(space, tokens, GroundTruthSpec{});
}

std::string to_csv(const Dataset& d) {
  std::ostringstream out;
  write_csv(d, out);
  return out.str();
}

using Key = std::tuple<int, int, int, int, std::int64_t>;
Key key(const ProfilingRecord& r) {
  return {r.tp, r.pp, r.batch_size, r.max_tokens, r.total_input_tokens};
}

}  // namespace

TEST_CASE("csv round trip of three rows") {
  Dataset d = small_synthetic();
  d.records.resize(3);
  std::istringstream in(to_csv(d));
  const Dataset back = parse_csv(in, "mem");
  REQUIRE(back.size() == 3);
  CHECK(back.records[1].tp == d.records[1].tp);
  CHECK(back.records[2].energy_j == doctest::Approx(d.records[2].energy_j).epsilon(1e-15));
  CHECK(back.records[0].latency_s.has_value());
  CHECK(back.records[0].avg_power_w.has_value());
}

TEST_CASE("write(load(write(d))) is byte-identical") {
  const Dataset d = small_synthetic();
  const std::string first = to_csv(d);
  std::istringstream in(first);
  CHECK(to_csv(parse_csv(in, "mem")) == first);
}

TEST_CASE("schema and row errors") {
  SUBCASE("missing energy_j column") {
    std::istringstream in("model_id,hardware_id,modality,tp,pp,batch_size,max_tokens,total_input_tokens\n"
                          "m,h,text,1,1,1,64,128\n");
    CHECK(kind_of([&] { parse_csv(in, "mem"); }) == ErrorKind::missing_column);
  }
  SUBCASE("tp=0 names the row") {
    std::istringstream in("model_id,hardware_id,modality,tp,pp,batch_size,max_tokens,total_input_tokens,energy_j\n"
                          "m,h,text,1,1,1,64,128,10\n"
                          "m,h,text,0,1,1,64,128,10\n");
    try {
      parse_csv(in, "mem");
      FAIL("expected invariant violation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::invariant_violation);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SUBCASE("unparseable number") {
    std::istringstream in("model_id,hardware_id,modality,tp,pp,batch_size,max_tokens,total_input_tokens,energy_j\n"
                          "m,h,text,1,1,x,64,128,10\n");
    CHECK(kind_of([&] { parse_csv(in, "mem"); }) == ErrorKind::parse_failure);
  }
  SUBCASE("header only") {
    std::istringstream in("model_id,hardware_id,modality,tp,pp,batch_size,max_tokens,total_input_tokens,energy_j\n");
    CHECK(kind_of([&] { parse_csv(in, "mem"); }) == ErrorKind::empty_dataset);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([] { load_csv("/nonexistent/energylens.csv"); }) == ErrorKind::io);
  }
}

TEST_CASE("inconsistent latency x power is flagged, not rejected") {
  std::istringstream in("model_id,hardware_id,modality,tp,pp,batch_size,max_tokens,total_input_tokens,energy_j,latency_s,avg_power_w\n"
                        "m,h,text,1,1,1,64,128,100,1,100\n"
                        "m,h,text,2,1,1,64,128,100,1,1000\n");
  const Dataset d = parse_csv(in, "mem");
  REQUIRE(d.size() == 2);
  CHECK_FALSE(d.records[0].flagged);
  CHECK(d.records[1].flagged);
}

TEST_CASE("sample_random") {
  const Dataset d = small_synthetic();
  SUBCASE("n = |records| is a permutation") {
    const Dataset s = sample_random(d, d.size(), 3);
    std::multiset<Key> a, b;
    for (const auto& r : d.records) a.insert(key(r));
    for (const auto& r : s.records) b.insert(key(r));
    CHECK(a == b);
  }
  SUBCASE("deterministic per seed") {
    CHECK(sample_random(d, 5, 11).records == sample_random(d, 5, 11).records);
    CHECK(sample_random(d, 5, 11).records != sample_random(d, 5, 12).records);
  }
  SUBCASE("provenance carries the seed") {
    CHECK(sample_random(d, 5, 11).source.find("seed=11") != std::string::npos);
  }
  SUBCASE("n too large") {
    CHECK(kind_of([&] { sample_random(d, d.size() + 1, 0); }) == ErrorKind::n_too_large);
  }
  SUBCASE("holdout partitions the data") {
    auto [train, rest] = holdout(d, 7, 5);
    CHECK(train.size() == 7);
    CHECK(rest.size() == d.size() - 7);
    std::multiset<Key> all, parts;
    for (const auto& r : d.records) all.insert(key(r));
    for (const auto& r : train.records) parts.insert(key(r));
    for (const auto& r : rest.records) parts.insert(key(r));
    CHECK(all == parts);
  }
}

TEST_CASE("n=50 from a 945-row sweep gives 50 distinct keys") {
  ConfigSpace space;
  space.batch_values = {1, 2, 4, 8, 16, 32, 64};
  space.max_token_values = {32, 64, 128, 256, 512};
  const std::vector<std::int64_t> tokens{128, 512, 2048};
  const Dataset d = generate_synthetic(space, tokens, GroundTruthSpec{});
  REQUIRE(d.size() == 945);
  const Dataset s = sample_random(d, 50, 9);
  std::set<Key> keys;
  for (const auto& r : s.records) keys.insert(key(r));
  CHECK(keys.size() == 50);
}

TEST_CASE("sample_random with n=1 is uniform over 10,000 seeds") {
  Dataset d = small_synthetic();
  d.records.resize(10);
  std::map<Key, int> hits;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++hits[key(sample_random(d, 1, seed).records[0])];
  const double sigma = std::sqrt(10000 * 0.1 * 0.9);
  REQUIRE(hits.size() == 10);
  for (const auto& [k, count] : hits) CHECK(std::abs(count - 1000.0) <= 3 * sigma);
}

TEST_CASE("LHS unit design puts one point in every stratum of every axis") {
  for (std::size_t n : {1u, 2u, 4u, 9u, 17u, 50u}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const Eigen::MatrixXd u = lhs_unit_design(n, 5, seed);
      for (Eigen::Index a = 0; a < u.cols(); ++a) {
        std::vector<int> count(n, 0);
        for (Eigen::Index i = 0; i < u.rows(); ++i) {
          REQUIRE(u(i, a) >= 0.0);
          REQUIRE(u(i, a) < 1.0);
          ++count[static_cast<std::size_t>(std::floor(u(i, a) * static_cast<double>(n)))];
        }
        CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c == 1; }));
      }
    }
  }
}

TEST_CASE("sample_lhs") {
  const ConfigSpace space;
  SUBCASE("n=1 gives one grid point") {
    const auto pts = sample_lhs(space, 1, 4);
    REQUIRE(pts.size() == 1);
    CHECK(std::count(space.tp_values.begin(), space.tp_values.end(), pts[0].tp) == 1);
  }
  SUBCASE("n=9 on a 3-value axis uses each value three times") {
    // Strata of width 1/9 nest inside the three snapping cells of width 1/3,
    // so the cell of each point is floor(3u).
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Eigen::MatrixXd u = lhs_unit_design(9, 4, seed);
      const auto pts = sample_lhs(space, 9, seed);
      std::map<int, int> tp_count, pp_count;
      for (Eigen::Index i = 0; i < 9; ++i) {
        const auto& p = pts[static_cast<std::size_t>(i)];
        CHECK(p.tp == space.tp_values[static_cast<std::size_t>(std::floor(3 * u(i, 0)))]);
        ++tp_count[p.tp];
        ++pp_count[p.pp];
      }
      for (int v : space.tp_values) {
        CHECK(tp_count[v] == 3);
        CHECK(pp_count[v] == 3);
      }
    }
  }
  SUBCASE("deterministic per seed") {
    CHECK(sample_lhs(space, 12, 2) == sample_lhs(space, 12, 2));
  }
}

TEST_CASE("snap_to_grid picks the nearest cell centre, ties to the lower value") {
  const std::vector<int> v{1, 2, 4};
  CHECK(snap_to_grid(0.0, v) == 1);
  CHECK(snap_to_grid(0.5, v) == 2);
  CHECK(snap_to_grid(0.99, v) == 4);
  CHECK(snap_to_grid(1.0 / 3.0, v) == 1);
  const std::vector<int> two{10, 20};
  CHECK(snap_to_grid(0.5, two) == 10);
}

TEST_CASE("sample_lhs_records resolves draws to measured records") {
  const Dataset d = generate_synthetic(ConfigSpace{}, default_input_tokens(), GroundTruthSpec{});
  const Dataset fixed = sample_lhs_records(d, 512, 20, 3);
  CHECK(fixed.size() == 20);
  for (const auto& r : fixed.records) CHECK(r.total_input_tokens == 512);
  const Dataset mixed = sample_lhs_records(d, std::nullopt, 30, 3);
  std::set<std::int64_t> seen;
  for (const auto& r : mixed.records) seen.insert(r.total_input_tokens);
  CHECK(seen.size() == 3);
  CHECK(kind_of([&] { sample_lhs_records(d, 7, 5, 0); }) == ErrorKind::empty_dataset);
}

TEST_CASE("split rounding") {
  Dataset d = small_synthetic();
  d.records.resize(10);
  auto [a, b] = split(d, 0.5, 1);
  CHECK(a.size() == 5);
  CHECK(b.size() == 5);
  auto [c, e] = split(d, 0.99, 1);
  CHECK(c.size() == 9);
  CHECK(e.size() == 1);
  auto [f, g] = split(d, 0.01, 1);
  CHECK(f.size() == 1);
  CHECK(g.size() == 9);
  std::multiset<Key> all, parts;
  for (const auto& r : d.records) all.insert(key(r));
  for (const auto& r : c.records) parts.insert(key(r));
  for (const auto& r : e.records) parts.insert(key(r));
  CHECK(all == parts);
  CHECK(kind_of([&] { split(d, 1.0, 1); }) == ErrorKind::degenerate_split);
  Dataset one = d;
  one.records.resize(1);
  CHECK(kind_of([&] { split(one, 0.5, 1); }) == ErrorKind::degenerate_split);
}

TEST_CASE("generate_synthetic") {
  const ConfigSpace space;
  const std::vector<std::int64_t> one{512};
  SUBCASE("record count is the grid product") {
    CHECK(generate_synthetic(space, one, GroundTruthSpec{}).size() == 3 * 3 * 6 * 4);
    CHECK(generate_synthetic(space, default_input_tokens(), GroundTruthSpec{}).size() == 648);
  }
  SUBCASE("noiseless energy equals eval_energy exactly") {
    GroundTruthSpec truth;
    const Dataset d = generate_synthetic(space, default_input_tokens(), truth);
    for (const auto& r : d.records) REQUIRE(r.energy_j == eval_energy(truth.params, r.formula_input()));
  }
  SUBCASE("latency x power equals the noiseless energy") {
    GroundTruthSpec truth;
    truth.noise = NoiseModel::lognormal(0.05);
    const Dataset d = generate_synthetic(space, one, truth);
    for (const auto& r : d.records) {
      const double clean = eval_energy(truth.params, r.formula_input());
      REQUIRE(*r.latency_s * *r.avg_power_w == doctest::Approx(clean).epsilon(1e-12));
      CHECK(*r.avg_power_w == doctest::Approx(250.0 * std::pow(r.tp * r.pp, 0.8)));
    }
  }
  SUBCASE("lognormal noise has mean near exp(sigma^2/2)") {
    GroundTruthSpec truth;
    truth.noise = NoiseModel::lognormal(0.05);
    truth.seed = 7;
    const Dataset d = generate_synthetic(space, default_input_tokens(), truth);
    double sum = 0.0;
    for (const auto& r : d.records) sum += r.energy_j / eval_energy(truth.params, r.formula_input());
    const double mean = sum / static_cast<double>(d.size());
    CHECK(mean >= 0.98);
    CHECK(mean <= 1.06);
  }
  SUBCASE("deterministic per seed") {
    GroundTruthSpec truth;
    truth.noise = NoiseModel::lognormal(0.05);
    truth.seed = 3;
    CHECK(to_csv(generate_synthetic(space, one, truth)) == to_csv(generate_synthetic(space, one, truth)));
  }
  SUBCASE("bad inputs") {
    ConfigSpace bad;
    bad.tp_values.clear();
    CHECK(kind_of([&] { generate_synthetic(bad, one, GroundTruthSpec{}); }) == ErrorKind::invalid_argument);
    const std::vector<std::int64_t> none;
    CHECK(kind_of([&] { generate_synthetic(space, none, GroundTruthSpec{}); }) == ErrorKind::invalid_argument);
  }
}

TEST_CASE("sidecar records source, seed and generator version") {
  const auto dir = std::filesystem::temp_directory_path() / "energylens_test_dataset";
  std::filesystem::create_directories(dir);
  const auto csv = dir / "data.csv";
  write_sidecar(csv, "synthetic", 42);
  std::ifstream in(dir / "data.json");
  const auto j = nlohmann::json::parse(in);
  CHECK(j["source"] == "synthetic");
  CHECK(j["seed"] == 42);
  CHECK(j["generator_version"] == kGeneratorVersion);
}

TEST_CASE("contexts and filter_context") {
  Dataset d = small_synthetic();
  SyntheticOptions other;
  other.model_id = "other";
  const std::vector<std::int64_t> tokens{512};
  const Dataset d2 = generate_synthetic(ConfigSpace{}, tokens, GroundTruthSpec{}, other);
  d.records.insert(d.records.end(), d2.records.begin(), d2.records.end());
  const auto keys = contexts(d);
  REQUIRE(keys.size() == 2);
  CHECK(keys[0].model_id == "synthetic-7b");
  CHECK(filter_context(d, keys[1]).size() == d2.size());
}
