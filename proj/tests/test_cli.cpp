#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include <json.hpp>

#include "cli_runs.hpp"
#include "energylens/baselines.hpp"
#include "energylens/energy_model.hpp"

using namespace cli_runs;
using namespace energylens;

namespace {

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

/// Shared dataset and params for the commands that consume them.
struct Fixture {
  fs::path dir = fresh_dir("energylens_test_cli");
  fs::path data = dir / "data.csv";
  fs::path params = dir / "params.json";

  Fixture() {
    REQUIRE(run({"--seed", "7", "--out-dir", dir.string(), "generate", "--noise", "0.05", "-o", "data.csv"}).code == 0);
    REQUIRE(run({"--seed", "1", "--out-dir", dir.string(), "fit", data.string(), "--n", "50", "-o", "params.json"}).code == 0);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("generate writes the CSV, sidecar and manifest") {
  const auto& f = fixture();
  CHECK(load_csv(f.data).size() == 648);
  const auto side = nlohmann::json::parse(slurp(f.dir / "data.json"));
  CHECK(side["seed"] == 7);
  const auto manifest = nlohmann::json::parse(slurp(f.dir / "data.csv.manifest.json"));
  CHECK(manifest["subcommand"] == "generate");
  CHECK(manifest["seed"] == 7);
  CHECK(manifest.contains("started_utc"));
  CHECK(manifest.contains("wall_time_s"));
  CHECK(manifest["resolved_settings"].get<std::string>().find("noise") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
  const auto dir = fresh_dir("energylens_test_cli_usage");
  const Run neg = run({"--out-dir", dir.string(), "generate", "--noise", "-1"});
  CHECK(neg.code == 2);
  CHECK(neg.err.find("--noise") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"fit"}).code == 2);
  CHECK(run({"fit", "x.csv", "--method", "svm"}).code == 2);
  CHECK(run({"select", "p.json", "--constraint", "memory<=4"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"generate", "--help"}).code == 0);
}

TEST_CASE("runtime errors exit with 1 and name the problem") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_runtime");
  const Run small = run({"--out-dir", dir.string(), "fit", f.data.string(), "--n", "5"});
  CHECK(small.code == 1);
  CHECK(small.err.find("insufficient-data") != std::string::npos);
  const Run missing = run({"--out-dir", dir.string(), "fit", (dir / "nope.csv").string()});
  CHECK(missing.code == 1);
  CHECK(missing.err.find("nope.csv") != std::string::npos);
}

TEST_CASE("fit writes a loadable params file and a summary") {
  const auto& f = fixture();
  const FitResult r = load_params(f.params);
  CHECK(r.n_train == 50);
  CHECK(r.seed == 1);
  const auto manifest = nlohmann::json::parse(slurp(f.dir / "params.json.manifest.json"));
  CHECK(manifest["fit_summary"]["n_train"] == 50);
  CHECK(manifest["fit_summary"].contains("fit_wall_time_s"));
}

TEST_CASE("fit dispatches baseline methods") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_methods");
  REQUIRE(run({"--out-dir", dir.string(), "fit", f.data.string(), "--method", "rf", "--n", "500", "-o", "rf.json"}).code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "rf.json"));
  CHECK(j["kind"] == "random_forest");
  CHECK(j["trees"].size() == 100);
  for (const std::string m : {"linear", "gbm", "proxy", "proxy-mean"}) {
    CHECK(run({"--out-dir", dir.string(), "fit", f.data.string(), "--method", m, "-o", m + ".json"}).code == 0);
  }
  CHECK(nlohmann::json::parse(slurp(dir / "proxy-mean.json"))["power_mode"] == "mean");
  REQUIRE(run({"--out-dir", dir.string(), "fit", f.data.string(), "--sampling", "lhs", "--lhs-input-tokens", "512",
               "-o", "lhs.json"}).code == 0);
}

TEST_CASE("evaluate produces one row per method") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_eval");
  const Run r = run({"--seed", "3", "--out-dir", dir.string(), "evaluate", f.data.string(), "--methods",
                     "energylens,linear,rf,gbm,proxy", "--n", "50", "-o", "board.csv"});
  REQUIRE(r.code == 0);
  CHECK(line_count(slurp(dir / "board.csv")) == 6);
  CHECK(nlohmann::json::parse(slurp(dir / "board.json"))["results"].size() == 5);
  CHECK(r.out.find("energylens") != std::string::npos);
}

TEST_CASE("evaluate: mean power never ranks better than per-config power") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_power");
  double pairwise[2];
  int i = 0;
  for (const std::string mode : {"per-config", "mean"}) {
    REQUIRE(run({"--seed", "4", "--out-dir", dir.string(), "evaluate", f.data.string(), "--methods", "proxy",
                 "--power-mode", mode, "-o", mode + ".csv"}).code == 0);
    const auto j = nlohmann::json::parse(slurp(dir / (mode + ".json")));
    pairwise[i++] = j["results"][0]["pairwise_accuracy"].get<double>();
  }
  CHECK(pairwise[1] <= pairwise[0]);
}

TEST_CASE("evaluate: energylens at n=500 is no worse than at n=50 on seeds 1..5") {
  const auto dir = fresh_dir("energylens_test_cli_sizes");
  for (int seed = 1; seed <= 5; ++seed) {
    const std::string s = std::to_string(seed);
    REQUIRE(run({"--seed", s, "--out-dir", dir.string(), "generate", "--noise", "0.05", "-o", "d" + s + ".csv"}).code == 0);
    double mape[2];
    int i = 0;
    for (const std::string n : {"50", "500"}) {
      REQUIRE(run({"--seed", s, "--out-dir", dir.string(), "evaluate", (dir / ("d" + s + ".csv")).string(), "--methods",
                   "energylens", "--n", n, "-o", "e" + s + "_" + n + ".csv"}).code == 0);
      mape[i++] = nlohmann::json::parse(slurp(dir / ("e" + s + "_" + n + ".json")))["results"][0]["mape"].get<double>();
    }
    INFO("seed " << seed);
    CHECK(mape[1] <= mape[0]);
  }
}

TEST_CASE("select ranks the default grid") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_select");
  REQUIRE(run({"--out-dir", dir.string(), "select", f.params.string(), "--input-tokens", "512", "--max-tokens", "128"}).code == 0);
  CHECK(line_count(slurp(dir / "ranking.csv")) == 10);
  REQUIRE(run({"--out-dir", dir.string(), "select", f.params.string(), "--constraint", "gpus<=4", "-o", "c.csv"}).code == 0);
  CHECK(line_count(slurp(dir / "c.csv")) == 7);
}

TEST_CASE("whatif flags extrapolated values") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_whatif");
  const Run r = run({"--out-dir", dir.string(), "whatif", f.params.string(), "--axis", "batch", "--values", "1,32,320"});
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "whatif.csv");
  CHECK(csv.rfind("batch_size,energy_j,extrapolated\n", 0) == 0);
  CHECK(csv.find(",false\n") != std::string::npos);
  CHECK(csv.substr(csv.rfind("320,")).find("true") != std::string::npos);
}

TEST_CASE("symreg writes a front file") {
  const auto& f = fixture();
  const auto dir = fresh_dir("energylens_test_cli_symreg");
  const Run r = run({"--seed", "3", "--out-dir", dir.string(), "symreg", f.data.string(), "--pop", "60",
                     "--generations", "3", "--features", "parallelism,ratio,max_tokens"});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(dir / "front.json"));
  CHECK(j["schema"] == "energylens-symreg-v1");
  CHECK_FALSE(j["pareto_front"].empty());
  CHECK(run({"--out-dir", dir.string(), "symreg", f.data.string(), "--features", "bogus"}).code == 2);
}

TEST_CASE("config file supplies defaults, flags win") {
  const auto dir = fresh_dir("energylens_test_cli_config");
  std::ofstream(dir / "run.toml") << "seed = 5\n[generate]\ntp = [1, 2]\noutput = \"cfg.csv\"\n";
  REQUIRE(run({"--config", (dir / "run.toml").string(), "--out-dir", dir.string(), "generate"}).code == 0);
  CHECK(load_csv(dir / "cfg.csv").size() == 2 * 3 * 6 * 4 * 3);
  CHECK(nlohmann::json::parse(slurp(dir / "cfg.json"))["seed"] == 5);
  REQUIRE(run({"--config", (dir / "run.toml").string(), "--out-dir", dir.string(), "generate", "--tp", "1", "--seed",
               "9"}).code == 0);
  CHECK(load_csv(dir / "cfg.csv").size() == 1 * 3 * 6 * 4 * 3);
  CHECK(nlohmann::json::parse(slurp(dir / "cfg.json"))["seed"] == 9);
}

TEST_CASE("ENERGYLENS_SEED provides the seed default") {
  const auto dir = fresh_dir("energylens_test_cli_env");
  ::setenv("ENERGYLENS_SEED", "13", 1);
  const Run r = run({"--out-dir", dir.string(), "generate", "-o", "env.csv"});
  ::unsetenv("ENERGYLENS_SEED");
  REQUIRE(r.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "env.json"))["seed"] == 13);
}

TEST_CASE("every subcommand is byte-deterministic") {
  const auto& f = fixture();
  for (const auto& sub : all_subcommands()) {
    std::string first[8];
    for (int rep = 0; rep < 2; ++rep) {
      const auto dir = fresh_dir("energylens_test_cli_det_" + std::to_string(rep));
      const Run r = run(resolve(sub.args, f.data, f.params, dir));
      INFO(sub.name << ": " << r.err);
      REQUIRE(r.code == 0);
      for (std::size_t k = 0; k < sub.outputs.size(); ++k) {
        const std::string bytes = slurp(dir / sub.outputs[k]);
        CHECK_FALSE(bytes.empty());
        if (rep == 0) first[k] = bytes;
        else CHECK(bytes == first[k]);
      }
    }
  }
}
