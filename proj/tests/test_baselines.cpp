#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "energylens/baselines.hpp"
#include "energylens/error.hpp"
#include "energylens/evaluation.hpp"

using namespace energylens;
using Eigen::MatrixXd;
using Eigen::VectorXd;

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

Dataset noisy_benchmark(std::uint64_t seed, double power_exponent = 0.8) {
  GroundTruthSpec truth;
  truth.noise = NoiseModel::lognormal(0.05);
  truth.seed = seed;
  SyntheticOptions opts;
  opts.power_exponent = power_exponent;
  return generate_synthetic(ConfigSpace{}, default_input_tokens(), truth, opts);
}

double test_mape(const std::function<double(const ProfilingRecord&)>& f, const Dataset& test) {
  double sum = 0.0;
  for (const auto& r : test.records) sum += std::abs(f(r) - r.energy_j) / r.energy_j;
  return 100.0 * sum / static_cast<double>(test.size());
}

long double det3(const long double m[3][3]) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

}  // namespace

TEST_CASE("raw features") {
  ProfilingRecord r;
  r.tp = 2;
  r.pp = 4;
  r.batch_size = 8;
  r.max_tokens = 128;
  r.total_input_tokens = 512;
  const auto f = raw_features(r);
  CHECK(f == std::array<double, 5>{2, 4, 8, 128, 512});
  CHECK(raw_feature_names().size() == 5);
}

TEST_CASE("linear: exact data on y = 2x + 1") {
  MatrixXd x(6, 1);
  VectorXd y(6);
  for (int i = 0; i < 6; ++i) {
    x(i, 0) = i * 1.5 - 2;
    y(i) = 2 * x(i, 0) + 1;
  }
  const auto m = fit_linear(x, y);
  CHECK(std::abs(m.weights(0) - 2.0) <= 1e-10);
  CHECK(std::abs(m.intercept - 1.0) <= 1e-10);
  CHECK_FALSE(m.singular_fallback);
}

TEST_CASE("linear: constant target gives zero weights and the mean") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  MatrixXd x(10, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(rng);
  const auto m = fit_linear(x, VectorXd::Constant(10, 7.5));
  CHECK(m.weights.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(m.intercept == doctest::Approx(7.5).epsilon(1e-14));
}

TEST_CASE("linear: 3x2 system matches a Cramer's-rule hand solve") {
  // Three rows and two features plus intercept: the fit interpolates exactly,
  // so the coefficients are the solution of the 3x3 system [1 x1 x2] b = y.
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    MatrixXd x(3, 2);
    VectorXd y(3);
    for (int i = 0; i < 3; ++i) {
      x(i, 0) = u(rng);
      x(i, 1) = u(rng);
      y(i) = u(rng);
    }
    long double a[3][3];
    for (int i = 0; i < 3; ++i) {
      a[i][0] = 1;
      a[i][1] = x(i, 0);
      a[i][2] = x(i, 1);
    }
    const long double d = det3(a);
    if (std::fabs(d) < 1e-3) continue;
    long double b[3];
    for (int c = 0; c < 3; ++c) {
      long double m[3][3];
      for (int i = 0; i < 3; ++i)
        for (int k = 0; k < 3; ++k) m[i][k] = k == c ? static_cast<long double>(y(i)) : a[i][k];
      b[c] = det3(m) / d;
    }
    const auto model = fit_linear(x, y);
    for (int t = 0; t < 5; ++t) {
      const double p[2] = {u(rng), u(rng)};
      const long double expect = b[0] + b[1] * p[0] + b[2] * p[1];
      CHECK(predict_linear(model, p) == doctest::Approx(static_cast<double>(expect)).epsilon(1e-9));
    }
  }
}

TEST_CASE("linear: residuals are orthogonal to every column at lambda = 0") {
  const Dataset d = noisy_benchmark(3);
  const MatrixXd x = raw_feature_matrix(d);
  const VectorXd y = energy_vector(d);
  const auto m = fit_linear(x, y);
  VectorXd r(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const VectorXd row = x.row(i).transpose();
    r(i) = y(i) - predict_linear(m, std::span<const double>(row.data(), 5));
  }
  CHECK(std::abs(r.sum()) <= 1e-8 * y.cwiseAbs().sum());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    CHECK(std::abs(x.col(c).dot(r)) <= 1e-8 * x.col(c).norm() * y.norm() * std::sqrt(double(x.rows())));
}

TEST_CASE("linear: ridge, singular fallback, preconditions") {
  const Dataset d = noisy_benchmark(4);
  const MatrixXd x = raw_feature_matrix(d);
  const VectorXd y = energy_vector(d);
  CHECK(fit_linear(x, y, 1e6).weights.norm() < fit_linear(x, y).weights.norm());

  MatrixXd dup(x.rows(), 2);
  dup.col(0) = x.col(2);
  dup.col(1) = x.col(2);
  const auto m = fit_linear(dup, y);
  CHECK(m.singular_fallback);
  CHECK(m.lambda == kSingularFallbackLambda);
  CHECK(m.weights.allFinite());

  CHECK(kind_of([&] { fit_linear(x.topRows(5), y.head(5)); }) == ErrorKind::insufficient_data);
  CHECK(kind_of([&] { fit_linear(x, y, -1); }) == ErrorKind::invalid_argument);
}

TEST_CASE("tree split ties go to the lowest feature index") {
  MatrixXd x(8, 2);
  VectorXd y(8);
  for (int i = 0; i < 8; ++i) {
    x(i, 0) = x(i, 1) = i;
    y(i) = i < 4 ? 0.0 : 10.0;
  }
  std::vector<std::size_t> rows(8);
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(0);
  TreeOptions o;
  o.min_leaf = 1;
  const auto t = fit_tree(x, y, rows, o, rng);
  REQUIRE(t.nodes.size() == 3);
  CHECK(t.nodes[0].feature == 0);
  CHECK(t.nodes[0].threshold > 3.0);
  CHECK(t.nodes[0].threshold < 4.0);
  const double lo[2] = {1, 1}, hi[2] = {6, 6};
  CHECK(t.predict(lo) == 0.0);
  CHECK(t.predict(hi) == 10.0);
}

TEST_CASE("tree respects depth and leaf limits") {
  const Dataset d = noisy_benchmark(5);
  const MatrixXd x = raw_feature_matrix(d);
  const VectorXd y = energy_vector(d);
  std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  Rng rng(0);
  TreeOptions o;
  o.max_depth = 4;
  o.min_leaf = 10;
  const auto t = fit_tree(x, y, rows, o, rng);
  CHECK(t.depth() <= 4);
  CHECK(t.leaf_count() <= x.rows() / 10);
}

TEST_CASE("forest") {
  const Dataset d = noisy_benchmark(6);
  SUBCASE("constant target is predicted exactly") {
    MatrixXd x = raw_feature_matrix(d);
    const auto f = fit_forest(x, VectorXd::Constant(x.rows(), 3.25));
    for (const auto& t : f.trees) CHECK(t.leaf_count() == 1);
    CHECK(predict_ensemble(f, d.records[10]) == 3.25);
  }
  SUBCASE("prediction is the mean of the trees") {
    const auto f = fit_forest(sample_random(d, 80, 1));
    CHECK(f.trees.size() == 100);
    for (int i = 0; i < 20; ++i) {
      const auto feats = raw_features(d.records[static_cast<std::size_t>(i * 7)]);
      double sum = 0.0;
      for (const auto& t : f.trees) sum += t.predict(feats);
      CHECK(predict_ensemble(f, feats) == doctest::Approx(sum / 100.0).epsilon(1e-15));
    }
  }
  SUBCASE("deterministic per seed") {
    ForestOptions o;
    o.seed = 4;
    const auto a = fit_forest(sample_random(d, 60, 2), o);
    const auto b = fit_forest(sample_random(d, 60, 2), o);
    for (std::size_t i = 0; i < a.trees.size(); ++i) CHECK(a.trees[i].nodes == b.trees[i].nodes);
  }
  SUBCASE("more training data helps") {
    auto [small, rest_small] = holdout(d, 50, 6);
    auto [large, rest_large] = holdout(d, 500, 6);
    const auto f50 = fit_forest(small);
    const auto f500 = fit_forest(large);
    const double m50 = test_mape([&](const ProfilingRecord& r) { return predict_ensemble(f50, r); }, rest_large);
    const double m500 = test_mape([&](const ProfilingRecord& r) { return predict_ensemble(f500, r); }, rest_large);
    CHECK(m500 < m50);
  }
  CHECK(kind_of([&] { fit_forest(sample_random(d, 4, 0)); }) == ErrorKind::insufficient_data);
}

TEST_CASE("boosting") {
  const Dataset d = noisy_benchmark(7);
  const Dataset train = sample_random(d, 120, 3);
  const MatrixXd x = raw_feature_matrix(train);
  const VectorXd y = energy_vector(train);
  SUBCASE("learning rate 0 predicts the mean") {
    BoostingOptions o;
    o.learning_rate = 0.0;
    const auto m = fit_boosting(x, y, o);
    for (const auto& r : d.records) CHECK(predict_ensemble(m, r) == doctest::Approx(y.mean()).epsilon(1e-15));
  }
  SUBCASE("training loss never rises as trees are added") {
    const auto m = fit_boosting(x, y);
    REQUIRE(m.trees.size() == 100);
    double previous = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= m.trees.size(); ++k) {
      TreeEnsemble partial = m;
      partial.trees.resize(k);
      double sse = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const VectorXd row = x.row(i).transpose();
        const double e = predict_ensemble(partial, std::span<const double>(row.data(), 5)) - y(i);
        sse += e * e;
      }
      CHECK(sse <= previous * (1 + 1e-12));
      previous = sse;
    }
  }
  SUBCASE("bad options") {
    BoostingOptions o;
    o.learning_rate = 1.5;
    CHECK(kind_of([&] { fit_boosting(x, y, o); }) == ErrorKind::invalid_argument);
  }
}

TEST_CASE("MAPE-optimal scale matches a breakpoint search") {
  // The objective is convex and piecewise linear in k with kinks at
  // actual_i / pred_i, so the minimum sits on one of those kinks.
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<double> pred(n), actual(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = 100 * u(rng);
      actual[i] = 100 * u(rng);
    }
    const auto objective = [&](double k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += std::abs(k * pred[i] - actual[i]) / actual[i];
      return s;
    };
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) best = std::min(best, objective(actual[i] / pred[i]));
    CHECK(objective(mape_optimal_scale(pred, actual)) == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("latency proxy") {
  const Dataset d = noisy_benchmark(1);
  const Dataset train = sample_random(d, 100, 1);

  SUBCASE("energy error is exactly the scaled latency error") {
    const auto m = fit_latency_proxy(train);
    for (const auto& r : d.records) {
      const double lhs = predict_proxy(m, r) / (*r.latency_s * *r.avg_power_w);
      const double rhs = m.scale * predict_latency(m, r) / *r.latency_s;
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
    CHECK(m.latency_params.delta1 == 0.0);
    CHECK(m.latency_params.delta2 == 0.0);
    CHECK(m.power_table.size() == 9);
  }
  SUBCASE("constant power makes both modes identical and argmin-equivalent to latency") {
    const Dataset flat = sample_random(noisy_benchmark(2, 0.0), 100, 1);
    ProxyOptions per, mean;
    mean.power_mode = PowerMode::global_mean;
    const auto a = fit_latency_proxy(flat, per);
    const auto b = fit_latency_proxy(flat, mean);
    std::vector<double> pa, pb, lat;
    const Dataset all = noisy_benchmark(2, 0.0);
    for (const auto& r : all.records) {
      CHECK(predict_proxy(a, r) == predict_proxy(b, r));
      pa.push_back(predict_proxy(a, r));
      lat.push_back(predict_latency(a, r));
    }
    const auto s_proxy = group_scenarios(all, pa);
    const auto s_lat = group_scenarios(all, lat);
    for (std::size_t i = 0; i < s_proxy.size(); ++i)
      CHECK(argmin_entry(s_proxy[i].entries, true) == argmin_entry(s_lat[i].entries, true));
  }
  SUBCASE("mean power ranks worse when power varies by configuration") {
    ProxyOptions mean;
    mean.power_mode = PowerMode::global_mean;
    const auto a = fit_latency_proxy(train);
    const auto b = fit_latency_proxy(train, mean);
    const auto ra = evaluate([&](const ProfilingRecord& r) { return predict_proxy(a, r); }, d);
    const auto rb = evaluate([&](const ProfilingRecord& r) { return predict_proxy(b, r); }, d);
    CHECK(rb.pairwise_accuracy < ra.pairwise_accuracy);
  }
  SUBCASE("unseen configurations fall back to mean power") {
    const auto m = fit_latency_proxy(train);
    CHECK(proxy_power(m, 8, 8) == m.mean_power_w);
  }
  SUBCASE("missing columns") {
    Dataset no_latency = train;
    no_latency.records[3].latency_s.reset();
    CHECK(kind_of([&] { fit_latency_proxy(no_latency); }) == ErrorKind::missing_latency);
    Dataset no_power = train;
    no_power.records[5].avg_power_w.reset();
    CHECK(kind_of([&] { fit_latency_proxy(no_power); }) == ErrorKind::missing_power);
    ProxyOptions mean;
    mean.power_mode = PowerMode::global_mean;
    CHECK_NOTHROW(fit_latency_proxy(no_power, mean));
  }
  CHECK(parse_power_mode("mean") == PowerMode::global_mean);
  CHECK(std::string(to_string(PowerMode::per_config_table)) == "per-config");
}

TEST_CASE("baseline JSON round trips") {
  const Dataset d = sample_random(noisy_benchmark(9), 60, 0);
  const auto lin = fit_linear(d);
  const auto lin2 = linear_from_json(nlohmann::json::parse(to_json(lin).dump()));
  CHECK(lin2.weights == lin.weights);
  CHECK(lin2.intercept == lin.intercept);

  const auto gbm = fit_boosting(d);
  const auto gbm2 = ensemble_from_json(nlohmann::json::parse(to_json(gbm).dump()));
  CHECK(gbm2.kind == EnsembleKind::boosted);
  for (const auto& r : d.records) CHECK(predict_ensemble(gbm2, r) == predict_ensemble(gbm, r));

  const auto rf = fit_forest(d);
  auto j = nlohmann::json::parse(to_json(rf).dump());
  CHECK(j["kind"] == "random_forest");
  CHECK(j["schema"] == kBaselineSchema);
  const auto rf2 = ensemble_from_json(j);
  for (const auto& r : d.records) CHECK(predict_ensemble(rf2, r) == predict_ensemble(rf, r));

  const auto px = fit_latency_proxy(d);
  const auto px2 = proxy_from_json(nlohmann::json::parse(to_json(px).dump()));
  for (const auto& r : d.records) CHECK(predict_proxy(px2, r) == predict_proxy(px, r));

  // A child pointing back at its parent would loop forever.
  auto cyclic = nlohmann::json::parse(to_json(gbm).dump());
  cyclic["trees"][0][1] = {0, 1.0, 0, 0, 0.0};
  CHECK(kind_of([&] { ensemble_from_json(cyclic); }) == ErrorKind::schema_mismatch);
  CHECK(kind_of([&] { linear_from_json(nlohmann::json{{"kind", "linear"}}); }) == ErrorKind::schema_mismatch);
}
