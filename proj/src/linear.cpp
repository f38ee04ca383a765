#include <cmath>
#include <optional>

#include <Eigen/Cholesky>

#include "energylens/baselines.hpp"
#include "energylens/error.hpp"

namespace energylens {

std::array<double, kNumRawFeatures> raw_features(const ProfilingRecord& r) {
  return {static_cast<double>(r.tp), static_cast<double>(r.pp),
          static_cast<double>(r.batch_size), static_cast<double>(r.max_tokens),
          static_cast<double>(r.total_input_tokens)};
}

const std::vector<std::string>& raw_feature_names() {
  static const std::vector<std::string> names = {"tp", "pp", "batch_size", "max_tokens",
                                                 "total_input_tokens"};
  return names;
}

Eigen::MatrixXd raw_feature_matrix(const Dataset& data) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), kNumRawFeatures);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = raw_features(data.records[i]);
    for (int c = 0; c < kNumRawFeatures; ++c) x(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return x;
}

Eigen::VectorXd energy_vector(const Dataset& data) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = data.records[i].energy_j;
  return y;
}

namespace {

/// Solves (A + lambda I) w = b; empty result when the system is singular.
std::optional<Eigen::VectorXd> solve_ridge(const Eigen::MatrixXd& gram, const Eigen::VectorXd& rhs,
                                           double lambda) {
  Eigen::MatrixXd a = gram;
  a.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) return std::nullopt;
  const auto d = ldlt.vectorD();
  const double scale = std::max(a.diagonal().cwiseAbs().maxCoeff(), 1e-300);
  if (d.size() > 0 && d.minCoeff() <= 1e-13 * scale) return std::nullopt;
  Eigen::VectorXd w = ldlt.solve(rhs);
  if (!w.allFinite()) return std::nullopt;
  return w;
}

}  // namespace

LinearModel fit_linear(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda) {
  if (x.rows() != y.size()) throw Error(ErrorKind::length_mismatch, "feature/target rows differ");
  if (!(lambda >= 0.0)) throw Error(ErrorKind::invalid_argument, "ridge lambda must be >= 0");
  if (x.rows() <= x.cols())
    throw Error(ErrorKind::insufficient_data, "linear fit needs more rows than features (have " +
                                                  std::to_string(x.rows()) + ")");

  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  const Eigen::MatrixXd gram = xc.transpose() * xc;
  const Eigen::VectorXd rhs = xc.transpose() * yc;

  LinearModel model;
  model.lambda = lambda;
  auto w = solve_ridge(gram, rhs, lambda);
  if (!w) {
    model.singular_fallback = true;
    model.lambda = kSingularFallbackLambda;
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += kSingularFallbackLambda;
    w = a.ldlt().solve(rhs);
  }
  if (!w->allFinite()) throw Error(ErrorKind::singular_system, "linear system has no finite solution");
  model.weights = *w;
  model.intercept = y_mean - x_mean.dot(model.weights);
  return model;
}

LinearModel fit_linear(const Dataset& data, double lambda) {
  return fit_linear(raw_feature_matrix(data), energy_vector(data), lambda);
}

double predict_linear(const LinearModel& model, std::span<const double> features) {
  if (static_cast<Eigen::Index>(features.size()) != model.weights.size())
    throw Error(ErrorKind::length_mismatch, "feature count does not match the model");
  double out = model.intercept;
  for (std::size_t i = 0; i < features.size(); ++i)
    out += model.weights(static_cast<Eigen::Index>(i)) * features[i];
  return out;
}

double predict_linear(const LinearModel& model, const ProfilingRecord& r) {
  const auto f = raw_features(r);
  return predict_linear(model, f);
}

nlohmann::ordered_json to_json(const LinearModel& model) {
  nlohmann::ordered_json j;
  j["schema"] = kBaselineSchema;
  j["kind"] = "linear";
  j["features"] = raw_feature_names();
  j["weights"] = std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
  j["intercept"] = model.intercept;
  j["lambda"] = model.lambda;
  j["singular_fallback"] = model.singular_fallback;
  return j;
}

LinearModel linear_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("schema", std::string()) != kBaselineSchema ||
      j.value("kind", std::string()) != "linear")
    throw Error(ErrorKind::schema_mismatch, "expected a linear baseline document");
  try {
    LinearModel model;
    const auto w = j.at("weights").get<std::vector<double>>();
    model.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    model.intercept = j.at("intercept").get<double>();
    model.lambda = j.value("lambda", 0.0);
    model.singular_fallback = j.value("singular_fallback", false);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("linear baseline: ") + e.what());
  }
}

}  // namespace energylens
