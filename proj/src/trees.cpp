#include <algorithm>
#include <cmath>
#include <numeric>

#include "energylens/baselines.hpp"
#include "energylens/error.hpp"

namespace energylens {

double RegressionTree::predict(std::span<const double> features) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const TreeNode& n = nodes[i];
    i = static_cast<std::size_t>(features[static_cast<std::size_t>(n.feature)] <= n.threshold
                                     ? n.left
                                     : n.right);
  }
  return nodes[i].value;
}

int RegressionTree::depth() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TreeOptions& options,
              Rng& rng)
      : x_(x), y_(y), options_(options), rng_(rng) {}

  RegressionTree build(std::vector<std::size_t> rows) {
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    double gain = 0.0;
    int feature = -1;
    double threshold = 0.0;
  };

  std::vector<int> candidate_features() {
    const int d = static_cast<int>(x_.cols());
    std::vector<int> features(static_cast<std::size_t>(d));
    std::iota(features.begin(), features.end(), 0);
    const int m = options_.max_features;
    if (m <= 0 || m >= d) return features;
    for (int i = 0; i < m; ++i) {
      std::uniform_int_distribution<int> pick(i, d - 1);
      std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(pick(rng_))]);
    }
    features.resize(static_cast<std::size_t>(m));
    std::sort(features.begin(), features.end());
    return features;
  }

  Split best_split(std::vector<std::size_t>& rows, double sum, double sse) {
    Split best;
    const std::size_t n = rows.size();
    const auto min_leaf = static_cast<std::size_t>(std::max(options_.min_leaf, 1));
    const double base = sum * sum / static_cast<double>(n);
    for (int f : candidate_features()) {
      std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        return x_(static_cast<Eigen::Index>(a), f) < x_(static_cast<Eigen::Index>(b), f);
      });
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += y_(static_cast<Eigen::Index>(rows[i]));
        const std::size_t n_left = i + 1;
        if (n_left < min_leaf || n - n_left < min_leaf) continue;
        const double here = x_(static_cast<Eigen::Index>(rows[i]), f);
        const double next = x_(static_cast<Eigen::Index>(rows[i + 1]), f);
        if (here == next) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                            right_sum * right_sum / static_cast<double>(n - n_left) - base;
        if (gain > best.gain) {
          best = {gain, f, 0.5 * (here + next)};
        }
      }
    }
    // Gains at rounding level are noise, not structure.
    if (best.feature >= 0 && !(best.gain > 1e-12 * sse)) best.feature = -1;
    return best;
  }

  int grow(std::vector<std::size_t>& rows, int depth) {
    const int index = static_cast<int>(tree_.nodes.size());
    double sum = 0.0;
    for (std::size_t r : rows) sum += y_(static_cast<Eigen::Index>(r));
    const double mean = sum / static_cast<double>(rows.size());
    double sse = 0.0;
    for (std::size_t r : rows) {
      const double d = y_(static_cast<Eigen::Index>(r)) - mean;
      sse += d * d;
    }
    tree_.nodes.push_back(TreeNode{-1, 0.0, -1, -1, mean});

    if (depth >= options_.max_depth || sse <= 0.0 ||
        rows.size() < 2 * static_cast<std::size_t>(std::max(options_.min_leaf, 1)))
      return index;
    const Split split = best_split(rows, sum, sse);
    if (split.feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
      (x_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left : right).push_back(r);
    const int l = grow(left, depth + 1);
    const int rr = grow(right, depth + 1);
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = rr;
    return index;
  }

  const Eigen::MatrixXd& x_;
  const Eigen::VectorXd& y_;
  TreeOptions options_;
  Rng& rng_;
  RegressionTree tree_;
};

void check_training_data(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw Error(ErrorKind::length_mismatch, "feature/target rows differ");
  if (x.rows() < 5)
    throw Error(ErrorKind::insufficient_data,
                "tree ensembles need at least 5 rows (have " + std::to_string(x.rows()) + ")");
  if (!x.allFinite() || !y.allFinite())
    throw Error(ErrorKind::degenerate_data, "non-finite training values");
}

}  // namespace

RegressionTree fit_tree(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::span<const std::size_t> rows, const TreeOptions& options, Rng& rng) {
  if (rows.empty()) throw Error(ErrorKind::insufficient_data, "tree needs at least one row");
  return TreeBuilder(x, y, options, rng).build({rows.begin(), rows.end()});
}

TreeEnsemble fit_forest(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        const ForestOptions& options) {
  check_training_data(x, y);
  if (options.n_trees < 1) throw Error(ErrorKind::invalid_argument, "forest needs >= 1 tree");
  TreeOptions tree_options;
  tree_options.max_depth = options.max_depth;
  tree_options.min_leaf = options.min_leaf;
  tree_options.max_features =
      options.max_features > 0
          ? options.max_features
          : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));

  TreeEnsemble model;
  model.kind = EnsembleKind::bagged;
  const auto n = static_cast<std::size_t>(x.rows());
  for (int t = 0; t < options.n_trees; ++t) {
    Rng rng = derive_rng(options.seed, {static_cast<std::uint64_t>(t)});
    std::uniform_int_distribution<std::size_t> draw(0, n - 1);
    std::vector<std::size_t> rows(n);
    for (auto& r : rows) r = draw(rng);
    model.trees.push_back(fit_tree(x, y, rows, tree_options, rng));
  }
  return model;
}

TreeEnsemble fit_forest(const Dataset& data, const ForestOptions& options) {
  return fit_forest(raw_feature_matrix(data), energy_vector(data), options);
}

TreeEnsemble fit_boosting(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const BoostingOptions& options) {
  check_training_data(x, y);
  if (options.n_trees < 0) throw Error(ErrorKind::invalid_argument, "tree count must be >= 0");
  if (!(options.learning_rate >= 0.0 && options.learning_rate <= 1.0))
    throw Error(ErrorKind::invalid_argument, "learning rate must lie in [0,1]");
  TreeOptions tree_options;
  tree_options.max_depth = options.max_depth;
  tree_options.min_leaf = options.min_leaf;

  TreeEnsemble model;
  model.kind = EnsembleKind::boosted;
  model.learning_rate = options.learning_rate;
  model.initial = y.mean();
  std::vector<std::size_t> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), 0);
  Eigen::VectorXd fitted = Eigen::VectorXd::Constant(y.size(), model.initial);
  std::vector<double> features(static_cast<std::size_t>(x.cols()));
  for (int t = 0; t < options.n_trees; ++t) {
    const Eigen::VectorXd residual = y - fitted;
    Rng rng = derive_rng(options.seed, {static_cast<std::uint64_t>(t)});
    RegressionTree tree = fit_tree(x, residual, rows, tree_options, rng);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) features[static_cast<std::size_t>(c)] = x(i, c);
      fitted(i) += model.learning_rate * tree.predict(features);
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

TreeEnsemble fit_boosting(const Dataset& data, const BoostingOptions& options) {
  return fit_boosting(raw_feature_matrix(data), energy_vector(data), options);
}

double predict_ensemble(const TreeEnsemble& model, std::span<const double> features) {
  if (model.kind == EnsembleKind::bagged) {
    if (model.trees.empty()) throw Error(ErrorKind::invalid_argument, "empty forest");
    double sum = 0.0;
    for (const auto& tree : model.trees) sum += tree.predict(features);
    return sum / static_cast<double>(model.trees.size());
  }
  double out = model.initial;
  for (const auto& tree : model.trees) out += model.learning_rate * tree.predict(features);
  return out;
}

double predict_ensemble(const TreeEnsemble& model, const ProfilingRecord& r) {
  const auto f = raw_features(r);
  return predict_ensemble(model, f);
}

nlohmann::ordered_json to_json(const TreeEnsemble& model) {
  nlohmann::ordered_json j;
  j["schema"] = kBaselineSchema;
  j["kind"] = model.kind == EnsembleKind::bagged ? "random_forest" : "gradient_boosting";
  j["features"] = raw_feature_names();
  j["learning_rate"] = model.learning_rate;
  j["initial"] = model.initial;
  auto trees = nlohmann::ordered_json::array();
  for (const auto& tree : model.trees) {
    // Each node is [feature, threshold, left, right, value].
    auto nodes = nlohmann::ordered_json::array();
    for (const auto& n : tree.nodes)
      nodes.push_back(nlohmann::ordered_json::array({n.feature, n.threshold, n.left, n.right, n.value}));
    trees.push_back(std::move(nodes));
  }
  j["trees"] = std::move(trees);
  return j;
}

TreeEnsemble ensemble_from_json(const nlohmann::json& j) {
  const std::string kind = j.is_object() ? j.value("kind", std::string()) : std::string();
  if (!j.is_object() || j.value("schema", std::string()) != kBaselineSchema ||
      (kind != "random_forest" && kind != "gradient_boosting"))
    throw Error(ErrorKind::schema_mismatch, "expected a tree-ensemble baseline document");
  try {
    TreeEnsemble model;
    model.kind = kind == "random_forest" ? EnsembleKind::bagged : EnsembleKind::boosted;
    model.learning_rate = j.at("learning_rate").get<double>();
    model.initial = j.at("initial").get<double>();
    for (const auto& tj : j.at("trees")) {
      RegressionTree tree;
      for (const auto& nj : tj)
        tree.nodes.push_back({nj.at(0).get<int>(), nj.at(1).get<double>(), nj.at(2).get<int>(),
                              nj.at(3).get<int>(), nj.at(4).get<double>()});
      const auto count = static_cast<int>(tree.nodes.size());
      if (count == 0) throw Error(ErrorKind::schema_mismatch, "empty tree");
      // Children always follow their parent, which also rules out cycles.
      for (int i = 0; i < count; ++i) {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(i)];
        if (n.feature >= 0 && (n.feature >= kNumRawFeatures || n.left <= i || n.left >= count ||
                               n.right <= i || n.right >= count))
          throw Error(ErrorKind::schema_mismatch, "tree node references out of range");
      }
      model.trees.push_back(std::move(tree));
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::schema_mismatch, std::string("tree ensemble: ") + e.what());
  }
}

}  // namespace energylens
