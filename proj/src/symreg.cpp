#include "energylens/symreg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include <Eigen/Cholesky>
#include <boost/math/tools/minima.hpp>

#include "energylens/format.hpp"
#include "energylens/rng.hpp"

namespace energylens::symreg {

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> names = {
      "f_tp",         "f_pp",         "f_parallelism",   "f_tp_plus_pp",
      "f_batch_size", "f_max_tokens", "f_input_tokens", "f_ratio"};
  return names;
}

std::array<double, kNumFeatures> build_features(const ProfilingRecord& r) {
  std::array<double, kNumFeatures> f{};
  f[kFeatTp] = r.tp;
  f[kFeatPp] = r.pp;
  f[kFeatParallelism] = static_cast<double>(r.tp) * r.pp;
  f[kFeatTpPlusPp] = static_cast<double>(r.tp) + r.pp;
  f[kFeatBatch] = r.batch_size;
  f[kFeatMaxTokens] = r.max_tokens;
  f[kFeatInputTokens] = static_cast<double>(r.total_input_tokens);
  f[kFeatRatio] = static_cast<double>(r.batch_size) / r.max_tokens;
  return f;
}

Eigen::MatrixXd build_feature_matrix(const Dataset& data) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(data.size()), kNumFeatures);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto f = build_features(data.records[i]);
    for (int c = 0; c < kNumFeatures; ++c) x(static_cast<Eigen::Index>(i), c) = f[c];
  }
  return x;
}

void SRConfig::validate() const {
  if (population_size < 1 || generations < 0 || tournament_size < 1 || max_depth < 1 ||
      init_min_depth < 1 || init_max_depth < init_min_depth || refine_sweeps < 0 ||
      refine_count < 0 || offspring_polish_iters < 0)
    throw Error(ErrorKind::invalid_argument, "SR sizes must be >= 1");
  if (crossover_rate < 0 || crossover_rate > 1 || mutation_rate < 0 || mutation_rate > 1)
    throw Error(ErrorKind::invalid_argument, "SR rates must lie in [0,1]");
  if (parsimony_coefficient < 0)
    throw Error(ErrorKind::invalid_argument, "parsimony coefficient must be >= 0");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw Error(ErrorKind::invalid_argument, "validation fraction must lie in (0,1)");
  for (int f : feature_set)
    if (f < 0 || f >= kNumFeatures) throw Error(ErrorKind::invalid_argument, "bad feature index");
  if (functions.empty()) throw Error(ErrorKind::invalid_argument, "empty function set");
  for (Op op : functions)
    if (is_terminal(op)) throw Error(ErrorKind::invalid_argument, "terminal in function set");
}

double mean_squared_error(const Expr& expr, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::ArrayXd residual = eval_expr(expr, x) - y.array();
  const double mse = residual.square().mean();
  return std::isfinite(mse) ? mse : std::numeric_limits<double>::max();
}

namespace {

/// Coordinate descent over the constants of `expr` for an arbitrary loss.
template <typename LossFn>
double coordinate_descent(Expr& expr, const LossFn& loss, int sweeps) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < expr.size(); ++i)
    if (expr.nodes()[i].op == Op::constant) slots.push_back(i);
  double current = loss(expr);
  if (slots.empty()) return current;

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    const double at_sweep_start = current;
    for (std::size_t slot : slots) {
      double& c = expr.nodes()[slot].value;
      const double c0 = c;
      const auto f = [&](double v) {
        c = v;
        return loss(expr);
      };
      // Walk downhill from c0 until the function turns up, then polish
      // inside the bracket.
      double step = 0.1 * std::max(std::abs(c0), 1.0);
      double f_mid = current;
      double f_up = f(c0 + step);
      double f_down = f(c0 - step);
      double lo, hi;
      if (f_up >= f_mid && f_down >= f_mid) {
        lo = c0 - step;
        hi = c0 + step;
      } else {
        const double dir = f_up < f_down ? 1.0 : -1.0;
        double prev = c0;
        double here = c0 + dir * step;
        double f_here = std::min(f_up, f_down);
        bool bracketed = false;
        for (int k = 0; k < 50; ++k) {
          step *= 1.618;
          const double next = here + dir * step;
          const double f_next = f(next);
          if (f_next >= f_here) {
            lo = std::min(prev, next);
            hi = std::max(prev, next);
            bracketed = true;
            break;
          }
          prev = here;
          here = next;
          f_here = f_next;
        }
        if (!bracketed) {
          lo = hi = here;
        }
      }
      double best_c = c0;
      double best_f = current;
      if (lo < hi) {
        std::uintmax_t max_iter = 80;
        const auto [arg, val] = boost::math::tools::brent_find_minima(f, lo, hi, 30, max_iter);
        if (val < best_f) {
          best_c = arg;
          best_f = val;
        }
      } else {
        const double val = f(lo);
        if (val < best_f) {
          best_c = lo;
          best_f = val;
        }
      }
      c = best_c;
      current = best_f;
    }
    if (at_sweep_start - current <= 1e-15 * std::max(at_sweep_start, 1e-300)) break;
  }
  return current;
}

/// Least-squares offset and scale of y against p. Falls back to the mean
/// when p carries no usable signal.
std::pair<double, double> linear_scaling(const Eigen::ArrayXd& p, const Eigen::VectorXd& y) {
  const double p_mean = p.mean();
  const double y_mean = y.mean();
  const Eigen::ArrayXd pc = p - p_mean;
  const double var = pc.square().sum();
  const double cov = (pc * (y.array() - y_mean)).sum();
  if (!(std::isfinite(var) && std::isfinite(cov)) || var <= 0.0) return {y_mean, 0.0};
  const double scale = cov / var;
  const double offset = y_mean - scale * p_mean;
  if (!(std::isfinite(scale) && std::isfinite(offset))) return {y_mean, 0.0};
  return {offset, scale};
}

Expr scaled_expression(const Expr& core, double offset, double scale) {
  return Expr::binary(Op::add, Expr::constant(offset),
                      Expr::binary(Op::mul, Expr::constant(scale), core));
}

/// Joint Levenberg-Marquardt polish of the core constants, together with an
/// explicit offset and scale when `affine`; finite-difference Jacobian.
/// Coordinate descent zigzags when constants are strongly coupled, which this
/// resolves.
double joint_polish(Expr& core, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int iters,
                    bool affine = true) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < core.size(); ++i)
    if (core.nodes()[i].op == Op::constant) slots.push_back(i);
  const auto k = static_cast<Eigen::Index>(slots.size());
  const Eigen::Index n = y.size();

  Eigen::ArrayXd p = eval_expr(core, x);
  auto [a, b] = affine ? linear_scaling(p, y) : std::pair{0.0, 1.0};
  const auto residual = [&](const Eigen::ArrayXd& pred, double off, double sc) {
    return Eigen::VectorXd((off + sc * pred) - y.array());
  };
  Eigen::VectorXd r = residual(p, a, b);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost) || k == 0) return cost / static_cast<double>(n);

  double lambda = 1e-3;
  const Eigen::Index m = affine ? k + 2 : k;
  Eigen::MatrixXd jac(n, m);
  for (int it = 0; it < iters; ++it) {
    for (Eigen::Index j = 0; j < k; ++j) {
      double& c = core.nodes()[slots[static_cast<std::size_t>(j)]].value;
      const double c0 = c;
      const double h = 1e-6 * std::max(std::abs(c0), 1.0);
      c = c0 + h;
      const Eigen::ArrayXd up = eval_expr(core, x);
      c = c0 - h;
      const Eigen::ArrayXd down = eval_expr(core, x);
      c = c0;
      jac.col(j) = (b * (up - down) / (2.0 * h)).matrix();
    }
    if (affine) {
      jac.col(k).setOnes();
      jac.col(k + 1) = p.matrix();
    }
    if (!jac.allFinite()) break;
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd jtr = jac.transpose() * r;
    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * (jtj.diagonal().array() + 1e-12).matrix();
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Expr trial = core;
      for (Eigen::Index j = 0; j < k; ++j)
        trial.nodes()[slots[static_cast<std::size_t>(j)]].value += step(j);
      const Eigen::ArrayXd p_trial = eval_expr(trial, x);
      const double a_trial = affine ? a + step(k) : a;
      const double b_trial = affine ? b + step(k + 1) : b;
      const Eigen::VectorXd r_trial = residual(p_trial, a_trial, b_trial);
      const double c_trial = r_trial.squaredNorm();
      if (std::isfinite(c_trial) && c_trial < cost) {
        const double gain = cost - c_trial;
        core = std::move(trial);
        p = p_trial;
        a = a_trial;
        b = b_trial;
        r = r_trial;
        cost = c_trial;
        lambda = std::max(lambda / 3.0, 1e-12);
        improved = true;
        if (gain <= 1e-15 * cost) it = iters;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  return cost / static_cast<double>(n);
}

}  // namespace

double refine_constants(Expr& expr, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        int sweeps) {
  coordinate_descent(expr, [&](const Expr& e) { return mean_squared_error(e, x, y); }, sweeps);
  joint_polish(expr, x, y, sweeps, false);
  return mean_squared_error(expr, x, y);
}

namespace {

struct Individual {
  /// Evolved shape; the reported expression is offset + scale * core.
  Expr core;
  double offset = 0.0;
  double scale = 1.0;
  double val_mse = 0.0;
  double fitness = 0.0;
  /// Fitness seen by tournaments; worse than `fitness` for duplicates.
  double selection = 0.0;
  bool refined = false;
  bool polished = false;
};

class Engine {
 public:
  Engine(const SRConfig& config, Eigen::MatrixXd x_train, Eigen::VectorXd y_train,
         Eigen::MatrixXd x_val, Eigen::VectorXd y_val, double parsimony)
      : config_(config),
        x_train_(std::move(x_train)),
        y_train_(std::move(y_train)),
        x_val_(std::move(x_val)),
        y_val_(std::move(y_val)),
        parsimony_(parsimony) {
    duplicate_penalty_ = std::max((y_train_.array() - y_train_.mean()).square().mean(), 1e-12);
    features_ = config.feature_set;
    if (features_.empty()) {
      features_.resize(kNumFeatures);
      std::iota(features_.begin(), features_.end(), 0);
    }
    for (Op op : config.functions) (arity(op) == 1 ? unary_ : binary_).push_back(op);
  }

  SRResult run() {
    std::vector<Individual> population(static_cast<std::size_t>(config_.population_size));
    for (std::size_t i = 0; i < population.size(); ++i) {
      Rng rng = derive_rng(config_.seed, {0, i});
      const int span = config_.init_max_depth - config_.init_min_depth + 1;
      const int depth =
          config_.init_min_depth + static_cast<int>(i % static_cast<std::size_t>(span));
      population[i].core = random_tree(rng, depth, i % 2 == 0);
    }
    evaluate_all(population);

    SRResult result;
    for (int gen = 1; gen <= config_.generations + 1; ++gen) {
      refine_best(population);
      archive(population);
      result.fitness_history.push_back(population[best_index(population)].fitness);
      if (gen > config_.generations) break;
      population = breed(population, static_cast<std::uint64_t>(gen));
      evaluate_all(population);
    }

    const Individual& best = population[best_index(population)];
    result.best = simplify(scaled_expression(best.core, best.offset, best.scale));
    result.best_fitness = best.fitness;
    result.best_validation_mse = best.val_mse;
    double best_mse = std::numeric_limits<double>::infinity();
    for (auto& [size, entry] : archive_) {
      if (entry.test_mse < best_mse) {
        best_mse = entry.test_mse;
        result.pareto_front.push_back(entry);
      }
    }
    return result;
  }

 private:
  Expr random_terminal(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < 0.5) {
      std::uniform_int_distribution<std::size_t> pick(0, features_.size() - 1);
      return Expr::feature(features_[pick(rng)]);
    }
    std::uniform_real_distribution<double> value(-10.0, 10.0);
    return Expr::constant(value(rng));
  }

  Op random_function(Rng& rng) {
    const std::size_t total = unary_.size() + binary_.size();
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    const std::size_t k = pick(rng);
    return k < binary_.size() ? binary_[k] : unary_[k - binary_.size()];
  }

  /// Ramped half-and-half building block: `full` trees reach `depth` on every
  /// branch, `grow` trees may stop early.
  Expr random_tree(Rng& rng, int depth, bool full) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t total = unary_.size() + binary_.size() + features_.size() + 1;
    const double p_terminal =
        static_cast<double>(features_.size() + 1) / static_cast<double>(total);
    if (depth <= 1 || (!full && u(rng) < p_terminal)) return random_terminal(rng);
    const Op op = random_function(rng);
    if (arity(op) == 1) return Expr::unary(op, random_tree(rng, depth - 1, full));
    Expr left = random_tree(rng, depth - 1, full);
    Expr right = random_tree(rng, depth - 1, full);
    return Expr::binary(op, left, right);
  }

  /// Training mse of the best linear rescaling of `core`.
  double scaled_train_mse(const Expr& core) const {
    const Eigen::ArrayXd p = eval_expr(core, x_train_);
    const auto [offset, scale] = linear_scaling(p, y_train_);
    const double mse = ((offset + scale * p) - y_train_.array()).square().mean();
    return std::isfinite(mse) ? mse : std::numeric_limits<double>::max();
  }

  void evaluate(Individual& ind) const {
    std::tie(ind.offset, ind.scale) = linear_scaling(eval_expr(ind.core, x_train_), y_train_);
    const Expr full = scaled_expression(ind.core, ind.offset, ind.scale);
    ind.val_mse = mean_squared_error(full, x_val_, y_val_);
    ind.fitness = ind.val_mse + parsimony_ * static_cast<double>(full.size());
  }

  /// Newly bred individuals get a short constant polish so that a promising
  /// shape is not discarded only because its random constants are poor.
  void evaluate_all(std::vector<Individual>& population) const {
    for (auto& ind : population) {
      if (ind.refined || ind.polished) continue;
      if (config_.offspring_polish_iters > 0 && ind.core.constant_count() > 0) {
        joint_polish(ind.core, x_train_, y_train_, config_.offspring_polish_iters);
      }
      ind.polished = true;
      evaluate(ind);
    }
    penalize_duplicates(population);
  }

  /// Individuals that repeat an earlier individual's validation error are
  /// pushed behind every unique one, which keeps copies of a single good
  /// approximation from taking over the population.
  void penalize_duplicates(std::vector<Individual>& population) const {
    std::vector<std::pair<double, std::size_t>> seen;
    seen.reserve(population.size());
    for (std::size_t i = 0; i < population.size(); ++i) seen.emplace_back(population[i].val_mse, i);
    std::stable_sort(seen.begin(), seen.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& ind : population) ind.selection = ind.fitness;
    for (std::size_t k = 1; k < seen.size(); ++k) {
      const double a = seen[k - 1].first;
      const double b = seen[k].first;
      if (b - a <= 1e-9 * std::max(std::abs(a), 1e-12)) {
        Individual& dup = population[seen[k].second];
        dup.selection = dup.fitness + duplicate_penalty_;
      }
    }
  }

  static std::size_t best_index(const std::vector<Individual>& population) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < population.size(); ++i)
      if (population[i].fitness < population[best].fitness) best = i;
    return best;
  }

  /// Lamarckian constant refinement of the leading individuals. Refined
  /// constants are kept only when penalized validation fitness does not get
  /// worse, so the elite's fitness never regresses.
  void refine_best(std::vector<Individual>& population) {
    if (config_.refine_count == 0 || config_.refine_sweeps == 0) return;
    std::vector<std::size_t> order(population.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return population[a].fitness < population[b].fitness;
    });
    std::vector<std::size_t> done;
    int refined = 0;
    for (std::size_t idx : order) {
      if (refined >= config_.refine_count) break;
      Individual& ind = population[idx];
      const bool duplicate = std::any_of(done.begin(), done.end(), [&](std::size_t other) {
        return population[other].core == ind.core;
      });
      if (duplicate) continue;
      done.push_back(idx);
      ++refined;
      if (ind.refined) continue;
      ind.refined = true;
      if (ind.core.constant_count() == 0) continue;
      Individual candidate = ind;
      coordinate_descent(
          candidate.core, [&](const Expr& e) { return scaled_train_mse(e); },
          config_.refine_sweeps);
      joint_polish(candidate.core, x_train_, y_train_, config_.refine_sweeps);
      evaluate(candidate);
      if (candidate.fitness <= ind.fitness) ind = std::move(candidate);
    }
  }

  void archive(const std::vector<Individual>& population) {
    for (const auto& ind : population) {
      Expr simple = simplify(scaled_expression(ind.core, ind.offset, ind.scale));
      const std::size_t size = simple.size();
      auto it = archive_.find(size);
      if (it == archive_.end() || ind.val_mse < it->second.test_mse) {
        archive_[size] = FrontEntry{std::move(simple), ind.val_mse, size};
      }
    }
  }

  const Individual& tournament(const std::vector<Individual>& population, Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, population.size() - 1);
    std::size_t best = pick(rng);
    for (int k = 1; k < config_.tournament_size; ++k) {
      const std::size_t c = pick(rng);
      if (population[c].selection < population[best].selection) best = c;
    }
    return population[best];
  }

  /// Crossover/mutation point, biased 90/10 towards internal nodes.
  static std::size_t pick_point(const Expr& e, Rng& rng) {
    std::vector<std::size_t> internal, leaves;
    for (std::size_t i = 0; i < e.size(); ++i)
      (is_terminal(e.nodes()[i].op) ? leaves : internal).push_back(i);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto& pool = (!internal.empty() && u(rng) < 0.9) ? internal : leaves;
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    return pool[pick(rng)];
  }

  Expr mutate(const Expr& e, Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < 0.5) {
      const std::size_t point = pick_point(e, rng);
      std::uniform_int_distribution<int> depth(1, 3);
      return e.replaced(point, random_tree(rng, depth(rng), false));
    }
    // Point mutation: same-arity replacement, or a constant nudge.
    Expr out = e;
    std::uniform_int_distribution<std::size_t> pick(0, e.size() - 1);
    Node& n = out.nodes()[pick(rng)];
    switch (arity(n.op)) {
      case 0:
        if (n.op == Op::constant && u(rng) < 0.5) {
          std::normal_distribution<double> nudge(0.0, 0.1 * std::max(std::abs(n.value), 1.0));
          n.value += nudge(rng);
        } else {
          n = random_terminal(rng).nodes()[0];
        }
        break;
      case 1:
        if (!unary_.empty()) {
          std::uniform_int_distribution<std::size_t> op(0, unary_.size() - 1);
          n.op = unary_[op(rng)];
        }
        break;
      default:
        if (!binary_.empty()) {
          std::uniform_int_distribution<std::size_t> op(0, binary_.size() - 1);
          n.op = binary_[op(rng)];
        }
    }
    return out;
  }

  std::vector<Individual> breed(const std::vector<Individual>& population, std::uint64_t gen) {
    std::vector<Individual> next(population.size());
    next[0] = population[best_index(population)];
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 1; i < next.size(); ++i) {
      Rng rng = derive_rng(config_.seed, {gen, i});
      const Individual& mother = tournament(population, rng);
      Individual child = mother;
      bool changed = false;
      if (u(rng) < config_.crossover_rate) {
        const Individual& father = tournament(population, rng);
        const std::size_t at = pick_point(mother.core, rng);
        const std::size_t from = pick_point(father.core, rng);
        child.core = mother.core.replaced(at, father.core.subtree(from));
        changed = true;
      }
      if (u(rng) < config_.mutation_rate) {
        child.core = mutate(child.core, rng);
        changed = true;
      }
      // The scaling wrapper adds two levels on top of the core.
      if (child.core.depth() + 2 > config_.max_depth) {
        child = mother;
        changed = false;
      }
      if (changed) child.refined = child.polished = false;
      next[i] = std::move(child);
    }
    return next;
  }

  const SRConfig& config_;
  Eigen::MatrixXd x_train_;
  Eigen::VectorXd y_train_;
  Eigen::MatrixXd x_val_;
  Eigen::VectorXd y_val_;
  double parsimony_;
  double duplicate_penalty_ = 0.0;
  std::vector<int> features_;
  std::vector<Op> unary_, binary_;
  std::map<std::size_t, FrontEntry> archive_;
};

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Eigen::VectorXd take_rows(const Eigen::VectorXd& v, std::span<const std::size_t> rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace

SRResult run_sr(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const SRConfig& config) {
  config.validate();
  if (x.rows() != y.size()) throw Error(ErrorKind::length_mismatch, "feature/target rows differ");
  if (x.cols() != kNumFeatures)
    throw Error(ErrorKind::invalid_argument, "feature matrix must have the fixed feature columns");
  if (y.size() < 20)
    throw Error(ErrorKind::insufficient_data, "symbolic regression needs at least 20 rows");
  if (!y.allFinite() || !x.allFinite())
    throw Error(ErrorKind::degenerate_data, "non-finite values in SR data");

  const double mean = y.mean();
  const double variance = (y.array() - mean).square().mean();
  if (variance == 0.0) {
    // Nothing to search: the exact answer is the constant itself.
    SRResult result;
    result.best = Expr::constant(mean);
    result.pareto_front.push_back({result.best, 0.0, 1});
    result.fitness_history.assign(static_cast<std::size_t>(config.generations) + 1, 0.0);
    return result;
  }

  const auto n = static_cast<std::size_t>(y.size());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = derive_rng(config.seed, {0x73706c6974});
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(n))), 1,
      n - 1);
  std::span<const std::size_t> all(idx);
  auto val_rows = all.first(n_val);
  auto train_rows = all.subspan(n_val);

  Engine engine(config, take_rows(x, train_rows), take_rows(y, train_rows), take_rows(x, val_rows),
                take_rows(y, val_rows), config.parsimony_coefficient * variance);
  return engine.run();
}

SRResult run_sr(const Dataset& data, const SRConfig& config) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = data.records[i].energy_j;
  return run_sr(build_feature_matrix(data), y, config);
}

namespace {

bool subtree_uses(const Expr& e, std::size_t i, std::initializer_list<int> features) {
  const std::size_t end = e.subtree_end(i);
  for (std::size_t k = i; k < end; ++k) {
    const Node& n = e.nodes()[k];
    if (n.op == Op::feature &&
        std::find(features.begin(), features.end(), n.feature) != features.end())
      return true;
  }
  return false;
}

bool is_token_load_ratio(const Expr& e, std::size_t i) {
  if (e.nodes()[i].op != Op::div) return false;
  const std::size_t den = e.subtree_end(i + 1);
  const bool scaled_denominator =
      subtree_uses(e, den, {kFeatTp, kFeatPp, kFeatParallelism, kFeatTpPlusPp, kFeatBatch, kFeatRatio});
  const bool token_load = subtree_uses(e, i, {kFeatMaxTokens, kFeatInputTokens, kFeatRatio});
  return scaled_denominator && token_load;
}

}  // namespace

MotifHits detect_motifs(const Expr& expr) {
  MotifHits hits;
  for (std::size_t i = 0; i < expr.size(); ++i) {
    if (is_token_load_ratio(expr, i)) hits.token_load_ratio = true;
    if (expr.nodes()[i].op == Op::log) {
      const std::size_t end = expr.subtree_end(i);
      for (std::size_t k = i + 1; k < end; ++k)
        if (is_token_load_ratio(expr, k)) hits.log_compression = true;
    }
  }
  return hits;
}

nlohmann::ordered_json result_to_json(const SRResult& result) {
  const auto& names = feature_names();
  nlohmann::ordered_json j;
  j["schema"] = "energylens-symreg-v1";
  j["best"] = to_prefix(result.best, names);
  j["best_fitness"] = result.best_fitness;
  const auto motifs = detect_motifs(result.best);
  j["motifs"] = {{"token_load_ratio", motifs.token_load_ratio},
                 {"log_compression", motifs.log_compression}};
  nlohmann::ordered_json front = nlohmann::ordered_json::array();
  for (const auto& e : result.pareto_front) {
    const auto m = detect_motifs(e.expr);
    front.push_back({{"node_count", e.node_count},
                     {"test_mse", e.test_mse},
                     {"expression", to_prefix(e.expr, names)},
                     {"token_load_ratio", m.token_load_ratio},
                     {"log_compression", m.log_compression}});
  }
  j["pareto_front"] = front;
  j["fitness_history"] = result.fitness_history;
  return j;
}

}  // namespace energylens::symreg
