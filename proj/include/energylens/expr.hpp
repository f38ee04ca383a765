#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace energylens::symreg {

enum class Op : std::uint8_t {
  constant,
  feature,
  // unary
  neg,
  log,  ///< log(max(x, 1e-9))
  exp,  ///< exp(min(x, 50))
  // binary
  add,
  sub,
  mul,
  div,  ///< a / (sign(b) * max(|b|, 1e-9)), sign(0) = +1
  pow,  ///< max(a, 1e-9) ^ clamp(b, -5, 5)
};

int arity(Op op) noexcept;
bool is_terminal(Op op) noexcept;
std::string_view op_token(Op op) noexcept;

struct Node {
  Op op = Op::constant;
  double value = 0.0;  ///< constant nodes
  int feature = 0;     ///< feature nodes

  bool operator==(const Node&) const = default;
};

/// Protection constants.
inline constexpr double kProtectFloor = 1e-9;
inline constexpr double kExpCeiling = 50.0;
inline constexpr double kPowExponentLimit = 5.0;
/// Every node output saturates to [-kSaturation, kSaturation]; with finite
/// leaves no operator can then produce inf or NaN.
inline constexpr double kSaturation = 1e150;

double apply_unary(Op op, double x) noexcept;
double apply_binary(Op op, double a, double b) noexcept;

/// Expression tree stored in prefix order; the subtree rooted at node i
/// occupies the contiguous range [i, subtree_end(i)).
class Expr {
 public:
  Expr() = default;
  explicit Expr(std::vector<Node> nodes) : nodes_(std::move(nodes)) {}

  static Expr constant(double value);
  static Expr feature(int index);
  static Expr unary(Op op, const Expr& child);
  static Expr binary(Op op, const Expr& left, const Expr& right);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& nodes() { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  std::size_t subtree_end(std::size_t i) const;
  Expr subtree(std::size_t i) const;
  /// Copy with the subtree at i replaced.
  Expr replaced(std::size_t i, const Expr& replacement) const;
  int depth() const;
  int depth_at(std::size_t i) const;
  std::size_t constant_count() const;
  /// True when the prefix sequence forms exactly one well-formed tree.
  bool well_formed() const;

  bool operator==(const Expr&) const = default;

 private:
  std::vector<Node> nodes_;
};

/// Evaluates on a single feature vector.
double eval_expr(const Expr& expr, std::span<const double> features);

/// Evaluates on every row of `features` (rows = samples, columns = features).
Eigen::ArrayXd eval_expr(const Expr& expr, const Eigen::MatrixXd& features);

/// Constant folding and identity removal. Semantics are preserved exactly
/// under the protected operators; node count never increases.
Expr simplify(const Expr& expr);

/// Prefix text, e.g. `(+ (pdiv 100 (+ (* f_parallelism f_ratio) 2)) 5)`.
std::string to_prefix(const Expr& expr, std::span<const std::string> feature_names);
Expr parse_prefix(std::string_view text, std::span<const std::string> feature_names);

}  // namespace energylens::symreg
