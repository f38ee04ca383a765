#include "energylens/expr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "energylens/error.hpp"
#include "energylens/format.hpp"

namespace energylens::symreg {

int arity(Op op) noexcept {
  switch (op) {
    case Op::constant:
    case Op::feature: return 0;
    case Op::neg:
    case Op::log:
    case Op::exp: return 1;
    default: return 2;
  }
}

bool is_terminal(Op op) noexcept { return arity(op) == 0; }

std::string_view op_token(Op op) noexcept {
  switch (op) {
    case Op::neg: return "neg";
    case Op::log: return "plog";
    case Op::exp: return "pexp";
    case Op::add: return "+";
    case Op::sub: return "-";
    case Op::mul: return "*";
    case Op::div: return "pdiv";
    case Op::pow: return "ppow";
    default: return "";
  }
}

namespace {

inline double saturate(double x) noexcept {
  if (std::isnan(x)) return 0.0;
  return std::clamp(x, -kSaturation, kSaturation);
}

}  // namespace

double apply_unary(Op op, double x) noexcept {
  switch (op) {
    case Op::neg: return saturate(-x);
    case Op::log: return saturate(std::log(std::max(x, kProtectFloor)));
    case Op::exp: return saturate(std::exp(std::min(x, kExpCeiling)));
    default: return saturate(x);
  }
}

double apply_binary(Op op, double a, double b) noexcept {
  switch (op) {
    case Op::add: return saturate(a + b);
    case Op::sub: return saturate(a - b);
    case Op::mul: return saturate(a * b);
    case Op::div: {
      const double mag = std::max(std::abs(b), kProtectFloor);
      return saturate(a / (b < 0.0 ? -mag : mag));
    }
    case Op::pow:
      return saturate(std::pow(std::max(a, kProtectFloor),
                               std::clamp(b, -kPowExponentLimit, kPowExponentLimit)));
    default: return saturate(a);
  }
}

Expr Expr::constant(double value) { return Expr({Node{Op::constant, value, 0}}); }

Expr Expr::feature(int index) { return Expr({Node{Op::feature, 0.0, index}}); }

Expr Expr::unary(Op op, const Expr& child) {
  std::vector<Node> nodes;
  nodes.reserve(child.size() + 1);
  nodes.push_back({op, 0.0, 0});
  nodes.insert(nodes.end(), child.nodes_.begin(), child.nodes_.end());
  return Expr(std::move(nodes));
}

Expr Expr::binary(Op op, const Expr& left, const Expr& right) {
  std::vector<Node> nodes;
  nodes.reserve(left.size() + right.size() + 1);
  nodes.push_back({op, 0.0, 0});
  nodes.insert(nodes.end(), left.nodes_.begin(), left.nodes_.end());
  nodes.insert(nodes.end(), right.nodes_.begin(), right.nodes_.end());
  return Expr(std::move(nodes));
}

std::size_t Expr::subtree_end(std::size_t i) const {
  std::size_t open = 1;
  while (open > 0) {
    open += static_cast<std::size_t>(arity(nodes_.at(i).op));
    --open;
    ++i;
  }
  return i;
}

Expr Expr::subtree(std::size_t i) const {
  return Expr(std::vector<Node>(nodes_.begin() + static_cast<std::ptrdiff_t>(i),
                                nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(i))));
}

Expr Expr::replaced(std::size_t i, const Expr& replacement) const {
  std::vector<Node> out(nodes_.begin(), nodes_.begin() + static_cast<std::ptrdiff_t>(i));
  out.insert(out.end(), replacement.nodes_.begin(), replacement.nodes_.end());
  out.insert(out.end(), nodes_.begin() + static_cast<std::ptrdiff_t>(subtree_end(i)),
             nodes_.end());
  return Expr(std::move(out));
}

int Expr::depth_at(std::size_t i) const {
  const int a = arity(nodes_.at(i).op);
  if (a == 0) return 1;
  const int left = depth_at(i + 1);
  if (a == 1) return 1 + left;
  return 1 + std::max(left, depth_at(subtree_end(i + 1)));
}

int Expr::depth() const { return nodes_.empty() ? 0 : depth_at(0); }

std::size_t Expr::constant_count() const {
  return static_cast<std::size_t>(std::count_if(
      nodes_.begin(), nodes_.end(), [](const Node& n) { return n.op == Op::constant; }));
}

bool Expr::well_formed() const {
  if (nodes_.empty()) return false;
  std::size_t open = 1;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (open == 0) return false;
    open += static_cast<std::size_t>(arity(nodes_[i].op));
    --open;
  }
  return open == 0;
}

double eval_expr(const Expr& expr, std::span<const double> features) {
  const auto& nodes = expr.nodes();
  std::vector<double> stack;
  stack.reserve(nodes.size());
  for (std::size_t k = nodes.size(); k-- > 0;) {
    const Node& n = nodes[k];
    switch (arity(n.op)) {
      case 0:
        stack.push_back(saturate(n.op == Op::constant
                                     ? n.value
                                     : features[static_cast<std::size_t>(n.feature)]));
        break;
      case 1: stack.back() = apply_unary(n.op, stack.back()); break;
      default: {
        const double a = stack.back();
        stack.pop_back();
        const double b = stack.back();
        stack.back() = apply_binary(n.op, a, b);
      }
    }
  }
  return stack.back();
}

Eigen::ArrayXd eval_expr(const Expr& expr, const Eigen::MatrixXd& features) {
  const auto& nodes = expr.nodes();
  const Eigen::Index rows = features.rows();
  std::vector<Eigen::ArrayXd> stack;
  stack.reserve(16);
  for (std::size_t k = nodes.size(); k-- > 0;) {
    const Node& n = nodes[k];
    switch (arity(n.op)) {
      case 0:
        if (n.op == Op::constant) {
          stack.emplace_back(Eigen::ArrayXd::Constant(rows, saturate(n.value)));
        } else {
          stack.emplace_back(features.col(n.feature).array().unaryExpr(
              [](double x) { return saturate(x); }));
        }
        break;
      case 1:
        stack.back() = stack.back().unaryExpr([op = n.op](double x) { return apply_unary(op, x); });
        break;
      default: {
        Eigen::ArrayXd a = std::move(stack.back());
        stack.pop_back();
        stack.back() = a.binaryExpr(stack.back(),
                                    [op = n.op](double x, double y) { return apply_binary(op, x, y); });
      }
    }
  }
  return stack.back();
}

namespace {

bool is_const(const Expr& e, double v) {
  return e.size() == 1 && e.nodes()[0].op == Op::constant && e.nodes()[0].value == v;
}

bool is_const(const Expr& e) { return e.size() == 1 && e.nodes()[0].op == Op::constant; }

Expr simplify_at(const Expr& expr, std::size_t i) {
  const Node& n = expr.nodes()[i];
  const int a = arity(n.op);
  if (a == 0) return n.op == Op::constant ? Expr::constant(saturate(n.value)) : Expr({n});
  if (a == 1) {
    Expr child = simplify_at(expr, i + 1);
    if (is_const(child)) return Expr::constant(apply_unary(n.op, child.nodes()[0].value));
    if (n.op == Op::neg && child.nodes()[0].op == Op::neg) return child.subtree(1);
    return Expr::unary(n.op, child);
  }
  Expr left = simplify_at(expr, i + 1);
  Expr right = simplify_at(expr, expr.subtree_end(i + 1));
  if (is_const(left) && is_const(right))
    return Expr::constant(apply_binary(n.op, left.nodes()[0].value, right.nodes()[0].value));
  switch (n.op) {
    case Op::add:
      if (is_const(left, 0.0)) return right;
      if (is_const(right, 0.0)) return left;
      break;
    case Op::sub:
      if (is_const(right, 0.0)) return left;
      if (left == right) return Expr::constant(0.0);
      break;
    case Op::mul:
      if (is_const(left, 1.0)) return right;
      if (is_const(right, 1.0)) return left;
      if (is_const(left, 0.0) || is_const(right, 0.0)) return Expr::constant(0.0);
      break;
    case Op::div:
      if (is_const(right, 1.0)) return left;
      break;
    default: break;
  }
  return Expr::binary(n.op, left, right);
}

void write_prefix(const Expr& expr, std::size_t i, std::span<const std::string> names,
                  std::string& out) {
  const Node& n = expr.nodes()[i];
  if (n.op == Op::constant) {
    out += format_double(n.value);
    return;
  }
  if (n.op == Op::feature) {
    out += names[static_cast<std::size_t>(n.feature)];
    return;
  }
  out += '(';
  out += op_token(n.op);
  out += ' ';
  write_prefix(expr, i + 1, names, out);
  if (arity(n.op) == 2) {
    out += ' ';
    write_prefix(expr, expr.subtree_end(i + 1), names, out);
  }
  out += ')';
}

class PrefixParser {
 public:
  PrefixParser(std::string_view text, std::span<const std::string> names)
      : text_(text), names_(names) {}

  Expr parse() {
    parse_node();
    skip_space();
    if (pos_ != text_.size()) fail("trailing input");
    return Expr(std::move(nodes_));
  }

 private:
  void parse_node() {
    skip_space();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    if (text_[pos_] == '(') {
      ++pos_;
      const std::string_view token = read_atom();
      Op op{};
      bool found = false;
      for (Op candidate : {Op::neg, Op::log, Op::exp, Op::add, Op::sub, Op::mul, Op::div, Op::pow}) {
        if (op_token(candidate) == token) {
          op = candidate;
          found = true;
        }
      }
      if (!found) fail("unknown operator '" + std::string(token) + "'");
      nodes_.push_back({op, 0.0, 0});
      for (int k = 0; k < arity(op); ++k) parse_node();
      skip_space();
      if (pos_ >= text_.size() || text_[pos_] != ')') fail("expected ')'");
      ++pos_;
      return;
    }
    const std::string_view atom = read_atom();
    for (std::size_t f = 0; f < names_.size(); ++f) {
      if (names_[f] == atom) {
        nodes_.push_back({Op::feature, 0.0, static_cast<int>(f)});
        return;
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(atom.data(), atom.data() + atom.size(), value);
    if (ec != std::errc{} || ptr != atom.data() + atom.size())
      fail("unknown symbol '" + std::string(atom) + "'");
    nodes_.push_back({Op::constant, value, 0});
  }

  std::string_view read_atom() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
           text_[pos_] != '(' && text_[pos_] != ')')
      ++pos_;
    if (start == pos_) fail("expected a symbol");
    return text_.substr(start, pos_ - start);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::parse_failure, "expression at offset " + std::to_string(pos_) + ": " + what);
  }

  std::string_view text_;
  std::span<const std::string> names_;
  std::size_t pos_ = 0;
  std::vector<Node> nodes_;
};

}  // namespace

Expr simplify(const Expr& expr) {
  if (expr.empty()) return expr;
  return simplify_at(expr, 0);
}

std::string to_prefix(const Expr& expr, std::span<const std::string> feature_names) {
  std::string out;
  if (!expr.empty()) write_prefix(expr, 0, feature_names, out);
  return out;
}

Expr parse_prefix(std::string_view text, std::span<const std::string> feature_names) {
  return PrefixParser(text, feature_names).parse();
}

}  // namespace energylens::symreg
