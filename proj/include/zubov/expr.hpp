#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zubov {

/// Malformed expression text; `position` is the 0-based byte offset.
class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " at position " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// A variable index is out of range for the declared dimension.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Point or interval evaluation left the domain of an operator.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Op { Constant, Var, Add, Sub, Mul, Div, Neg, IntPow, Tanh, Exp, Ln };

/// Immutable scalar expression over coordinates x[0..n).
///
/// Nodes are shared, so copies are cheap and subtrees may be reused by
/// several parents (derivative trees do this heavily).
class Expr {
 public:
  struct Node;

  Expr();  // Constant 0

  static Expr constant(double value);
  static Expr var(std::size_t index);
  static Expr int_pow(const Expr& base, unsigned exponent);
  static Expr tanh(const Expr& arg);
  static Expr exp(const Expr& arg);
  static Expr ln(const Expr& arg);
  /// Builds a binary node as-is, without the 0/1 folding of the operators.
  static Expr binary(Op op, const Expr& a, const Expr& b);
  static Expr negate(const Expr& a);

  Op op() const;
  double value() const;          // Constant only
  std::size_t index() const;     // Var only
  unsigned exponent() const;     // IntPow only
  std::size_t arity() const;
  const Expr& child(std::size_t i) const;

  bool is_constant(double v) const;

  /// One past the largest Var index used, 0 if the expression has no variables.
  std::size_t min_dim() const;
  std::size_t node_count() const;

  /// Throws DomainError on ln(x <= 0) or division by zero.
  double eval(std::span<const double> x) const;

  /// Symbolic partial derivative. Applies only trivial 0/1 folding.
  Expr diff(std::size_t var) const;

  /// Fully parenthesised infix text that parse() accepts and that
  /// re-evaluates bit-identically.
  std::string to_string() const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  static Expr make(Op op, std::vector<Expr> children, double value = 0.0,
                   std::size_t index = 0, unsigned exponent = 0);

  std::shared_ptr<const Node> node_;
};

struct Expr::Node {
  Op op;
  double value;
  std::size_t index;
  unsigned exponent;
  std::vector<Expr> children;
  std::size_t min_dim;
};

/// Parses infix text over x1..x{dim}. Grammar: + - * / ^ (non-negative
/// integer literal exponents), unary minus, tanh/exp/ln, parentheses.
Expr parse(std::string_view text, std::size_t dim);

/// A vector field x' = f(x) with one expression per coordinate.
class VectorField {
 public:
  VectorField() = default;
  VectorField(std::size_t dim, std::vector<Expr> components);

  std::size_t dim() const { return components_.size(); }
  const Expr& operator[](std::size_t i) const { return components_[i]; }
  const std::vector<Expr>& components() const { return components_; }

  void eval(std::span<const double> x, std::span<double> out) const;
  std::vector<double> eval(std::span<const double> x) const;

  /// jacobian()[i][j] = d f_i / d x_j.
  std::vector<std::vector<Expr>> jacobian() const;

 private:
  std::vector<Expr> components_;
};

VectorField parse_field(const std::vector<std::string>& components);

}  // namespace zubov
