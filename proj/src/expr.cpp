#include "zubov/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

namespace zubov {

namespace {

std::size_t child_min_dim(const std::vector<Expr>& children) {
  std::size_t d = 0;
  for (const auto& c : children) d = std::max(d, c.min_dim());
  return d;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("cannot format constant");
  return std::string(buf, end);
}

}  // namespace

Expr::Expr() : Expr(constant(0.0)) {}

Expr Expr::make(Op op, std::vector<Expr> children, double value,
                std::size_t index, unsigned exponent) {
  auto node = std::make_shared<Node>();
  node->op = op;
  node->value = value;
  node->index = index;
  node->exponent = exponent;
  node->min_dim = op == Op::Var ? index + 1 : child_min_dim(children);
  node->children = std::move(children);
  return Expr(std::move(node));
}

Expr Expr::constant(double value) { return make(Op::Constant, {}, value); }
Expr Expr::var(std::size_t index) { return make(Op::Var, {}, 0.0, index); }

Expr Expr::int_pow(const Expr& base, unsigned exponent) {
  return make(Op::IntPow, {base}, 0.0, 0, exponent);
}
Expr Expr::tanh(const Expr& arg) { return make(Op::Tanh, {arg}); }
Expr Expr::exp(const Expr& arg) { return make(Op::Exp, {arg}); }
Expr Expr::ln(const Expr& arg) { return make(Op::Ln, {arg}); }

Expr Expr::binary(Op op, const Expr& a, const Expr& b) {
  if (op != Op::Add && op != Op::Sub && op != Op::Mul && op != Op::Div)
    throw std::invalid_argument("not a binary operator");
  return make(op, {a, b});
}

Expr Expr::negate(const Expr& a) { return make(Op::Neg, {a}); }

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
std::size_t Expr::index() const { return node_->index; }
unsigned Expr::exponent() const { return node_->exponent; }
std::size_t Expr::arity() const { return node_->children.size(); }
const Expr& Expr::child(std::size_t i) const { return node_->children[i]; }
std::size_t Expr::min_dim() const { return node_->min_dim; }

bool Expr::is_constant(double v) const {
  return node_->op == Op::Constant && node_->value == v;
}

std::size_t Expr::node_count() const {
  std::size_t n = 1;
  for (const auto& c : node_->children) n += c.node_count();
  return n;
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0)) return b;
  if (b.is_constant(0.0)) return a;
  return Expr::make(Op::Add, {a, b});
}

Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_constant(0.0)) return a;
  if (a.is_constant(0.0)) return -b;
  return Expr::make(Op::Sub, {a, b});
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0) || b.is_constant(0.0)) return Expr::constant(0.0);
  if (a.is_constant(1.0)) return b;
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Mul, {a, b});
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_constant(0.0)) return Expr::constant(0.0);
  if (b.is_constant(1.0)) return a;
  return Expr::make(Op::Div, {a, b});
}

Expr operator-(const Expr& a) {
  if (a.is_constant(0.0)) return a;
  return Expr::make(Op::Neg, {a});
}

double Expr::eval(std::span<const double> x) const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Constant:
      return n.value;
    case Op::Var:
      if (n.index >= x.size()) throw IndexError("variable index out of range");
      return x[n.index];
    case Op::Add:
      return n.children[0].eval(x) + n.children[1].eval(x);
    case Op::Sub:
      return n.children[0].eval(x) - n.children[1].eval(x);
    case Op::Mul:
      return n.children[0].eval(x) * n.children[1].eval(x);
    case Op::Div: {
      const double den = n.children[1].eval(x);
      if (den == 0.0) throw DomainError("division by zero");
      return n.children[0].eval(x) / den;
    }
    case Op::Neg:
      return -n.children[0].eval(x);
    case Op::IntPow: {
      const double b = n.children[0].eval(x);
      double r = 1.0;
      for (unsigned k = 0; k < n.exponent; ++k) r *= b;
      return r;
    }
    case Op::Tanh:
      return std::tanh(n.children[0].eval(x));
    case Op::Exp:
      return std::exp(n.children[0].eval(x));
    case Op::Ln: {
      const double a = n.children[0].eval(x);
      if (!(a > 0.0)) throw DomainError("ln of non-positive argument");
      return std::log(a);
    }
  }
  return 0.0;
}

Expr Expr::diff(std::size_t var) const {
  const Node& n = *node_;
  switch (n.op) {
    case Op::Constant:
      return constant(0.0);
    case Op::Var:
      return constant(n.index == var ? 1.0 : 0.0);
    case Op::Add:
      return n.children[0].diff(var) + n.children[1].diff(var);
    case Op::Sub:
      return n.children[0].diff(var) - n.children[1].diff(var);
    case Op::Mul: {
      const Expr& a = n.children[0];
      const Expr& b = n.children[1];
      return a.diff(var) * b + a * b.diff(var);
    }
    case Op::Div: {
      const Expr& a = n.children[0];
      const Expr& b = n.children[1];
      return (a.diff(var) * b - a * b.diff(var)) / int_pow(b, 2);
    }
    case Op::Neg:
      return -n.children[0].diff(var);
    case Op::IntPow: {
      if (n.exponent == 0) return constant(0.0);
      const Expr& b = n.children[0];
      const Expr db = b.diff(var);
      if (n.exponent == 1) return db;
      Expr lower = n.exponent == 2 ? b : int_pow(b, n.exponent - 1);
      return constant(static_cast<double>(n.exponent)) * lower * db;
    }
    case Op::Tanh: {
      const Expr& a = n.children[0];
      return (constant(1.0) - int_pow(*this, 2)) * a.diff(var);
    }
    case Op::Exp:
      return *this * n.children[0].diff(var);
    case Op::Ln:
      return n.children[0].diff(var) / n.children[0];
  }
  return constant(0.0);
}

std::string Expr::to_string() const {
  const Node& n = *node_;
  auto bin = [&](const char* op) {
    return "(" + n.children[0].to_string() + " " + op + " " +
           n.children[1].to_string() + ")";
  };
  switch (n.op) {
    case Op::Constant:
      return std::signbit(n.value)
                 ? "(-" + format_double(-n.value) + ")"
                 : format_double(n.value);
    case Op::Var:
      return "x" + std::to_string(n.index + 1);
    case Op::Add:
      return bin("+");
    case Op::Sub:
      return bin("-");
    case Op::Mul:
      return bin("*");
    case Op::Div:
      return bin("/");
    case Op::Neg:
      return "(-" + n.children[0].to_string() + ")";
    case Op::IntPow:
      return "(" + n.children[0].to_string() + "^" +
             std::to_string(n.exponent) + ")";
    case Op::Tanh:
      return "tanh(" + n.children[0].to_string() + ")";
    case Op::Exp:
      return "exp(" + n.children[0].to_string() + ")";
    case Op::Ln:
      return "ln(" + n.children[0].to_string() + ")";
  }
  return {};
}

// ---------------------------------------------------------------------------
// Parser

namespace {

class Parser {
 public:
  Parser(std::string_view text, std::size_t dim) : text_(text), dim_(dim) {}

  Expr parse() {
    Expr e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected character");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError(msg, pos_);
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  Expr parse_sum() {
    Expr lhs = parse_product();
    for (;;) {
      if (accept('+')) {
        lhs = Expr::binary(Op::Add, lhs, parse_product());
      } else if (accept('-')) {
        lhs = Expr::binary(Op::Sub, lhs, parse_product());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_product() {
    Expr lhs = parse_unary();
    for (;;) {
      if (accept('*')) {
        lhs = Expr::binary(Op::Mul, lhs, parse_unary());
      } else if (accept('/')) {
        lhs = Expr::binary(Op::Div, lhs, parse_unary());
      } else {
        return lhs;
      }
    }
  }

  Expr parse_unary() {
    if (accept('-')) return Expr::negate(parse_unary());
    if (accept('+')) return parse_unary();
    return parse_power();
  }

  Expr parse_power() {
    Expr base = parse_primary();
    if (accept('^')) {
      skip_ws();
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
      if (start == pos_) fail("exponent must be a non-negative integer literal");
      unsigned k = 0;
      auto [p, ec] = std::from_chars(text_.data() + start, text_.data() + pos_, k);
      if (ec != std::errc()) {
        pos_ = start;
        fail("exponent out of range");
      }
      skip_ws();
      if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == '^'))
        fail("exponent must be a non-negative integer literal");
      return Expr::int_pow(base, k);
    }
    return base;
  }

  Expr parse_primary() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = parse_sum();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return parse_number();
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             std::isalnum(static_cast<unsigned char>(text_[pos_])))
        ++pos_;
      const std::string_view word = text_.substr(start, pos_ - start);
      if (word == "tanh" || word == "exp" || word == "ln") {
        expect('(');
        Expr arg = parse_sum();
        expect(')');
        if (word == "tanh") return Expr::tanh(arg);
        if (word == "exp") return Expr::exp(arg);
        return Expr::ln(arg);
      }
      if (word.size() >= 2 && word[0] == 'x' &&
          std::all_of(word.begin() + 1, word.end(),
                      [](char d) { return std::isdigit(static_cast<unsigned char>(d)); })) {
        std::size_t k = 0;
        auto [p, ec] = std::from_chars(word.data() + 1, word.data() + word.size(), k);
        if (ec != std::errc() || k == 0) {
          pos_ = start;
          fail("invalid variable name");
        }
        if (k > dim_) {
          throw IndexError("variable x" + std::to_string(k) +
                           " exceeds dimension " + std::to_string(dim_));
        }
        return Expr::var(k - 1);
      }
      pos_ = start;
      fail("unknown identifier '" + std::string(word) + "'");
    }
    fail("unexpected character");
  }

  Expr parse_number() {
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    double v = 0.0;
    auto [p, ec] = std::from_chars(begin, end, v, std::chars_format::general);
    if (ec != std::errc()) fail("malformed number");
    pos_ += static_cast<std::size_t>(p - begin);
    return Expr::constant(v);
  }

  std::string_view text_;
  std::size_t dim_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse(std::string_view text, std::size_t dim) {
  return Parser(text, dim).parse();
}

// ---------------------------------------------------------------------------

VectorField::VectorField(std::size_t dim, std::vector<Expr> components)
    : components_(std::move(components)) {
  if (dim == 0) throw std::invalid_argument("vector field dimension must be >= 1");
  if (components_.size() != dim)
    throw std::invalid_argument("component count does not match dimension");
  for (const auto& c : components_) {
    if (c.min_dim() > dim) throw IndexError("component uses variable beyond dimension");
  }
}

void VectorField::eval(std::span<const double> x, std::span<double> out) const {
  for (std::size_t i = 0; i < components_.size(); ++i) out[i] = components_[i].eval(x);
}

std::vector<double> VectorField::eval(std::span<const double> x) const {
  std::vector<double> out(components_.size());
  eval(x, out);
  return out;
}

std::vector<std::vector<Expr>> VectorField::jacobian() const {
  const std::size_t n = dim();
  std::vector<std::vector<Expr>> jac(n, std::vector<Expr>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) jac[i][j] = components_[i].diff(j);
  return jac;
}

VectorField parse_field(const std::vector<std::string>& components) {
  std::vector<Expr> exprs;
  exprs.reserve(components.size());
  for (const auto& c : components) exprs.push_back(parse(c, components.size()));
  return VectorField(components.size(), std::move(exprs));
}

}  // namespace zubov
