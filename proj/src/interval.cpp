#include "zubov/interval.hpp"

#include "zubov/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace zubov {

namespace {

// Library transcendentals are not correctly rounded; allow two ulps.
Interval widened2(double lo, double hi) {
  Interval r;
  r.lo = round_down(round_down(lo));
  r.hi = round_up(round_up(hi));
  return r;
}

}  // namespace

Interval::Interval(double l, double h) : lo(l), hi(h) {
  if (!(l <= h)) throw std::invalid_argument("interval with lo > hi");
}

Interval operator/(const Interval& a, const Interval& b) {
  if (b.contains_zero()) throw DomainError("interval division by an interval containing 0");
  const double q1 = a.lo / b.lo;
  const double q2 = a.lo / b.hi;
  const double q3 = a.hi / b.lo;
  const double q4 = a.hi / b.hi;
  return widened(std::min({q1, q2, q3, q4}), std::max({q1, q2, q3, q4}));
}

Interval sqr(const Interval& a) {
  const double l2 = a.lo * a.lo;
  const double h2 = a.hi * a.hi;
  if (a.lo >= 0.0) return widened(l2, h2);
  if (a.hi <= 0.0) return widened(h2, l2);
  Interval r = widened(0.0, std::max(l2, h2));
  r.lo = 0.0;
  return r;
}

Interval pow(const Interval& a, unsigned k) {
  if (k == 0) return Interval(1.0);
  if (k == 1) return a;
  // Repeated multiplication of endpoints accumulates k-1 roundings; widen
  // once per multiplication.
  auto ipow = [k](double v) {
    double r = 1.0;
    for (unsigned i = 0; i < k; ++i) r *= v;
    return r;
  };
  auto widen_n = [k](double v, bool up) {
    for (unsigned i = 0; i < k; ++i) v = up ? round_up(v) : round_down(v);
    return v;
  };
  const double pl = ipow(a.lo);
  const double ph = ipow(a.hi);
  Interval r;
  if (k % 2 == 1 || a.lo >= 0.0) {
    // monotone increasing on the interval
    r.lo = widen_n(pl, false);
    r.hi = widen_n(ph, true);
  } else if (a.hi <= 0.0) {
    r.lo = widen_n(ph, false);
    r.hi = widen_n(pl, true);
  } else {
    r.lo = 0.0;
    r.hi = widen_n(std::max(pl, ph), true);
  }
  return r;
}

Interval sqrt(const Interval& a) {
  const double lo = std::max(a.lo, 0.0);
  const double hi = std::max(a.hi, 0.0);
  Interval r = widened(std::sqrt(lo), std::sqrt(hi));
  r.lo = std::max(r.lo, 0.0);
  return r;
}

Interval tanh(const Interval& a) {
  Interval r = widened2(std::tanh(a.lo), std::tanh(a.hi));
  r.lo = std::max(r.lo, -1.0);
  r.hi = std::min(r.hi, 1.0);
  return r;
}

Interval exp(const Interval& a) {
  Interval r = widened2(std::exp(a.lo), std::exp(a.hi));
  r.lo = std::max(r.lo, 0.0);
  return r;
}

Interval log(const Interval& a) {
  if (!(a.lo > 0.0)) throw DomainError("interval log of a non-positive range");
  return widened2(std::log(a.lo), std::log(a.hi));
}

Interval hull(const Interval& a, const Interval& b) {
  Interval r;
  r.lo = std::min(a.lo, b.lo);
  r.hi = std::max(a.hi, b.hi);
  return r;
}

// ---------------------------------------------------------------------------

Box::Box(std::vector<Interval> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw std::invalid_argument("box must have at least one dimension");
}

Box::Box(std::initializer_list<Interval> dims) : Box(std::vector<Interval>(dims)) {}

double Box::max_width() const {
  double w = 0.0;
  for (const auto& d : dims_) w = std::max(w, d.width());
  return w;
}

std::size_t Box::widest_axis() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < dims_.size(); ++i)
    if (dims_[i].width() > dims_[best].width()) best = i;
  return best;
}

std::vector<double> Box::center() const {
  std::vector<double> c(dims_.size());
  for (std::size_t i = 0; i < dims_.size(); ++i) c[i] = dims_[i].mid();
  return c;
}

std::vector<std::vector<double>> Box::corners() const {
  const std::size_t n = dims_.size();
  std::vector<std::vector<double>> out;
  out.reserve(std::size_t{1} << n);
  for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = (mask >> i) & 1U ? dims_[i].hi : dims_[i].lo;
    out.push_back(std::move(c));
  }
  return out;
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != dims_.size()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (!dims_[i].contains(x[i])) return false;
  return true;
}

bool Box::contains(const Box& other) const {
  if (other.dim() != dim()) return false;
  for (std::size_t i = 0; i < dims_.size(); ++i)
    if (other[i].lo < dims_[i].lo || other[i].hi > dims_[i].hi) return false;
  return true;
}

std::pair<Box, Box> Box::split(std::size_t axis) const {
  Box left = *this;
  Box right = *this;
  const double m = dims_[axis].mid();
  left.dims_[axis].hi = m;
  right.dims_[axis].lo = m;
  return {std::move(left), std::move(right)};
}

Box Box::hull_with_origin() const {
  Box h = *this;
  for (auto& d : h.dims_) d = hull(d, Interval(0.0));
  return h;
}

std::string Box::to_string() const {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) os << " x ";
    os << "[" << dims_[i].lo << ", " << dims_[i].hi << "]";
  }
  return os.str();
}

Interval intersect(const Interval& a, const Interval& b) {
  const double lo = std::max(a.lo, b.lo);
  const double hi = std::min(a.hi, b.hi);
  if (!(lo <= hi)) return a;
  Interval r;
  r.lo = lo;
  r.hi = hi;
  return r;
}

// ---------------------------------------------------------------------------

Interval eval_interval(const Expr& e, const Box& box) {
  switch (e.op()) {
    case Op::Constant:
      return Interval(e.value());
    case Op::Var:
      if (e.index() >= box.dim()) throw IndexError("variable index outside box dimension");
      return box[e.index()];
    case Op::Add:
      return eval_interval(e.child(0), box) + eval_interval(e.child(1), box);
    case Op::Sub:
      return eval_interval(e.child(0), box) - eval_interval(e.child(1), box);
    case Op::Mul: {
      // x*x over the same subtree is a square; keep the tighter enclosure.
      if (e.child(0).op() == Op::Var &&
          e.child(1).op() == Op::Var && e.child(0).index() == e.child(1).index())
        return sqr(eval_interval(e.child(0), box));
      return eval_interval(e.child(0), box) * eval_interval(e.child(1), box);
    }
    case Op::Div:
      return eval_interval(e.child(0), box) / eval_interval(e.child(1), box);
    case Op::Neg:
      return -eval_interval(e.child(0), box);
    case Op::IntPow:
      return pow(eval_interval(e.child(0), box), e.exponent());
    case Op::Tanh:
      return tanh(eval_interval(e.child(0), box));
    case Op::Exp:
      return exp(eval_interval(e.child(0), box));
    case Op::Ln:
      return log(eval_interval(e.child(0), box));
  }
  return Interval(0.0);
}

// ---------------------------------------------------------------------------
// Constraint contraction

namespace {

struct ValueTree {
  Interval v;
  std::vector<ValueTree> kids;
};

bool same_var_square(const Expr& e) {
  return e.op() == Op::Mul && e.child(0).op() == Op::Var && e.child(1).op() == Op::Var &&
         e.child(0).index() == e.child(1).index();
}

ValueTree forward_tree(const Expr& e, const Box& box) {
  ValueTree t;
  for (std::size_t i = 0; i < e.arity(); ++i) t.kids.push_back(forward_tree(e.child(i), box));
  auto k = [&](std::size_t i) { return t.kids[i].v; };
  switch (e.op()) {
    case Op::Constant:
      t.v = Interval(e.value());
      break;
    case Op::Var:
      if (e.index() >= box.dim()) throw IndexError("variable index outside box dimension");
      t.v = box[e.index()];
      break;
    case Op::Add:
      t.v = k(0) + k(1);
      break;
    case Op::Sub:
      t.v = k(0) - k(1);
      break;
    case Op::Mul:
      t.v = same_var_square(e) ? sqr(k(0)) : k(0) * k(1);
      break;
    case Op::Div:
      t.v = k(0) / k(1);
      break;
    case Op::Neg:
      t.v = -k(0);
      break;
    case Op::IntPow:
      t.v = pow(k(0), e.exponent());
      break;
    case Op::Tanh:
      t.v = tanh(k(0));
      break;
    case Op::Exp:
      t.v = exp(k(0));
      break;
    case Op::Ln:
      t.v = log(k(0));
      break;
  }
  return t;
}

double down4(double v) { return round_down(round_down(round_down(round_down(v)))); }
double up4(double v) { return round_up(round_up(round_up(round_up(v)))); }

/// x := x meet [lo, hi]. NaN bounds leave x unchanged. False when empty.
bool narrow(Interval& x, double lo, double hi) {
  if (std::isnan(lo) || std::isnan(hi)) return true;
  const double l = std::max(x.lo, lo);
  const double h = std::min(x.hi, hi);
  if (!(l <= h)) return false;
  x.lo = l;
  x.hi = h;
  return true;
}

bool narrow(Interval& x, const Interval& y) { return narrow(x, y.lo, y.hi); }

double root(double v, unsigned k) {
  if (std::isinf(v)) return v;
  return v < 0 ? -std::pow(-v, 1.0 / k) : std::pow(v, 1.0 / k);
}

/// Projects the constraint "value of e lies in `target`" onto the box.
bool backward(const Expr& e, const ValueTree& t, const Interval& target, Box& box) {
  Interval v = t.v;
  if (!narrow(v, target)) return false;
  for (const auto& kid : t.kids)
    if (!std::isfinite(kid.v.lo) || !std::isfinite(kid.v.hi)) return true;
  if (!std::isfinite(v.lo) || !std::isfinite(v.hi)) return true;
  const Interval unbounded(-std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity());
  auto k = [&](std::size_t i) { return t.kids[i].v; };
  auto go = [&](std::size_t i, Interval x) { return backward(e.child(i), t.kids[i], x, box); };
  switch (e.op()) {
    case Op::Constant:
      return true;
    case Op::Var:
      return narrow(box[e.index()], v);
    case Op::Add:
      return go(0, v - k(1)) && go(1, v - k(0));
    case Op::Sub:
      return go(0, v + k(1)) && go(1, k(0) - v);
    case Op::Neg:
      return go(0, -v);
    case Op::Mul: {
      if (same_var_square(e)) {
        if (v.hi < 0) return false;
        const double r = up4(std::sqrt(v.hi));
        return go(0, Interval(-r, r));
      }
      Interval a = unbounded, b = unbounded;
      if (!k(1).contains_zero()) a = v / k(1);
      if (!k(0).contains_zero()) b = v / k(0);
      return go(0, a) && go(1, b);
    }
    case Op::Div: {
      Interval a = v * k(1);
      if (std::isnan(a.lo) || std::isnan(a.hi)) a = unbounded;
      Interval b = unbounded;
      if (!v.contains_zero()) b = k(0) / v;
      return go(0, a) && go(1, b);
    }
    case Op::IntPow: {
      const unsigned n = e.exponent();
      if (n == 0) return true;
      if (n == 1) return go(0, v);
      if (n % 2 == 1) return go(0, Interval(down4(root(v.lo, n)), up4(root(v.hi, n))));
      if (v.hi < 0) return false;
      const double r = up4(root(v.hi, n));
      Interval x(-r, r);
      if (v.lo > 0) {
        const double inner = std::max(0.0, down4(root(v.lo, n)));
        if (k(0).lo >= 0 && !narrow(x, inner, r)) return false;
        if (k(0).hi <= 0 && !narrow(x, -r, -inner)) return false;
      }
      return go(0, x);
    }
    case Op::Tanh: {
      if (v.lo >= 1.0 || v.hi <= -1.0) return go(0, unbounded);
      const double lo = v.lo <= -1.0 ? -std::numeric_limits<double>::infinity() : down4(std::atanh(v.lo));
      const double hi = v.hi >= 1.0 ? std::numeric_limits<double>::infinity() : up4(std::atanh(v.hi));
      return go(0, Interval(lo, hi));
    }
    case Op::Exp: {
      if (v.hi <= 0) return go(0, unbounded);
      const double lo = v.lo > 0 ? down4(std::log(v.lo)) : -std::numeric_limits<double>::infinity();
      return go(0, Interval(lo, up4(std::log(v.hi))));
    }
    case Op::Ln:
      return go(0, exp(v));
  }
  return true;
}

}  // namespace

bool contract_nonpositive(const Expr& e, Box& box) {
  ValueTree t;
  try {
    t = forward_tree(e, box);
  } catch (const DomainError&) {
    return true;
  }
  Box work = box;
  if (!backward(e, t, Interval(-std::numeric_limits<double>::infinity(), 0.0), work)) return false;
  box = std::move(work);
  return true;
}

// ---------------------------------------------------------------------------

namespace {

/// Hidden pre-activation enclosures, layer by layer, and the output interval.
struct NetEnclosure {
  std::vector<std::vector<Interval>> pre;  // one per hidden layer
  Interval out;
};

NetEnclosure enclose_layers(const Mlp& net, const Box& box) {
  if (box.dim() != net.input_dim()) throw std::invalid_argument("box has wrong dimension");
  const auto& sizes = net.layer_sizes();
  const std::size_t L = net.num_affine();
  NetEnclosure enc;
  std::vector<Interval> a(box.intervals().begin(), box.intervals().end());
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = net.weights(l);
    const auto b = net.bias(l);
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    std::vector<Interval> z(out);
    for (std::size_t i = 0; i < out; ++i) {
      Interval acc(b[i]);
      for (std::size_t j = 0; j < in; ++j) acc += Interval(W[i * in + j]) * a[j];
      z[i] = acc;
    }
    if (l + 1 == L) {
      enc.out = z[0];
      break;
    }
    a.resize(out);
    for (std::size_t i = 0; i < out; ++i) a[i] = tanh(z[i]);
    enc.pre.push_back(std::move(z));
  }
  return enc;
}

}  // namespace

Interval eval_net_interval(const Mlp& net, const Box& box) { return enclose_layers(net, box).out; }

std::vector<Interval> eval_net_grad_interval(const Mlp& net, const Box& box, Interval* value) {
  const auto enc = enclose_layers(net, box);
  if (value) *value = enc.out;
  const auto& sizes = net.layer_sizes();
  const std::size_t L = net.num_affine();
  const auto w_out = net.weights(L - 1);
  std::vector<Interval> delta(w_out.begin(), w_out.end());
  for (std::size_t l = L - 1; l-- > 0;) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    const auto W = net.weights(l);
    std::vector<Interval> prev(in, Interval(0.0));
    for (std::size_t i = 0; i < out; ++i) {
      Interval deriv = Interval(1.0) - sqr(tanh(enc.pre[l][i]));
      deriv.lo = std::max(deriv.lo, 0.0);
      const Interval d = delta[i] * deriv;
      for (std::size_t j = 0; j < in; ++j) prev[j] += Interval(W[i * in + j]) * d;
    }
    delta.swap(prev);
  }
  return delta;
}

NetJet eval_net_jet_interval(const Mlp& net, const Box& box) {
  const std::size_t n = net.input_dim();
  if (box.dim() != n) throw std::invalid_argument("box has wrong dimension");
  const auto& sizes = net.layer_sizes();
  const std::size_t L = net.num_affine();
  const std::size_t nn = n * n;

  // a: values, J: d a / d x (row-major, h x n), H: second derivatives
  // (h x n x n, only j <= k filled until the end)
  std::vector<Interval> a(box.intervals().begin(), box.intervals().end());
  std::vector<Interval> J(n * n, Interval(0.0));
  for (std::size_t i = 0; i < n; ++i) J[i * n + i] = Interval(1.0);
  std::vector<Interval> H(n * nn, Interval(0.0));
  bool first = true;

  std::vector<Interval> z, Jz, Hz;
  NetJet jet;
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = net.weights(l);
    const auto b = net.bias(l);
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    z.assign(out, Interval(0.0));
    Jz.assign(out * n, Interval(0.0));
    Hz.assign(out * nn, Interval(0.0));
    for (std::size_t i = 0; i < out; ++i) {
      Interval acc(b[i]);
      for (std::size_t m = 0; m < in; ++m) acc += Interval(W[i * in + m]) * a[m];
      z[i] = acc;
      if (first) {
        for (std::size_t j = 0; j < n; ++j) Jz[i * n + j] = Interval(W[i * in + j]);
        continue;
      }
      for (std::size_t m = 0; m < in; ++m) {
        const Interval w(W[i * in + m]);
        if (W[i * in + m] == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) Jz[i * n + j] += w * J[m * n + j];
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = j; k < n; ++k) Hz[i * nn + j * n + k] += w * H[m * nn + j * n + k];
      }
    }
    first = false;
    if (l + 1 == L) {
      jet.value = z[0];
      jet.grad.assign(Jz.begin(), Jz.begin() + static_cast<std::ptrdiff_t>(n));
      jet.hess.assign(nn, Interval(0.0));
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k < n; ++k) jet.hess[j * n + k] = jet.hess[k * n + j] = Hz[j * n + k];
      break;
    }
    a.resize(out);
    J.assign(out * n, Interval(0.0));
    H.assign(out * nn, Interval(0.0));
    for (std::size_t i = 0; i < out; ++i) {
      const Interval t = tanh(z[i]);
      Interval s = Interval(1.0) - sqr(t);
      s.lo = std::max(s.lo, 0.0);
      const Interval s2 = Interval(-2.0) * t * s;  // tanh''
      a[i] = t;
      for (std::size_t j = 0; j < n; ++j) J[i * n + j] = s * Jz[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = j; k < n; ++k) {
          const Interval cross =
              j == k ? sqr(Jz[i * n + j]) : Jz[i * n + j] * Jz[i * n + k];
          H[i * nn + j * n + k] = s * Hz[i * nn + j * n + k] + s2 * cross;
        }
    }
  }
  return jet;
}

}  // namespace zubov
