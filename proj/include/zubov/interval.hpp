#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "zubov/expr.hpp"

namespace zubov {

class Mlp;

/// Closed interval [lo, hi] with finite endpoints.
///
/// Every arithmetic result is widened outward by one ulp per endpoint
/// (two for library transcendentals), so enclosures stay sound without
/// touching the FPU rounding mode.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  Interval() = default;
  constexpr Interval(double v) : lo(v), hi(v) {}  // NOLINT: implicit point
  Interval(double l, double h);

  double width() const { return hi - lo; }
  double mid() const { return lo + 0.5 * (hi - lo); }
  double mag() const { return std::max(std::abs(lo), std::abs(hi)); }
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool contains_zero() const { return lo <= 0.0 && 0.0 <= hi; }
};

/// Next double towards +inf (same result as std::nextafter, but inlined:
/// this sits on the hot path of every enclosure).
inline double round_up(double v) {
  if (!(v < std::numeric_limits<double>::infinity())) return v;  // +inf, nan
  if (v == 0.0) return std::numeric_limits<double>::denorm_min();
  auto bits = std::bit_cast<std::uint64_t>(v);
  bits = v > 0.0 ? bits + 1 : bits - 1;
  return std::bit_cast<double>(bits);
}
inline double round_down(double v) { return -round_up(-v); }

inline Interval widened(double lo, double hi) {
  Interval r;
  r.lo = round_down(lo);
  r.hi = round_up(hi);
  return r;
}

inline Interval operator+(const Interval& a, const Interval& b) {
  return widened(a.lo + b.lo, a.hi + b.hi);
}
inline Interval operator-(const Interval& a, const Interval& b) {
  return widened(a.lo - b.hi, a.hi - b.lo);
}
inline Interval operator-(const Interval& a) {
  Interval r;
  r.lo = -a.hi;
  r.hi = -a.lo;
  return r;
}
inline Interval& operator+=(Interval& a, const Interval& b) { return a = a + b; }

inline Interval operator*(const Interval& a, const Interval& b) {
  if (b.lo == b.hi) {
    const double w = b.lo;
    return w >= 0.0 ? widened(a.lo * w, a.hi * w) : widened(a.hi * w, a.lo * w);
  }
  if (a.lo == a.hi) {
    const double w = a.lo;
    return w >= 0.0 ? widened(b.lo * w, b.hi * w) : widened(b.hi * w, b.lo * w);
  }
  const double p1 = a.lo * b.lo;
  const double p2 = a.lo * b.hi;
  const double p3 = a.hi * b.lo;
  const double p4 = a.hi * b.hi;
  return widened(std::min(std::min(p1, p2), std::min(p3, p4)),
                 std::max(std::max(p1, p2), std::max(p3, p4)));
}

/// Throws DomainError if `b` contains zero.
Interval operator/(const Interval& a, const Interval& b);

Interval sqr(const Interval& a);
Interval pow(const Interval& a, unsigned k);
Interval sqrt(const Interval& a);  // requires a.lo >= 0 (clamped at 0)
Interval tanh(const Interval& a);
Interval exp(const Interval& a);
/// Throws DomainError if a.lo <= 0.
Interval log(const Interval& a);

/// Smallest interval containing both.
Interval hull(const Interval& a, const Interval& b);

/// Common part of two enclosures of the same quantity; falls back to `a`
/// if they do not overlap.
Interval intersect(const Interval& a, const Interval& b);

/// Axis-aligned box, one interval per coordinate.
class Box {
 public:
  Box() = default;
  explicit Box(std::vector<Interval> dims);
  Box(std::initializer_list<Interval> dims);

  std::size_t dim() const { return dims_.size(); }
  const Interval& operator[](std::size_t i) const { return dims_[i]; }
  Interval& operator[](std::size_t i) { return dims_[i]; }
  std::span<const Interval> intervals() const { return dims_; }

  double max_width() const;
  std::size_t widest_axis() const;
  std::vector<double> center() const;
  std::vector<std::vector<double>> corners() const;
  bool contains(std::span<const double> x) const;
  bool contains(const Box& other) const;

  /// Midpoint split along `axis`.
  std::pair<Box, Box> split(std::size_t axis) const;

  /// Componentwise hull with the origin: encloses {t x : t in [0,1], x in box}.
  Box hull_with_origin() const;

  std::string to_string() const;

 private:
  std::vector<Interval> dims_;
};

/// Natural interval extension of `e` over `box`, outward rounded.
/// Throws DomainError when a divisor encloses 0 or a log argument reaches 0.
Interval eval_interval(const Expr& e, const Box& box);

/// Narrows `box` to an enclosure of {x in box : e(x) <= 0} by forward-backward
/// propagation over the expression tree. Returns false when that set is
/// empty. Subterms outside their domain on the box are left uncontracted.
bool contract_nonpositive(const Expr& e, Box& box);

/// Encloses W_N over the box: exact interval affine maps, tanh by endpoints.
Interval eval_net_interval(const Mlp& net, const Box& box);

/// Encloses grad W_N over the box by the interval chain rule, using
/// tanh' = 1 - tanh^2 on the hidden pre-activation intervals. Also returns
/// the value enclosure through `value` when non-null.
std::vector<Interval> eval_net_grad_interval(const Mlp& net, const Box& box,
                                             Interval* value = nullptr);

/// Value, gradient and Hessian (row-major n x n) enclosures of W_N over a
/// box, by forward-mode propagation in interval arithmetic.
struct NetJet {
  Interval value;
  std::vector<Interval> grad;
  std::vector<Interval> hess;
};
NetJet eval_net_jet_interval(const Mlp& net, const Box& box);

}  // namespace zubov
