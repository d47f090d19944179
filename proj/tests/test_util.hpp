#pragma once

#include <cmath>
#include <vector>

#include "zubov/expr.hpp"
#include "zubov/interval.hpp"
#include "zubov/net.hpp"
#include "zubov/rng.hpp"

namespace zubov::testutil {

/// Random expression whose every subterm is defined and smooth on R^n:
/// divisions and logs are guarded by 1 + (.)^2.
inline Expr random_smooth_expr(Xoshiro256& rng, std::size_t dim, int depth) {
  if (depth <= 0 || rng.uniform() < 0.2) {
    if (rng.uniform() < 0.6) return Expr::var(rng.below(dim));
    return Expr::constant(std::round(rng.uniform(-2.0, 2.0) * 8.0) / 8.0);
  }
  auto sub = [&] { return random_smooth_expr(rng, dim, depth - 1); };
  switch (rng.below(9)) {
    case 0:
      return Expr::binary(Op::Add, sub(), sub());
    case 1:
      return Expr::binary(Op::Sub, sub(), sub());
    case 2:
      return Expr::binary(Op::Mul, sub(), sub());
    case 3:
      return Expr::binary(Op::Div, sub(),
                          Expr::binary(Op::Add, Expr::constant(1.0), Expr::int_pow(sub(), 2)));
    case 4:
      return Expr::negate(sub());
    case 5:
      return Expr::int_pow(sub(), static_cast<unsigned>(rng.below(4)));
    case 6:
      return Expr::tanh(sub());
    case 7:
      return Expr::exp(Expr::tanh(sub()));
    default:
      return Expr::ln(Expr::binary(Op::Add, Expr::constant(1.0), Expr::int_pow(sub(), 2)));
  }
}

/// Random expression with unguarded divisions and logs.
inline Expr random_raw_expr(Xoshiro256& rng, std::size_t dim, int depth) {
  if (depth <= 0 || rng.uniform() < 0.2) {
    if (rng.uniform() < 0.6) return Expr::var(rng.below(dim));
    return Expr::constant(rng.uniform(-3.0, 3.0));
  }
  auto sub = [&] { return random_raw_expr(rng, dim, depth - 1); };
  switch (rng.below(9)) {
    case 0:
      return Expr::binary(Op::Add, sub(), sub());
    case 1:
      return Expr::binary(Op::Sub, sub(), sub());
    case 2:
      return Expr::binary(Op::Mul, sub(), sub());
    case 3:
      return Expr::binary(Op::Div, sub(), sub());
    case 4:
      return Expr::negate(sub());
    case 5:
      return Expr::int_pow(sub(), static_cast<unsigned>(rng.below(5)));
    case 6:
      return Expr::tanh(sub());
    case 7:
      return Expr::exp(sub());
    default:
      return Expr::ln(sub());
  }
}

inline std::vector<double> random_point(Xoshiro256& rng, std::size_t n, double lo, double hi) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(lo, hi);
  return x;
}

/// Random box inside [lo, hi]^n with widths up to max_width.
inline Box random_box(Xoshiro256& rng, std::size_t n, double lo, double hi, double max_width) {
  std::vector<Interval> dims;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = rng.uniform(0.0, max_width);
    const double a = rng.uniform(lo, hi - w);
    dims.emplace_back(a, a + w);
  }
  return Box(dims);
}

inline std::vector<double> random_point_in(Xoshiro256& rng, const Box& B) {
  std::vector<double> x(B.dim());
  for (std::size_t i = 0; i < B.dim(); ++i) x[i] = rng.uniform(B[i].lo, B[i].hi);
  return x;
}

/// Network with every parameter uniform in [-scale, scale].
inline Mlp random_net(Xoshiro256& rng, std::vector<std::size_t> sizes, double scale = 1.0) {
  Mlp net(std::move(sizes));
  for (auto& p : net.params()) p = rng.uniform(-scale, scale);
  return net;
}

/// Independent dense evaluation of a tanh network from its raw parameters.
inline double reference_forward(const Mlp& net, const std::vector<double>& x) {
  const auto& sizes = net.layer_sizes();
  std::vector<double> a = x;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto W = net.weights(l);
    const auto b = net.bias(l);
    std::vector<double> z(sizes[l + 1]);
    for (std::size_t i = 0; i < z.size(); ++i) {
      long double s = b[i];
      for (std::size_t j = 0; j < a.size(); ++j)
        s += static_cast<long double>(W[i * a.size() + j]) * a[j];
      z[i] = static_cast<double>(s);
    }
    if (l + 2 < sizes.size())
      for (auto& v : z) v = std::tanh(v);
    a = std::move(z);
  }
  return a[0];
}

}  // namespace zubov::testutil
