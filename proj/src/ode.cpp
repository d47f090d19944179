#include "zubov/ode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace zubov {

void IntegratorConfig::validate() const {
  if (!(rtol > 0 && atol > 0 && h_max > 0 && t_max > 0 && stop_radius > 0 && value_cap > 0))
    throw std::invalid_argument("integrator settings must all be positive");
  if (!(stop_radius < 1.0)) throw std::invalid_argument("stop_radius must be < 1");
}

namespace {

constexpr double kBlowUpNorm = 1e6;
constexpr double kMinStep = 1e-12;
// A collapsing step while the state is this large is reported as blow-up:
// near a finite escape time the step shrinks geometrically and hits the
// underflow floor before the norm reaches kBlowUpNorm.
constexpr double kEscapeNorm = 1e3;

// Dormand-Prince 5(4) tableau.
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

double state_norm(const std::vector<double>& y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += y[i] * y[i];
  return std::sqrt(s);
}

/// Integrates the system, optionally augmented with the running integral
/// of |x|^2 as component n. `on_step(t, y)` returns false to stop.
template <class OnStep>
void dopri(const SystemDef& sys, std::vector<double> y, bool augmented, double t_end,
           const IntegratorConfig& cfg, OnStep on_step) {
  const std::size_t n = sys.dim;
  const std::size_t m = y.size();
  auto rhs = [&](const std::vector<double>& s, std::vector<double>& out) {
    sys.field.eval(std::span<const double>(s.data(), n), std::span<double>(out.data(), n));
    if (augmented) {
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) sq += s[i] * s[i];
      out[n] = sq;
    }
  };

  std::vector<double> k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m), tmp(m), ynew(m);
  rhs(y, k1);
  double t = 0.0;
  double h = std::min(cfg.h_max, 1e-2);
  if (!on_step(t, y)) return;

  while (t < t_end) {
    if (t + h > t_end) h = t_end - t;
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * a21 * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
    rhs(tmp, k3);
    for (std::size_t i = 0; i < m; ++i)
      tmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    rhs(tmp, k4);
    for (std::size_t i = 0; i < m; ++i)
      tmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    rhs(tmp, k5);
    for (std::size_t i = 0; i < m; ++i)
      tmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    rhs(tmp, k6);
    for (std::size_t i = 0; i < m; ++i)
      ynew[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    rhs(ynew, k7);

    double err = 0.0;
    bool finite = true;
    for (std::size_t i = 0; i < m; ++i) {
      const double ei =
          h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      const double r = std::abs(ei) / sc;
      if (!std::isfinite(r) || !std::isfinite(ynew[i])) finite = false;
      err = std::max(err, r);
    }

    if (finite && err <= 1.0) {
      t += h;
      y.swap(ynew);
      k1.swap(k7);
      if (state_norm(y, n) > kBlowUpNorm) throw BlowUp("state norm exceeded 1e6");
      if (!on_step(t, y)) return;
      const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
      h = std::min(h * fac, cfg.h_max);
    } else {
      const double fac = finite ? std::clamp(0.9 * std::pow(err, -0.2), 0.1, 0.9) : 0.1;
      h *= fac;
    }
    if (h < kMinStep && t < t_end) {
      if (state_norm(y, n) > kEscapeNorm) throw BlowUp("finite-time escape");
      throw StepUnderflow("step size below 1e-12");
    }
  }
}

}  // namespace

std::vector<PathPoint> integrate(const SystemDef& sys, const std::vector<double>& x0,
                                 double t_end, const IntegratorConfig& cfg) {
  if (x0.size() != sys.dim) throw std::invalid_argument("initial state has wrong dimension");
  if (!(t_end > 0)) throw std::invalid_argument("t_end must be positive");
  for (double v : x0)
    if (!std::isfinite(v)) throw std::invalid_argument("initial state must be finite");
  std::vector<PathPoint> path;
  dopri(sys, x0, false, t_end, cfg, [&](double t, const std::vector<double>& y) {
    path.push_back({t, y});
    return true;
  });
  return path;
}

bool integrate_until(const SystemDef& sys, const std::vector<double>& x0, double t_end,
                     const IntegratorConfig& cfg,
                     const std::function<bool(double, const std::vector<double>&)>& on_step) {
  if (x0.size() != sys.dim) throw std::invalid_argument("initial state has wrong dimension");
  if (!(t_end > 0)) throw std::invalid_argument("t_end must be positive");
  bool stopped = false;
  dopri(sys, x0, false, t_end, cfg, [&](double t, const std::vector<double>& y) {
    if (on_step(t, y)) return true;
    stopped = true;
    return false;
  });
  return stopped;
}

ValueEstimator::ValueEstimator(SystemDef sys, IntegratorConfig cfg)
    : sys_(std::move(sys)), cfg_(cfg) {
  cfg_.validate();
  const auto lin = linearize(sys_);
  try {
    const auto sol = solve_lyapunov(
        lin.A, Eigen::MatrixXd::Identity(lin.A.rows(), lin.A.cols()));
    if (sol.positive_definite) tail_P_ = sol.P;
  } catch (const SingularSystem&) {
    // no tail correction
  }
}

ValueEstimate ValueEstimator::estimate(const std::vector<double>& x) const {
  const std::size_t n = sys_.dim;
  ValueEstimate out;
  if (x.size() != n) throw std::invalid_argument("point has wrong dimension");
  std::vector<double> y(x);
  y.push_back(0.0);
  bool converged = false;
  std::vector<double> last;
  try {
    dopri(sys_, y, true, cfg_.t_max, cfg_, [&](double t, const std::vector<double>& s) {
      out.t_final = t;
      if (state_norm(s, n) <= cfg_.stop_radius) {
        converged = true;
        last = s;
        return false;
      }
      return s[n] < cfg_.value_cap;
    });
  } catch (const BlowUp&) {
    converged = false;
  } catch (const StepUnderflow&) {
    converged = false;
  }
  if (!converged) return out;

  double tail = 0.0;
  if (tail_P_) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) z(static_cast<Eigen::Index>(i)) = last[i];
    tail = z.dot(*tail_P_ * z);
  }
  out.v_hat = last[n] + tail;
  out.converged = true;
  return out;
}

std::pair<double, std::vector<double>> ValueEstimator::running_value(
    const std::vector<double>& x, double T) const {
  const std::size_t n = sys_.dim;
  std::vector<double> y(x);
  y.push_back(0.0);
  std::vector<double> last = y;
  dopri(sys_, y, true, T, cfg_, [&](double, const std::vector<double>& s) {
    last = s;
    return true;
  });
  const double v = last[n];
  last.pop_back();
  return {v, last};
}

ValueEstimate estimate_V(const SystemDef& sys, const std::vector<double>& x,
                         const IntegratorConfig& cfg) {
  return ValueEstimator(sys, cfg).estimate(x);
}

std::string to_string(BetaForm form) { return form == BetaForm::Exp ? "exp" : "tanh"; }

BetaForm beta_form_from_string(const std::string& s) {
  if (s == "exp") return BetaForm::Exp;
  if (s == "tanh") return BetaForm::Tanh;
  throw std::invalid_argument("unknown beta/psi form '" + s + "' (expected exp or tanh)");
}

double beta_transform(double v, const BetaKind& b) {
  if (!(b.alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (std::isinf(v)) return 1.0;
  if (v < 0) throw std::invalid_argument("beta_transform requires v >= 0");
  return b.form == BetaForm::Exp ? -std::expm1(-b.alpha * v) : std::tanh(b.alpha * v);
}

std::vector<std::vector<double>> lattice(const Box& domain, const std::vector<std::size_t>& grid) {
  const std::size_t n = domain.dim();
  if (grid.size() != n) throw std::invalid_argument("grid must give one count per axis");
  std::size_t total = 1;
  for (auto g : grid) {
    if (g < 2) throw std::invalid_argument("grid counts must be >= 2");
    total *= g;
  }
  std::vector<std::vector<double>> pts(total, std::vector<double>(n));
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rem = idx;
    for (std::size_t d = n; d-- > 0;) {
      const std::size_t k = rem % grid[d];
      rem /= grid[d];
      const double lo = domain[d].lo;
      const double hi = domain[d].hi;
      pts[idx][d] = k + 1 == grid[d] ? hi : lo + (hi - lo) * static_cast<double>(k) /
                                                     static_cast<double>(grid[d] - 1);
    }
  }
  return pts;
}

std::vector<ValueSample> gen_dataset(const SystemDef& sys, const std::vector<std::size_t>& grid,
                                     const IntegratorConfig& cfg, const BetaKind& b,
                                     unsigned threads) {
  const auto pts = lattice(sys.domain, grid);
  const ValueEstimator estimator(sys, cfg);
  std::vector<ValueSample> out(pts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < pts.size(); i = next++) {
      const auto est = estimator.estimate(pts[i]);
      ValueSample& s = out[i];
      s.x = pts[i];
      s.converged = est.converged;
      s.v_hat = est.converged ? est.v_hat : std::numeric_limits<double>::infinity();
      s.w_hat = beta_transform(s.v_hat, b);
      // tanh saturates to 1.0 in double precision near the value cap
      if (s.converged && s.w_hat >= 1.0) s.w_hat = std::nextafter(1.0, 0.0);
    }
  };
  unsigned nt = threads == 0 ? std::max(1U, std::thread::hardware_concurrency()) : threads;
  nt = static_cast<unsigned>(std::min<std::size_t>(nt, pts.size()));
  if (nt <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(worker);
  }
  return out;
}

}  // namespace zubov
