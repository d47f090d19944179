#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zubov/dynamics.hpp"

namespace zubov {

/// The state norm exceeded 1e6, or the step size collapsed while the state
/// was escaping (finite-time blow-up).
class BlowUp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepUnderflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IntegratorConfig {
  double rtol = 1e-6;
  double atol = 1e-8;
  double h_max = 0.1;
  double t_max = 500.0;
  double stop_radius = 1e-3;
  double value_cap = 200.0;

  void validate() const;
};

struct PathPoint {
  double t = 0.0;
  std::vector<double> x;
};

/// Adaptive Dormand-Prince 5(4) integration of x' = f(x) from x0 over
/// [0, t_end]. Returns every accepted step, starting with (0, x0).
std::vector<PathPoint> integrate(const SystemDef& sys, const std::vector<double>& x0,
                                 double t_end, const IntegratorConfig& cfg = {});

/// Like integrate, but hands each accepted step to `on_step` instead of
/// storing it. Returns true if `on_step` stopped the integration.
bool integrate_until(const SystemDef& sys, const std::vector<double>& x0, double t_end,
                     const IntegratorConfig& cfg,
                     const std::function<bool(double, const std::vector<double>&)>& on_step);

/// Zubov value V(x) = int_0^inf |phi(t,x)|^2 dt, or not converged.
struct ValueEstimate {
  double v_hat = std::numeric_limits<double>::infinity();
  bool converged = false;
  double t_final = 0.0;
};

/// Estimator for V over one system; caches the linearised P used for the
/// tail correction at the stopping radius.
class ValueEstimator {
 public:
  explicit ValueEstimator(SystemDef sys, IntegratorConfig cfg = {});

  ValueEstimate estimate(const std::vector<double>& x) const;

  /// Integral of |phi|^2 over [0, T] and the end state (no stopping rule).
  std::pair<double, std::vector<double>> running_value(const std::vector<double>& x,
                                                       double T) const;

  const SystemDef& system() const { return sys_; }
  const IntegratorConfig& config() const { return cfg_; }
  /// P with P A + A^T P = -I, if A is Hurwitz.
  const std::optional<Eigen::MatrixXd>& tail_matrix() const { return tail_P_; }

 private:
  SystemDef sys_;
  IntegratorConfig cfg_;
  std::optional<Eigen::MatrixXd> tail_P_;
};

ValueEstimate estimate_V(const SystemDef& sys, const std::vector<double>& x,
                         const IntegratorConfig& cfg = {});

enum class BetaForm { Exp, Tanh };

struct BetaKind {
  BetaForm form = BetaForm::Tanh;
  double alpha = 0.1;
};

std::string to_string(BetaForm form);
BetaForm beta_form_from_string(const std::string& s);

/// exp: 1 - exp(-alpha v); tanh: tanh(alpha v); v = +inf maps to 1.
double beta_transform(double v, const BetaKind& b);

struct ValueSample {
  std::vector<double> x;
  double v_hat = 0.0;  // +inf when not converged
  double w_hat = 0.0;
  bool converged = false;
};

/// Uniform lattice over sys.domain (endpoints included), row-major with the
/// last coordinate varying fastest. `threads` = 0 uses the hardware count.
std::vector<ValueSample> gen_dataset(const SystemDef& sys, const std::vector<std::size_t>& grid,
                                     const IntegratorConfig& cfg, const BetaKind& b,
                                     unsigned threads = 0);

/// Lattice points only, in gen_dataset order.
std::vector<std::vector<double>> lattice(const Box& domain, const std::vector<std::size_t>& grid);

}  // namespace zubov
