#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zubov/bnb.hpp"
#include "zubov/dynamics.hpp"
#include "zubov/net.hpp"
#include "zubov/ode.hpp"

namespace zubov {

class RNotBelowLambdaMin : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class NoCertifiableC : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class NoCertifiableLevel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyReference : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};
class UnsupportedPrimitive : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Building blocks for conditions

/// e(x) as a constraint function.
ScalarFn expr_fn(const Expr& e, std::string label = {});

/// x^T P x - c.
ScalarFn quadratic_fn(const Eigen::MatrixXd& P, double c, std::string label = {});

/// Sound upper bound on the 2-norm of an interval matrix: exact closed form
/// for 1x1 and 2x2 (largest singular value), Frobenius norm otherwise.
double matrix_norm_upper(const std::vector<std::vector<Interval>>& M);

/// Largest singular value of a point matrix (same norm choice as above).
double matrix_norm(const Eigen::MatrixXd& M);

/// Shares one network evaluation between the functions of a condition.
struct NetFns {
  ScalarFn value;       // W_N(x)
  ScalarFn derivative;  // grad W_N(x) . f(x)
};
NetFns net_fns(const Mlp& net, const SystemDef& sys);

/// shift + scale * fn(x)
ScalarFn affine_of(const ScalarFn& fn, double scale, double shift, std::string label);

// ---------------------------------------------------------------------------
// Local stability around the origin

struct LocalCertificate {
  Eigen::MatrixXd P;
  Eigen::MatrixXd Q;
  double r = 0.0;
  double c = 0.0;
  VerifyOutcome outcome;

  bool certified() const { return outcome.certified(); }
};

/// x^T P x <= c  =>  2 sup_{0<=t<=1} |P Dg(t x)| <= r  over sys.domain.
/// Point evaluation of the consequent samples t on a grid, so it never
/// exceeds the true supremum.
Condition local_condition(const SystemDef& sys, const Eigen::MatrixXd& P, double r, double c);

/// Throws RNotBelowLambdaMin unless r < lambda_min(Q).
LocalCertificate verify_local(const SystemDef& sys, const Eigen::MatrixXd& P,
                              const Eigen::MatrixXd& Q, double r, double c,
                              const BnbOptions& opts = {});

/// Largest certifiable c on a 12-step bisection grid in [c_lo, c_hi], where
/// c_hi is the largest corner value of x^T P x on the domain. c_lo defaults
/// to c_hi / 1000. Throws NoCertifiableC when c_lo itself fails.
LocalCertificate find_max_local_c(const SystemDef& sys, const Eigen::MatrixXd& P,
                                  const Eigen::MatrixXd& Q, double r,
                                  const BnbOptions& opts = {},
                                  std::optional<double> c_lo = {});

// ---------------------------------------------------------------------------
// Region of attraction from the network

struct RoaConditions {
  Condition decrease;               // c1 <= W <= c2  =>  dW/dt <= -eps
  Condition inner;                  // W <= c1  =>  x^T P x <= c
  std::vector<Condition> boundary;  // W > c2 on each face
  std::vector<Box> faces;
};

RoaConditions roa_conditions(const Mlp& net, const SystemDef& sys, const LocalCertificate& local,
                             double c1, double c2, double epsilon);

/// The 2n faces of a box as degenerate boxes: lower then upper face per axis.
std::vector<Box> box_faces(const Box& X);

struct RoaCertificate {
  double c1 = 0.0;
  double c2 = 0.0;
  double epsilon = 0.0;
  VerifyOutcome decrease;
  VerifyOutcome inner;
  VerifyOutcome boundary;  // first non-certified face, or the combined success
  LocalCertificate local;
  /// Label of the first failing condition, empty when certified.
  std::string failing;
  double wall_seconds = 0.0;

  bool certified() const {
    return decrease.certified() && inner.certified() && boundary.certified() && c2 > c1 &&
           c1 > 0.0;
  }
};

RoaCertificate verify_roa(const Mlp& net, const SystemDef& sys, const LocalCertificate& local,
                          double c1, double c2, double epsilon, const BnbOptions& opts = {});

/// c1 from a 10-step bisection on (0, 1) using the inner condition, then c2
/// from a 10-step bisection on (c1, 1) using the decrease and boundary
/// conditions. Throws NoCertifiableLevel when either search finds nothing.
RoaCertificate find_max_level(const Mlp& net, const SystemDef& sys,
                              const LocalCertificate& local, double epsilon,
                              const BnbOptions& opts = {});

/// 100 * #{converged and W_N <= c2} / #{converged}. Throws EmptyReference
/// when no sample converged.
double volume_fraction(const Mlp& net, double c2, const std::vector<ValueSample>& reference);

struct TrajectoryCheck {
  std::size_t samples = 0;
  std::size_t violations = 0;   // left {W_N <= c2} or never reached the ellipsoid
  std::size_t left_level = 0;
  std::size_t not_reached = 0;
  std::vector<std::vector<double>> bad_points;
};

/// Draws `samples` uniform points of the domain with W_N <= c2 (rejection
/// sampling) and integrates each until it enters x^T P x <= c.
TrajectoryCheck validate_trajectories(const Mlp& net, const SystemDef& sys,
                                      const LocalCertificate& local, double c2,
                                      std::size_t samples, std::uint64_t seed,
                                      const IntegratorConfig& cfg = {});

// ---------------------------------------------------------------------------
// SMT-LIB export

/// Collects definitions while a condition is rendered as SMT-LIB terms.
class SmtWriter {
 public:
  explicit SmtWriter(std::size_t dim, bool native_tanh = true)
      : dim_(dim), native_tanh_(native_tanh) {}

  std::size_t dim() const { return dim_; }
  bool native_tanh() const { return native_tanh_; }
  std::string var(std::size_t i) const { return "x" + std::to_string(i + 1); }

  /// Adds (define-fun name () Real term) and returns the name.
  std::string define(const std::string& stem, const std::string& term);

  /// Memo of names for shared sub-terms (e.g. network hidden units).
  std::map<std::string, std::vector<std::string>>& memo() { return memo_; }

  const std::vector<std::string>& definitions() const { return defs_; }

 private:
  std::size_t dim_;
  bool native_tanh_;
  std::size_t counter_ = 0;
  std::vector<std::string> defs_;
  std::map<std::string, std::vector<std::string>> memo_;
};

/// Exact decimal SMT-LIB literal for a double.
std::string smt_number(double v);

/// SMT-LIB term for an expression; throws UnsupportedPrimitive for exp/ln.
std::string smt_term(const Expr& e, SmtWriter& w);

/// Script asserting the box bounds, every antecedent and the negated
/// consequent, followed by (check-sat). unsat means the condition holds.
/// With native_tanh = false, tanh is declared as an uninterpreted function.
std::string export_smt2(const Condition& cond, const Box& X, bool native_tanh = true);

}  // namespace zubov
