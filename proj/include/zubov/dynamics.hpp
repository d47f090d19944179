#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zubov/expr.hpp"
#include "zubov/interval.hpp"

namespace zubov {

class UnknownSystem : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The Kronecker system of the Lyapunov equation is numerically singular.
class SingularSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An autonomous ODE x' = f(x) with a stable equilibrium at the origin and
/// a compact box X on which training and verification take place.
struct SystemDef {
  std::string name;
  std::size_t dim = 0;
  VectorField field;
  std::vector<double> equilibrium;
  Box domain;
  std::string notes;

  /// Checks f(0) = 0 (to 1e-12) and that the origin is interior to X.
  void validate() const;
};

/// Names accepted by builtin().
const std::vector<std::string>& builtin_names();

/// cubic1d, reversed_vdp or poly2d. Throws UnknownSystem otherwise.
SystemDef builtin(const std::string& name);

/// Builds and validates a system from expression strings.
SystemDef make_system(const std::string& name, const std::vector<std::string>& components,
                      const std::vector<std::pair<double, double>>& domain);

/// f(x) = A x + g(x) split at the origin.
struct Linearization {
  Eigen::MatrixXd A;
  /// g = f - A x.
  VectorField g;
  /// Dg[i][j] = d f_i/d x_j - A_ij, so Dg(0) = 0.
  std::vector<std::vector<Expr>> dg;
};

Linearization linearize(const SystemDef& sys);

struct LyapunovSolution {
  Eigen::MatrixXd P;
  /// Cholesky of P succeeded, which certifies that A is Hurwitz.
  bool positive_definite = false;
  /// max-norm of P A + A^T P + Q.
  double residual = 0.0;
};

/// Solves P A + A^T P = -Q through the vectorised n^2 x n^2 system with
/// partial-pivot LU. Throws SingularSystem when A has eigenvalues summing
/// to zero (to working precision).
LyapunovSolution solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
std::vector<double> symmetric_eigenvalues(const Eigen::MatrixXd& S);
double lambda_min(const Eigen::MatrixXd& S);
double lambda_max(const Eigen::MatrixXd& S);

}  // namespace zubov
