#include "zubov/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace zubov {

void SystemDef::validate() const {
  if (dim == 0 || field.dim() != dim) throw std::invalid_argument("system dimension mismatch");
  if (domain.dim() != dim) throw std::invalid_argument("domain dimension mismatch");
  if (equilibrium.size() != dim) throw std::invalid_argument("equilibrium dimension mismatch");
  for (double e : equilibrium)
    if (e != 0.0) throw std::invalid_argument("only the origin is supported as equilibrium");
  const auto f0 = field.eval(equilibrium);
  for (double v : f0)
    if (!(std::abs(v) <= 1e-12)) throw std::invalid_argument("f(equilibrium) != 0 for " + name);
  for (std::size_t i = 0; i < dim; ++i)
    if (!(domain[i].lo < 0.0 && 0.0 < domain[i].hi))
      throw std::invalid_argument("equilibrium not interior to the domain of " + name);
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"cubic1d", "reversed_vdp", "poly2d"};
  return names;
}

SystemDef make_system(const std::string& name, const std::vector<std::string>& components,
                      const std::vector<std::pair<double, double>>& domain) {
  SystemDef sys;
  sys.name = name;
  sys.dim = components.size();
  sys.field = parse_field(components);
  sys.equilibrium.assign(sys.dim, 0.0);
  if (domain.size() != sys.dim) throw std::invalid_argument("domain must have one range per coordinate");
  std::vector<Interval> dims;
  for (const auto& [lo, hi] : domain) dims.emplace_back(lo, hi);
  sys.domain = Box(std::move(dims));
  sys.validate();
  return sys;
}

SystemDef builtin(const std::string& name) {
  if (name == "cubic1d") {
    // D(A) = (-1, 1); the domain stays strictly inside it.
    auto sys = make_system(name, {"-x1 + x1^3"}, {{-0.95, 0.95}});
    sys.notes = "scalar system with equilibria {0, +-1}; domain of attraction (-1, 1)";
    return sys;
  }
  if (name == "reversed_vdp") {
    auto sys = make_system(name, {"-x2", "x1 - (1 - x1^2)*x2"}, {{-2.5, 2.5}, {-3.5, 3.5}});
    sys.notes = "reversed Van der Pol oscillator; domain of attraction bounded by a periodic orbit";
    return sys;
  }
  if (name == "poly2d") {
    auto sys = make_system(name, {"x2", "-2*x1 + (1/3)*x1^3 - x2"}, {{-6.0, 6.0}, {-6.0, 6.0}});
    sys.notes = "polynomial system with saddles at (+-sqrt(6), 0); unbounded domain of attraction";
    return sys;
  }
  throw UnknownSystem("unknown system '" + name + "'");
}

Linearization linearize(const SystemDef& sys) {
  const std::size_t n = sys.dim;
  const auto jac = sys.field.jacobian();
  const std::vector<double> origin(n, 0.0);
  Linearization lin;
  lin.A.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      lin.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = jac[i][j].eval(origin);

  std::vector<Expr> g;
  lin.dg.assign(n, std::vector<Expr>(n));
  for (std::size_t i = 0; i < n; ++i) {
    Expr ax = Expr::constant(0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = lin.A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      ax = ax + Expr::constant(a) * Expr::var(j);
      lin.dg[i][j] = jac[i][j] - Expr::constant(a);
    }
    g.push_back(sys.field[i] - ax);
  }
  lin.g = VectorField(n, std::move(g));
  return lin;
}

LyapunovSolution solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n)
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");

  // vec(P A + A^T P) = (A^T (x) I + I (x) A^T) vec(P), column-major vec.
  const Eigen::Index m = n * n;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(m, m);
  const Eigen::MatrixXd At = A.transpose();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      // block (i, j) of A^T (x) I is At(i, j) * I
      for (Eigen::Index k = 0; k < n; ++k) K(i * n + k, j * n + k) += At(i, j);
    }
    // diagonal block (i, i) of I (x) A^T is A^T
    K.block(i * n, i * n, n, n) += At;
  }
  Eigen::VectorXd rhs(m);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) rhs(j * n + i) = -Q(i, j);

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
  if (!(lu.rcond() > 1e-13))
    throw SingularSystem("Lyapunov operator is singular: A has eigenvalues summing to zero");
  const Eigen::VectorXd vecP = lu.solve(rhs);

  LyapunovSolution sol;
  sol.P.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) sol.P(i, j) = vecP(j * n + i);
  sol.P = 0.5 * (sol.P + sol.P.transpose()).eval();
  sol.residual = (sol.P * A + A.transpose() * sol.P + Q).cwiseAbs().maxCoeff();
  Eigen::LLT<Eigen::MatrixXd> llt(sol.P);
  sol.positive_definite = llt.info() == Eigen::Success;
  return sol;
}

std::vector<double> symmetric_eigenvalues(const Eigen::MatrixXd& S) {
  const Eigen::Index n = S.rows();
  if (S.cols() != n) throw std::invalid_argument("matrix must be square");
  Eigen::MatrixXd a = 0.5 * (S + S.transpose());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(1.0, a.squaredNorm())) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) ev[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

double lambda_min(const Eigen::MatrixXd& S) { return symmetric_eigenvalues(S).front(); }
double lambda_max(const Eigen::MatrixXd& S) { return symmetric_eigenvalues(S).back(); }

}  // namespace zubov
