#include "zubov/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>

namespace zubov {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string smt_sum(const std::vector<std::string>& terms) {
  if (terms.empty()) return "0.0";
  if (terms.size() == 1) return terms[0];
  std::string s = "(+";
  for (const auto& t : terms) s += " " + t;
  return s + ")";
}

bool same_box(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) return false;
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (a[i].lo != b[i].lo || a[i].hi != b[i].hi) return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------

ScalarFn expr_fn(const Expr& e, std::string label) {
  ScalarFn fn;
  fn.label = label.empty() ? e.to_string() : std::move(label);
  fn.enclose = [e](const Box& B) -> std::optional<Interval> {
    try {
      return eval_interval(e, B);
    } catch (const DomainError&) {
      return std::nullopt;
    }
  };
  fn.eval = [e](std::span<const double> x) { return e.eval(x); };
  fn.smt = [e](SmtWriter& w) { return smt_term(e, w); };
  fn.contract = [e](Box& B) { return contract_nonpositive(e, B); };
  return fn;
}

ScalarFn quadratic_fn(const Eigen::MatrixXd& P, double c, std::string label) {
  const auto n = static_cast<std::size_t>(P.rows());
  ScalarFn fn;
  fn.label = label.empty() ? "x^T P x - c" : std::move(label);
  fn.enclose = [P, c, n](const Box& B) -> std::optional<Interval> {
    Interval acc(-c);
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      acc += Interval(P(ii, ii)) * sqr(B[i]);
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        acc += Interval(P(ii, jj) + P(jj, ii)) * (B[i] * B[j]);
      }
    }
    return acc;
  };
  fn.eval = [P, c, n](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        s += x[i] * P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * x[j];
    return s - c;
  };
  fn.smt = [P, c, n](SmtWriter& w) {
    std::vector<std::string> terms;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double p = P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (p == 0.0) continue;
        terms.push_back("(* " + smt_number(p) + " " + w.var(i) + " " + w.var(j) + ")");
      }
    return "(- " + smt_sum(terms) + " " + smt_number(c) + ")";
  };
  return fn;
}

ScalarFn affine_of(const ScalarFn& fn, double scale, double shift, std::string label) {
  ScalarFn out;
  out.label = std::move(label);
  out.enclose = [inner = fn.enclose, scale, shift](const Box& B) -> std::optional<Interval> {
    const auto v = inner(B);
    if (!v) return std::nullopt;
    return Interval(shift) + Interval(scale) * *v;
  };
  out.eval = [inner = fn.eval, scale, shift](std::span<const double> x) {
    return shift + scale * inner(x);
  };
  if (fn.smt)
    out.smt = [inner = fn.smt, scale, shift](SmtWriter& w) {
      return "(+ " + smt_number(shift) + " (* " + smt_number(scale) + " " + inner(w) + "))";
    };
  return out;
}

double matrix_norm_upper(const std::vector<std::vector<Interval>>& M) {
  const std::size_t rows = M.size();
  const std::size_t cols = rows ? M[0].size() : 0;
  if (rows == 1 && cols == 1) return M[0][0].mag();
  Interval s(0.0);
  for (const auto& row : M)
    for (const auto& m : row) s += sqr(m);
  if (rows == 2 && cols == 2) {
    // largest eigenvalue of M^T M: (s + sqrt(s^2 - 4 det^2)) / 2, which
    // grows with s and shrinks with det^2
    const Interval det = M[0][0] * M[1][1] - M[0][1] * M[1][0];
    const Interval S(s.hi);
    Interval disc = sqr(S) - Interval(4.0) * Interval(sqr(det).lo);
    disc.lo = std::max(disc.lo, 0.0);
    disc.hi = std::max(disc.hi, 0.0);
    const Interval lam = (S + sqrt(disc)) * Interval(0.5);
    return sqrt(lam).hi;
  }
  return sqrt(s).hi;
}

double matrix_norm(const Eigen::MatrixXd& M) {
  if (M.rows() == 1 && M.cols() == 1) return std::abs(M(0, 0));
  const double s = M.squaredNorm();
  if (M.rows() == 2 && M.cols() == 2) {
    const double det = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
    const double disc = std::max(s * s - 4.0 * det * det, 0.0);
    return std::sqrt(0.5 * (s + std::sqrt(disc)));
  }
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

namespace {

/// Network and system copies plus a one-box memo, shared by the value and
/// derivative functions of a condition (bnb asks for both on the same box).
/// Both enclosures are the intersection of the natural extension with the
/// centered form around the box center, which needs the interval Hessian
/// of W_N and the interval Jacobian of f.
struct NetState {
  Mlp net;
  SystemDef sys;
  std::vector<std::vector<Expr>> jac;

  Box box;
  bool valid = false;
  Interval value;
  std::optional<Interval> deriv;

  void evaluate(const Box& B) {
    if (valid && same_box(B, box)) return;
    box = B;
    valid = true;
    const std::size_t n = sys.dim;
    const auto jet = eval_net_jet_interval(net, B);

    const auto c = B.center();
    std::vector<Interval> cpt(c.begin(), c.end());
    const Box C{cpt};
    Interval wc;
    const auto gc = eval_net_grad_interval(net, C, &wc);
    std::vector<Interval> dx(n);
    for (std::size_t j = 0; j < n; ++j) dx[j] = B[j] - Interval(c[j]);

    Interval wcent = wc;
    for (std::size_t j = 0; j < n; ++j) wcent += jet.grad[j] * dx[j];
    value = intersect(jet.value, wcent);

    try {
      std::vector<Interval> fB(n), fc(n);
      for (std::size_t i = 0; i < n; ++i) {
        fB[i] = eval_interval(sys.field[i], B);
        fc[i] = eval_interval(sys.field[i], C);
      }
      Interval natural(0.0), dc(0.0);
      for (std::size_t i = 0; i < n; ++i) {
        natural += jet.grad[i] * fB[i];
        dc += gc[i] * fc[i];
      }
      Interval cent = dc;
      for (std::size_t j = 0; j < n; ++j) {
        Interval dj(0.0);
        for (std::size_t i = 0; i < n; ++i) {
          dj += jet.hess[i * n + j] * fB[i];
          dj += jet.grad[i] * eval_interval(jac[i][j], B);
        }
        cent += dj * dx[j];
      }
      deriv = intersect(natural, cent);
    } catch (const DomainError&) {
      deriv = std::nullopt;
    }
  }

  double point_deriv(std::span<const double> x) const {
    const auto g = net.input_grad(x);
    const auto f = sys.field.eval(x);
    double s = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) s += g[j] * f[j];
    return s;
  }

  /// Defines hidden units and the output; returns {W} followed by dW/dx_j.
  const std::vector<std::string>& smt_defs(SmtWriter& w) {
    const std::string key = "net:" + std::to_string(reinterpret_cast<std::uintptr_t>(this));
    auto it = w.memo().find(key);
    if (it != w.memo().end()) return it->second;

    const auto& sizes = net.layer_sizes();
    const std::size_t L = net.num_affine();
    std::vector<std::vector<std::string>> hidden;
    std::vector<std::string> a;
    for (std::size_t j = 0; j < sizes[0]; ++j) a.push_back(w.var(j));
    std::string out;
    for (std::size_t l = 0; l < L; ++l) {
      const auto W = net.weights(l);
      const auto b = net.bias(l);
      const std::size_t in = sizes[l];
      std::vector<std::string> next;
      for (std::size_t i = 0; i < sizes[l + 1]; ++i) {
        std::vector<std::string> terms{smt_number(b[i])};
        for (std::size_t j = 0; j < in; ++j)
          terms.push_back("(* " + smt_number(W[i * in + j]) + " " + a[j] + ")");
        const std::string affine = smt_sum(terms);
        if (l + 1 == L) {
          out = w.define("w_out", affine);
        } else {
          next.push_back(w.define("h" + std::to_string(l + 1) + "_" + std::to_string(i + 1),
                                  "(tanh " + affine + ")"));
        }
      }
      if (l + 1 < L) {
        hidden.push_back(next);
        a = next;
      }
    }

    std::vector<std::string> delta;
    for (double v : net.weights(L - 1)) delta.push_back(smt_number(v));
    for (std::size_t l = L - 1; l-- > 0;) {
      const std::size_t in = sizes[l];
      const auto W = net.weights(l);
      std::vector<std::string> g;
      for (std::size_t i = 0; i < sizes[l + 1]; ++i) {
        const auto& h = hidden[l][i];
        g.push_back(w.define("g" + std::to_string(l + 1) + "_" + std::to_string(i + 1),
                             "(* " + delta[i] + " (- 1.0 (* " + h + " " + h + ")))"));
      }
      std::vector<std::string> prev;
      for (std::size_t j = 0; j < in; ++j) {
        std::vector<std::string> terms;
        for (std::size_t i = 0; i < sizes[l + 1]; ++i)
          terms.push_back("(* " + smt_number(W[i * in + j]) + " " + g[i] + ")");
        prev.push_back(smt_sum(terms));
      }
      delta = prev;
    }
    std::vector<std::string> result{out};
    for (std::size_t j = 0; j < delta.size(); ++j)
      result.push_back(w.define("dw_dx" + std::to_string(j + 1), delta[j]));
    return w.memo()[key] = result;
  }
};

}  // namespace

NetFns net_fns(const Mlp& net, const SystemDef& sys) {
  if (net.input_dim() != sys.dim)
    throw std::invalid_argument("network input size does not match the system dimension");
  auto st = std::make_shared<NetState>();
  st->net = net;
  st->sys = sys;
  st->jac = sys.field.jacobian();
  NetFns fns;
  fns.value.label = "W_N(x)";
  fns.value.enclose = [st](const Box& B) -> std::optional<Interval> {
    st->evaluate(B);
    return st->value;
  };
  fns.value.eval = [st](std::span<const double> x) { return st->net.forward(x); };
  fns.value.smt = [st](SmtWriter& w) { return st->smt_defs(w)[0]; };

  fns.derivative.label = "grad W_N(x) . f(x)";
  fns.derivative.enclose = [st](const Box& B) {
    st->evaluate(B);
    return st->deriv;
  };
  fns.derivative.eval = [st](std::span<const double> x) { return st->point_deriv(x); };
  fns.derivative.smt = [st](SmtWriter& w) {
    const auto defs = st->smt_defs(w);
    std::vector<std::string> terms;
    for (std::size_t j = 0; j < st->sys.dim; ++j)
      terms.push_back("(* " + defs[j + 1] + " " + smt_term(st->sys.field[j], w) + ")");
    return smt_sum(terms);
  };
  return fns;
}

// ---------------------------------------------------------------------------

Condition local_condition(const SystemDef& sys, const Eigen::MatrixXd& P, double r, double c) {
  const auto n = sys.dim;
  if (static_cast<std::size_t>(P.rows()) != n || static_cast<std::size_t>(P.cols()) != n)
    throw std::invalid_argument("P has wrong dimension");
  const auto lin = linearize(sys);
  const auto dg = lin.dg;

  Condition cond;
  cond.label = "local: x^T P x <= c => 2 sup |P Dg(t x)| <= r";
  cond.antecedents.push_back(quadratic_fn(P, c, "x^T P x - c"));

  ScalarFn h;
  h.label = "2 sup_t |P Dg(t x)| - r";
  h.enclose = [dg, P, r, n](const Box& B) -> std::optional<Interval> {
    const Box H = B.hull_with_origin();
    std::vector<std::vector<Interval>> D(n, std::vector<Interval>(n));
    try {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) D[i][j] = eval_interval(dg[i][j], H);
    } catch (const DomainError&) {
      return std::nullopt;
    }
    std::vector<std::vector<Interval>> M(n, std::vector<Interval>(n, Interval(0.0)));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t k = 0; k < n; ++k)
          M[i][j] += Interval(P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k))) *
                     D[k][j];
    const double N = matrix_norm_upper(M);
    return Interval(2.0) * Interval(0.0, N) - Interval(r);
  };
  h.eval = [dg, P, r, n](std::span<const double> x) {
    constexpr int kSteps = 64;
    double best = 0.0;
    std::vector<double> tx(n);
    Eigen::MatrixXd D(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (int s = 0; s <= kSteps; ++s) {
      const double t = static_cast<double>(s) / kSteps;
      for (std::size_t i = 0; i < n; ++i) tx[i] = t * x[i];
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dg[i][j].eval(tx);
      best = std::max(best, matrix_norm(P * D));
    }
    return 2.0 * best - r;
  };
  cond.consequent = std::move(h);
  return cond;
}

LocalCertificate verify_local(const SystemDef& sys, const Eigen::MatrixXd& P,
                              const Eigen::MatrixXd& Q, double r, double c,
                              const BnbOptions& opts) {
  if (!(r > 0 && c > 0)) throw std::invalid_argument("r and c must be positive");
  const double lq = lambda_min(Q);
  if (!(r < lq))
    throw RNotBelowLambdaMin("r = " + std::to_string(r) + " is not below lambda_min(Q) = " +
                             std::to_string(lq));
  LocalCertificate cert;
  cert.P = P;
  cert.Q = Q;
  cert.r = r;
  cert.c = c;
  cert.outcome = bnb_verify(local_condition(sys, P, r, c), sys.domain, opts);
  return cert;
}

LocalCertificate find_max_local_c(const SystemDef& sys, const Eigen::MatrixXd& P,
                                  const Eigen::MatrixXd& Q, double r, const BnbOptions& opts,
                                  std::optional<double> c_lo) {
  double c_hi = 0.0;
  const auto n = static_cast<Eigen::Index>(sys.dim);
  for (const auto& corner : sys.domain.corners()) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = corner[static_cast<std::size_t>(i)];
    c_hi = std::max(c_hi, v.dot(P * v));
  }
  double lo = c_lo.value_or(c_hi / 1000.0);
  if (!(lo > 0 && lo <= c_hi)) throw std::invalid_argument("c_lo must lie in (0, c_hi]");

  auto best = verify_local(sys, P, Q, r, lo, opts);
  if (!best.certified())
    throw NoCertifiableC("local condition fails already at c = " + std::to_string(lo) + " (" +
                         to_string(best.outcome.kind) + ")");
  auto top = verify_local(sys, P, Q, r, c_hi, opts);
  if (top.certified()) return top;

  double hi = c_hi;
  for (int step = 0; step < 12; ++step) {
    const double mid = 0.5 * (lo + hi);
    auto cert = verify_local(sys, P, Q, r, mid, opts);
    if (cert.certified()) {
      lo = mid;
      best = std::move(cert);
    } else {
      hi = mid;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::vector<Box> box_faces(const Box& X) {
  std::vector<Box> faces;
  for (std::size_t i = 0; i < X.dim(); ++i) {
    for (double v : {X[i].lo, X[i].hi}) {
      Box f = X;
      f[i] = Interval(v);
      faces.push_back(std::move(f));
    }
  }
  return faces;
}

RoaConditions roa_conditions(const Mlp& net, const SystemDef& sys, const LocalCertificate& local,
                             double c1, double c2, double epsilon) {
  const auto fns = net_fns(net, sys);
  RoaConditions rc;

  rc.decrease.label = "decrease: c1 <= W_N <= c2 => dW_N/dt <= -epsilon";
  rc.decrease.antecedents.push_back(affine_of(fns.value, -1.0, c1, "c1 - W_N(x)"));
  rc.decrease.antecedents.push_back(affine_of(fns.value, 1.0, -c2, "W_N(x) - c2"));
  rc.decrease.consequent = affine_of(fns.derivative, 1.0, epsilon, "dW_N/dt + epsilon");

  rc.inner.label = "inner: W_N <= c1 => x^T P x <= c";
  rc.inner.antecedents.push_back(affine_of(fns.value, 1.0, -c1, "W_N(x) - c1"));
  rc.inner.consequent = quadratic_fn(local.P, local.c, "x^T P x - c");

  rc.faces = box_faces(sys.domain);
  for (std::size_t k = 0; k < rc.faces.size(); ++k) {
    Condition b;
    b.label = "boundary: W_N > c2 on face " + std::to_string(k + 1) + " " +
              rc.faces[k].to_string();
    b.consequent = affine_of(fns.value, -1.0, c2, "c2 - W_N(x)");
    b.strict = true;
    rc.boundary.push_back(std::move(b));
  }
  return rc;
}

namespace {

void check_roa_args(const LocalCertificate& local, double c1, double c2, double epsilon) {
  if (!local.certified()) throw std::invalid_argument("local certificate is not certified");
  if (!(0.0 < c1 && c1 < c2 && c2 < 1.0))
    throw std::invalid_argument("levels must satisfy 0 < c1 < c2 < 1");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
}

VerifyOutcome run_boundary(const RoaConditions& rc, const BnbOptions& opts) {
  VerifyOutcome total;
  for (std::size_t k = 0; k < rc.boundary.size(); ++k) {
    auto o = bnb_verify(rc.boundary[k], rc.faces[k], opts);
    o.boxes_explored += total.boxes_explored;
    o.wall_seconds += total.wall_seconds;
    if (!o.certified()) return o;
    total = o;
  }
  return total;
}

}  // namespace

RoaCertificate verify_roa(const Mlp& net, const SystemDef& sys, const LocalCertificate& local,
                          double c1, double c2, double epsilon, const BnbOptions& opts) {
  check_roa_args(local, c1, c2, epsilon);
  const auto start = std::chrono::steady_clock::now();
  const auto rc = roa_conditions(net, sys, local, c1, c2, epsilon);
  RoaCertificate cert;
  cert.c1 = c1;
  cert.c2 = c2;
  cert.epsilon = epsilon;
  cert.local = local;
  cert.boundary = run_boundary(rc, opts);
  cert.inner = bnb_verify(rc.inner, sys.domain, opts);
  cert.decrease = bnb_verify(rc.decrease, sys.domain, opts);
  if (!cert.decrease.certified())
    cert.failing = "decrease";
  else if (!cert.inner.certified())
    cert.failing = "inner";
  else if (!cert.boundary.certified())
    cert.failing = "boundary";
  cert.wall_seconds = seconds_since(start);
  return cert;
}

RoaCertificate find_max_level(const Mlp& net, const SystemDef& sys, const LocalCertificate& local,
                              double epsilon, const BnbOptions& opts) {
  if (!local.certified()) throw std::invalid_argument("local certificate is not certified");
  if (!(epsilon > 0)) throw std::invalid_argument("epsilon must be positive");
  const auto start = std::chrono::steady_clock::now();

  std::optional<VerifyOutcome> inner;
  double lo = 0.0, hi = 1.0;
  for (int step = 0; step < 10; ++step) {
    const double mid = 0.5 * (lo + hi);
    const auto rc = roa_conditions(net, sys, local, mid, std::nextafter(mid, 2.0), epsilon);
    auto o = bnb_verify(rc.inner, sys.domain, opts);
    if (o.certified()) {
      lo = mid;
      inner = std::move(o);
    } else {
      hi = mid;
    }
  }
  if (!inner) throw NoCertifiableLevel("no c1 on the bisection grid certifies W_N <= c1 => x^T P x <= c");
  const double c1 = lo;

  std::optional<VerifyOutcome> decrease, boundary;
  lo = c1;
  hi = 1.0;
  for (int step = 0; step < 10; ++step) {
    const double mid = 0.5 * (lo + hi);
    const auto rc = roa_conditions(net, sys, local, c1, mid, epsilon);
    auto b = run_boundary(rc, opts);
    bool ok = b.certified();
    VerifyOutcome d;
    if (ok) {
      d = bnb_verify(rc.decrease, sys.domain, opts);
      ok = d.certified();
    }
    if (ok) {
      lo = mid;
      decrease = std::move(d);
      boundary = std::move(b);
    } else {
      hi = mid;
    }
  }
  if (!decrease)
    throw NoCertifiableLevel("no c2 above c1 = " + std::to_string(c1) +
                             " certifies the decrease and boundary conditions");

  RoaCertificate cert;
  cert.c1 = c1;
  cert.c2 = lo;
  cert.epsilon = epsilon;
  cert.decrease = std::move(*decrease);
  cert.inner = std::move(*inner);
  cert.boundary = std::move(*boundary);
  cert.local = local;
  cert.wall_seconds = seconds_since(start);
  return cert;
}

double volume_fraction(const Mlp& net, double c2, const std::vector<ValueSample>& reference) {
  std::size_t conv = 0, inside = 0;
  for (const auto& s : reference) {
    if (!s.converged) continue;
    ++conv;
    if (net.forward(s.x) <= c2) ++inside;
  }
  if (conv == 0) throw EmptyReference("reference set has no converged samples");
  return 100.0 * static_cast<double>(inside) / static_cast<double>(conv);
}

TrajectoryCheck validate_trajectories(const Mlp& net, const SystemDef& sys,
                                      const LocalCertificate& local, double c2,
                                      std::size_t samples, std::uint64_t seed,
                                      const IntegratorConfig& cfg) {
  Xoshiro256 rng(seed);
  const auto q = quadratic_fn(local.P, local.c);
  TrajectoryCheck out;
  const std::size_t max_draws = std::max<std::size_t>(samples, 1) * 10000;
  std::vector<double> x(sys.dim);
  for (std::size_t draws = 0; out.samples < samples && draws < max_draws; ++draws) {
    for (std::size_t i = 0; i < sys.dim; ++i) x[i] = rng.uniform(sys.domain[i].lo, sys.domain[i].hi);
    if (!(net.forward(x) <= c2)) continue;
    ++out.samples;
    bool left = false;
    bool reached = false;
    try {
      integrate_until(sys, x, cfg.t_max, cfg, [&](double, const std::vector<double>& y) {
        if (!(net.forward(y) <= c2)) {
          left = true;
          return false;
        }
        if (q.eval(y) <= 0.0) {
          reached = true;
          return false;
        }
        return true;
      });
    } catch (const std::runtime_error&) {
      // blow-up or step collapse: counted as not reaching the ellipsoid
    }
    if (left) {
      ++out.left_level;
    } else if (!reached) {
      ++out.not_reached;
    }
    if (left || !reached) {
      ++out.violations;
      if (out.bad_points.size() < 10) out.bad_points.push_back(x);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string SmtWriter::define(const std::string& stem, const std::string& term) {
  const std::string name = stem + "_" + std::to_string(++counter_);
  defs_.push_back("(define-fun " + name + " () Real " + term + ")");
  return name;
}

std::string smt_number(double v) {
  if (!std::isfinite(v)) throw UnsupportedPrimitive("non-finite constant");
  if (v == 0.0) return "0.0";
  // every double has a finite decimal expansion; print it exactly
  std::vector<char> buf(1500);
  std::snprintf(buf.data(), buf.size(), "%.1074f", std::abs(v));
  std::string s(buf.data());
  while (s.back() == '0') s.pop_back();
  if (s.back() == '.') s.push_back('0');
  return v < 0 ? "(- " + s + ")" : s;
}

std::string smt_term(const Expr& e, SmtWriter& w) {
  switch (e.op()) {
    case Op::Constant:
      return smt_number(e.value());
    case Op::Var:
      if (e.index() >= w.dim()) throw IndexError("variable index outside the script dimension");
      return w.var(e.index());
    case Op::Add:
      return "(+ " + smt_term(e.child(0), w) + " " + smt_term(e.child(1), w) + ")";
    case Op::Sub:
      return "(- " + smt_term(e.child(0), w) + " " + smt_term(e.child(1), w) + ")";
    case Op::Mul:
      return "(* " + smt_term(e.child(0), w) + " " + smt_term(e.child(1), w) + ")";
    case Op::Div:
      return "(/ " + smt_term(e.child(0), w) + " " + smt_term(e.child(1), w) + ")";
    case Op::Neg:
      return "(- " + smt_term(e.child(0), w) + ")";
    case Op::IntPow: {
      const unsigned k = e.exponent();
      if (k == 0) return "1.0";
      const std::string base = smt_term(e.child(0), w);
      if (k == 1) return base;
      std::string s = "(*";
      for (unsigned i = 0; i < k; ++i) s += " " + base;
      return s + ")";
    }
    case Op::Tanh:
      return "(tanh " + smt_term(e.child(0), w) + ")";
    case Op::Exp:
      throw UnsupportedPrimitive("exp is not part of the exported SMT fragment");
    case Op::Ln:
      throw UnsupportedPrimitive("ln is not part of the exported SMT fragment");
  }
  throw UnsupportedPrimitive("unknown expression node");
}

std::string export_smt2(const Condition& cond, const Box& X, bool native_tanh) {
  SmtWriter w(X.dim(), native_tanh);
  auto term = [&](const ScalarFn& fn) {
    if (!fn.smt) throw UnsupportedPrimitive("'" + fn.label + "' has no SMT-LIB form");
    return fn.smt(w);
  };
  std::vector<std::string> ante;
  for (const auto& g : cond.antecedents) ante.push_back(term(g));
  const std::string h = term(cond.consequent);

  std::ostringstream os;
  os << "; " << cond.label << "\n";
  os << "(set-logic QF_NRA)\n";
  for (std::size_t i = 0; i < X.dim(); ++i) os << "(declare-fun " << w.var(i) << " () Real)\n";
  if (!native_tanh) os << "(declare-fun tanh (Real) Real)\n";
  for (const auto& d : w.definitions()) os << d << "\n";
  for (std::size_t i = 0; i < X.dim(); ++i)
    os << "(assert (and (<= " << smt_number(X[i].lo) << " " << w.var(i) << ") (<= " << w.var(i)
       << " " << smt_number(X[i].hi) << ")))\n";
  for (const auto& g : ante) os << "(assert (<= " << g << " 0.0))\n";
  os << "(assert (" << (cond.strict ? ">=" : ">") << " " << h << " 0.0))\n";
  os << "(check-sat)\n(exit)\n";
  return os.str();
}

}  // namespace zubov
