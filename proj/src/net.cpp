#include "zubov/net.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace zubov {

std::size_t dense_param_count(const std::vector<std::size_t>& layer_sizes) {
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    total += (layer_sizes[l] + 1) * layer_sizes[l + 1];
  return total;
}

Mlp::Mlp(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw std::invalid_argument("network needs an input and an output layer");
  if (sizes_.back() != 1) throw std::invalid_argument("network output must be scalar");
  for (auto s : sizes_)
    if (s == 0) throw std::invalid_argument("layer sizes must be positive");
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    offsets_.push_back(off);
    off += (sizes_[l] + 1) * sizes_[l + 1];
  }
  params_.assign(off, 0.0);
}

Mlp Mlp::glorot(std::vector<std::size_t> layer_sizes, Xoshiro256& rng) {
  Mlp net(std::move(layer_sizes));
  for (std::size_t l = 0; l < net.num_affine(); ++l) {
    const double fan_in = static_cast<double>(net.sizes_[l]);
    const double fan_out = static_cast<double>(net.sizes_[l + 1]);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& w : net.weights(l)) w = rng.uniform(-limit, limit);
  }
  return net;
}

std::size_t Mlp::bias_offset(std::size_t layer) const {
  return offsets_[layer] + sizes_[layer] * sizes_[layer + 1];
}

std::span<const double> Mlp::weights(std::size_t layer) const {
  return {params_.data() + offsets_[layer], sizes_[layer] * sizes_[layer + 1]};
}
std::span<const double> Mlp::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}
std::span<double> Mlp::weights(std::size_t layer) {
  return {params_.data() + offsets_[layer], sizes_[layer] * sizes_[layer + 1]};
}
std::span<double> Mlp::bias(std::size_t layer) {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

bool Mlp::all_finite() const {
  return std::all_of(params_.begin(), params_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

/// Forward pass with an optional tangent direction, followed by reverse
/// accumulation of parameter gradients through both the value and the
/// directional derivative.
class Pass {
 public:
  explicit Pass(const Mlp& net) : net_(net) {
    const auto& s = net.layer_sizes();
    const std::size_t L = net.num_affine();
    a_.resize(L);
    t_.resize(L);
    z_.resize(L);
    zt_.resize(L);
    abar_.resize(L);
    tbar_.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      a_[l].resize(s[l]);
      t_[l].resize(s[l]);
      abar_[l].resize(s[l]);
      tbar_[l].resize(s[l]);
      z_[l].resize(s[l + 1]);
      zt_[l].resize(s[l + 1]);
    }
    zbar_.resize(*std::max_element(s.begin(), s.end()));
    ztbar_.resize(zbar_.size());
  }

  /// Returns W_N(x); when `dir` is given also sets ydot = grad W_N(x) . dir.
  double forward(std::span<const double> x, const double* dir) {
    tangent_ = dir != nullptr;
    const auto& s = net_.layer_sizes();
    const std::size_t L = net_.num_affine();
    std::copy(x.begin(), x.end(), a_[0].begin());
    if (tangent_) std::copy(dir, dir + s[0], t_[0].begin());
    for (std::size_t l = 0; l < L; ++l) {
      const auto W = net_.weights(l);
      const auto b = net_.bias(l);
      const std::size_t in = s[l];
      const std::size_t out = s[l + 1];
      for (std::size_t i = 0; i < out; ++i) {
        double acc = b[i];
        double acct = 0.0;
        const double* row = W.data() + i * in;
        for (std::size_t j = 0; j < in; ++j) acc += row[j] * a_[l][j];
        if (tangent_)
          for (std::size_t j = 0; j < in; ++j) acct += row[j] * t_[l][j];
        z_[l][i] = acc;
        zt_[l][i] = acct;
      }
      if (l + 1 < L) {
        for (std::size_t i = 0; i < out; ++i) {
          const double h = std::tanh(z_[l][i]);
          a_[l + 1][i] = h;
          t_[l + 1][i] = tangent_ ? (1.0 - h * h) * zt_[l][i] : 0.0;
        }
      }
    }
    y_ = z_[L - 1][0];
    ydot_ = zt_[L - 1][0];
    return y_;
  }

  double y() const { return y_; }
  double ydot() const { return ydot_; }

  /// Adds ybar * dy/dtheta + ydotbar * dydot/dtheta to grad.
  void backward(double ybar, double ydotbar, std::span<double> grad) {
    const auto& s = net_.layer_sizes();
    const std::size_t L = net_.num_affine();
    const bool tan = tangent_ && ydotbar != 0.0;
    zbar_[0] = ybar;
    ztbar_[0] = tan ? ydotbar : 0.0;
    for (std::size_t l = L; l-- > 0;) {
      const std::size_t in = s[l];
      const std::size_t out = s[l + 1];
      const auto W = net_.weights(l);
      double* gW = grad.data() + net_.weight_offset(l);
      double* gb = grad.data() + net_.bias_offset(l);
      for (std::size_t i = 0; i < out; ++i) {
        const double zb = zbar_[i];
        const double ztb = ztbar_[i];
        gb[i] += zb;
        double* grow = gW + i * in;
        for (std::size_t j = 0; j < in; ++j) grow[j] += zb * a_[l][j];
        if (tan)
          for (std::size_t j = 0; j < in; ++j) grow[j] += ztb * t_[l][j];
      }
      if (l == 0) break;
      // back through the affine map
      auto& ab = abar_[l];
      auto& tb = tbar_[l];
      std::fill(ab.begin(), ab.end(), 0.0);
      std::fill(tb.begin(), tb.end(), 0.0);
      for (std::size_t i = 0; i < out; ++i) {
        const double* row = W.data() + i * in;
        const double zb = zbar_[i];
        const double ztb = ztbar_[i];
        for (std::size_t j = 0; j < in; ++j) ab[j] += row[j] * zb;
        if (tan)
          for (std::size_t j = 0; j < in; ++j) tb[j] += row[j] * ztb;
      }
      // back through a = tanh(z), t = (1 - a^2) zt
      for (std::size_t j = 0; j < in; ++j) {
        const double h = a_[l][j];
        const double sp = 1.0 - h * h;
        double abar = ab[j];
        if (tan) {
          ztbar_[j] = sp * tb[j];
          abar += tb[j] * zt_[l - 1][j] * (-2.0 * h);
        } else {
          ztbar_[j] = 0.0;
        }
        zbar_[j] = abar * sp;
      }
    }
  }

 private:
  const Mlp& net_;
  bool tangent_ = false;
  double y_ = 0.0;
  double ydot_ = 0.0;
  std::vector<std::vector<double>> a_, t_, z_, zt_, abar_, tbar_;
  std::vector<double> zbar_, ztbar_;
};

}  // namespace

double Mlp::forward(std::span<const double> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("input has wrong dimension");
  const std::size_t L = num_affine();
  std::vector<double> a(x.begin(), x.end());
  std::vector<double> next;
  for (std::size_t l = 0; l < L; ++l) {
    const auto W = weights(l);
    const auto b = bias(l);
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    next.assign(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < in; ++j) acc += W[i * in + j] * a[j];
      next[i] = l + 1 < L ? std::tanh(acc) : acc;
    }
    a.swap(next);
  }
  return a[0];
}

std::vector<double> Mlp::input_grad(std::span<const double> x) const {
  if (x.size() != input_dim()) throw std::invalid_argument("input has wrong dimension");
  const std::size_t L = num_affine();
  // forward, keeping activations
  std::vector<std::vector<double>> acts(L);
  acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const auto W = weights(l);
    const auto b = bias(l);
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    acts[l + 1].assign(out, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      double acc = b[i];
      for (std::size_t j = 0; j < in; ++j) acc += W[i * in + j] * acts[l][j];
      acts[l + 1][i] = std::tanh(acc);
    }
  }
  // reverse
  std::vector<double> delta(weights(L - 1).begin(), weights(L - 1).end());
  for (std::size_t l = L - 1; l-- > 0;) {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const auto W = weights(l);
    std::vector<double> prev(in, 0.0);
    for (std::size_t i = 0; i < out; ++i) {
      const double h = acts[l + 1][i];
      const double d = delta[i] * (1.0 - h * h);
      for (std::size_t j = 0; j < in; ++j) prev[j] += W[i * in + j] * d;
    }
    delta.swap(prev);
  }
  return delta;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(alpha > 0)) throw std::invalid_argument("alpha must be positive");
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(lambda_r >= 0 && lambda_b >= 0 && lambda_d >= 0))
    throw std::invalid_argument("loss weights must be non-negative");
  if (!(loss_threshold >= 0)) throw std::invalid_argument("loss_threshold must be >= 0");
}

Dataset assemble_dataset(const std::vector<ValueSample>& samples, const DatasetOptions& opts,
                         const BetaKind& beta, std::uint64_t seed) {
  if (!(opts.data_fraction >= 0.0 && opts.data_fraction <= 1.0))
    throw std::invalid_argument("data_fraction must be in [0, 1]");
  Dataset d;
  if (opts.collocate_on_samples)
    for (const auto& s : samples) d.collocation.push_back(s.x);

  std::vector<std::size_t> chosen;
  if (opts.all_pairs) {
    chosen.resize(samples.size());
    std::iota(chosen.begin(), chosen.end(), 0);
  } else if (opts.data_fraction > 0.0) {
    const auto k = static_cast<std::size_t>(
        std::llround(opts.data_fraction * static_cast<double>(samples.size())));
    std::vector<std::size_t> perm(samples.size());
    std::iota(perm.begin(), perm.end(), 0);
    Xoshiro256 rng(seed ^ 0x5eedda7aULL);
    rng.shuffle(perm);
    chosen.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(std::min(k, perm.size())));
    std::sort(chosen.begin(), chosen.end());
  }
  for (std::size_t i : chosen) {
    const auto& s = samples[i];
    if (s.converged) {
      const double expect = beta_transform(s.v_hat, beta);
      if (std::abs(expect - s.w_hat) > 1e-12)
        throw std::invalid_argument(
            "data targets were generated with a different beta transform than training uses");
    } else if (s.w_hat != 1.0) {
      throw std::invalid_argument("non-converged sample must carry w_hat = 1");
    }
    d.pair_x.push_back(s.x);
    d.pair_w.push_back(s.w_hat);
  }

  if (opts.exterior == ExteriorSource::All) {
    for (const auto& s : samples)
      if (!s.converged) d.exterior.push_back(s.x);
  } else if (opts.exterior == ExteriorSource::Pairs) {
    for (std::size_t i : chosen)
      if (!samples[i].converged) d.exterior.push_back(samples[i].x);
  }
  return d;
}

// ---------------------------------------------------------------------------

ZubovLoss::ZubovLoss(const SystemDef& sys, const TrainConfig& cfg, std::optional<LocalBand> band)
    : sys_(sys), cfg_(cfg), band_(std::move(band)) {
  cfg_.validate();
  if (band_) {
    if (static_cast<std::size_t>(band_->P.rows()) != sys_.dim)
      throw std::invalid_argument("band matrix has wrong dimension");
    c1_ = cfg_.c1_local.value_or(lambda_min(band_->P));
    c2_ = cfg_.c2_local.value_or(lambda_max(band_->P));
  }
}

namespace {

double sq_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double quad_form(const Eigen::MatrixXd& P, std::span<const double> x) {
  double s = 0.0;
  const auto n = static_cast<Eigen::Index>(x.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      s += x[static_cast<std::size_t>(i)] * P(i, j) * x[static_cast<std::size_t>(j)];
  return s;
}

struct IndexSets {
  std::span<const std::size_t> colloc, exterior, pairs;
};

}  // namespace

namespace {

double psi_term(const TrainConfig& cfg, double phi, double w) {
  return cfg.psi_form == BetaForm::Exp ? cfg.alpha * phi * (1.0 - w)
                                       : cfg.alpha * phi * (1.0 - w * w);
}

}  // namespace

double ZubovLoss::residual(const Mlp& net, std::span<const double> x) const {
  Pass pass(net);
  const auto f = sys_.field.eval(x);
  pass.forward(x, f.data());
  return pass.ydot() + psi_term(cfg_, sq_norm(x), pass.y());
}

double zubov_residual(const SystemDef& sys, const TrainConfig& cfg, std::span<const double> x,
                      double w, std::span<const double> grad_w) {
  if (x.size() != sys.dim || grad_w.size() != sys.dim)
    throw std::invalid_argument("point has wrong dimension");
  const auto f = sys.field.eval(x);
  double wdot = 0.0;
  for (std::size_t i = 0; i < sys.dim; ++i) wdot += grad_w[i] * f[i];
  return wdot + psi_term(cfg, sq_norm(x), w);
}

namespace {

LossBreakdown run_loss(const Mlp& net, const Dataset& data, const ZubovLoss& ctx,
                       const IndexSets& idx, std::span<double> grad) {
  const auto& cfg = ctx.config();
  const auto& sys = ctx.system();
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  if (idx.colloc.empty()) throw std::invalid_argument("collocation set must be non-empty");

  Pass pass(net);
  std::vector<double> f(sys.dim);
  LossBreakdown out;

  // residual term
  const double inv_c = 1.0 / static_cast<double>(idx.colloc.size());
  for (std::size_t k : idx.colloc) {
    const auto& x = data.collocation[k];
    sys.field.eval(x, f);
    pass.forward(x, f.data());
    const double phi = sq_norm(x);
    const double y = pass.y();
    double r;
    double dr_dy;
    if (cfg.psi_form == BetaForm::Exp) {
      r = pass.ydot() + cfg.alpha * phi * (1.0 - y);
      dr_dy = -cfg.alpha * phi;
    } else {
      r = pass.ydot() + cfg.alpha * phi * (1.0 - y * y);
      dr_dy = -2.0 * cfg.alpha * phi * y;
    }
    out.residual += r * r * inv_c;
    if (want_grad && cfg.lambda_r != 0.0) {
      const double rb = cfg.lambda_r * 2.0 * r * inv_c;
      pass.backward(rb * dr_dy, rb, grad);
    }
  }

  // boundary: exterior points -> 1
  if (!idx.exterior.empty()) {
    const double inv_e = 1.0 / static_cast<double>(idx.exterior.size());
    for (std::size_t k : idx.exterior) {
      const double y = pass.forward(data.exterior[k], nullptr);
      out.boundary += (y - 1.0) * (y - 1.0) * inv_e;
      if (want_grad && cfg.lambda_b != 0.0)
        pass.backward(cfg.lambda_b * 2.0 * (y - 1.0) * inv_e, 0.0, grad);
    }
  }
  // boundary: W(0) = 0
  {
    const std::vector<double> origin(sys.dim, 0.0);
    const double y0 = pass.forward(origin, nullptr);
    out.boundary += y0 * y0;
    if (want_grad && cfg.lambda_b != 0.0) pass.backward(cfg.lambda_b * 2.0 * y0, 0.0, grad);
  }
  // boundary: local band beta(c1|x|^2) <= W <= beta(c2|x|^2) inside x^T P x <= c
  if (cfg.use_local_band && ctx.band()) {
    const auto& band = *ctx.band();
    const BetaKind beta = cfg.beta();
    std::vector<std::size_t> inside;
    for (std::size_t k : idx.colloc)
      if (quad_form(band.P, data.collocation[k]) <= band.c) inside.push_back(k);
    if (!inside.empty()) {
      const double inv_b = 1.0 / static_cast<double>(inside.size());
      for (std::size_t k : inside) {
        const auto& x = data.collocation[k];
        const double r2 = sq_norm(x);
        const double lower = beta_transform(ctx.band_c1() * r2, beta);
        const double upper = beta_transform(ctx.band_c2() * r2, beta);
        const double y = pass.forward(x, nullptr);
        const double below = std::max(lower - y, 0.0);
        const double above = std::max(y - upper, 0.0);
        out.boundary += (below * below + above * above) * inv_b;
        if (want_grad && cfg.lambda_b != 0.0 && (below > 0.0 || above > 0.0))
          pass.backward(cfg.lambda_b * inv_b * (-2.0 * below + 2.0 * above), 0.0, grad);
      }
    }
  }

  // data pairs
  if (!idx.pairs.empty()) {
    const double inv_d = 1.0 / static_cast<double>(idx.pairs.size());
    for (std::size_t k : idx.pairs) {
      const double y = pass.forward(data.pair_x[k], nullptr);
      const double e = y - data.pair_w[k];
      out.data += e * e * inv_d;
      if (want_grad && cfg.lambda_d != 0.0) pass.backward(cfg.lambda_d * 2.0 * e * inv_d, 0.0, grad);
    }
  }

  out.total = cfg.lambda_r * out.residual + cfg.lambda_b * out.boundary + cfg.lambda_d * out.data;
  return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

LossBreakdown ZubovLoss::evaluate(const Mlp& net, const Dataset& data) const {
  const auto c = iota_n(data.collocation.size());
  const auto e = iota_n(data.exterior.size());
  const auto p = iota_n(data.pair_x.size());
  return run_loss(net, data, *this, {c, e, p}, {});
}

LossBreakdown ZubovLoss::gradient(const Mlp& net, const Dataset& data,
                                  std::span<double> grad) const {
  const auto c = iota_n(data.collocation.size());
  const auto e = iota_n(data.exterior.size());
  const auto p = iota_n(data.pair_x.size());
  return run_loss(net, data, *this, {c, e, p}, grad);
}

LossBreakdown ZubovLoss::batch_gradient(const Mlp& net, const Dataset& data,
                                        std::span<const std::size_t> colloc_idx,
                                        std::span<const std::size_t> exterior_idx,
                                        std::span<const std::size_t> pair_idx,
                                        std::span<double> grad) const {
  return run_loss(net, data, *this, {colloc_idx, exterior_idx, pair_idx}, grad);
}

// ---------------------------------------------------------------------------

namespace {

/// Endless reshuffled stream of indices into a set.
class Cycler {
 public:
  Cycler(std::size_t n, Xoshiro256& rng) : perm_(iota_n(n)), cursor_(n), rng_(rng) {}

  void take(std::size_t k, std::vector<std::size_t>& out) {
    out.clear();
    if (perm_.empty()) return;
    for (std::size_t i = 0; i < k; ++i) {
      if (cursor_ == perm_.size()) {
        rng_.shuffle(perm_);
        cursor_ = 0;
      }
      out.push_back(perm_[cursor_++]);
    }
  }

 private:
  std::vector<std::size_t> perm_;
  std::size_t cursor_;
  Xoshiro256& rng_;
};

}  // namespace

TrainRecord train(Mlp& net, const Dataset& data, const ZubovLoss& loss) {
  const auto& cfg = loss.config();
  const auto start = std::chrono::steady_clock::now();
  TrainRecord rec;
  rec.stop_reason = "max_epochs";
  if (data.collocation.empty()) throw std::invalid_argument("collocation set must be non-empty");
  if (net.input_dim() != loss.system().dim)
    throw std::invalid_argument("network input size does not match the system dimension");

  Xoshiro256 rng(cfg.seed);
  const std::size_t P = net.param_count();
  std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double b1t = 1.0, b2t = 1.0;

  std::vector<std::size_t> perm = iota_n(data.collocation.size());
  Cycler ext(data.exterior.size(), rng);
  Cycler pairs(data.pair_x.size(), rng);
  const std::size_t ext_k = std::min(cfg.batch, data.exterior.size());
  const std::size_t pair_k = std::min(cfg.batch, data.pair_x.size());
  std::vector<std::size_t> ext_idx, pair_idx;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(perm);
    LossBreakdown sum;
    std::size_t steps = 0;
    for (std::size_t s = 0; s < perm.size(); s += cfg.batch) {
      const std::size_t e = std::min(perm.size(), s + cfg.batch);
      const std::span<const std::size_t> batch(perm.data() + s, e - s);
      ext.take(ext_k, ext_idx);
      pairs.take(pair_k, pair_idx);
      const auto lb = loss.batch_gradient(net, data, batch, ext_idx, pair_idx, grad);
      if (!std::isfinite(lb.total)) throw DivergedLoss("training loss became non-finite");
      sum.total += lb.total;
      sum.residual += lb.residual;
      sum.boundary += lb.boundary;
      sum.data += lb.data;
      ++steps;

      b1t *= beta1;
      b2t *= beta2;
      auto theta = net.params();
      for (std::size_t i = 0; i < P; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mh = m[i] / (1.0 - b1t);
        const double vh = v[i] / (1.0 - b2t);
        theta[i] -= cfg.lr * mh / (std::sqrt(vh) + eps);
      }
    }
    const double inv = 1.0 / static_cast<double>(steps);
    EpochLoss el;
    el.epoch = epoch + 1;
    el.loss = {sum.total * inv, sum.residual * inv, sum.boundary * inv, sum.data * inv};
    rec.epochs.push_back(el);
    rec.epochs_run = epoch + 1;
    if (!net.all_finite()) throw DivergedLoss("network parameters became non-finite");
    if (el.loss.total < cfg.loss_threshold) {
      rec.stop_reason = "loss_threshold";
      break;
    }
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace zubov
