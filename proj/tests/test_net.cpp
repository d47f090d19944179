#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "test_util.hpp"
#include "zubov/net.hpp"

using namespace zubov;
using zubov::testutil::random_net;
using zubov::testutil::random_point;
using zubov::testutil::reference_forward;

namespace {

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// One hidden tanh unit reading x1 with unit output weight: W(x) = tanh(x1).
Mlp tanh_x1_net() {
  Mlp net({2, 1, 1});
  net.weights(0)[0] = 1.0;
  net.weights(1)[0] = 1.0;
  return net;
}

Dataset small_dataset(Xoshiro256& rng, const SystemDef& sys) {
  Dataset d;
  const auto& X = sys.domain;
  auto pt = [&] {
    std::vector<double> x(sys.dim);
    for (std::size_t i = 0; i < sys.dim; ++i) x[i] = rng.uniform(X[i].lo, X[i].hi);
    return x;
  };
  for (int k = 0; k < 12; ++k) d.collocation.push_back(pt());
  // a few points close to the origin so the band term is active
  for (int k = 0; k < 6; ++k) {
    auto x = pt();
    for (auto& v : x) v *= 0.1;
    d.collocation.push_back(x);
  }
  for (int k = 0; k < 5; ++k) d.exterior.push_back(pt());
  for (int k = 0; k < 5; ++k) {
    d.pair_x.push_back(pt());
    d.pair_w.push_back(rng.uniform());
  }
  return d;
}

}  // namespace

TEST(Mlp, ParameterCount) {
  EXPECT_EQ(dense_param_count({2, 10, 10, 1}), 151u);
  EXPECT_EQ(dense_param_count({2, 10, 10, 10, 1}), 261u);
  EXPECT_EQ(Mlp({2, 10, 10, 1}).param_count(), 151u);
  EXPECT_EQ(dense_param_count({1, 10, 10, 1}), 141u);
}

TEST(Mlp, RejectsBadShapes) {
  EXPECT_THROW(Mlp({2}), std::invalid_argument);
  EXPECT_THROW(Mlp({2, 3, 2}), std::invalid_argument);
  EXPECT_THROW(Mlp({2, 0, 1}), std::invalid_argument);
  EXPECT_THROW(Mlp({2, 3, 1}).forward(std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Mlp, ZeroParameters) {
  const Mlp net({2, 10, 10, 1});
  Xoshiro256 rng(1);
  for (int k = 0; k < 10; ++k) {
    const auto x = random_point(rng, 2, -5, 5);
    EXPECT_EQ(net.forward(x), 0.0);
    EXPECT_EQ(net.input_grad(x), (std::vector<double>{0.0, 0.0}));
  }
}

TEST(Mlp, SingleNeuron) {
  const Mlp net = tanh_x1_net();
  for (double a : {-2.0, -0.3, 0.0, 0.7}) {
    const std::vector<double> x{a, 5.0};
    EXPECT_EQ(net.forward(x), std::tanh(a));
  }
  EXPECT_EQ(net.input_grad(std::vector<double>{0.0, 3.0}), (std::vector<double>{1.0, 0.0}));
}

TEST(Mlp, ForwardMatchesIndependentEvaluator) {
  Xoshiro256 rng(2);
  for (int k = 0; k < 50; ++k) {
    const std::size_t n = 1 + rng.below(3);
    std::vector<std::size_t> sizes{n};
    const std::size_t depth = 1 + rng.below(3);
    for (std::size_t l = 0; l < depth; ++l) sizes.push_back(1 + rng.below(12));
    sizes.push_back(1);
    const Mlp net = random_net(rng, sizes);
    for (int p = 0; p < 10; ++p) {
      const auto x = random_point(rng, n, -3, 3);
      EXPECT_NEAR(net.forward(x), reference_forward(net, x), 1e-12);
    }
  }
}

TEST(Mlp, InputGradMatchesFiniteDifferences) {
  Xoshiro256 rng(3);
  for (int k = 0; k < 20; ++k) {
    const Mlp net = random_net(rng, {2, 8, 8, 1});
    for (int p = 0; p < 10; ++p) {
      const auto x = random_point(rng, 2, -2, 2);
      const auto g = net.input_grad(x);
      std::vector<double> fd(2);
      for (std::size_t j = 0; j < 2; ++j) {
        const double h = 1e-5;
        auto xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd[j] = (net.forward(xp) - net.forward(xm)) / (2 * h);
      }
      const double scale = std::max(max_abs(g), 1e-3);
      for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(g[j], fd[j], 1e-6 * scale);
    }
  }
}

TEST(Mlp, GlorotIsSeededAndBounded) {
  Xoshiro256 a(9), b(9);
  const Mlp n1 = Mlp::glorot({2, 10, 1}, a);
  const Mlp n2 = Mlp::glorot({2, 10, 1}, b);
  EXPECT_TRUE(std::equal(n1.params().begin(), n1.params().end(), n2.params().begin()));
  const double lim0 = std::sqrt(6.0 / 12.0);
  for (double w : n1.weights(0)) EXPECT_LE(std::abs(w), lim0);
  for (double v : n1.bias(0)) EXPECT_EQ(v, 0.0);
}

TEST(Residual, VanishesAtTheEquilibrium) {
  Xoshiro256 rng(4);
  for (const auto& name : builtin_names()) {
    const auto sys = builtin(name);
    for (BetaForm form : {BetaForm::Exp, BetaForm::Tanh}) {
      TrainConfig cfg;
      cfg.psi_form = form;
      const ZubovLoss loss(sys, cfg);
      const Mlp net = random_net(rng, {sys.dim, 6, 1});
      EXPECT_EQ(loss.residual(net, std::vector<double>(sys.dim, 0.0)), 0.0);
    }
  }
}

TEST(Residual, ZeroNetOnVanDerPol) {
  TrainConfig cfg;
  cfg.alpha = 0.1;
  cfg.psi_form = BetaForm::Tanh;
  const ZubovLoss loss(builtin("reversed_vdp"), cfg);
  EXPECT_DOUBLE_EQ(loss.residual(Mlp({2, 10, 1}), std::vector<double>{1.0, 0.0}), 0.1);
}

TEST(Residual, MatchesDefinition) {
  Xoshiro256 rng(5);
  const auto sys = builtin("reversed_vdp");
  for (BetaForm form : {BetaForm::Exp, BetaForm::Tanh}) {
    TrainConfig cfg;
    cfg.psi_form = form;
    cfg.alpha = 0.3;
    const ZubovLoss loss(sys, cfg);
    const Mlp net = random_net(rng, {2, 5, 5, 1});
    for (int k = 0; k < 20; ++k) {
      const auto x = random_point(rng, 2, -2, 2);
      const auto g = net.input_grad(x);
      const auto f = sys.field.eval(x);
      const double w = net.forward(x);
      const double phi = x[0] * x[0] + x[1] * x[1];
      const double psi = form == BetaForm::Exp ? cfg.alpha * phi : cfg.alpha * (1 + w) * phi;
      EXPECT_NEAR(loss.residual(net, x), g[0] * f[0] + g[1] * f[1] + psi * (1 - w), 1e-12);
      EXPECT_NEAR(zubov_residual(sys, cfg, x, w, g), loss.residual(net, x), 1e-12);
    }
  }
}

TEST(Residual, ClosedFormCubicSolution) {
  // W = 1 - (1 - x^2) solves the exp-form equation with alpha = 2
  TrainConfig cfg;
  cfg.psi_form = BetaForm::Exp;
  cfg.alpha = 2.0;
  const auto sys = builtin("cubic1d");
  for (double x : {-0.9, -0.5, 0.0, 0.3, 0.5, 0.9}) {
    const std::vector<double> pt{x}, g{2 * x};
    EXPECT_NEAR(zubov_residual(sys, cfg, pt, x * x, g), 0.0, 1e-12);
  }
  const std::vector<double> pt{0.5}, g{1.0};
  EXPECT_NEAR(zubov_residual(sys, cfg, pt, 0.3, g), -0.375 + 2 * 0.25 * 0.7, 1e-15);
  EXPECT_THROW(zubov_residual(sys, cfg, pt, 0.3, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST(Loss, DataTermOfZeroNet) {
  TrainConfig cfg;
  cfg.lambda_r = 0.0;
  cfg.lambda_b = 0.0;
  const ZubovLoss loss(builtin("reversed_vdp"), cfg);
  Dataset d;
  d.collocation = {{0.0, 0.0}};
  d.pair_x = {{1.0, 1.0}};
  d.pair_w = {0.5};
  const auto lb = loss.evaluate(Mlp({2, 4, 1}), d);
  EXPECT_EQ(lb.data, 0.25);
  EXPECT_EQ(lb.total, 0.25);
}

TEST(Loss, ExteriorPointAtOneCostsNothing) {
  const ZubovLoss loss(builtin("reversed_vdp"), TrainConfig{});
  Mlp net({2, 4, 1});
  net.bias(1)[0] = 1.0;
  Dataset d;
  d.collocation = {{0.0, 0.0}};
  d.exterior = {{2.0, 3.0}};
  const auto lb = loss.evaluate(net, d);
  // only the W(0) = 0 pin contributes
  EXPECT_EQ(lb.boundary, 1.0);
  d.exterior.clear();
  EXPECT_EQ(loss.evaluate(net, d).boundary, 1.0);
}

TEST(Loss, TotalIsWeightedSum) {
  Xoshiro256 rng(6);
  const auto sys = builtin("reversed_vdp");
  TrainConfig cfg;
  cfg.lambda_r = 0.7;
  cfg.lambda_b = 1.3;
  cfg.lambda_d = 2.1;
  const ZubovLoss loss(sys, cfg);
  const auto d = small_dataset(rng, sys);
  const auto lb = loss.evaluate(random_net(rng, {2, 5, 1}), d);
  EXPECT_EQ(lb.total, cfg.lambda_r * lb.residual + cfg.lambda_b * lb.boundary + cfg.lambda_d * lb.data);
}

TEST(Loss, BandPenalisesValuesOutsideTheQuadraticBand) {
  const auto sys = builtin("reversed_vdp");
  TrainConfig cfg;
  Eigen::MatrixXd P(2, 2);
  P << 1.5, -0.5, -0.5, 1.0;
  const ZubovLoss with_band(sys, cfg, LocalBand{P, 0.29});
  const ZubovLoss without(sys, cfg);
  EXPECT_NEAR(with_band.band_c1(), lambda_min(P), 1e-12);
  EXPECT_NEAR(with_band.band_c2(), lambda_max(P), 1e-12);
  Dataset d;
  d.collocation = {{0.1, 0.1}, {2.0, 2.0}};
  const Mlp zero({2, 3, 1});
  // W = 0 sits below beta(c1 |x|^2) > 0 at (0.1, 0.1); (2, 2) is outside the ellipsoid
  const double lower = beta_transform(with_band.band_c1() * 0.02, cfg.beta());
  EXPECT_NEAR(with_band.evaluate(zero, d).boundary - without.evaluate(zero, d).boundary,
              lower * lower, 1e-15);
  cfg.use_local_band = false;
  const ZubovLoss disabled(sys, cfg, LocalBand{P, 0.29});
  EXPECT_EQ(disabled.evaluate(zero, d).boundary, without.evaluate(zero, d).boundary);
}

TEST(Loss, ParameterGradientMatchesFiniteDifferences) {
  Xoshiro256 rng(7);
  Eigen::MatrixXd P(2, 2);
  P << 1.5, -0.5, -0.5, 1.0;
  for (int k = 0; k < 20; ++k) {
    const auto sys = builtin(k % 2 ? "reversed_vdp" : "poly2d");
    TrainConfig cfg;
    cfg.psi_form = k % 4 < 2 ? BetaForm::Tanh : BetaForm::Exp;
    cfg.alpha = rng.uniform(0.05, 1.0);
    const ZubovLoss loss(sys, cfg, LocalBand{P, 0.5});
    const auto d = small_dataset(rng, sys);
    Mlp net = random_net(rng, {2, 1 + rng.below(6), 1 + rng.below(6), 1}, 0.8);
    std::vector<double> g(net.param_count());
    loss.gradient(net, d, g);
    std::vector<double> fd(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double p0 = net.params()[i];
      const double h = 1e-6 * std::max(1.0, std::abs(p0));
      net.params()[i] = p0 + h;
      const double up = loss.evaluate(net, d).total;
      net.params()[i] = p0 - h;
      const double dn = loss.evaluate(net, d).total;
      net.params()[i] = p0;
      fd[i] = (up - dn) / (2 * h);
    }
    const double scale = max_abs(g);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], fd[i], 1e-4 * scale) << i;
  }
}

TEST(Loss, BatchGradientOverEverythingEqualsFullGradient) {
  Xoshiro256 rng(8);
  const auto sys = builtin("reversed_vdp");
  const ZubovLoss loss(sys, TrainConfig{});
  const auto d = small_dataset(rng, sys);
  const Mlp net = random_net(rng, {2, 4, 4, 1});
  std::vector<double> g1(net.param_count()), g2(net.param_count());
  const auto a = loss.gradient(net, d, g1);
  std::vector<std::size_t> ci(d.collocation.size()), ei(d.exterior.size()), pi(d.pair_x.size());
  for (std::size_t i = 0; i < ci.size(); ++i) ci[i] = i;
  for (std::size_t i = 0; i < ei.size(); ++i) ei[i] = i;
  for (std::size_t i = 0; i < pi.size(); ++i) pi[i] = i;
  const auto b = loss.batch_gradient(net, d, ci, ei, pi, g2);
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(g1, g2);
}

TEST(AssembleDataset, ChecksTargetsAgainstBeta) {
  const auto sys = builtin("cubic1d");
  const BetaKind b{BetaForm::Exp, 2.0};
  const auto samples = gen_dataset(sys, {21}, {}, b, 1);
  DatasetOptions opts;
  opts.all_pairs = true;
  const auto d = assemble_dataset(samples, opts, b, 1);
  EXPECT_EQ(d.collocation.size(), 21u);
  EXPECT_EQ(d.pair_x.size(), 21u);
  for (double w : d.pair_w) {
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
  }
  EXPECT_THROW(assemble_dataset(samples, opts, BetaKind{BetaForm::Exp, 1.0}, 1), std::invalid_argument);
  EXPECT_THROW(assemble_dataset(samples, opts, BetaKind{BetaForm::Tanh, 2.0}, 1), std::invalid_argument);
}

TEST(AssembleDataset, FractionAndExterior) {
  const auto sys = builtin("reversed_vdp");
  const BetaKind b{BetaForm::Tanh, 0.1};
  const auto samples = gen_dataset(sys, {20, 20}, {}, b, 1);
  std::size_t diverged = 0;
  for (const auto& s : samples) diverged += !s.converged;
  DatasetOptions opts;
  opts.data_fraction = 0.1;
  opts.exterior = ExteriorSource::All;
  const auto d = assemble_dataset(samples, opts, b, 3);
  EXPECT_EQ(d.pair_x.size(), 40u);
  EXPECT_EQ(d.exterior.size(), diverged);
  opts.exterior = ExteriorSource::None;
  EXPECT_TRUE(assemble_dataset(samples, opts, b, 3).exterior.empty());
  opts.exterior = ExteriorSource::Pairs;
  const auto dp = assemble_dataset(samples, opts, b, 3);
  EXPECT_LE(dp.exterior.size(), dp.pair_x.size());
  opts.data_fraction = 1.5;
  EXPECT_THROW(assemble_dataset(samples, opts, b, 3), std::invalid_argument);
}

TEST(Train, ZeroEpochsLeavesNetUnchanged) {
  Xoshiro256 rng(10);
  const auto sys = builtin("reversed_vdp");
  TrainConfig cfg;
  cfg.max_epochs = 0;
  const ZubovLoss loss(sys, cfg);
  const auto d = small_dataset(rng, sys);
  Mlp net = random_net(rng, {2, 4, 1});
  const Mlp before = net;
  const auto rec = train(net, d, loss);
  EXPECT_TRUE(rec.epochs.empty());
  EXPECT_EQ(rec.epochs_run, 0u);
  EXPECT_TRUE(std::equal(net.params().begin(), net.params().end(), before.params().begin()));
}

TEST(Train, DeterministicForASeed) {
  const auto sys = builtin("reversed_vdp");
  const BetaKind b{BetaForm::Tanh, 0.1};
  const auto samples = gen_dataset(sys, {15, 15}, {}, b, 1);
  DatasetOptions opts;
  opts.data_fraction = 0.2;
  const auto d = assemble_dataset(samples, opts, b, 5);
  TrainConfig cfg;
  cfg.max_epochs = 5;
  cfg.seed = 42;
  const ZubovLoss loss(sys, cfg);
  Xoshiro256 r1(1), r2(1);
  Mlp a = Mlp::glorot({2, 8, 8, 1}, r1);
  Mlp c = Mlp::glorot({2, 8, 8, 1}, r2);
  const auto ra = train(a, d, loss);
  const auto rc = train(c, d, loss);
  EXPECT_TRUE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
  ASSERT_EQ(ra.epochs.size(), rc.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i)
    EXPECT_EQ(ra.epochs[i].loss.total, rc.epochs[i].loss.total);
}

TEST(Train, CubicLossMostlyDecreasesEarly) {
  const auto sys = builtin("cubic1d");
  const BetaKind b{BetaForm::Exp, 2.0};
  const auto samples = gen_dataset(sys, {200}, {}, b, 1);
  const auto d = assemble_dataset(samples, DatasetOptions{}, b, 1);
  TrainConfig cfg;
  cfg.psi_form = BetaForm::Exp;
  cfg.alpha = 2.0;
  cfg.max_epochs = 10;
  cfg.seed = 3;
  const ZubovLoss loss(sys, cfg);
  Xoshiro256 rng(3);
  Mlp net = Mlp::glorot({1, 10, 10, 1}, rng);
  const auto rec = train(net, d, loss);
  ASSERT_EQ(rec.epochs.size(), 10u);
  int rises = 0;
  for (std::size_t i = 1; i < rec.epochs.size(); ++i)
    rises += rec.epochs[i].loss.total > rec.epochs[i - 1].loss.total;
  EXPECT_LE(rises, 2);
  EXPECT_EQ(rec.stop_reason, "max_epochs");
}

TEST(Train, StopsAtLossThreshold) {
  const auto sys = builtin("cubic1d");
  Dataset d;
  d.collocation = {{0.0}};
  TrainConfig cfg;
  cfg.loss_threshold = 1.0;
  const ZubovLoss loss(sys, cfg);
  Mlp net({1, 3, 1});
  const auto rec = train(net, d, loss);
  EXPECT_EQ(rec.stop_reason, "loss_threshold");
  EXPECT_EQ(rec.epochs_run, 1u);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.batch = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lr = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.lambda_d = -1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.alpha = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}
