#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zubov/dynamics.hpp"
#include "zubov/ode.hpp"
#include "zubov/rng.hpp"

namespace zubov {

/// Feedforward network R^n -> R with tanh hidden layers and a linear output:
/// the Lyapunov candidate W_N(x; theta).
///
/// Parameters live in one flat vector, layer by layer, each layer storing its
/// row-major weight matrix (out x in) followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  /// All-zero parameters. `layer_sizes` = (n, h1, ..., hL, 1).
  explicit Mlp(std::vector<std::size_t> layer_sizes);

  /// Glorot-uniform weights, zero biases.
  static Mlp glorot(std::vector<std::size_t> layer_sizes, Xoshiro256& rng);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  /// Number of affine maps (hidden layers + output).
  std::size_t num_affine() const { return sizes_.size() - 1; }
  std::size_t hidden_layers() const { return sizes_.size() - 2; }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  std::span<const double> weights(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;
  std::span<double> weights(std::size_t layer);
  std::span<double> bias(std::size_t layer);
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const;

  double forward(std::span<const double> x) const;
  std::vector<double> input_grad(std::span<const double> x) const;

  bool all_finite() const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Dense-layer parameter count: sum over layers of (in + 1) * out.
std::size_t dense_param_count(const std::vector<std::size_t>& layer_sizes);

struct TrainConfig {
  double alpha = 0.1;
  /// exp: Psi = alpha Phi; tanh: Psi = alpha (1 + W) Phi.
  BetaForm psi_form = BetaForm::Tanh;
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t max_epochs = 200;
  double loss_threshold = 1e-5;
  double lambda_r = 1.0;
  double lambda_b = 1.0;
  double lambda_d = 1.0;
  std::uint64_t seed = 0;
  /// Band constants for beta(c1 |x|^2) <= W <= beta(c2 |x|^2); default to
  /// lambda_min(P), lambda_max(P).
  std::optional<double> c1_local;
  std::optional<double> c2_local;
  bool use_local_band = true;

  BetaKind beta() const { return {psi_form, alpha}; }
  void validate() const;
};

/// Training points: collocation set S for the residual, exterior points in
/// X \ U pushed towards W = 1, and (y, w_hat) data pairs.
struct Dataset {
  std::vector<std::vector<double>> collocation;
  std::vector<std::vector<double>> exterior;
  std::vector<std::vector<double>> pair_x;
  std::vector<double> pair_w;
};

enum class ExteriorSource { None, Pairs, All };

struct DatasetOptions {
  /// Fraction of reference samples used as data pairs (0 = PINN only).
  double data_fraction = 0.0;
  /// Use every reference sample as a data pair (purely data-driven setup).
  bool all_pairs = false;
  ExteriorSource exterior = ExteriorSource::Pairs;
  /// Use the sample lattice as the collocation set.
  bool collocate_on_samples = true;
};

/// Builds a training set from simulated samples. Pair targets are checked
/// against beta_transform with the training alpha/form; a mismatch throws.
Dataset assemble_dataset(const std::vector<ValueSample>& samples, const DatasetOptions& opts,
                         const BetaKind& beta, std::uint64_t seed);

/// Local quadratic region x^T P x <= c in which the band constraint applies.
struct LocalBand {
  Eigen::MatrixXd P;
  double c = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double residual = 0.0;
  double boundary = 0.0;
  double data = 0.0;
};

/// Loss evaluation context: the system, settings and the optional local band.
/// Vector field values are cached per point by the trainer, not here.
class ZubovLoss {
 public:
  ZubovLoss(const SystemDef& sys, const TrainConfig& cfg, std::optional<LocalBand> band = {});

  /// r(x) = grad W_N(x) . f(x) + Psi(x) (1 - W_N(x)), Phi(x) = |x|^2.
  double residual(const Mlp& net, std::span<const double> x) const;

  /// Full-dataset loss.
  LossBreakdown evaluate(const Mlp& net, const Dataset& data) const;

  /// Full-dataset loss and its gradient with respect to the parameters.
  LossBreakdown gradient(const Mlp& net, const Dataset& data, std::span<double> grad) const;

  /// Loss and gradient over index subsets of the dataset.
  LossBreakdown batch_gradient(const Mlp& net, const Dataset& data,
                               std::span<const std::size_t> colloc_idx,
                               std::span<const std::size_t> exterior_idx,
                               std::span<const std::size_t> pair_idx,
                               std::span<double> grad) const;

  const SystemDef& system() const { return sys_; }
  const TrainConfig& config() const { return cfg_; }
  const std::optional<LocalBand>& band() const { return band_; }
  double band_c1() const { return c1_; }
  double band_c2() const { return c2_; }

 private:
  SystemDef sys_;
  TrainConfig cfg_;
  std::optional<LocalBand> band_;
  double c1_ = 0.0;
  double c2_ = 0.0;
};

/// The same residual for any W given its value and input gradient at x.
double zubov_residual(const SystemDef& sys, const TrainConfig& cfg, std::span<const double> x,
                      double w, std::span<const double> grad_w);

class DivergedLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLoss {
  std::size_t epoch = 0;
  LossBreakdown loss;
};

struct TrainRecord {
  /// Epoch means of the mini-batch losses; these are the stop-test values.
  std::vector<EpochLoss> epochs;
  std::string stop_reason;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
};

/// Mini-batch Adam training (beta1 0.9, beta2 0.999, eps 1e-8). Stops when
/// the epoch-mean total loss drops below cfg.loss_threshold or after
/// cfg.max_epochs. Deterministic for a given seed.
TrainRecord train(Mlp& net, const Dataset& data, const ZubovLoss& loss);

}  // namespace zubov
