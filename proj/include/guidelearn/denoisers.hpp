#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "guidelearn/nn.hpp"
#include "guidelearn/rng.hpp"
#include "guidelearn/schedule.hpp"

namespace guidelearn {

struct MogComponent {
  Vec2 mean;
  double variance;  // isotropic
  double weight;
};

/// Isotropic Gaussian mixture in R^2; the component index is the class label.
struct MogSpec {
  std::vector<MogComponent> components;

  // Means (±10, ±10), variances 5, 1, 1, 1, uniform weights.
  static MogSpec default_mixture();

  void validate() const;
  int num_classes() const { return static_cast<int>(components.size()); }
  std::vector<double> weights() const;
  // Per-coordinate standard deviation of the mixture, averaged over both axes.
  double data_std() const;
};

struct LabeledPoint {
  Vec2 x;
  int c;
};

LabeledPoint sample_joint(const MogSpec& spec, Rng& rng);

// E[x0 | x_t, c] for the Gaussian component c.
Vec2 analytic_denoise_conditional(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt, double t, int c);
// Posterior class probabilities p(c | x_t), computed with log-sum-exp.
std::vector<double> posterior_responsibilities(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt,
                                               double t);
// E[x0 | x_t] = sum_c p(c | x_t) E[x0 | x_t, c].
Vec2 analytic_denoise_unconditional(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt, double t);
// grad log p_t(x_t) of the noised mixture marginal.
Vec2 marginal_score(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt, double t);

struct CorruptionSpec {
  double mean_shrink = 1.0;
  double weight_skew = 0.0;
  double noise_scale = 0.0;
  std::uint64_t seed = 0;

  bool is_identity() const { return mean_shrink == 1.0 && weight_skew == 0.0 && noise_scale == 0.0; }
  void validate() const;
};

/// g(x, t) = sin(A [x; t] + b) with A, b drawn once from a seed. Amplitude 1.
struct PerturbationField {
  Eigen::Matrix<double, 2, 3> projection;
  Vec2 phase;

  static PerturbationField from_seed(std::uint64_t seed);
  Vec2 operator()(const Vec2& x, double t) const;
};

// Means scaled by mean_shrink; weights tilted by exp(-weight_skew * c) and renormalised.
MogSpec corrupt_spec(const MogSpec& spec, const CorruptionSpec& corruption);

struct NeuralDenoiserConfig {
  int iterations = 10000;
  int batch_size = 128;
  double learning_rate = 1e-4;
  double clip_norm = 1.0;
  int hidden = 64;
  int hidden_layers = 4;
  int embedding_dim = 128;
  double uncond_prob = 0.2;  // label dropout so one network serves both denoisers
  std::uint64_t seed = 0;
};

/// x0-predicting network with skip/output preconditioning:
/// x0_hat = c_skip(t) x_t + c_out(t) F([c_in(t) x_t, sinusoidal(logsnr t), onehot(c)]).
class NeuralDenoiserModel {
 public:
  NeuralDenoiserModel(Mlp net, int num_classes, int embedding_dim, double data_std, NoiseSchedule sched = {});

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  int num_classes() const { return num_classes_; }
  int embedding_dim() const { return embedding_dim_; }
  double data_std() const { return data_std_; }
  const NoiseSchedule& schedule() const { return sched_; }
  int iterations_trained = 0;

  static MlpArchitecture architecture(int num_classes, int embedding_dim, int hidden, int hidden_layers);

  // Per-point times and classes; class < 0 means no conditioning.
  Eigen::MatrixXd features(std::span<const Vec2> xt, std::span<const double> t, std::span<const int> c) const;
  void denoise(std::span<const Vec2> xt, std::span<const double> t, std::span<const int> c,
               std::span<Vec2> out) const;

  struct Preconditioning {
    double skip;
    double out;
    double in;
  };
  Preconditioning preconditioning(double t) const;

 private:
  Mlp net_;
  int num_classes_;
  int embedding_dim_;
  double data_std_;
  NoiseSchedule sched_;
};

enum class DenoiserKind { AnalyticConditional, AnalyticUnconditional, Corrupted, Neural };

/// Estimator of E[x0 | x_t, c] (conditional) or E[x0 | x_t] (unconditional). Immutable.
class Denoiser {
 public:
  static Denoiser analytic_conditional(MogSpec spec, NoiseSchedule sched = {});
  static Denoiser analytic_unconditional(MogSpec spec, NoiseSchedule sched = {});
  static Denoiser neural(std::shared_ptr<const NeuralDenoiserModel> model, bool conditional);

  DenoiserKind kind() const;
  bool is_conditional() const;
  bool is_analytic() const;
  const NoiseSchedule& schedule() const { return sched_; }

  // Conditional denoisers require c; unconditional ones ignore it.
  Vec2 operator()(const Vec2& xt, double t, std::optional<int> c) const;
  void batch(std::span<const Vec2> xt, double t, std::optional<int> c, std::span<Vec2> out) const;

  friend Denoiser corrupt(const Denoiser& base, const CorruptionSpec& corruption);

  // Underlying mixture for analytic and corrupted variants (post-corruption for the latter).
  const MogSpec* mixture() const;
  const NeuralDenoiserModel* neural_model() const;
  std::optional<CorruptionSpec> corruption() const;

 private:
  struct Analytic {
    MogSpec spec;
    bool conditional;
  };
  struct Corrupted {
    MogSpec spec;
    bool conditional;
    CorruptionSpec corruption;
    PerturbationField field;
  };
  struct Neural {
    std::shared_ptr<const NeuralDenoiserModel> model;
    bool conditional;
  };

  Denoiser(std::variant<Analytic, Corrupted, Neural> impl, NoiseSchedule sched)
      : impl_(std::move(impl)), sched_(sched) {}

  std::variant<Analytic, Corrupted, Neural> impl_;
  NoiseSchedule sched_;
};

// Base must be analytic. An identity corruption returns a denoiser whose outputs equal the base bit for bit.
Denoiser corrupt(const Denoiser& base, const CorruptionSpec& corruption);

struct DenoiserPair {
  Denoiser conditional;
  Denoiser unconditional;
};

DenoiserPair analytic_pair(const MogSpec& spec, NoiseSchedule sched = {});
DenoiserPair corrupted_pair(const MogSpec& spec, const CorruptionSpec& corruption, NoiseSchedule sched = {});
DenoiserPair neural_pair(std::shared_ptr<const NeuralDenoiserModel> model);

struct NeuralTrainResult {
  std::shared_ptr<NeuralDenoiserModel> model;
  std::vector<double> loss_history;  // training-batch loss per iteration
};

// Minimises E ||x0 - x0_hat(x_t, c)||^2 (unit time weighting) with Adam and global-norm clipping.
// Throws NumericalError on a non-finite loss.
NeuralTrainResult train_neural_denoiser(const NeuralDenoiserConfig& config, const MogSpec& spec,
                                        NoiseSchedule sched = {});

// Freshly initialised (untrained) model for the configured architecture.
NeuralDenoiserModel initial_neural_denoiser(const NeuralDenoiserConfig& config, const MogSpec& spec,
                                            NoiseSchedule sched = {});

// Mean squared x0 error of the conditional model on a held-out batch drawn from `seed`.
double neural_denoiser_loss(const NeuralDenoiserModel& model, const MogSpec& spec, int batch, std::uint64_t seed);

}  // namespace guidelearn
