#include "guidelearn/denoisers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <type_traits>

#include "guidelearn/errors.hpp"

namespace guidelearn {

MogSpec MogSpec::default_mixture() {
  MogSpec spec;
  spec.components = {
      {Vec2(10.0, 10.0), 5.0, 0.25},
      {Vec2(-10.0, 10.0), 1.0, 0.25},
      {Vec2(10.0, -10.0), 1.0, 0.25},
      {Vec2(-10.0, -10.0), 1.0, 0.25},
  };
  return spec;
}

void MogSpec::validate() const {
  if (components.empty()) throw std::invalid_argument("mixture has no components");
  double total = 0.0;
  for (const auto& comp : components) {
    if (!(comp.variance > 0.0)) throw std::invalid_argument("mixture variance must be positive");
    if (!(comp.weight > 0.0)) throw std::invalid_argument("mixture weight must be positive");
    if (!comp.mean.allFinite()) throw std::invalid_argument("mixture mean must be finite");
    total += comp.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");
}

std::vector<double> MogSpec::weights() const {
  std::vector<double> w;
  w.reserve(components.size());
  for (const auto& comp : components) w.push_back(comp.weight);
  return w;
}

double MogSpec::data_std() const {
  Vec2 mean = Vec2::Zero();
  Vec2 second = Vec2::Zero();
  for (const auto& comp : components) {
    mean += comp.weight * comp.mean;
    second += comp.weight * (comp.mean.cwiseProduct(comp.mean) + Vec2::Constant(comp.variance));
  }
  const Vec2 var = second - mean.cwiseProduct(mean);
  return std::sqrt(0.5 * (var.x() + var.y()));
}

LabeledPoint sample_joint(const MogSpec& spec, Rng& rng) {
  const int c = rng.categorical(spec.weights());
  const auto& comp = spec.components[static_cast<std::size_t>(c)];
  return {comp.mean + std::sqrt(comp.variance) * rng.normal2(), c};
}

Vec2 analytic_denoise_conditional(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt, double t, int c) {
  if (c < 0 || c >= spec.num_classes()) {
    throw std::out_of_range("invalid component index " + std::to_string(c));
  }
  const auto [alpha, sigma] = sched.at(t);
  const auto& comp = spec.components[static_cast<std::size_t>(c)];
  const double s2 = sigma * sigma;
  const double denom = alpha * alpha * comp.variance + s2;
  return (s2 * comp.mean + alpha * comp.variance * xt) / denom;
}

std::vector<double> posterior_responsibilities(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt,
                                               double t) {
  const auto [alpha, sigma] = sched.at(t);
  std::vector<double> logp(spec.components.size());
  double max_log = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    const auto& comp = spec.components[k];
    const double v = alpha * alpha * comp.variance + sigma * sigma;
    const double d2 = (xt - alpha * comp.mean).squaredNorm();
    logp[k] = std::log(comp.weight) - std::log(2.0 * std::numbers::pi * v) - 0.5 * d2 / v;
    max_log = std::max(max_log, logp[k]);
  }
  double total = 0.0;
  for (double& lp : logp) {
    lp = std::exp(lp - max_log);
    total += lp;
  }
  for (double& lp : logp) lp /= total;
  return logp;
}

Vec2 analytic_denoise_unconditional(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt, double t) {
  const auto resp = posterior_responsibilities(spec, sched, xt, t);
  Vec2 out = Vec2::Zero();
  for (int c = 0; c < spec.num_classes(); ++c) {
    out += resp[static_cast<std::size_t>(c)] * analytic_denoise_conditional(spec, sched, xt, t, c);
  }
  return out;
}

Vec2 marginal_score(const MogSpec& spec, const NoiseSchedule& sched, const Vec2& xt, double t) {
  const auto [alpha, sigma] = sched.at(t);
  const auto resp = posterior_responsibilities(spec, sched, xt, t);
  Vec2 score = Vec2::Zero();
  for (std::size_t k = 0; k < spec.components.size(); ++k) {
    const auto& comp = spec.components[k];
    const double v = alpha * alpha * comp.variance + sigma * sigma;
    score -= resp[k] * (xt - alpha * comp.mean) / v;
  }
  return score;
}

void CorruptionSpec::validate() const {
  if (!(mean_shrink >= 0.0 && mean_shrink <= 1.0)) throw std::invalid_argument("mean_shrink must lie in [0,1]");
  if (!(weight_skew >= 0.0)) throw std::invalid_argument("weight_skew must be >= 0");
  if (!(noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be >= 0");
}

PerturbationField PerturbationField::from_seed(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "corruption.field"));
  PerturbationField field;
  for (int r = 0; r < 2; ++r) {
    field.projection(r, 0) = 0.15 * rng.normal();
    field.projection(r, 1) = 0.15 * rng.normal();
    field.projection(r, 2) = 2.0 * rng.normal();
  }
  field.phase = Vec2(rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.0, 2.0 * std::numbers::pi));
  return field;
}

Vec2 PerturbationField::operator()(const Vec2& x, double t) const {
  const Eigen::Vector3d input(x.x(), x.y(), t);
  const Vec2 arg = projection * input + phase;
  return Vec2(std::sin(arg.x()), std::sin(arg.y()));
}

MogSpec corrupt_spec(const MogSpec& spec, const CorruptionSpec& corruption) {
  MogSpec out = spec;
  if (corruption.mean_shrink != 1.0) {
    for (auto& comp : out.components) comp.mean *= corruption.mean_shrink;
  }
  if (corruption.weight_skew != 0.0) {
    double total = 0.0;
    for (std::size_t k = 0; k < out.components.size(); ++k) {
      out.components[k].weight *= std::exp(-corruption.weight_skew * static_cast<double>(k));
      total += out.components[k].weight;
    }
    for (auto& comp : out.components) comp.weight /= total;
  }
  return out;
}

NeuralDenoiserModel::NeuralDenoiserModel(Mlp net, int num_classes, int embedding_dim, double data_std,
                                         NoiseSchedule sched)
    : net_(std::move(net)), num_classes_(num_classes), embedding_dim_(embedding_dim), data_std_(data_std),
      sched_(sched) {
  if (embedding_dim % 2 != 0) throw std::invalid_argument("embedding dim must be even");
  if (net_.input_dim() != 2 + embedding_dim + num_classes || net_.output_dim() != 2) {
    throw std::invalid_argument("neural denoiser: network shape does not match features");
  }
}

MlpArchitecture NeuralDenoiserModel::architecture(int num_classes, int embedding_dim, int hidden, int hidden_layers) {
  MlpArchitecture arch;
  arch.widths.push_back(2 + embedding_dim + num_classes);
  for (int i = 0; i < hidden_layers; ++i) arch.widths.push_back(hidden);
  arch.widths.push_back(2);
  return arch;
}

NeuralDenoiserModel::Preconditioning NeuralDenoiserModel::preconditioning(double t) const {
  const auto [alpha, sigma] = sched_.at(t);
  const double sd2 = data_std_ * data_std_;
  const double total = alpha * alpha * sd2 + sigma * sigma;
  return {alpha * sd2 / total, sigma * data_std_ / std::sqrt(total), 1.0 / std::sqrt(total)};
}

Eigen::MatrixXd NeuralDenoiserModel::features(std::span<const Vec2> xt, std::span<const double> t,
                                              std::span<const int> c) const {
  const auto n = static_cast<Eigen::Index>(xt.size());
  Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(2 + embedding_dim_ + num_classes_, n);
  const int half = embedding_dim_ / 2;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    const auto pre = preconditioning(ti);
    feats(0, i) = pre.in * xt[static_cast<std::size_t>(i)].x();
    feats(1, i) = pre.in * xt[static_cast<std::size_t>(i)].y();
    const double lambda = sched_.logsnr(ti);
    for (int k = 0; k < half; ++k) {
      const double freq = std::exp(-std::log(10000.0) * k / half);
      feats(2 + k, i) = std::sin(lambda * freq);
      feats(2 + half + k, i) = std::cos(lambda * freq);
    }
    const int ci = c[static_cast<std::size_t>(i)];
    if (ci >= num_classes_) throw std::out_of_range("invalid component index " + std::to_string(ci));
    if (ci >= 0) feats(2 + embedding_dim_ + ci, i) = 1.0;
  }
  return feats;
}

void NeuralDenoiserModel::denoise(std::span<const Vec2> xt, std::span<const double> t, std::span<const int> c,
                                  std::span<Vec2> out) const {
  const Eigen::MatrixXd y = net_.predict(features(xt, t, c));
  for (std::size_t i = 0; i < xt.size(); ++i) {
    const auto pre = preconditioning(t[i]);
    out[i] = pre.skip * xt[i] + pre.out * y.col(static_cast<Eigen::Index>(i));
  }
}

Denoiser Denoiser::analytic_conditional(MogSpec spec, NoiseSchedule sched) {
  spec.validate();
  return Denoiser(Analytic{std::move(spec), true}, sched);
}

Denoiser Denoiser::analytic_unconditional(MogSpec spec, NoiseSchedule sched) {
  spec.validate();
  return Denoiser(Analytic{std::move(spec), false}, sched);
}

Denoiser Denoiser::neural(std::shared_ptr<const NeuralDenoiserModel> model, bool conditional) {
  if (!model) throw std::invalid_argument("neural denoiser: null model");
  const NoiseSchedule sched = model->schedule();
  return Denoiser(Neural{std::move(model), conditional}, sched);
}

DenoiserKind Denoiser::kind() const {
  if (const auto* a = std::get_if<Analytic>(&impl_)) {
    return a->conditional ? DenoiserKind::AnalyticConditional : DenoiserKind::AnalyticUnconditional;
  }
  if (std::holds_alternative<Corrupted>(impl_)) return DenoiserKind::Corrupted;
  return DenoiserKind::Neural;
}

bool Denoiser::is_conditional() const {
  return std::visit([](const auto& impl) { return impl.conditional; }, impl_);
}

bool Denoiser::is_analytic() const { return std::holds_alternative<Analytic>(impl_); }

const MogSpec* Denoiser::mixture() const {
  if (const auto* a = std::get_if<Analytic>(&impl_)) return &a->spec;
  if (const auto* c = std::get_if<Corrupted>(&impl_)) return &c->spec;
  return nullptr;
}

const NeuralDenoiserModel* Denoiser::neural_model() const {
  if (const auto* n = std::get_if<Neural>(&impl_)) return n->model.get();
  return nullptr;
}

std::optional<CorruptionSpec> Denoiser::corruption() const {
  if (const auto* c = std::get_if<Corrupted>(&impl_)) return c->corruption;
  return std::nullopt;
}

Vec2 Denoiser::operator()(const Vec2& xt, double t, std::optional<int> c) const {
  Vec2 out;
  batch(std::span<const Vec2>(&xt, 1), t, c, std::span<Vec2>(&out, 1));
  return out;
}

void Denoiser::batch(std::span<const Vec2> xt, double t, std::optional<int> c, std::span<Vec2> out) const {
  if (out.size() != xt.size()) throw std::invalid_argument("denoiser batch: output size mismatch");
  if (is_conditional() && !c) throw std::invalid_argument("conditional denoiser evaluated without a class");
  std::visit(
      [&](const auto& impl) {
        using T = std::decay_t<decltype(impl)>;
        if constexpr (std::is_same_v<T, Analytic>) {
          for (std::size_t i = 0; i < xt.size(); ++i) {
            out[i] = impl.conditional ? analytic_denoise_conditional(impl.spec, sched_, xt[i], t, *c)
                                      : analytic_denoise_unconditional(impl.spec, sched_, xt[i], t);
          }
        } else if constexpr (std::is_same_v<T, Corrupted>) {
          for (std::size_t i = 0; i < xt.size(); ++i) {
            out[i] = impl.conditional ? analytic_denoise_conditional(impl.spec, sched_, xt[i], t, *c)
                                      : analytic_denoise_unconditional(impl.spec, sched_, xt[i], t);
            if (impl.corruption.noise_scale != 0.0) out[i] += impl.corruption.noise_scale * impl.field(xt[i], t);
          }
        } else {
          const int label = impl.conditional ? *c : -1;
          if (impl.conditional && (label < 0 || label >= impl.model->num_classes())) {
            throw std::out_of_range("invalid component index " + std::to_string(label));
          }
          const std::vector<double> times(xt.size(), t);
          const std::vector<int> labels(xt.size(), label);
          impl.model->denoise(xt, times, labels, out);
        }
      },
      impl_);
}

Denoiser corrupt(const Denoiser& base, const CorruptionSpec& corruption) {
  corruption.validate();
  const auto* analytic = std::get_if<Denoiser::Analytic>(&base.impl_);
  if (analytic == nullptr) throw std::invalid_argument("corrupt: base denoiser must be analytic");
  return Denoiser(Denoiser::Corrupted{corrupt_spec(analytic->spec, corruption), analytic->conditional, corruption,
                                      PerturbationField::from_seed(corruption.seed)},
                  base.sched_);
}

DenoiserPair analytic_pair(const MogSpec& spec, NoiseSchedule sched) {
  return {Denoiser::analytic_conditional(spec, sched), Denoiser::analytic_unconditional(spec, sched)};
}

DenoiserPair corrupted_pair(const MogSpec& spec, const CorruptionSpec& corruption, NoiseSchedule sched) {
  const auto clean = analytic_pair(spec, sched);
  return {corrupt(clean.conditional, corruption), corrupt(clean.unconditional, corruption)};
}

DenoiserPair neural_pair(std::shared_ptr<const NeuralDenoiserModel> model) {
  return {Denoiser::neural(model, true), Denoiser::neural(model, false)};
}

NeuralDenoiserModel initial_neural_denoiser(const NeuralDenoiserConfig& config, const MogSpec& spec,
                                            NoiseSchedule sched) {
  spec.validate();
  Rng init_rng(derive_seed(config.seed, "denoiser.init"));
  Mlp net(NeuralDenoiserModel::architecture(spec.num_classes(), config.embedding_dim, config.hidden,
                                            config.hidden_layers),
          init_rng);
  return NeuralDenoiserModel(std::move(net), spec.num_classes(), config.embedding_dim, spec.data_std(), sched);
}

namespace {

struct DenoiserBatch {
  std::vector<Vec2> x0;
  std::vector<Vec2> xt;
  std::vector<double> t;
  std::vector<int> c;
};

DenoiserBatch draw_batch(const MogSpec& spec, const NoiseSchedule& sched, int size, double uncond_prob, Rng& rng) {
  DenoiserBatch b;
  for (int i = 0; i < size; ++i) {
    const auto [x0, c] = sample_joint(spec, rng);
    const double t = rng.uniform(sched.min_time(), sched.max_time());
    const bool drop = uncond_prob > 0.0 && rng.uniform(0.0, 1.0) < uncond_prob;
    b.x0.push_back(x0);
    b.t.push_back(t);
    b.c.push_back(drop ? -1 : c);
    b.xt.push_back(noise_sample(sched, x0, t, rng));
  }
  return b;
}

}  // namespace

NeuralTrainResult train_neural_denoiser(const NeuralDenoiserConfig& config, const MogSpec& spec,
                                        NoiseSchedule sched) {
  if (config.iterations < 0 || config.batch_size <= 0) throw std::invalid_argument("denoiser training: bad sizes");
  NeuralTrainResult result;
  result.model = std::make_shared<NeuralDenoiserModel>(initial_neural_denoiser(config, spec, sched));
  NeuralDenoiserModel& model = *result.model;
  Mlp& net = model.net();

  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  AdamState adam(adam_config, net.parameter_count(), net.parameter_blocks("denoiser."));
  Rng rng(derive_seed(config.seed, "denoiser.train"));
  std::vector<double> params = net.flat_parameters();
  const double inv_batch = 1.0 / config.batch_size;

  for (int it = 0; it < config.iterations; ++it) {
    const auto batch = draw_batch(spec, sched, config.batch_size, config.uncond_prob, rng);
    const auto fwd = net.forward(model.features(batch.xt, batch.t, batch.c), PassMode::Train, &rng);
    Eigen::MatrixXd cot(2, config.batch_size);
    double loss = 0.0;
    for (int i = 0; i < config.batch_size; ++i) {
      const auto pre = model.preconditioning(batch.t[static_cast<std::size_t>(i)]);
      const Vec2 pred = pre.skip * batch.xt[static_cast<std::size_t>(i)] + pre.out * fwd.output.col(i);
      const Vec2 err = pred - batch.x0[static_cast<std::size_t>(i)];
      loss += err.squaredNorm() * inv_batch;
      cot.col(i) = 2.0 * inv_batch * pre.out * err;
    }
    if (!std::isfinite(loss)) {
      throw NumericalError("denoiser training: non-finite loss at iteration " + std::to_string(it));
    }
    result.loss_history.push_back(loss);
    std::vector<double> grads = net.backward(fwd.tape, cot).flat();
    clip_global_norm(grads, config.clip_norm);
    adam.step(params, grads);
    net.set_flat_parameters(params);
  }
  model.iterations_trained = config.iterations;
  return result;
}

double neural_denoiser_loss(const NeuralDenoiserModel& model, const MogSpec& spec, int batch, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "denoiser.heldout"));
  const auto b = draw_batch(spec, model.schedule(), batch, 0.0, rng);
  std::vector<Vec2> pred(b.xt.size());
  model.denoise(b.xt, b.t, b.c, pred);
  double loss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) loss += (pred[i] - b.x0[i]).squaredNorm();
  return loss / static_cast<double>(pred.size());
}

}  // namespace guidelearn
