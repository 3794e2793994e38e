#include "guidelearn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace guidelearn {

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::SelfConsistency: return "self_consistency";
    case TrainMode::L2: return "l2";
    case TrainMode::Reward: return "reward";
    case TrainMode::GuidedSM: return "guided_sm";
  }
  return "unknown";
}

TrainMode parse_train_mode(const std::string& name) {
  for (auto mode : {TrainMode::SelfConsistency, TrainMode::L2, TrainMode::Reward, TrainMode::GuidedSM}) {
    if (name == train_mode_name(mode)) return mode;
  }
  throw std::invalid_argument("unknown training mode: " + name);
}

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("train: iterations must be non-negative");
  if (batch_size < 1 || particles < 1) throw std::invalid_argument("train: batch size and particles must be positive");
  if (mode == TrainMode::L2 && particles != 1) throw std::invalid_argument("train: l2 mode requires particles = 1");
  if ((mode == TrainMode::SelfConsistency || mode == TrainMode::Reward) && mmd.lambda > 0.0 && particles < 2) {
    throw std::invalid_argument("train: lambda > 0 requires at least two particles");
  }
  mmd.validate();
  times.validate();
  if (!(churn >= 0.0 && churn <= 1.0)) throw std::invalid_argument("train: churn must lie in [0, 1]");
  if (!(learning_rate > 0.0) || !(clip_norm > 0.0)) throw std::invalid_argument("train: learning rate and clip must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw std::invalid_argument("train: ema decay must lie in [0, 1)");
  if (!(weight_decay >= 0.0) || !(omega_penalty >= 0.0)) throw std::invalid_argument("train: negative regularizer");
  if (!(reward_weight >= 0.0)) throw std::invalid_argument("train: reward weight must be non-negative");
  if (checkpoint_every < 1) throw std::invalid_argument("train: checkpoint cadence must be positive");
  if (select_best && (probe_samples < 2 || probe_steps < 1)) throw std::invalid_argument("train: invalid probe size");
}

namespace {

struct BatchDraw {
  std::vector<GuidanceQuery> queries;
  std::vector<Vec2> x0;
};

BatchDraw draw_batch(const TrainConfig& config, const MogSpec& data, Rng& rng) {
  BatchDraw draw;
  for (int i = 0; i < config.batch_size; ++i) {
    const auto p = sample_joint(data, rng);
    const auto [s, t] = sample_time_pair(config.times, rng);
    draw.queries.push_back({s, t, p.c});
    draw.x0.push_back(p.x);
  }
  return draw;
}

struct Evaluated {
  double loss = 0.0;
  double mean_reward = 0.0;
  std::vector<double> domega;
};

Evaluated evaluate_items(const TrainConfig& config, const DenoiserPair& denoisers, const BatchDraw& draw,
                         const Eigen::RowVectorXd& omega, const Reward* reward, Rng& rng) {
  const int n = static_cast<int>(draw.queries.size());
  Evaluated out;
  out.domega.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    const auto& q = draw.queries[static_cast<std::size_t>(i)];
    const ParticleItem item =
        build_particles(draw.x0[static_cast<std::size_t>(i)], q.c, q.s, q.t, config.particles, denoisers, omega(i),
                        config.churn, rng);
    ItemLoss term;
    switch (config.mode) {
      case TrainMode::SelfConsistency: term = mmd_loss(item, config.mmd); break;
      case TrainMode::L2: term = l2_loss(item); break;
      case TrainMode::Reward: term = mmd_loss(item, config.mmd); break;
      case TrainMode::GuidedSM: term = guided_score_matching_loss(item); break;
    }
    if (reward) {
      const RewardLoss r = reward_loss(item, *reward, config.reward_sign);
      out.mean_reward += r.mean_reward / n;
      if (config.mode == TrainMode::Reward) {
        term.loss += config.reward_weight * r.loss;
        term.dloss_domega += config.reward_weight * r.dloss_domega;
      }
    }
    if (config.omega_penalty > 0.0) {
      term.loss += config.omega_penalty * omega(i) * omega(i);
      term.dloss_domega += 2.0 * config.omega_penalty * omega(i);
    }
    out.loss += term.loss / n;
    out.domega[static_cast<std::size_t>(i)] = term.dloss_domega / n;
  }
  return out;
}

bool all_finite(const std::vector<double>& values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

BatchLoss guidance_batch_loss(const TrainConfig& config, const MogSpec& data, const DenoiserPair& denoisers,
                              const GuidanceNet& net, const Reward* reward, std::uint64_t seed) {
  config.validate();
  Rng rng(derive_seed(seed, "train"));
  const BatchDraw draw = draw_batch(config, data, rng);
  const auto pass = net.forward(draw.queries);
  Evaluated ev = evaluate_items(config, denoisers, draw, pass.omega, reward, rng);
  BatchLoss out;
  out.loss = ev.loss;
  out.mean_reward = ev.mean_reward;
  out.gradient = net.backward(pass, ev.domega);
  out.domega = std::move(ev.domega);
  return out;
}

MmdEstimate probe_mmd(const TrainConfig& config, const MogSpec& data, const DenoiserPair& denoisers,
                      const GuidanceWeightFn& weight_fn) {
  SampleConfig sc;
  sc.steps = config.probe_steps;
  sc.churn = 0.0;
  const std::uint64_t seed = derive_seed(config.seed, "probe");
  const auto generated = sample(sc, denoisers, weight_fn, config.probe_samples, seed);
  const auto reference = draw_reference(data, config.probe_samples, seed);
  return eval_mmd_with_se(points_of(generated), points_of(reference), MmdParams{1.0, 1.0}, 20, seed);
}

std::size_t select_checkpoint(const std::vector<TrainCheckpoint>& checkpoints) {
  if (checkpoints.empty()) throw std::invalid_argument("select_checkpoint: no checkpoints");
  std::size_t lowest = 0;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (!checkpoints[i].probe_mmd || !checkpoints[i].probe_se) {
      throw std::invalid_argument("select_checkpoint: checkpoint without probe result");
    }
    if (*checkpoints[i].probe_mmd < *checkpoints[lowest].probe_mmd) lowest = i;
  }
  const double bar = *checkpoints[lowest].probe_mmd + *checkpoints[lowest].probe_se;
  std::size_t chosen = lowest;
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (*checkpoints[i].probe_mmd <= bar && checkpoints[i].mean_abs_omega < checkpoints[chosen].mean_abs_omega) {
      chosen = i;
    }
  }
  return chosen;
}

TrainResult train_guidance(const TrainConfig& config, const MogSpec& data, const DenoiserPair& denoisers,
                           GuidanceNet net, const Reward* reward) {
  config.validate();
  if (config.mode == TrainMode::Reward && !reward) throw std::invalid_argument("train: reward mode needs a reward");

  Rng rng(derive_seed(config.seed, "train"));
  Rng dropout_rng(derive_seed(config.seed, "dropout"));
  std::vector<double> params = net.flat_parameters();
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.weight_decay = config.weight_decay;
  AdamState adam(adam_config, params.size(), net.parameter_blocks());
  std::optional<EmaState> ema;
  if (config.ema_decay > 0.0) ema.emplace(config.ema_decay, params);

  std::vector<TrainRow> record;
  std::vector<TrainCheckpoint> checkpoints;
  std::vector<double> last_good = params;

  auto published = [&]() -> const std::vector<double>& { return ema ? ema->shadow() : params; };

  for (int iter = 0; iter < config.iterations; ++iter) {
    const BatchDraw draw = draw_batch(config, data, rng);
    const auto pass = net.forward(draw.queries, PassMode::Train, &dropout_rng);
    const Evaluated ev = evaluate_items(config, denoisers, draw, pass.omega, reward, rng);

    TrainRow row;
    row.iter = iter;
    row.loss = ev.loss;
    if (reward) row.reward = ev.mean_reward;
    row.mean_abs_omega = pass.omega.cwiseAbs().mean();

    std::vector<double> grads = net.backward(pass, ev.domega);
    if (!std::isfinite(ev.loss) || !all_finite(grads)) {
      record.push_back(row);
      throw TrainingAborted("non-finite loss or gradient at iteration " + std::to_string(iter), iter, last_good,
                            record);
    }
    row.grad_norm = clip_global_norm(grads, config.clip_norm);
    adam.step(params, grads);
    net.set_flat_parameters(params);
    if (ema) ema->update(params);
    record.push_back(row);

    const int done = iter + 1;
    if (done % config.checkpoint_every == 0 || done == config.iterations) {
      TrainCheckpoint ckpt;
      ckpt.iter = done;
      ckpt.parameters = published();
      GuidanceNet snapshot = net;
      snapshot.set_flat_parameters(ckpt.parameters);
      const GuidanceWeightFn fn = std::move(snapshot);
      ckpt.mean_abs_omega = mean_abs_weight(weight_grid(fn, net.num_classes()));
      if (config.select_best) {
        const MmdEstimate probe = probe_mmd(config, data, denoisers, fn);
        ckpt.probe_mmd = probe.value;
        ckpt.probe_se = probe.standard_error;
      }
      last_good = ckpt.parameters;
      checkpoints.push_back(std::move(ckpt));
    }
  }

  GuidanceNet final_net = net;
  final_net.set_flat_parameters(published());
  GuidanceNet best_net = final_net;
  int best_iter = config.iterations;
  if (config.select_best && !checkpoints.empty()) {
    const auto& best = checkpoints[select_checkpoint(checkpoints)];
    best_net.set_flat_parameters(best.parameters);
    best_iter = best.iter;
  }
  return {std::move(final_net), std::move(best_net), best_iter, std::move(record), std::move(checkpoints)};
}

}  // namespace guidelearn
