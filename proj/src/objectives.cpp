#include "guidelearn/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "guidelearn/errors.hpp"

namespace guidelearn {

void MmdParams::validate() const {
  if (!(beta > 0.0 && beta <= 2.0)) throw std::invalid_argument("mmd: beta must lie in (0, 2]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mmd: lambda must lie in [0, 1]");
}

void TimePairSampler::validate() const {
  if (!(s_min >= 0.0 && delta > 0.0 && clamp >= 0.0)) throw std::invalid_argument("time sampler: negative parameter");
  if (!(s_min + delta < 1.0 - clamp)) throw std::invalid_argument("time sampler: requires s_min + delta < 1 - clamp");
}

std::pair<double, double> sample_time_pair(const TimePairSampler& sampler, Rng& rng) {
  sampler.validate();
  const double top = 1.0 - sampler.clamp;
  const double s = rng.uniform(sampler.s_min, top - sampler.delta);
  const double gap = rng.uniform(sampler.delta, top - s);
  return {s, std::min(s + gap, top)};
}

std::vector<Vec2> ParticleItem::proposals(double w) const {
  std::vector<Vec2> out(base.size());
  for (std::size_t j = 0; j < base.size(); ++j) out[j] = base[j] + w * slope[j];
  return out;
}

ParticleItem build_particles(const Vec2& x0, int c, double s, double t, int m, const DenoiserPair& denoisers,
                             double omega, double churn, Rng& rng) {
  if (m < 1) throw std::invalid_argument("build_particles: need at least one particle");
  const NoiseSchedule& sched = denoisers.conditional.schedule();
  ParticleItem item;
  item.x0 = x0;
  item.c = c;
  item.s = s;
  item.t = t;
  item.omega = omega;
  item.transition = ddim_transition(sched, s, t, churn);

  const auto n = static_cast<std::size_t>(m);
  item.targets.resize(n);
  item.noisy.resize(n);
  for (std::size_t j = 0; j < n; ++j) item.targets[j] = noise_sample(sched, x0, s, rng);
  for (std::size_t j = 0; j < n; ++j) item.noisy[j] = noise_sample(sched, x0, t, rng);

  item.conditional.resize(n);
  std::vector<Vec2> uncond(n);
  denoisers.conditional.batch(item.noisy, t, c, item.conditional);
  denoisers.unconditional.batch(item.noisy, t, std::nullopt, uncond);

  const DdimTransition& tr = item.transition;
  const double noise_scale = std::sqrt(tr.cov_scale);
  item.delta.resize(n);
  item.base.resize(n);
  item.slope.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec2 xi = rng.normal2();
    item.delta[j] = item.conditional[j] - uncond[j];
    item.slope[j] = tr.mean_coeff_x0 * item.delta[j];
    item.base[j] = tr.mean_coeff_xt * item.noisy[j] + tr.mean_coeff_x0 * item.conditional[j] + noise_scale * xi;
  }
  return item;
}

ParticleItem build_particles(const Vec2& x0, int c, double s, double t, int m, const DenoiserPair& denoisers,
                             const GuidanceWeightFn& weight_fn, double churn, Rng& rng) {
  return build_particles(x0, c, s, t, m, denoisers, weight(weight_fn, s, t, c), churn, rng);
}

namespace {

// ||v||^beta and its derivative along dv.
std::pair<double, double> power_norm(const Vec2& v, const Vec2& dv, double beta) {
  if (beta == 2.0) return {v.squaredNorm(), 2.0 * v.dot(dv)};
  const double r = v.norm();
  if (r == 0.0) return {0.0, 0.0};
  const double p = std::pow(r, beta);
  return {p, beta * p / (r * r) * v.dot(dv)};
}

}  // namespace

ItemLoss mmd_loss(const ParticleItem& item, const MmdParams& params) {
  params.validate();
  const int m = item.particles();
  if (params.lambda > 0.0 && m < 2) throw std::invalid_argument("mmd_loss: interaction term needs m >= 2");
  const auto prop = item.proposals(item.omega);

  ItemLoss out;
  double cross = 0.0;
  double dcross = 0.0;
  for (int j = 0; j < m; ++j) {
    const auto [v, dv] = power_norm(prop[j] - item.targets[j], item.slope[j], params.beta);
    cross += v;
    dcross += dv;
  }
  out.loss = cross / m;
  out.dloss_domega = dcross / m;

  if (params.lambda > 0.0) {
    double inter = 0.0;
    double dinter = 0.0;
    for (int j = 0; j < m; ++j) {
      for (int k = j + 1; k < m; ++k) {
        const auto [v, dv] = power_norm(prop[j] - prop[k], item.slope[j] - item.slope[k], params.beta);
        inter += v;
        dinter += dv;
      }
    }
    // Unordered pairs counted once: (lambda/2) * 2 / (m (m - 1)).
    const double scale = params.lambda / (static_cast<double>(m) * (m - 1));
    out.loss -= scale * inter;
    out.dloss_domega -= scale * dinter;
  }
  return out;
}

ItemLoss l2_loss(const ParticleItem& item) {
  if (item.particles() != 1) throw std::invalid_argument("l2_loss: requires exactly one particle");
  const Vec2 v = item.proposal(0, item.omega) - item.targets[0];
  return {v.squaredNorm(), 2.0 * v.dot(item.slope[0])};
}

double NegSquaredDistanceReward::value(const Vec2& x, int c) const {
  return -(x - spec_.components.at(static_cast<std::size_t>(c)).mean).squaredNorm();
}

Vec2 NegSquaredDistanceReward::gradient(const Vec2& x, int c) const {
  return -2.0 * (x - spec_.components.at(static_cast<std::size_t>(c)).mean);
}

namespace {

// log p(x) and its gradient for the clean mixture.
std::pair<double, Vec2> mixture_log_density(const MogSpec& spec, const Vec2& x) {
  const std::size_t k = spec.components.size();
  std::vector<double> logs(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    const auto& comp = spec.components[i];
    logs[i] = std::log(comp.weight) - std::log(2.0 * std::numbers::pi * comp.variance) -
              (x - comp.mean).squaredNorm() / (2.0 * comp.variance);
    top = std::max(top, logs[i]);
  }
  double total = 0.0;
  for (double l : logs) total += std::exp(l - top);
  const double logp = top + std::log(total);
  Vec2 grad = Vec2::Zero();
  for (std::size_t i = 0; i < k; ++i) {
    const auto& comp = spec.components[i];
    grad += std::exp(logs[i] - logp) * (comp.mean - x) / comp.variance;
  }
  return {logp, grad};
}

}  // namespace

double MixtureLogDensityReward::value(const Vec2& x, int) const { return mixture_log_density(spec_, x).first; }

Vec2 MixtureLogDensityReward::gradient(const Vec2& x, int) const { return mixture_log_density(spec_, x).second; }

std::unique_ptr<Reward> make_reward(const std::string& name, const MogSpec& spec) {
  if (name == "neg_sq_distance") return std::make_unique<NegSquaredDistanceReward>(spec);
  if (name == "mixture_log_density") return std::make_unique<MixtureLogDensityReward>(spec);
  throw std::invalid_argument("unknown reward: " + name);
}

RewardLoss reward_loss(const ParticleItem& item, const Reward& reward, RewardSign sign) {
  const int m = item.particles();
  const double direction = sign == RewardSign::Maximize ? -1.0 : 1.0;
  double total = 0.0;
  double dtotal = 0.0;
  for (int j = 0; j < m; ++j) {
    const Vec2 x = item.conditional[j] + item.omega * item.delta[j];
    const double r = reward.value(x, item.c);
    if (!std::isfinite(r)) throw NumericalError("reward_loss: non-finite reward from " + reward.name());
    total += r;
    dtotal += reward.gradient(x, item.c).dot(item.delta[j]);
  }
  RewardLoss out;
  out.mean_reward = total / m;
  out.loss = direction * out.mean_reward;
  out.dloss_domega = direction * dtotal / m;
  return out;
}

ItemLoss guided_score_matching_loss(const ParticleItem& item) {
  const int m = item.particles();
  ItemLoss out;
  for (int j = 0; j < m; ++j) {
    const Vec2 r = item.x0 - item.conditional[j] - item.omega * item.delta[j];
    out.loss += r.squaredNorm();
    out.dloss_domega -= 2.0 * r.dot(item.delta[j]);
  }
  out.loss /= m;
  out.dloss_domega /= m;
  return out;
}

}  // namespace guidelearn
