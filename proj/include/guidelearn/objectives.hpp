#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "guidelearn/denoisers.hpp"
#include "guidelearn/guidance.hpp"
#include "guidelearn/schedule.hpp"

namespace guidelearn {

/// Energy-kernel discrepancy parameters. beta = 2, lambda = 0 is the plain squared-error objective.
struct MmdParams {
  double beta = 1.75;
  double lambda = 1.0;

  void validate() const;
};

/// s ~ U[s_min, 1 - clamp - delta], t - s ~ U[delta, 1 - clamp - s].
struct TimePairSampler {
  double s_min = 0.2;
  double clamp = kTimeClamp;
  double delta = 0.1;

  void validate() const;
};

std::pair<double, double> sample_time_pair(const TimePairSampler& sampler, Rng& rng);

/// One training item: m target particles and m proposal particles sharing (x0, c, s, t).
/// Proposals are affine in omega: proposal_j(omega) = base_j + omega * slope_j.
struct ParticleItem {
  Vec2 x0 = Vec2::Zero();
  int c = 0;
  double s = 0.0;
  double t = 0.0;
  double omega = 0.0;
  DdimTransition transition;
  std::vector<Vec2> targets;      // x_s^j ~ N(alpha_s x0, sigma_s^2 I)
  std::vector<Vec2> noisy;        // proposal x_t^j ~ N(alpha_t x0, sigma_t^2 I)
  std::vector<Vec2> conditional;  // conditional denoiser at noisy_j
  std::vector<Vec2> delta;        // conditional - unconditional at noisy_j
  std::vector<Vec2> base;
  std::vector<Vec2> slope;        // mean_coeff_x0 * delta_j

  int particles() const { return static_cast<int>(targets.size()); }
  Vec2 proposal(int j, double w) const { return base[j] + w * slope[j]; }
  std::vector<Vec2> proposals(double w) const;
};

ParticleItem build_particles(const Vec2& x0, int c, double s, double t, int m, const DenoiserPair& denoisers,
                             double omega, double churn, Rng& rng);
ParticleItem build_particles(const Vec2& x0, int c, double s, double t, int m, const DenoiserPair& denoisers,
                             const GuidanceWeightFn& weight_fn, double churn, Rng& rng);

struct ItemLoss {
  double loss = 0.0;
  double dloss_domega = 0.0;
};

// Loss and derivative evaluated at the item's own omega.
ItemLoss mmd_loss(const ParticleItem& item, const MmdParams& params);
ItemLoss l2_loss(const ParticleItem& item);

class Reward {
 public:
  virtual ~Reward() = default;
  virtual double value(const Vec2& x, int c) const = 0;
  virtual Vec2 gradient(const Vec2& x, int c) const = 0;
  virtual std::string name() const = 0;
};

/// -||x - mu_c||^2
class NegSquaredDistanceReward final : public Reward {
 public:
  explicit NegSquaredDistanceReward(MogSpec spec) : spec_(std::move(spec)) {}
  double value(const Vec2& x, int c) const override;
  Vec2 gradient(const Vec2& x, int c) const override;
  std::string name() const override { return "neg_sq_distance"; }

 private:
  MogSpec spec_;
};

/// log p_data(x) of the full mixture; the class is ignored.
class MixtureLogDensityReward final : public Reward {
 public:
  explicit MixtureLogDensityReward(MogSpec spec) : spec_(std::move(spec)) {}
  double value(const Vec2& x, int c) const override;
  Vec2 gradient(const Vec2& x, int c) const override;
  std::string name() const override { return "mixture_log_density"; }

 private:
  MogSpec spec_;
};

std::unique_ptr<Reward> make_reward(const std::string& name, const MogSpec& spec);

// Maximize: L_R = -mean R (reward increases as the loss falls). AsWritten flips the sign.
enum class RewardSign { Maximize, AsWritten };

struct RewardLoss {
  double loss = 0.0;
  double dloss_domega = 0.0;
  double mean_reward = 0.0;
};

// R evaluated at the guided estimates conditional_j + omega delta_j. Throws NumericalError on a non-finite reward.
RewardLoss reward_loss(const ParticleItem& item, const Reward& reward, RewardSign sign = RewardSign::Maximize);

// mean_j ||x0 - conditional_j - omega delta_j||^2 over the item's noisy points (drawn at time t).
ItemLoss guided_score_matching_loss(const ParticleItem& item);

}  // namespace guidelearn
