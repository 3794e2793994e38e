#pragma once

#include "guidelearn/rng.hpp"

namespace guidelearn {

// Safety margin: model times live in [kTimeClamp, 1 - kTimeClamp].
inline constexpr double kTimeClamp = 1e-2;

enum class ScheduleKind { RectifiedFlow };

struct ScheduleValues {
  double alpha;
  double sigma;
};

/// Noising path x_t = alpha_t x0 + sigma_t xi.
class NoiseSchedule {
 public:
  NoiseSchedule() : NoiseSchedule(ScheduleKind::RectifiedFlow, kTimeClamp) {}
  explicit NoiseSchedule(ScheduleKind kind, double clamp = kTimeClamp);

  ScheduleKind kind() const { return kind_; }
  double clamp_margin() const { return clamp_; }
  double min_time() const { return clamp_; }
  double max_time() const { return 1.0 - clamp_; }

  // Exact schedule values for t in [0, 1]; no clamping.
  ScheduleValues at(double t) const;
  double clamp(double t) const;
  ScheduleValues at_clamped(double t) const { return at(clamp(t)); }

  /// log(alpha_t^2 / sigma_t^2), evaluated at the clamped time so it is finite.
  double logsnr(double t) const;
  /// Largest |logsnr| reachable inside the clamp window.
  double logsnr_bound() const;

 private:
  ScheduleKind kind_;
  double clamp_;
};

// r_{i,j}(s,t) = (alpha_t/alpha_s)^i (sigma_s/sigma_t)^j
double ddim_ratio(const NoiseSchedule& sched, double s, double t, int i, int j);

/// DDIM backward kernel p(x_s | x_t, x0) = N(mean_coeff_xt x_t + mean_coeff_x0 x0, cov_scale Id).
struct DdimTransition {
  double s = 0.0;
  double t = 0.0;
  double churn = 0.0;
  double mean_coeff_xt = 0.0;
  double mean_coeff_x0 = 0.0;
  double cov_scale = 0.0;

  Vec2 mean(const Vec2& x0, const Vec2& xt) const { return mean_coeff_xt * xt + mean_coeff_x0 * x0; }
};

// Throws std::invalid_argument when s >= t, sigma_t = 0 or churn outside [0,1].
DdimTransition ddim_transition(const NoiseSchedule& sched, double s, double t, double churn);

Vec2 noise_sample(const NoiseSchedule& sched, const Vec2& x0, double t, Rng& rng);

Vec2 transition_sample(const DdimTransition& trans, const Vec2& x0, const Vec2& xt, Rng& rng);

}  // namespace guidelearn
