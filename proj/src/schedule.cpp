#include "guidelearn/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace guidelearn {

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double clamp) : kind_(kind), clamp_(clamp) {
  if (!(clamp >= 0.0 && clamp < 0.5)) throw std::invalid_argument("schedule clamp must lie in [0, 0.5)");
}

ScheduleValues NoiseSchedule::at(double t) const {
  switch (kind_) {
    case ScheduleKind::RectifiedFlow:
      return {1.0 - t, t};
  }
  throw std::logic_error("unknown schedule kind");
}

double NoiseSchedule::clamp(double t) const { return std::clamp(t, clamp_, 1.0 - clamp_); }

double NoiseSchedule::logsnr(double t) const {
  const auto [alpha, sigma] = at_clamped(t);
  return 2.0 * (std::log(alpha) - std::log(sigma));
}

double NoiseSchedule::logsnr_bound() const {
  return std::max(std::abs(logsnr(min_time())), std::abs(logsnr(max_time())));
}

double ddim_ratio(const NoiseSchedule& sched, double s, double t, int i, int j) {
  const auto vs = sched.at(s);
  const auto vt = sched.at(t);
  return std::pow(vt.alpha / vs.alpha, i) * std::pow(vs.sigma / vt.sigma, j);
}

DdimTransition ddim_transition(const NoiseSchedule& sched, double s, double t, double churn) {
  if (!(s < t)) throw std::invalid_argument("ddim_transition: requires s < t");
  if (!(s >= 0.0 && t <= 1.0)) throw std::invalid_argument("ddim_transition: times must lie in [0, 1]");
  if (!(churn >= 0.0 && churn <= 1.0)) throw std::invalid_argument("ddim_transition: churn must lie in [0, 1]");
  const auto vs = sched.at(s);
  const auto vt = sched.at(t);
  if (vt.sigma <= 0.0) throw std::invalid_argument("ddim_transition: sigma_t = 0");
  if (vs.alpha <= 0.0) throw std::invalid_argument("ddim_transition: alpha_s = 0");

  const double a = vt.alpha / vs.alpha;
  const double q = vs.sigma / vt.sigma;
  const double r01 = q;
  const double r11 = a * q;
  const double r12 = a * q * q;
  const double r22 = a * a * q * q;
  const double e2 = churn * churn;

  DdimTransition out;
  out.s = s;
  out.t = t;
  out.churn = churn;
  out.mean_coeff_xt = e2 * r12 + (1.0 - e2) * r01;
  out.mean_coeff_x0 = vs.alpha * (1.0 - e2 * r22 - (1.0 - e2) * r11);
  const double keep = e2 * r11 + (1.0 - e2);
  out.cov_scale = std::max(0.0, vs.sigma * vs.sigma * (1.0 - keep * keep));
  return out;
}

Vec2 noise_sample(const NoiseSchedule& sched, const Vec2& x0, double t, Rng& rng) {
  const auto [alpha, sigma] = sched.at(t);
  return alpha * x0 + sigma * rng.normal2();
}

Vec2 transition_sample(const DdimTransition& trans, const Vec2& x0, const Vec2& xt, Rng& rng) {
  return trans.mean(x0, xt) + std::sqrt(trans.cov_scale) * rng.normal2();
}

}  // namespace guidelearn
