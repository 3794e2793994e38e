#include <gtest/gtest.h>

#include <cmath>

#include "guidelearn/schedule.hpp"

namespace {

using namespace guidelearn;

TEST(Schedule, RectifiedFlowValues) {
  const NoiseSchedule sched;
  const auto v = sched.at(0.3);
  EXPECT_DOUBLE_EQ(v.alpha, 0.7);
  EXPECT_DOUBLE_EQ(v.sigma, 0.3);
  EXPECT_DOUBLE_EQ(sched.at(0.0).sigma, 0.0);
  EXPECT_DOUBLE_EQ(sched.at(1.0).alpha, 0.0);
}

TEST(Schedule, LogSnrIsClampedAndFinite) {
  const NoiseSchedule sched;
  const double bound = 2.0 * std::log(0.99 / 0.01);
  EXPECT_NEAR(sched.logsnr(0.0), bound, 1e-12);
  EXPECT_NEAR(sched.logsnr(1.0), -bound, 1e-12);
  EXPECT_NEAR(sched.logsnr_bound(), bound, 1e-12);
  EXPECT_NEAR(sched.logsnr(0.5), 0.0, 1e-15);
  EXPECT_GT(sched.logsnr(0.2), sched.logsnr(0.4));
}

TEST(Ddim, RatioExample) {
  const NoiseSchedule sched;
  EXPECT_NEAR(ddim_ratio(sched, 0.5, 0.8, 1, 1), 0.25, 1e-15);
  EXPECT_NEAR(ddim_ratio(sched, 0.5, 0.8, 0, 1), 0.625, 1e-15);
  EXPECT_NEAR(ddim_ratio(sched, 0.5, 0.8, 2, 2), 0.0625, 1e-15);
}

TEST(Ddim, FullChurnCovarianceExample) {
  const auto tr = ddim_transition(NoiseSchedule{}, 0.5, 0.8, 1.0);
  EXPECT_NEAR(tr.cov_scale, 0.234375, 1e-14);
}

TEST(Ddim, ZeroChurnIsDeterministicEulerStep) {
  const NoiseSchedule sched;
  const double s = 0.3, t = 0.7;
  const auto tr = ddim_transition(sched, s, t, 0.0);
  EXPECT_DOUBLE_EQ(tr.cov_scale, 0.0);
  const Vec2 x0(1.5, -2.0), xt(0.4, 3.0);
  // Velocity of x_t = (1 - t) x0 + t xi is (x_t - x0) / t.
  const Vec2 euler = xt + (s - t) * (xt - x0) / t;
  EXPECT_NEAR((tr.mean(x0, xt) - euler).norm(), 0.0, 1e-14);
}

TEST(Ddim, FullChurnMatchesGaussianPosterior) {
  const NoiseSchedule sched;
  const double s = 0.25, t = 0.9;
  const auto vs = sched.at(s), vt = sched.at(t);
  const double a_ts = vt.alpha / vs.alpha;
  const double var_ts = vt.sigma * vt.sigma - a_ts * a_ts * vs.sigma * vs.sigma;
  const double coeff_xt = a_ts * vs.sigma * vs.sigma / (vt.sigma * vt.sigma);
  const double coeff_x0 = vs.alpha * var_ts / (vt.sigma * vt.sigma);
  const double var = var_ts * vs.sigma * vs.sigma / (vt.sigma * vt.sigma);
  const auto tr = ddim_transition(sched, s, t, 1.0);
  EXPECT_NEAR(tr.mean_coeff_xt, coeff_xt, 1e-14);
  EXPECT_NEAR(tr.mean_coeff_x0, coeff_x0, 1e-14);
  EXPECT_NEAR(tr.cov_scale, var, 1e-14);
}

TEST(Ddim, MarginalMomentsExact) {
  // E[x_s] = a alpha_t x0 + b x0 = alpha_s x0 and Var = a^2 sigma_t^2 + cov = sigma_s^2 for every churn.
  const NoiseSchedule sched;
  for (double churn : {0.0, 0.3, 0.5, 1.0}) {
    for (auto [s, t] : {std::pair{0.2, 0.5}, {0.5, 0.8}, {0.1, 0.95}}) {
      const auto tr = ddim_transition(sched, s, t, churn);
      const auto vs = sched.at(s), vt = sched.at(t);
      EXPECT_NEAR(tr.mean_coeff_xt * vt.alpha + tr.mean_coeff_x0, vs.alpha, 1e-14);
      EXPECT_NEAR(tr.mean_coeff_xt * tr.mean_coeff_xt * vt.sigma * vt.sigma + tr.cov_scale, vs.sigma * vs.sigma, 1e-14);
    }
  }
}

TEST(Ddim, MarginalConsistencyMonteCarlo) {
  const NoiseSchedule sched;
  const Vec2 x0(2.0, -1.0);
  const int n = 40000;
  Rng rng(3);
  for (double churn : {0.0, 1.0}) {
    const double s = 0.4, t = 0.85;
    const auto tr = ddim_transition(sched, s, t, churn);
    Vec2 sum = Vec2::Zero();
    Vec2 sq = Vec2::Zero();
    for (int i = 0; i < n; ++i) {
      const Vec2 xs = transition_sample(tr, x0, noise_sample(sched, x0, t, rng), rng);
      sum += xs;
      sq += xs.cwiseProduct(xs);
    }
    const Vec2 mean = sum / n;
    const Vec2 var = sq / n - mean.cwiseProduct(mean);
    const double sigma_s = sched.at(s).sigma;
    for (int d = 0; d < 2; ++d) {
      EXPECT_NEAR(mean(d), sched.at(s).alpha * x0(d), 4.0 * sigma_s / std::sqrt(n));
      EXPECT_NEAR(var(d), sigma_s * sigma_s, 4.0 * sigma_s * sigma_s * std::sqrt(2.0 / n));
    }
  }
}

TEST(Ddim, RejectsInvalidArguments) {
  const NoiseSchedule sched;
  EXPECT_THROW(ddim_transition(sched, 0.5, 0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(ddim_transition(sched, 0.6, 0.5, 0.0), std::invalid_argument);
  EXPECT_THROW(ddim_transition(sched, 0.0, 0.0, 0.0), std::invalid_argument);
  EXPECT_THROW(ddim_transition(sched, 0.2, 0.5, 1.5), std::invalid_argument);
  EXPECT_THROW(ddim_transition(sched, 0.2, 0.5, -0.1), std::invalid_argument);
}

}  // namespace
