#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "guidelearn/denoisers.hpp"

namespace {

using namespace guidelearn;

// log p_t(x) of the noised mixture, written out independently of the library.
double noised_log_density(const MogSpec& spec, const Vec2& x, double t) {
  const double alpha = 1.0 - t, sigma = t;
  double total = 0.0;
  for (const auto& comp : spec.components) {
    const double v = alpha * alpha * comp.variance + sigma * sigma;
    total += comp.weight * std::exp(-(x - alpha * comp.mean).squaredNorm() / (2.0 * v)) / (2.0 * std::numbers::pi * v);
  }
  return std::log(total);
}

TEST(Mog, DefaultMixture) {
  const auto spec = MogSpec::default_mixture();
  ASSERT_EQ(spec.num_classes(), 4);
  EXPECT_EQ(spec.components[0].mean, Vec2(10.0, 10.0));
  EXPECT_DOUBLE_EQ(spec.components[0].variance, 5.0);
  EXPECT_DOUBLE_EQ(spec.components[3].variance, 1.0);
  EXPECT_NO_THROW(spec.validate());
  // Per-axis variance: 100 (means) + mean component variance 2.
  EXPECT_NEAR(spec.data_std(), std::sqrt(102.0), 1e-12);
}

TEST(Mog, ValidateRejectsBadSpecs) {
  auto spec = MogSpec::default_mixture();
  spec.components[1].weight = 0.5;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  spec = MogSpec::default_mixture();
  spec.components[2].variance = 0.0;
  EXPECT_THROW(spec.validate(), std::invalid_argument);
  EXPECT_THROW(MogSpec{}.validate(), std::invalid_argument);
}

TEST(Mog, SampleJointMoments) {
  const auto spec = MogSpec::default_mixture();
  Rng rng(4);
  const int n = 40000;
  std::vector<int> counts(4, 0);
  Vec2 sum0 = Vec2::Zero();
  for (int i = 0; i < n; ++i) {
    const auto p = sample_joint(spec, rng);
    ++counts[static_cast<std::size_t>(p.c)];
    if (p.c == 0) sum0 += p.x;
  }
  for (int c : counts) EXPECT_NEAR(c / static_cast<double>(n), 0.25, 4.0 * std::sqrt(0.25 * 0.75 / n));
  const Vec2 mean0 = sum0 / counts[0];
  EXPECT_NEAR(mean0.x(), 10.0, 4.0 * std::sqrt(5.0 / counts[0]));
  EXPECT_NEAR(mean0.y(), 10.0, 4.0 * std::sqrt(5.0 / counts[0]));
}

TEST(AnalyticDenoiser, LimitsInTime) {
  const auto spec = MogSpec::default_mixture();
  const NoiseSchedule sched;
  const Vec2 x(3.0, -1.0);
  EXPECT_NEAR((analytic_denoise_conditional(spec, sched, x, 0.0, 2) - x).norm(), 0.0, 1e-12);
  EXPECT_NEAR((analytic_denoise_conditional(spec, sched, x, 1.0, 2) - spec.components[2].mean).norm(), 0.0, 1e-12);
}

TEST(AnalyticDenoiser, ConditionalMatchesImportanceSampling) {
  const auto spec = MogSpec::default_mixture();
  const NoiseSchedule sched;
  const double t = 0.6;
  const Vec2 xt(2.0, 5.0);
  const int c = 1;
  // Proposal: the prior component; weights are the likelihood N(x_t; alpha x0, sigma^2).
  Rng rng(8);
  const auto& comp = spec.components[c];
  const int n = 200000;
  Vec2 num = Vec2::Zero();
  double den = 0.0, den2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vec2 x0 = comp.mean + std::sqrt(comp.variance) * rng.normal2();
    const double w = std::exp(-(xt - 0.4 * x0).squaredNorm() / (2.0 * t * t));
    num += w * x0;
    den += w;
    den2 += w * w;
  }
  const Vec2 estimate = num / den;
  const double ess = den * den / den2;
  const Vec2 exact = analytic_denoise_conditional(spec, sched, xt, t, c);
  // Posterior std per axis bounded by the prior std.
  const double tol = 4.0 * std::sqrt(comp.variance / ess);
  EXPECT_NEAR(estimate.x(), exact.x(), tol);
  EXPECT_NEAR(estimate.y(), exact.y(), tol);
}

TEST(AnalyticDenoiser, ResponsibilitiesAreStableFarAway) {
  const auto spec = MogSpec::default_mixture();
  const NoiseSchedule sched;
  const auto r = posterior_responsibilities(spec, sched, Vec2(1e4, -1e4), 0.05);
  double total = 0.0;
  for (double p : r) {
    EXPECT_TRUE(std::isfinite(p));
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  // Far out the widest component owns the tail, not the nearest mean.
  EXPECT_NEAR(r[0], 1.0, 1e-12);
}

TEST(AnalyticDenoiser, TweedieIdentity) {
  const auto spec = MogSpec::default_mixture();
  const NoiseSchedule sched;
  for (double t : {0.1, 0.35, 0.6, 0.9}) {
    for (const Vec2& x : {Vec2(0.0, 0.0), Vec2(4.0, 7.0), Vec2(-3.0, -6.0)}) {
      const auto [alpha, sigma] = sched.at(t);
      const Vec2 tweedie = (alpha * analytic_denoise_unconditional(spec, sched, x, t) - x) / (sigma * sigma);
      const Vec2 score = marginal_score(spec, sched, x, t);
      EXPECT_NEAR((tweedie - score).norm(), 0.0, 1e-8 * std::max(1.0, score.norm()));
      const double h = 1e-5;
      Vec2 fd;
      for (int d = 0; d < 2; ++d) {
        Vec2 e = Vec2::Zero();
        e(d) = h;
        fd(d) = (noised_log_density(spec, x + e, t) - noised_log_density(spec, x - e, t)) / (2 * h);
      }
      EXPECT_NEAR((fd - score).norm(), 0.0, 1e-5 * std::max(1.0, score.norm()));
    }
  }
}

TEST(AnalyticDenoiser, RejectsInvalidClass) {
  const auto pair = analytic_pair(MogSpec::default_mixture());
  EXPECT_THROW(pair.conditional(Vec2::Zero(), 0.5, 4), std::out_of_range);
  EXPECT_THROW(pair.conditional(Vec2::Zero(), 0.5, -1), std::out_of_range);
  EXPECT_THROW(pair.conditional(Vec2::Zero(), 0.5, std::nullopt), std::invalid_argument);
  EXPECT_NO_THROW(pair.unconditional(Vec2::Zero(), 0.5, std::nullopt));
}

TEST(Corruption, IdentityIsBitExact) {
  const auto spec = MogSpec::default_mixture();
  const auto clean = analytic_pair(spec);
  const auto same = corrupted_pair(spec, CorruptionSpec{});
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const Vec2 x = 8.0 * rng.normal2();
    const double t = rng.uniform(0.01, 0.99);
    const int c = i % 4;
    EXPECT_EQ(clean.conditional(x, t, c), same.conditional(x, t, c));
    EXPECT_EQ(clean.unconditional(x, t, std::nullopt), same.unconditional(x, t, std::nullopt));
  }
}

TEST(Corruption, ShrinksMeansAndAddsField) {
  const auto spec = MogSpec::default_mixture();
  CorruptionSpec cs;
  cs.mean_shrink = 0.5;
  const auto shrunk = corrupted_pair(spec, cs);
  EXPECT_NEAR((shrunk.conditional(Vec2::Zero(), 1.0, 0) - Vec2(5.0, 5.0)).norm(), 0.0, 1e-12);
  ASSERT_NE(shrunk.conditional.mixture(), nullptr);
  EXPECT_EQ(shrunk.conditional.mixture()->components[1].mean, Vec2(-5.0, 5.0));

  cs.mean_shrink = 1.0;
  cs.noise_scale = 0.3;
  cs.seed = 5;
  const auto noisy = corrupted_pair(spec, cs);
  const auto field = PerturbationField::from_seed(5);
  const Vec2 x(1.0, 2.0);
  const Vec2 expected = analytic_denoise_conditional(spec, NoiseSchedule{}, x, 0.4, 3) + 0.3 * field(x, 0.4);
  EXPECT_NEAR((noisy.conditional(x, 0.4, 3) - expected).norm(), 0.0, 1e-12);
  EXPECT_EQ(noisy.conditional.kind(), DenoiserKind::Corrupted);
}

TEST(Corruption, WeightSkewRenormalises) {
  CorruptionSpec cs;
  cs.weight_skew = 1.0;
  const auto out = corrupt_spec(MogSpec::default_mixture(), cs);
  EXPECT_NO_THROW(out.validate());
  EXPECT_GT(out.components[0].weight, out.components[3].weight);
}

TEST(Corruption, RequiresAnalyticBase) {
  NeuralDenoiserConfig nc;
  nc.iterations = 0;
  auto model = std::make_shared<NeuralDenoiserModel>(initial_neural_denoiser(nc, MogSpec::default_mixture()));
  const auto pair = neural_pair(model);
  EXPECT_THROW(corrupt(pair.conditional, CorruptionSpec{}), std::invalid_argument);
}

TEST(NeuralDenoiser, PreconditioningLimits) {
  NeuralDenoiserConfig nc;
  const auto model = initial_neural_denoiser(nc, MogSpec::default_mixture());
  const auto p0 = model.preconditioning(0.0);
  EXPECT_DOUBLE_EQ(p0.skip, 1.0);
  EXPECT_DOUBLE_EQ(p0.out, 0.0);
  const auto p1 = model.preconditioning(1.0);
  EXPECT_DOUBLE_EQ(p1.skip, 0.0);
  EXPECT_NEAR(p1.out, model.data_std(), 1e-12);
}

TEST(NeuralDenoiser, FeaturesLayout) {
  NeuralDenoiserConfig nc;
  const auto model = initial_neural_denoiser(nc, MogSpec::default_mixture());
  const std::vector<Vec2> xt{Vec2(1.0, 2.0), Vec2(-1.0, 0.5)};
  const std::vector<double> t{0.3, 0.7};
  const std::vector<int> c{2, -1};
  const auto f = model.features(xt, t, c);
  ASSERT_EQ(f.rows(), 2 + 128 + 4);
  EXPECT_DOUBLE_EQ(f(2 + 128 + 2, 0), 1.0);
  EXPECT_DOUBLE_EQ(f.col(1).tail(4).sum(), 0.0);
  EXPECT_NEAR(f(0, 0), model.preconditioning(0.3).in * 1.0, 1e-15);
}

TEST(NeuralDenoiser, TrainingReducesHeldOutLoss) {
  const auto spec = MogSpec::default_mixture();
  NeuralDenoiserConfig nc;
  nc.seed = 3;
  nc.iterations = 0;
  const auto untrained = train_neural_denoiser(nc, spec);
  nc.iterations = 300;
  const auto trained = train_neural_denoiser(nc, spec);
  EXPECT_EQ(trained.loss_history.size(), 300u);
  EXPECT_EQ(trained.model->iterations_trained, 300);
  EXPECT_LT(neural_denoiser_loss(*trained.model, spec, 2048, 1), neural_denoiser_loss(*untrained.model, spec, 2048, 1));
}

TEST(NeuralDenoiser, TrainingIsDeterministic) {
  const auto spec = MogSpec::default_mixture();
  NeuralDenoiserConfig nc;
  nc.iterations = 20;
  nc.seed = 9;
  const auto a = train_neural_denoiser(nc, spec);
  const auto b = train_neural_denoiser(nc, spec);
  EXPECT_EQ(a.loss_history, b.loss_history);
  EXPECT_EQ(a.model->net().flat_parameters(), b.model->net().flat_parameters());
}

TEST(NeuralDenoiser, BatchMatchesPointwise) {
  NeuralDenoiserConfig nc;
  auto model = std::make_shared<NeuralDenoiserModel>(initial_neural_denoiser(nc, MogSpec::default_mixture()));
  const auto pair = neural_pair(model);
  const std::vector<Vec2> xs{Vec2(1.0, 2.0), Vec2(-3.0, 0.5), Vec2(0.0, 9.0)};
  std::vector<Vec2> out(xs.size());
  pair.conditional.batch(xs, 0.4, 1, out);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    EXPECT_NEAR((out[i] - pair.conditional(xs[i], 0.4, 1)).norm(), 0.0, 1e-12);
  }
  EXPECT_THROW(pair.conditional(xs[0], 0.4, 7), std::out_of_range);
}

}  // namespace
