#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "guidelearn/trainer.hpp"

namespace {

using namespace guidelearn;

const MogSpec kSpec = MogSpec::default_mixture();

GuidanceNet small_net(std::uint64_t seed, double jitter = 0.0) {
  GuidanceNetConfig cfg;
  cfg.embed_hidden = 8;
  cfg.embed_dim = 8;
  cfg.hidden = 8;
  cfg.hidden_layers = 2;
  Rng rng(seed);
  GuidanceNet net(cfg, rng);
  if (jitter > 0.0) {
    auto flat = net.flat_parameters();
    for (auto& v : flat) v += jitter * rng.normal();
    net.set_flat_parameters(flat);
  }
  return net;
}

TrainConfig quick_config(TrainMode mode = TrainMode::SelfConsistency) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.iterations = 20;
  cfg.batch_size = 8;
  cfg.particles = mode == TrainMode::L2 ? 1 : 4;
  cfg.checkpoint_every = 10;
  cfg.probe_samples = 64;
  cfg.probe_steps = 4;
  cfg.seed = 5;
  return cfg;
}

double median_of(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

TEST(TrainMode, NamesRoundTrip) {
  for (auto mode : {TrainMode::SelfConsistency, TrainMode::L2, TrainMode::Reward, TrainMode::GuidedSM}) {
    EXPECT_EQ(parse_train_mode(train_mode_name(mode)), mode);
  }
  EXPECT_THROW(parse_train_mode("sft"), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.mode = TrainMode::L2;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.particles = 1;
  EXPECT_NO_THROW(cfg.validate());
  cfg = TrainConfig{};
  cfg.particles = 1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.reward_weight = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.churn = 1.1;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TrainGuidance, ZeroIterationsReturnsNetUnchanged) {
  auto cfg = quick_config();
  cfg.iterations = 0;
  const GuidanceNet net = small_net(1, 0.2);
  const auto result = train_guidance(cfg, kSpec, analytic_pair(kSpec), net);
  EXPECT_EQ(result.final_net.flat_parameters(), net.flat_parameters());
  EXPECT_EQ(result.best_net.flat_parameters(), net.flat_parameters());
  EXPECT_TRUE(result.record.empty());
  EXPECT_TRUE(result.checkpoints.empty());
}

TEST(TrainGuidance, RewardModeNeedsReward) {
  EXPECT_THROW(train_guidance(quick_config(TrainMode::Reward), kSpec, analytic_pair(kSpec), small_net(1)),
               std::invalid_argument);
}

TEST(TrainGuidance, BitIdenticalReruns) {
  auto cfg = quick_config();
  const NegSquaredDistanceReward reward(kSpec);
  const auto pair = analytic_pair(kSpec);
  const auto a = train_guidance(cfg, kSpec, pair, small_net(2), &reward);
  const auto b = train_guidance(cfg, kSpec, pair, small_net(2), &reward);
  ASSERT_EQ(a.record.size(), 20u);
  for (std::size_t i = 0; i < a.record.size(); ++i) {
    EXPECT_EQ(a.record[i].loss, b.record[i].loss);
    EXPECT_EQ(a.record[i].grad_norm, b.record[i].grad_norm);
    EXPECT_EQ(a.record[i].reward, b.record[i].reward);
  }
  EXPECT_EQ(a.final_net.flat_parameters(), b.final_net.flat_parameters());
  EXPECT_EQ(a.best_iter, b.best_iter);
  ASSERT_EQ(a.checkpoints.size(), 2u);
  EXPECT_EQ(a.checkpoints[1].iter, 20);
  EXPECT_EQ(a.checkpoints[1].parameters, a.final_net.flat_parameters());
  EXPECT_TRUE(a.record[0].reward.has_value());

  cfg.seed = 6;
  const auto c = train_guidance(cfg, kSpec, pair, small_net(2), &reward);
  EXPECT_NE(a.record[0].loss, c.record[0].loss);
}

TEST(TrainGuidance, EmaPublishesShadow) {
  auto cfg = quick_config();
  cfg.ema_decay = 0.9;
  cfg.select_best = false;
  const auto pair = analytic_pair(kSpec);
  const auto with = train_guidance(cfg, kSpec, pair, small_net(3));
  cfg.ema_decay = 0.0;
  const auto without = train_guidance(cfg, kSpec, pair, small_net(3));
  EXPECT_EQ(with.record.back().loss, without.record.back().loss);
  EXPECT_NE(with.final_net.flat_parameters(), without.final_net.flat_parameters());
}

TEST(TrainGuidance, DenoiserIsNotModified) {
  NeuralDenoiserConfig nc;
  nc.iterations = 5;
  nc.hidden = 16;
  nc.hidden_layers = 2;
  nc.embedding_dim = 8;
  auto trained = train_neural_denoiser(nc, kSpec);
  const auto before = trained.model->net().flat_parameters();
  const auto pair = neural_pair(trained.model);
  auto cfg = quick_config();
  cfg.iterations = 5;
  cfg.select_best = false;
  train_guidance(cfg, kSpec, pair, small_net(4));
  EXPECT_EQ(trained.model->net().flat_parameters(), before);
}

TEST(TrainGuidance, NonFiniteStepAbortsWithLastGoodParameters) {
  auto cfg = quick_config(TrainMode::L2);
  cfg.learning_rate = 1e300;
  cfg.select_best = false;
  const GuidanceNet net = small_net(5, 0.3);
  try {
    train_guidance(cfg, kSpec, analytic_pair(kSpec), net);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_EQ(e.last_good_parameters, net.flat_parameters());
    EXPECT_EQ(static_cast<int>(e.record.size()), e.iter + 1);
    EXPECT_LT(e.iter, 10);
  }
}

TEST(BatchLoss, ParameterGradientMatchesFiniteDifferences) {
  const auto pair = analytic_pair(kSpec);
  const NegSquaredDistanceReward reward(kSpec);
  for (auto mode : {TrainMode::SelfConsistency, TrainMode::L2, TrainMode::Reward, TrainMode::GuidedSM}) {
    auto cfg = quick_config(mode);
    cfg.reward_weight = 0.5;
    cfg.omega_penalty = 0.01;
    const GuidanceNet net = small_net(6, 0.3);
    const auto at = guidance_batch_loss(cfg, kSpec, pair, net, &reward, 77);
    const auto flat = net.flat_parameters();
    ASSERT_EQ(at.gradient.size(), flat.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < flat.size(); i += 7) {
      auto p = flat, m = flat;
      p[i] += h;
      m[i] -= h;
      GuidanceNet np = net, nm = net;
      np.set_flat_parameters(p);
      nm.set_flat_parameters(m);
      const double fd = (guidance_batch_loss(cfg, kSpec, pair, np, &reward, 77).loss -
                         guidance_batch_loss(cfg, kSpec, pair, nm, &reward, 77).loss) /
                        (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(at.gradient[i]), 1e-6});
      EXPECT_LT(std::abs(at.gradient[i] - fd) / scale, 1e-5) << train_mode_name(mode) << " param " << i;
    }
  }
}

TEST(BatchLoss, ZeroRewardWeightLeavesObjectiveAlone) {
  const auto pair = analytic_pair(kSpec);
  const NegSquaredDistanceReward reward(kSpec);
  auto cfg = quick_config(TrainMode::Reward);
  cfg.reward_weight = 0.0;
  const GuidanceNet net = small_net(7, 0.3);
  const auto with = guidance_batch_loss(cfg, kSpec, pair, net, &reward, 3);
  cfg.mode = TrainMode::SelfConsistency;
  const auto plain = guidance_batch_loss(cfg, kSpec, pair, net, nullptr, 3);
  EXPECT_EQ(with.loss, plain.loss);
  EXPECT_EQ(with.gradient, plain.gradient);
}

TEST(SelectCheckpoint, OneStandardErrorRule) {
  auto ck = [](int iter, double mmd, double se, double w) {
    TrainCheckpoint c;
    c.iter = iter;
    c.probe_mmd = mmd;
    c.probe_se = se;
    c.mean_abs_omega = w;
    return c;
  };
  // Lowest is iter 200; iter 300 is within one SE and more weakly guided; iter 100 is not within one SE.
  const std::vector<TrainCheckpoint> cks = {ck(100, 0.50, 0.01, 0.0), ck(200, 0.30, 0.02, 2.0),
                                            ck(300, 0.315, 0.02, 1.0), ck(400, 0.40, 0.02, 0.5)};
  EXPECT_EQ(select_checkpoint(cks), 2u);
  EXPECT_EQ(select_checkpoint({ck(100, 0.1, 0.0, 3.0)}), 0u);
  EXPECT_THROW(select_checkpoint({}), std::invalid_argument);
  TrainCheckpoint bare;
  EXPECT_THROW(select_checkpoint({bare}), std::invalid_argument);
}

// A shrunken denoiser leaves room for guidance to help, so the objective should fall.
TEST(TrainGuidance, LossFallsWhenGuidanceHelps) {
  const CorruptionSpec corruption{0.6, 0.0, 0.5, 1};
  const auto pair = corrupted_pair(kSpec, corruption);
  TrainConfig cfg;
  cfg.iterations = 1000;
  cfg.select_best = false;
  cfg.seed = 9;
  GuidanceNetConfig gc;
  Rng rng(1);
  const auto result = train_guidance(cfg, kSpec, pair, GuidanceNet(gc, rng));
  std::vector<double> early, late;
  for (const auto& row : result.record) {
    if (row.iter < 100) early.push_back(row.loss);
    if (row.iter >= 900) late.push_back(row.loss);
  }
  EXPECT_LT(median_of(late), median_of(early));
}

}  // namespace
