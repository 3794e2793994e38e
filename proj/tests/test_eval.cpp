#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "guidelearn/eval.hpp"

namespace {

using namespace guidelearn;

std::vector<Vec2> gaussian_cloud(int n, const Vec2& mean, double sd, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec2> out(static_cast<std::size_t>(n));
  for (auto& p : out) p = mean + sd * rng.normal2();
  return out;
}

TEST(EvalMmd, SinglePairDistance) {
  const std::vector<Vec2> a = {{0, 0}}, b = {{3, 4}};
  EXPECT_DOUBLE_EQ(eval_mmd(a, b, MmdParams{1.0, 0.0}), 5.0);
  EXPECT_THROW(eval_mmd(a, b, MmdParams{1.0, 1.0}), std::invalid_argument);
  EXPECT_THROW(eval_mmd(std::vector<Vec2>{}, b, MmdParams{1.0, 0.0}), std::invalid_argument);
}

TEST(EvalMmd, TwoPointExampleIsMinusOne) {
  const std::vector<Vec2> gen = {{0, 0}, {2, 0}}, ref = {{1, 0}, {1, 0}};
  EXPECT_EQ(eval_mmd(gen, ref, MmdParams{2.0, 1.0}), -1.0);
}

TEST(EvalMmd, SquaredKernelClosedForm) {
  // beta = 2: |mean_x - mean_y|^2 - tr(S_x)/n - tr(S_y)/m with unbiased sample covariances.
  const auto x = gaussian_cloud(37, Vec2(1, -2), 1.5, 1);
  const auto y = gaussian_cloud(23, Vec2(0, 0.5), 0.7, 2);
  auto stats = [](const std::vector<Vec2>& p) {
    Vec2 mean = Vec2::Zero();
    for (const auto& v : p) mean += v / static_cast<double>(p.size());
    double tr = 0.0;
    for (const auto& v : p) tr += (v - mean).squaredNorm() / (p.size() - 1.0);
    return std::make_pair(mean, tr);
  };
  const auto [mx, tx] = stats(x);
  const auto [my, ty] = stats(y);
  const double expected = (mx - my).squaredNorm() - tx / x.size() - ty / y.size();
  EXPECT_NEAR(eval_mmd(x, y, MmdParams{2.0, 1.0}), expected, 1e-10);
}

TEST(EvalMmd, SymmetricAndPermutationInvariant) {
  auto x = gaussian_cloud(50, Vec2(0, 0), 1.0, 3);
  const auto y = gaussian_cloud(40, Vec2(1, 1), 2.0, 4);
  for (double beta : {1.0, 1.75}) {
    const MmdParams p{beta, 1.0};
    const double base = eval_mmd(x, y, p);
    EXPECT_NEAR(eval_mmd(y, x, p), base, 1e-12 * std::abs(base));
    auto shuffled = x;
    std::reverse(shuffled.begin(), shuffled.end());
    std::swap(shuffled[3], shuffled[17]);
    EXPECT_EQ(eval_mmd(shuffled, y, p), base);
  }
}

TEST(EvalMmd, HalvesOfOneDrawAgreeWithinStandardErrors) {
  const auto ref = draw_reference(MogSpec::default_mixture(), 8192, 11);
  const auto pts = points_of(ref);
  const std::span<const Vec2> all(pts);
  const auto est = eval_mmd_with_se(all.first(4096), all.subspan(4096), MmdParams{1.0, 1.0}, 20, 5);
  EXPECT_GT(est.standard_error, 0.0);
  EXPECT_LT(std::abs(est.value), 4 * est.standard_error);
}

TEST(EvalMmd, DetectsShiftedDistribution) {
  const auto x = gaussian_cloud(1000, Vec2(0, 0), 1.0, 6);
  const auto y = gaussian_cloud(1000, Vec2(0.5, 0), 1.0, 7);
  const auto est = eval_mmd_with_se(x, y, MmdParams{1.0, 1.0}, 20, 1);
  EXPECT_GT(est.value, 4 * est.standard_error);
}

TEST(EvalMmd, StandardErrorShrinksWithSampleSize) {
  std::vector<double> se;
  for (int n : {250, 1000, 4000}) {
    const auto x = gaussian_cloud(n, Vec2(0, 0), 1.0, 8);
    const auto y = gaussian_cloud(n, Vec2(0, 0), 1.0, 9);
    se.push_back(eval_mmd_with_se(x, y, MmdParams{1.0, 1.0}, 20, 2).standard_error);
  }
  EXPECT_LT(se[1], se[0]);
  EXPECT_LT(se[2], se[1]);
}

TEST(EvalMmd, StandardErrorDeterministicForSeed) {
  const auto x = gaussian_cloud(300, Vec2(0, 0), 1.0, 12);
  const auto y = gaussian_cloud(300, Vec2(0, 1), 1.0, 13);
  const auto a = eval_mmd_with_se(x, y, MmdParams{1.0, 1.0}, 20, 4);
  const auto b = eval_mmd_with_se(x, y, MmdParams{1.0, 1.0}, 20, 4);
  EXPECT_EQ(a.standard_error, b.standard_error);
  EXPECT_EQ(eval_mmd_with_se(x, y, MmdParams{1.0, 1.0}, 1, 4).standard_error, 0.0);
}

TEST(WeightGrid, ConstantExport) {
  const auto grid = weight_grid(ConstantWeight{0.25}, 4);
  ASSERT_EQ(grid.size(), 4u * 99);
  for (const auto& p : grid) EXPECT_EQ(p.omega, 0.25);
  EXPECT_NEAR(grid.front().t, 0.02, 1e-15);
  EXPECT_NEAR(grid[98].t, 0.99, 1e-15);
  EXPECT_EQ(grid[99].c, 1);
  EXPECT_DOUBLE_EQ(mean_abs_weight(grid), 0.25);
}

TEST(WeightGrid, UsesTrailingGap) {
  const GuidanceWeightFn fn = LimitedIntervalWeight{1.0, 0.5, 0.7};
  for (const auto& p : weight_grid(fn, 1)) EXPECT_EQ(p.omega, (p.t >= 0.5 && p.t <= 0.7) ? 1.0 : 0.0);
  EXPECT_THROW(weight_grid(fn, 1, 0.0), std::invalid_argument);
}

TEST(FigureProtocol, RowsAndUnguidedBaseline) {
  const auto spec = MogSpec::default_mixture();
  const auto pair = analytic_pair(spec);
  const auto reference = draw_reference(spec, 256, 3);
  EvalSettings settings;
  settings.samples = 256;
  settings.seed = 4;
  SampleConfig sc;

  const std::vector<double> only_zero = {0.0};
  const auto single = run_figure_protocol(only_zero, sc, pair, nullptr, reference, settings);
  ASSERT_EQ(single.rows.size(), 1u);
  EXPECT_EQ(single.rows[0].label, "unguided");

  const std::vector<double> grid = {-1.0, 2.0};
  const GuidanceWeightFn learned = ConstantWeight{0.0};
  const auto report = run_figure_protocol(grid, sc, pair, &learned, reference, settings);
  ASSERT_EQ(report.rows.size(), 4u);
  EXPECT_EQ(report.rows[0].label, "constant(-1)");
  EXPECT_EQ(report.rows[2].label, "unguided");
  EXPECT_EQ(report.rows[3].label, "learned");
  EXPECT_EQ(report.rows[2].mmd, report.rows[3].mmd);
  EXPECT_EQ(report.learned_weights.size(), 4u * 99);
  for (const auto& row : report.rows) {
    EXPECT_EQ(row.samples, 256);
    EXPECT_EQ(row.per_class_mmd.size(), 4u);
  }
}

TEST(Evaluate, MeanRewardOfGeneratedSamples) {
  const auto spec = MogSpec::default_mixture();
  const auto pair = analytic_pair(spec);
  const auto reference = draw_reference(spec, 128, 3);
  EvalSettings settings;
  settings.samples = 128;
  const NegSquaredDistanceReward reward(spec);
  const auto row = evaluate_weight_fn("x", SampleConfig{}, pair, ConstantWeight{0.0}, reference, settings, &reward);
  const auto gen = sample(SampleConfig{}, pair, ConstantWeight{0.0}, 128, settings.seed);
  double total = 0.0;
  for (const auto& s : gen) total += reward.value(s.x, s.c);
  EXPECT_DOUBLE_EQ(row.mean_reward, total / 128);
}

}  // namespace
