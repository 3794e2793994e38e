#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "guidelearn/objectives.hpp"
#include "guidelearn/sampler.hpp"

namespace guidelearn {

/// E||x - y||^beta - (lambda/2)(E||x - x'||^beta + E||y - y'||^beta), within-set sums over distinct pairs.
double eval_mmd(std::span<const Vec2> generated, std::span<const Vec2> reference, const MmdParams& params);

struct MmdEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

// Standard error from `resamples` half-size subsamples of both sets (drawn without replacement):
// sd(subsample estimates) / sqrt(2).
MmdEstimate eval_mmd_with_se(std::span<const Vec2> generated, std::span<const Vec2> reference,
                             const MmdParams& params, int resamples, std::uint64_t seed);

std::vector<Vec2> points_of(std::span<const GeneratedSample> samples);
std::vector<GeneratedSample> draw_reference(const MogSpec& spec, int count, std::uint64_t seed);

struct EvalRow {
  std::string label;
  std::optional<double> omega;  // set for constant-weight rows
  double mmd = 0.0;
  double standard_error = 0.0;
  std::vector<double> per_class_mmd;
  double mean_reward = 0.0;
  int samples = 0;
};

struct EvalSettings {
  MmdParams params{1.0, 1.0};
  int samples = 4096;
  int resamples = 20;
  std::uint64_t seed = 0;  // sampler and subsampling streams
};

EvalRow evaluate_weight_fn(const std::string& label, const SampleConfig& sample_config,
                           const DenoiserPair& denoisers, const GuidanceWeightFn& weight_fn,
                           std::span<const GeneratedSample> reference, const EvalSettings& settings,
                           const Reward* reward = nullptr);

// One row per constant omega; every row shares the sampler seed.
std::vector<EvalRow> sweep_constant_guidance(std::span<const double> omega_grid, const SampleConfig& sample_config,
                                             const DenoiserPair& denoisers,
                                             std::span<const GeneratedSample> reference,
                                             const EvalSettings& settings, const Reward* reward = nullptr);

struct WeightGridPoint {
  int c;
  double t;
  double omega;
};

// omega(t - dt, t, c) for t on a uniform grid of [clamp + dt, 1 - clamp].
std::vector<WeightGridPoint> weight_grid(const GuidanceWeightFn& weight_fn, int num_classes, double dt = 0.01,
                                         int points = 99, double clamp = kTimeClamp);
double mean_abs_weight(std::span<const WeightGridPoint> grid);

struct FigureReport {
  // Constant grid rows (the omega = 0 one labelled "unguided", appended when the grid lacks it), then "learned".
  std::vector<EvalRow> rows;
  std::vector<WeightGridPoint> learned_weights;
};

FigureReport run_figure_protocol(std::span<const double> omega_grid, const SampleConfig& sample_config,
                                 const DenoiserPair& denoisers, const GuidanceWeightFn* learned,
                                 std::span<const GeneratedSample> reference, const EvalSettings& settings,
                                 const Reward* reward = nullptr);

}  // namespace guidelearn
