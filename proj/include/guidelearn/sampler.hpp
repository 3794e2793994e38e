#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "guidelearn/denoisers.hpp"
#include "guidelearn/guidance.hpp"

namespace guidelearn {

struct SampleConfig {
  int steps = 10;
  std::vector<double> grid;  // explicit t_0 < ... < t_N; empty means uniform on [clamp, 1 - clamp]
  double churn = 0.0;
  std::optional<int> fixed_class;  // otherwise each chain draws its class uniformly

  // Validated grid of steps + 1 times.
  std::vector<double> time_grid(const NoiseSchedule& sched) const;
};

struct GeneratedSample {
  Vec2 x;
  int c;
};

int num_classes(const DenoiserPair& denoisers);

/// Guided DDIM ancestral sampling. Chain i draws from its own stream derive_seed(seed, "chain", i),
/// so results do not depend on batch layout.
std::vector<GeneratedSample> sample(const SampleConfig& config, const DenoiserPair& denoisers,
                                   const GuidanceWeightFn& weight_fn, int count, std::uint64_t seed);

struct Trajectory {
  int c = 0;
  std::vector<double> times;  // t_N, ..., t_0
  std::vector<Vec2> states;   // matching times; states.back() is the sample
  std::vector<double> omegas; // omegas[k] used for the step out of states[k]; one fewer than states
};

Trajectory sample_trajectory(const SampleConfig& config, const DenoiserPair& denoisers,
                             const GuidanceWeightFn& weight_fn, std::uint64_t seed, int chain = 0);

}  // namespace guidelearn
