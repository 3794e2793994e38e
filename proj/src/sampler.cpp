#include "guidelearn/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace guidelearn {

std::vector<double> SampleConfig::time_grid(const NoiseSchedule& sched) const {
  std::vector<double> out = grid;
  if (out.empty()) {
    if (steps < 1) throw std::invalid_argument("sampler: steps must be positive");
    const double lo = sched.min_time();
    const double hi = sched.max_time();
    out.resize(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) out[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / steps;
    out.back() = hi;
  }
  if (out.size() < 2) throw std::invalid_argument("sampler: grid needs at least two times");
  for (std::size_t k = 1; k < out.size(); ++k) {
    if (!(out[k - 1] < out[k])) throw std::invalid_argument("sampler: grid must be strictly increasing");
  }
  if (out.front() < 0.0 || out.back() > 1.0) throw std::invalid_argument("sampler: grid outside [0, 1]");
  if (!(churn >= 0.0 && churn <= 1.0)) throw std::invalid_argument("sampler: churn must lie in [0, 1]");
  return out;
}

int num_classes(const DenoiserPair& denoisers) {
  if (const auto* spec = denoisers.conditional.mixture()) return spec->num_classes();
  if (const auto* model = denoisers.conditional.neural_model()) return model->num_classes();
  throw std::invalid_argument("sampler: cannot determine class count");
}

namespace {

struct ChainState {
  Rng rng;
  int c;
  Vec2 x;
};

// Runs chains [first, first + count) in lockstep, grouping denoiser calls by class.
std::vector<ChainState> run_chains(const SampleConfig& config, const DenoiserPair& denoisers,
                                   const GuidanceWeightFn& weight_fn, int first, int count, std::uint64_t seed,
                                   Trajectory* record) {
  const NoiseSchedule& sched = denoisers.conditional.schedule();
  const auto grid = config.time_grid(sched);
  const int classes = num_classes(denoisers);
  if (config.fixed_class && (*config.fixed_class < 0 || *config.fixed_class >= classes)) {
    throw std::out_of_range("sampler: fixed class out of range");
  }

  std::vector<ChainState> chains;
  chains.reserve(static_cast<std::size_t>(count));
  const std::vector<double> uniform(static_cast<std::size_t>(classes), 1.0);
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "chain", static_cast<std::uint64_t>(first + i)));
    const int c = config.fixed_class ? *config.fixed_class : rng.categorical(uniform);
    const Vec2 x = rng.normal2();
    chains.push_back({std::move(rng), c, x});
  }

  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < chains.size(); ++i) members[static_cast<std::size_t>(chains[i].c)].push_back(i);

  if (record) {
    record->c = chains.front().c;
    record->times.assign(1, grid.back());
    record->states.assign(1, chains.front().x);
    record->omegas.clear();
  }

  std::vector<Vec2> xt, cond, uncond;
  for (std::size_t k = grid.size() - 1; k-- > 0;) {
    const double s = grid[k];
    const double t = grid[k + 1];
    const DdimTransition trans = ddim_transition(sched, s, t, config.churn);
    const double noise_scale = std::sqrt(trans.cov_scale);
    for (int c = 0; c < classes; ++c) {
      const auto& idx = members[static_cast<std::size_t>(c)];
      if (idx.empty()) continue;
      const double omega = weight(weight_fn, s, t, c);
      xt.resize(idx.size());
      cond.resize(idx.size());
      uncond.resize(idx.size());
      for (std::size_t n = 0; n < idx.size(); ++n) xt[n] = chains[idx[n]].x;
      denoisers.conditional.batch(xt, t, c, cond);
      denoisers.unconditional.batch(xt, t, std::nullopt, uncond);
      for (std::size_t n = 0; n < idx.size(); ++n) {
        ChainState& chain = chains[idx[n]];
        const Vec2 x0 = combine_guidance(cond[n], uncond[n], omega);
        const Vec2 z = chain.rng.normal2();
        chain.x = trans.mean(x0, chain.x) + noise_scale * z;
      }
      if (record && c == chains.front().c) record->omegas.push_back(omega);
    }
    if (record) {
      record->times.push_back(s);
      record->states.push_back(chains.front().x);
    }
  }
  return chains;
}

}  // namespace

std::vector<GeneratedSample> sample(const SampleConfig& config, const DenoiserPair& denoisers,
                                   const GuidanceWeightFn& weight_fn, int count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sampler: negative sample count");
  std::vector<GeneratedSample> out;
  if (count == 0) return out;
  const auto chains = run_chains(config, denoisers, weight_fn, 0, count, seed, nullptr);
  out.reserve(chains.size());
  for (const auto& chain : chains) out.push_back({chain.x, chain.c});
  return out;
}

Trajectory sample_trajectory(const SampleConfig& config, const DenoiserPair& denoisers,
                             const GuidanceWeightFn& weight_fn, std::uint64_t seed, int chain) {
  if (chain < 0) throw std::invalid_argument("sampler: negative chain index");
  Trajectory out;
  run_chains(config, denoisers, weight_fn, chain, 1, seed, &out);
  return out;
}

}  // namespace guidelearn
