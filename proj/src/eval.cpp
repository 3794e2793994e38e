#include "guidelearn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace guidelearn {

namespace {

double kernel(const Vec2& a, const Vec2& b, double beta) {
  const Vec2 d = a - b;
  if (beta == 2.0) return d.squaredNorm();
  if (beta == 1.0) return d.norm();
  return std::pow(d.norm(), beta);
}

double mean_cross(std::span<const Vec2> a, std::span<const Vec2> b, double beta) {
  double total = 0.0;
  for (const auto& x : a) {
    double row = 0.0;
    for (const auto& y : b) row += kernel(x, y, beta);
    total += row;
  }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

double mean_within(std::span<const Vec2> a, double beta) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < a.size(); ++j) row += kernel(a[i], a[j], beta);
    total += row;
  }
  const double n = static_cast<double>(a.size());
  return 2.0 * total / (n * (n - 1.0));
}

std::vector<Vec2> subsample(std::span<const Vec2> points, std::size_t size, Rng& rng) {
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < size; ++i) {
    const auto pick = i + static_cast<std::size_t>(rng.uniform(0.0, 1.0) * static_cast<double>(points.size() - i));
    std::swap(idx[i], idx[std::min(pick, points.size() - 1)]);
  }
  std::vector<Vec2> out(size);
  for (std::size_t i = 0; i < size; ++i) out[i] = points[idx[i]];
  return out;
}

// Lexicographic order, so sums do not depend on the order points arrive in.
std::vector<Vec2> sorted(std::span<const Vec2> points) {
  std::vector<Vec2> out(points.begin(), points.end());
  std::sort(out.begin(), out.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  return out;
}

}  // namespace

double eval_mmd(std::span<const Vec2> generated, std::span<const Vec2> reference, const MmdParams& params) {
  params.validate();
  if (generated.empty() || reference.empty()) throw std::invalid_argument("eval_mmd: empty sample set");
  const auto gen = sorted(generated);
  const auto ref = sorted(reference);
  double value = mean_cross(gen, ref, params.beta);
  if (params.lambda > 0.0) {
    if (gen.size() < 2 || ref.size() < 2) {
      throw std::invalid_argument("eval_mmd: within-set terms need at least two points per set");
    }
    value -= 0.5 * params.lambda * (mean_within(gen, params.beta) + mean_within(ref, params.beta));
  }
  return value;
}

MmdEstimate eval_mmd_with_se(std::span<const Vec2> generated, std::span<const Vec2> reference,
                             const MmdParams& params, int resamples, std::uint64_t seed) {
  MmdEstimate out;
  out.value = eval_mmd(generated, reference, params);
  if (resamples < 2) return out;
  Rng rng(derive_seed(seed, "mmd_subsample"));
  const std::size_t half_g = std::max<std::size_t>(2, generated.size() / 2);
  const std::size_t half_r = std::max<std::size_t>(2, reference.size() / 2);
  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(resamples));
  for (int r = 0; r < resamples; ++r) {
    const auto g = subsample(generated, std::min(half_g, generated.size()), rng);
    const auto h = subsample(reference, std::min(half_r, reference.size()), rng);
    estimates.push_back(eval_mmd(g, h, params));
  }
  const double mean = std::accumulate(estimates.begin(), estimates.end(), 0.0) / resamples;
  double var = 0.0;
  for (double e : estimates) var += (e - mean) * (e - mean);
  var /= (resamples - 1);
  out.standard_error = std::sqrt(var / 2.0);
  return out;
}

std::vector<Vec2> points_of(std::span<const GeneratedSample> samples) {
  std::vector<Vec2> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.x);
  return out;
}

std::vector<GeneratedSample> draw_reference(const MogSpec& spec, int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "reference"));
  std::vector<GeneratedSample> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const auto p = sample_joint(spec, rng);
    out.push_back({p.x, p.c});
  }
  return out;
}

EvalRow evaluate_weight_fn(const std::string& label, const SampleConfig& sample_config,
                           const DenoiserPair& denoisers, const GuidanceWeightFn& weight_fn,
                           std::span<const GeneratedSample> reference, const EvalSettings& settings,
                           const Reward* reward) {
  const auto generated = sample(sample_config, denoisers, weight_fn, settings.samples, settings.seed);
  const auto gen_points = points_of(generated);
  const auto ref_points = points_of(reference);
  const auto est = eval_mmd_with_se(gen_points, ref_points, settings.params, settings.resamples, settings.seed);

  EvalRow row;
  row.label = label;
  if (const auto* constant = std::get_if<ConstantWeight>(&weight_fn)) row.omega = constant->omega;
  row.mmd = est.value;
  row.standard_error = est.standard_error;
  row.samples = settings.samples;

  const int classes = num_classes(denoisers);
  for (int c = 0; c < classes; ++c) {
    std::vector<Vec2> g, r;
    for (const auto& s : generated) {
      if (s.c == c) g.push_back(s.x);
    }
    for (const auto& s : reference) {
      if (s.c == c) r.push_back(s.x);
    }
    const bool enough = g.size() >= 2 && r.size() >= 2;
    row.per_class_mmd.push_back(enough ? eval_mmd(g, r, settings.params) : std::nan(""));
  }

  if (reward) {
    double total = 0.0;
    for (const auto& s : generated) total += reward->value(s.x, s.c);
    row.mean_reward = generated.empty() ? 0.0 : total / static_cast<double>(generated.size());
  }
  return row;
}

std::vector<EvalRow> sweep_constant_guidance(std::span<const double> omega_grid, const SampleConfig& sample_config,
                                             const DenoiserPair& denoisers,
                                             std::span<const GeneratedSample> reference,
                                             const EvalSettings& settings, const Reward* reward) {
  if (omega_grid.empty()) throw std::invalid_argument("sweep: empty omega grid");
  std::vector<EvalRow> rows;
  for (double omega : omega_grid) {
    char label[64];
    std::snprintf(label, sizeof label, "constant(%g)", omega);
    rows.push_back(
        evaluate_weight_fn(label, sample_config, denoisers, ConstantWeight{omega}, reference, settings, reward));
  }
  return rows;
}

std::vector<WeightGridPoint> weight_grid(const GuidanceWeightFn& weight_fn, int num_classes, double dt, int points,
                                         double clamp) {
  if (points < 1 || !(dt > 0.0)) throw std::invalid_argument("weight_grid: invalid resolution");
  const double lo = clamp + dt;
  const double hi = 1.0 - clamp;
  if (!(lo <= hi)) throw std::invalid_argument("weight_grid: dt too large");
  std::vector<WeightGridPoint> out;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < points; ++i) {
      const double t = points == 1 ? hi : lo + (hi - lo) * i / (points - 1);
      out.push_back({c, t, weight(weight_fn, t - dt, t, c)});
    }
  }
  return out;
}

double mean_abs_weight(std::span<const WeightGridPoint> grid) {
  if (grid.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : grid) total += std::abs(p.omega);
  return total / static_cast<double>(grid.size());
}

FigureReport run_figure_protocol(std::span<const double> omega_grid, const SampleConfig& sample_config,
                                 const DenoiserPair& denoisers, const GuidanceWeightFn* learned,
                                 std::span<const GeneratedSample> reference, const EvalSettings& settings,
                                 const Reward* reward) {
  FigureReport report;
  report.rows = sweep_constant_guidance(omega_grid, sample_config, denoisers, reference, settings, reward);
  bool has_unguided = false;
  for (auto& row : report.rows) {
    if (row.omega == 0.0) {
      row.label = "unguided";
      has_unguided = true;
    }
  }
  if (!has_unguided) {
    report.rows.push_back(
        evaluate_weight_fn("unguided", sample_config, denoisers, ConstantWeight{0.0}, reference, settings, reward));
  }
  if (learned) {
    report.rows.push_back(
        evaluate_weight_fn("learned", sample_config, denoisers, *learned, reference, settings, reward));
    report.learned_weights = weight_grid(*learned, num_classes(denoisers));
  }
  return report;
}

}  // namespace guidelearn
