#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "guidelearn/denoisers.hpp"
#include "guidelearn/nn.hpp"
#include "guidelearn/schedule.hpp"

namespace guidelearn {

struct ConstantWeight {
  double omega = 0.0;
};

// omega while the proposal time t lies in [t_lo, t_hi], zero elsewhere.
struct LimitedIntervalWeight {
  double omega = 0.0;
  double t_lo = 0.0;
  double t_hi = 1.0;
};

/// Piecewise-constant omega over a bins x bins grid of [clamp, 1 - clamp]^2, per class.
struct TableWeight {
  int bins = 1;
  int num_classes = 1;
  double clamp = kTimeClamp;
  std::vector<double> values;  // index (s_bin * bins + t_bin) * num_classes + c

  static TableWeight filled(int bins, int num_classes, double value, double clamp = kTimeClamp);
  int bin(double time) const;
  double bin_center(int b) const;
  double& at(int s_bin, int t_bin, int c);
  double at(int s_bin, int t_bin, int c) const;
  double lookup(double s, double t, int c) const;
};

struct GuidanceNetConfig {
  int num_classes = 4;
  int embed_hidden = 64;
  int embed_dim = 64;
  int hidden = 64;
  int hidden_layers = 6;
  bool allow_negative = true;
  double dropout = 0.0;      // applied inside the time-embedding MLP
  bool zero_output = true;   // zero output-layer weights so training starts from omega = init_omega
  double init_omega = 0.0;   // output bias at initialisation
};

struct GuidanceQuery {
  double s;
  double t;
  int c;
};

/// omega(s, t, c): [logsnr(s), logsnr(t)] -> embedding MLP -> concat onehot(c) -> trunk MLP -> scalar.
/// Log-SNR inputs are clamped to the schedule window and divided by its bound.
class GuidanceNet {
 public:
  GuidanceNet(const GuidanceNetConfig& config, Rng& rng, NoiseSchedule sched = {});
  GuidanceNet(Mlp embed, Mlp trunk, int num_classes, NoiseSchedule sched = {});

  struct Pass {
    Eigen::RowVectorXd omega;
    ForwardResult embed;
    ForwardResult trunk;
  };

  double operator()(double s, double t, int c) const;
  Pass forward(std::span<const GuidanceQuery> queries, PassMode mode = PassMode::Eval, Rng* rng = nullptr) const;
  // Gradient of sum_i domega[i] * omega_i with respect to the flat parameters (embed, then trunk).
  std::vector<double> backward(const Pass& pass, std::span<const double> domega) const;

  const Mlp& embed() const { return embed_; }
  const Mlp& trunk() const { return trunk_; }
  int num_classes() const { return num_classes_; }
  bool allow_negative() const { return trunk_.architecture().output == Activation::Identity; }
  const NoiseSchedule& schedule() const { return sched_; }

  std::size_t parameter_count() const { return embed_.parameter_count() + trunk_.parameter_count(); }
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);
  std::vector<ParamBlock> parameter_blocks() const;

  Eigen::MatrixXd time_features(std::span<const GuidanceQuery> queries) const;

 private:
  Mlp embed_;
  Mlp trunk_;
  int num_classes_;
  NoiseSchedule sched_;
};

using GuidanceWeightFn = std::variant<ConstantWeight, LimitedIntervalWeight, TableWeight, GuidanceNet>;

// Throws std::invalid_argument when s >= t.
double weight(const GuidanceWeightFn& fn, double s, double t, int c);

const char* weight_fn_tag(const GuidanceWeightFn& fn);

// (1 + omega) cond - omega uncond; equals cond + omega (cond - uncond) and is exact at omega = 0 and -1.
inline Vec2 combine_guidance(const Vec2& cond, const Vec2& uncond, double omega) {
  return (1.0 + omega) * cond - omega * uncond;
}

struct GuidedEstimate {
  Vec2 value;
  Vec2 conditional;
  Vec2 delta;  // conditional - unconditional
};

GuidedEstimate guided_denoise(const DenoiserPair& denoisers, const Vec2& xt, double t, int c, double omega);

}  // namespace guidelearn
