#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "guidelearn/errors.hpp"
#include "guidelearn/eval.hpp"
#include "guidelearn/guidance.hpp"
#include "guidelearn/objectives.hpp"

namespace guidelearn {

enum class TrainMode { SelfConsistency, L2, Reward, GuidedSM };

const char* train_mode_name(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::SelfConsistency;
  int iterations = 1000;
  int batch_size = 128;
  int particles = 32;
  MmdParams mmd{1.75, 1.0};
  double churn = 1.0;
  TimePairSampler times{0.01};
  double learning_rate = 5e-4;
  double clip_norm = 1.0;
  double ema_decay = 0.0;  // 0 disables EMA
  double weight_decay = 0.0;   // decoupled, applied by Adam
  double omega_penalty = 0.003;  // adds omega_penalty * omega^2 per item
  double reward_weight = 0.0;
  RewardSign reward_sign = RewardSign::Maximize;
  int checkpoint_every = 100;
  bool select_best = true;
  int probe_samples = 1024;
  int probe_steps = 10;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument. L2 mode requires particles == 1.
  void validate() const;
};

struct TrainRow {
  int iter = 0;
  double loss = 0.0;
  std::optional<double> reward;
  double grad_norm = 0.0;
  double mean_abs_omega = 0.0;
};

struct TrainCheckpoint {
  int iter = 0;  // completed updates
  std::vector<double> parameters;
  std::optional<double> probe_mmd;
  std::optional<double> probe_se;
  double mean_abs_omega = 0.0;  // over the weight_grid probe points
};

struct TrainResult {
  GuidanceNet final_net;  // EMA shadow when EMA is enabled
  // Smallest mean |omega| among checkpoints whose probe MMD is within one SE of the lowest;
  // final_net without selection.
  GuidanceNet best_net;
  int best_iter = 0;
  std::vector<TrainRow> record;
  std::vector<TrainCheckpoint> checkpoints;
};

/// Raised on a non-finite loss or gradient; carries everything up to the last good step.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, int iter, std::vector<double> last_good, std::vector<TrainRow> record)
      : NumericalError(what), iter(iter), last_good_parameters(std::move(last_good)), record(std::move(record)) {}

  int iter;
  std::vector<double> last_good_parameters;
  std::vector<TrainRow> record;
};

/// Learns omega(s, t, c) with frozen denoisers. `reward` is required in Reward mode and optional otherwise
/// (when given it is logged).
TrainResult train_guidance(const TrainConfig& config, const MogSpec& data, const DenoiserPair& denoisers,
                           GuidanceNet net, const Reward* reward = nullptr);

// Mean batch loss of the configured objective at fixed parameters, with the item stream of `seed`.
// Gradient is with respect to the net's flat parameters.
struct BatchLoss {
  double loss = 0.0;
  double mean_reward = 0.0;
  std::vector<double> domega;
  std::vector<double> gradient;
};

BatchLoss guidance_batch_loss(const TrainConfig& config, const MogSpec& data, const DenoiserPair& denoisers,
                              const GuidanceNet& net, const Reward* reward, std::uint64_t seed);

// Probe MMD used for checkpoint selection: a small sampler run against fixed data draws.
MmdEstimate probe_mmd(const TrainConfig& config, const MogSpec& data, const DenoiserPair& denoisers,
                      const GuidanceWeightFn& weight_fn);

// Index into checkpoints chosen by the one-SE rule; requires probe results on every checkpoint.
std::size_t select_checkpoint(const std::vector<TrainCheckpoint>& checkpoints);

}  // namespace guidelearn
