#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guidelearn/checkpoint.hpp"
#include "guidelearn/eval.hpp"
#include "guidelearn/sampler.hpp"
#include "guidelearn/trainer.hpp"

namespace guidelearn {

struct DenoiserSection {
  DenoiserSource kind = DenoiserSource::Analytic;
  NeuralDenoiserConfig neural;
  CorruptionSpec corruption;
};

struct GuidanceSection {
  GuidanceNetConfig net;
};

struct TrainSection {
  TrainConfig config;
  std::string reward = "neg_sq_distance";
};

// Which weight function the sample / eval / export commands use.
struct WeightSection {
  std::string kind = "constant";  // constant | limited_interval | learned
  double omega = 0.0;
  double t_lo = 0.2;
  double t_hi = 0.8;
  std::string checkpoint = "best";  // learned: best | final
};

struct SampleSection {
  SampleConfig config;
  int count = 4096;
  WeightSection weight;
};

struct EvalSection {
  MmdParams params{1.0, 1.0};
  int samples = 4096;
  int resamples = 20;
  std::vector<double> omega_grid{0.0, 0.5, 1.0, 2.0, 4.0};
  double weights_dt = 0.01;
  int weights_points = 99;
};

struct IoSection {
  std::string out = "out";
  int checkpoint_every = 100;
};

/// Self-contained experiment description. Missing keys take defaults; unknown keys are rejected.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  MogSpec mog = MogSpec::default_mixture();
  DenoiserSection denoiser;
  GuidanceSection guidance;
  TrainSection train;
  SampleSection sample;
  EvalSection eval;
  IoSection io;

  // Copies the root seed and io cadence into the nested configs.
  void propagate();
  void validate() const;
};

// Throws ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// FNV-1a 64 over the canonical dump of the resolved config, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

}  // namespace guidelearn
