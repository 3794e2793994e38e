#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "guidelearn/rng.hpp"

namespace guidelearn {

enum class Activation { Identity, GeLU, ReLU };

struct MlpArchitecture {
  std::vector<int> widths;  // input, hidden..., output
  Activation hidden = Activation::GeLU;
  Activation output = Activation::Identity;
  double dropout_rate = 0.0;
  std::vector<int> dropout_layers;  // hidden-layer indices whose outputs are dropped in train mode

  void validate() const;
  bool operator==(const MlpArchitecture&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

enum class PassMode { Eval, Train };

/// Everything backward() needs to replay a forward pass, dropout masks included.
struct Tape {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> preactivations;
  std::vector<Eigen::MatrixXd> masks;  // empty matrix where no dropout was applied
};

struct ForwardResult {
  Eigen::MatrixXd output;  // out x batch
  Tape tape;
};

struct MlpGradient {
  std::vector<DenseLayer> layers;
  Eigen::MatrixXd input;  // in x batch

  std::vector<double> flat() const;
};

/// Named contiguous range inside a flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

double activate(Activation act, double x);
double activate_derivative(Activation act, double x);

/// Dense feed-forward network over column-batched inputs.
class Mlp {
 public:
  Mlp() = default;
  // Weights ~ N(0, 2/(fan_in + fan_out)), biases zero.
  Mlp(MlpArchitecture arch, Rng& rng);
  static Mlp zeros(MlpArchitecture arch);

  const MlpArchitecture& architecture() const { return arch_; }
  int input_dim() const { return arch_.widths.front(); }
  int output_dim() const { return arch_.widths.back(); }
  std::size_t layer_count() const { return layers_.size(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  // Row-major weights then bias, layer by layer.
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);
  std::vector<ParamBlock> parameter_blocks(const std::string& prefix = "") const;

  /// `rng` is required in train mode when dropout is active.
  ForwardResult forward(const Eigen::MatrixXd& input, PassMode mode = PassMode::Eval, Rng* rng = nullptr) const;
  Eigen::MatrixXd predict(const Eigen::MatrixXd& input) const { return forward(input).output; }
  MlpGradient backward(const Tape& tape, const Eigen::MatrixXd& output_cotangent) const;

 private:
  MlpArchitecture arch_;
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig config, std::size_t parameter_count, std::vector<ParamBlock> blocks = {});

  // Throws NumericalError naming the offending block on a non-finite gradient.
  void step(std::span<double> params, std::span<const double> grads);

  long long steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<double>& first_moment() const { return m_; }
  const std::vector<double>& second_moment() const { return v_; }

 private:
  AdamConfig config_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> m_;
  std::vector<double> v_;
  long long steps_ = 0;
};

double global_norm(std::span<const double> values);
// Rescales grads in place so their global norm is at most max_norm. Returns the pre-clip norm.
double clip_global_norm(std::span<double> grads, double max_norm);

/// shadow <- decay * shadow + (1 - decay) * live
class EmaState {
 public:
  EmaState() = default;
  EmaState(double decay, std::span<const double> initial);

  void update(std::span<const double> live);
  double decay() const { return decay_; }
  const std::vector<double>& shadow() const { return shadow_; }

 private:
  double decay_ = 0.0;
  std::vector<double> shadow_;
};

}  // namespace guidelearn
