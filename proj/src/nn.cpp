#include "guidelearn/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "guidelearn/errors.hpp"

namespace guidelearn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Eigen::MatrixXd apply(Activation act, const Eigen::MatrixXd& z) {
  if (act == Activation::Identity) return z;
  return z.unaryExpr([act](double x) { return activate(act, x); });
}

Eigen::MatrixXd apply_derivative(Activation act, const Eigen::MatrixXd& z) {
  return z.unaryExpr([act](double x) { return activate_derivative(act, x); });
}

bool has_dropout(const MlpArchitecture& arch, std::size_t layer) {
  return arch.dropout_rate > 0.0 &&
         std::find(arch.dropout_layers.begin(), arch.dropout_layers.end(), static_cast<int>(layer)) !=
             arch.dropout_layers.end();
}

}  // namespace

double activate(Activation act, double x) {
  switch (act) {
    case Activation::Identity:
      return x;
    case Activation::GeLU:
      return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    case Activation::ReLU:
      return x > 0.0 ? x : 0.0;
  }
  return x;
}

double activate_derivative(Activation act, double x) {
  switch (act) {
    case Activation::Identity:
      return 1.0;
    case Activation::GeLU:
      return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    case Activation::ReLU:
      return x > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

void MlpArchitecture::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("mlp: need at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("mlp: widths must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("mlp: dropout rate must be in [0,1)");
  const int hidden_layers = static_cast<int>(widths.size()) - 2;
  for (int l : dropout_layers) {
    if (l < 0 || l >= hidden_layers) throw std::invalid_argument("mlp: dropout layer index out of range");
  }
}

std::vector<double> MlpGradient::flat() const {
  std::vector<double> out;
  for (const auto& layer : layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
  return out;
}

Mlp::Mlp(MlpArchitecture arch, Rng& rng) : Mlp(zeros(std::move(arch))) {
  for (auto& layer : layers_) {
    const double fan_out = static_cast<double>(layer.weight.rows());
    const double fan_in = static_cast<double>(layer.weight.cols());
    const double stddev = std::sqrt(2.0 / (fan_in + fan_out));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = stddev * rng.normal();
    }
  }
}

Mlp Mlp::zeros(MlpArchitecture arch) {
  arch.validate();
  Mlp net;
  net.arch_ = std::move(arch);
  for (std::size_t l = 0; l + 1 < net.arch_.widths.size(); ++l) {
    const int in = net.arch_.widths[l];
    const int out = net.arch_.widths[l + 1];
    net.layers_.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return net;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

std::vector<double> Mlp::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) out.push_back(layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
  return out;
}

void Mlp::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("mlp: flat parameter size mismatch");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = flat[k++];
  }
}

std::vector<ParamBlock> Mlp::parameter_blocks(const std::string& prefix) const {
  std::vector<ParamBlock> blocks;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto wsize = static_cast<std::size_t>(layers_[l].weight.size());
    const auto bsize = static_cast<std::size_t>(layers_[l].bias.size());
    blocks.push_back({prefix + "layer" + std::to_string(l) + ".weight", offset, wsize});
    offset += wsize;
    blocks.push_back({prefix + "layer" + std::to_string(l) + ".bias", offset, bsize});
    offset += bsize;
  }
  return blocks;
}

ForwardResult Mlp::forward(const Eigen::MatrixXd& input, PassMode mode, Rng* rng) const {
  if (input.rows() != input_dim()) {
    throw std::invalid_argument("mlp forward: input dimension " + std::to_string(input.rows()) + " != " +
                                std::to_string(input_dim()));
  }
  ForwardResult result;
  Tape& tape = result.tape;
  Eigen::MatrixXd a = input;
  const std::size_t last = layers_.size() - 1;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    tape.inputs.push_back(a);
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    if (l == last) {
      a = apply(arch_.output, z);
      tape.masks.emplace_back();
    } else {
      a = apply(arch_.hidden, z);
      if (mode == PassMode::Train && has_dropout(arch_, l)) {
        if (rng == nullptr) throw std::invalid_argument("mlp forward: train-mode dropout needs an rng");
        const double keep = 1.0 - arch_.dropout_rate;
        Eigen::MatrixXd mask(a.rows(), a.cols());
        for (Eigen::Index c = 0; c < mask.cols(); ++c) {
          for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng->uniform(0.0, 1.0) < keep ? 1.0 / keep : 0.0;
        }
        a = a.cwiseProduct(mask);
        tape.masks.push_back(std::move(mask));
      } else {
        tape.masks.emplace_back();
      }
    }
    tape.preactivations.push_back(std::move(z));
  }
  result.output = std::move(a);
  return result;
}

MlpGradient Mlp::backward(const Tape& tape, const Eigen::MatrixXd& output_cotangent) const {
  if (tape.inputs.size() != layers_.size() || tape.preactivations.size() != layers_.size() ||
      tape.masks.size() != layers_.size()) {
    throw std::invalid_argument("mlp backward: tape does not match network depth");
  }
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (tape.inputs[l].rows() != layers_[l].weight.cols() || tape.preactivations[l].rows() != layers_[l].weight.rows()) {
      throw std::invalid_argument("mlp backward: tape does not match layer shapes");
    }
  }
  const Eigen::Index batch = tape.inputs.front().cols();
  if (output_cotangent.rows() != output_dim() || output_cotangent.cols() != batch) {
    throw std::invalid_argument("mlp backward: cotangent shape mismatch");
  }

  MlpGradient grad;
  grad.layers.resize(layers_.size());
  const std::size_t last = layers_.size() - 1;
  Eigen::MatrixXd upstream = output_cotangent;  // d loss / d (layer output)
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const Activation act = (k == last) ? arch_.output : arch_.hidden;
    if (k != last && tape.masks[k].size() > 0) upstream = upstream.cwiseProduct(tape.masks[k]);
    Eigen::MatrixXd g = upstream.cwiseProduct(apply_derivative(act, tape.preactivations[k]));
    grad.layers[k].weight = g * tape.inputs[k].transpose();
    grad.layers[k].bias = g.rowwise().sum();
    upstream = layers_[k].weight.transpose() * g;
  }
  grad.input = std::move(upstream);
  return grad;
}

AdamState::AdamState(AdamConfig config, std::size_t parameter_count, std::vector<ParamBlock> blocks)
    : config_(config), blocks_(std::move(blocks)), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
  if (blocks_.empty()) blocks_.push_back({"params", 0, parameter_count});
}

void AdamState::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw std::invalid_argument("adam: parameter/gradient size mismatch");
  }
  for (const auto& block : blocks_) {
    for (std::size_t i = block.offset; i < block.offset + block.size; ++i) {
      if (!std::isfinite(grads[i])) throw NumericalError("adam: non-finite gradient in block '" + block.name + "'");
    }
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i] * grads[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= config_.learning_rate * (m_hat / (std::sqrt(v_hat) + config_.epsilon) + config_.weight_decay * params[i]);
  }
}

double global_norm(std::span<const double> values) {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return std::sqrt(sum);
}

double clip_global_norm(std::span<double> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

EmaState::EmaState(double decay, std::span<const double> initial)
    : decay_(decay), shadow_(initial.begin(), initial.end()) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw std::invalid_argument("ema: decay must be in [0,1]");
}

void EmaState::update(std::span<const double> live) {
  if (live.size() != shadow_.size()) throw std::invalid_argument("ema: size mismatch");
  for (std::size_t i = 0; i < live.size(); ++i) shadow_[i] = decay_ * shadow_[i] + (1.0 - decay_) * live[i];
}

}  // namespace guidelearn
