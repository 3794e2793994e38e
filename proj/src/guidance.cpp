#include "guidelearn/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace guidelearn {

TableWeight TableWeight::filled(int bins, int num_classes, double value, double clamp) {
  if (bins <= 0 || num_classes <= 0) throw std::invalid_argument("table weight: bins and classes must be positive");
  TableWeight table;
  table.bins = bins;
  table.num_classes = num_classes;
  table.clamp = clamp;
  table.values.assign(static_cast<std::size_t>(bins * bins * num_classes), value);
  return table;
}

int TableWeight::bin(double time) const {
  const double width = (1.0 - 2.0 * clamp) / bins;
  const int b = static_cast<int>(std::floor((time - clamp) / width));
  return std::clamp(b, 0, bins - 1);
}

double TableWeight::bin_center(int b) const {
  const double width = (1.0 - 2.0 * clamp) / bins;
  return clamp + (b + 0.5) * width;
}

double& TableWeight::at(int s_bin, int t_bin, int c) {
  return values.at(static_cast<std::size_t>((s_bin * bins + t_bin) * num_classes + c));
}

double TableWeight::at(int s_bin, int t_bin, int c) const {
  return values.at(static_cast<std::size_t>((s_bin * bins + t_bin) * num_classes + c));
}

double TableWeight::lookup(double s, double t, int c) const {
  if (c < 0 || c >= num_classes) throw std::out_of_range("table weight: invalid class");
  return at(bin(s), bin(t), c);
}

namespace {

MlpArchitecture embed_architecture(const GuidanceNetConfig& config) {
  MlpArchitecture arch;
  arch.widths = {2, config.embed_hidden, config.embed_dim};
  if (config.dropout > 0.0) {
    arch.dropout_rate = config.dropout;
    arch.dropout_layers = {0};
  }
  return arch;
}

MlpArchitecture trunk_architecture(const GuidanceNetConfig& config) {
  MlpArchitecture arch;
  arch.widths.push_back(config.embed_dim + config.num_classes);
  for (int i = 0; i < config.hidden_layers; ++i) arch.widths.push_back(config.hidden);
  arch.widths.push_back(1);
  arch.output = config.allow_negative ? Activation::Identity : Activation::ReLU;
  return arch;
}

}  // namespace

GuidanceNet::GuidanceNet(const GuidanceNetConfig& config, Rng& rng, NoiseSchedule sched)
    : embed_(embed_architecture(config), rng), trunk_(trunk_architecture(config), rng),
      num_classes_(config.num_classes), sched_(sched) {
  auto& out = trunk_.layers().back();
  if (config.zero_output) out.weight.setZero();
  out.bias.setConstant(config.init_omega);
}

GuidanceNet::GuidanceNet(Mlp embed, Mlp trunk, int num_classes, NoiseSchedule sched)
    : embed_(std::move(embed)), trunk_(std::move(trunk)), num_classes_(num_classes), sched_(sched) {
  if (embed_.input_dim() != 2) throw std::invalid_argument("guidance net: embedding must take 2 time inputs");
  if (trunk_.input_dim() != embed_.output_dim() + num_classes_ || trunk_.output_dim() != 1) {
    throw std::invalid_argument("guidance net: trunk shape does not match embedding and classes");
  }
}

Eigen::MatrixXd GuidanceNet::time_features(std::span<const GuidanceQuery> queries) const {
  const double bound = sched_.logsnr_bound();
  Eigen::MatrixXd feats(2, static_cast<Eigen::Index>(queries.size()));
  for (std::size_t i = 0; i < queries.size(); ++i) {
    feats(0, static_cast<Eigen::Index>(i)) = sched_.logsnr(queries[i].s) / bound;
    feats(1, static_cast<Eigen::Index>(i)) = sched_.logsnr(queries[i].t) / bound;
  }
  return feats;
}

GuidanceNet::Pass GuidanceNet::forward(std::span<const GuidanceQuery> queries, PassMode mode, Rng* rng) const {
  Pass pass;
  pass.embed = embed_.forward(time_features(queries), mode, rng);
  const auto n = static_cast<Eigen::Index>(queries.size());
  const Eigen::Index e = embed_.output_dim();
  Eigen::MatrixXd trunk_in = Eigen::MatrixXd::Zero(e + num_classes_, n);
  trunk_in.topRows(e) = pass.embed.output;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = queries[static_cast<std::size_t>(i)].c;
    if (c < 0 || c >= num_classes_) throw std::out_of_range("guidance net: invalid class " + std::to_string(c));
    trunk_in(e + c, i) = 1.0;
  }
  pass.trunk = trunk_.forward(trunk_in, mode, rng);
  pass.omega = pass.trunk.output.row(0);
  return pass;
}

double GuidanceNet::operator()(double s, double t, int c) const {
  const GuidanceQuery q{s, t, c};
  return forward(std::span<const GuidanceQuery>(&q, 1)).omega(0);
}

std::vector<double> GuidanceNet::backward(const Pass& pass, std::span<const double> domega) const {
  const auto n = pass.omega.size();
  if (static_cast<Eigen::Index>(domega.size()) != n) throw std::invalid_argument("guidance net: cotangent size");
  Eigen::MatrixXd cot(1, n);
  for (Eigen::Index i = 0; i < n; ++i) cot(0, i) = domega[static_cast<std::size_t>(i)];
  const auto trunk_grad = trunk_.backward(pass.trunk.tape, cot);
  const Eigen::MatrixXd embed_cot = trunk_grad.input.topRows(embed_.output_dim());
  const auto embed_grad = embed_.backward(pass.embed.tape, embed_cot);
  std::vector<double> flat = embed_grad.flat();
  const auto tail = trunk_grad.flat();
  flat.insert(flat.end(), tail.begin(), tail.end());
  return flat;
}

std::vector<double> GuidanceNet::flat_parameters() const {
  auto flat = embed_.flat_parameters();
  const auto tail = trunk_.flat_parameters();
  flat.insert(flat.end(), tail.begin(), tail.end());
  return flat;
}

void GuidanceNet::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("guidance net: flat parameter size mismatch");
  const std::size_t split = embed_.parameter_count();
  embed_.set_flat_parameters(flat.subspan(0, split));
  trunk_.set_flat_parameters(flat.subspan(split));
}

std::vector<ParamBlock> GuidanceNet::parameter_blocks() const {
  auto blocks = embed_.parameter_blocks("embed.");
  const std::size_t offset = embed_.parameter_count();
  for (auto block : trunk_.parameter_blocks("trunk.")) {
    block.offset += offset;
    blocks.push_back(block);
  }
  return blocks;
}

double weight(const GuidanceWeightFn& fn, double s, double t, int c) {
  if (!(s < t)) throw std::invalid_argument("guidance weight: requires s < t");
  return std::visit(
      [&](const auto& w) -> double {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, ConstantWeight>) {
          return w.omega;
        } else if constexpr (std::is_same_v<T, LimitedIntervalWeight>) {
          return (t >= w.t_lo && t <= w.t_hi) ? w.omega : 0.0;
        } else if constexpr (std::is_same_v<T, TableWeight>) {
          return w.lookup(s, t, c);
        } else {
          return w(s, t, c);
        }
      },
      fn);
}

const char* weight_fn_tag(const GuidanceWeightFn& fn) {
  static constexpr const char* tags[] = {"constant", "limited_interval", "table", "net"};
  return tags[fn.index()];
}

GuidedEstimate guided_denoise(const DenoiserPair& denoisers, const Vec2& xt, double t, int c, double omega) {
  GuidedEstimate est;
  est.conditional = denoisers.conditional(xt, t, c);
  const Vec2 uncond = denoisers.unconditional(xt, t, std::nullopt);
  est.delta = est.conditional - uncond;
  est.value = combine_guidance(est.conditional, uncond, omega);
  return est;
}

}  // namespace guidelearn
