#include "guidelearn/config.hpp"

#include <cstdio>
#include <set>

#include "guidelearn/errors.hpp"

namespace guidelearn {

using nlohmann::json;

namespace {

// Reads optional keys from one JSON object and rejects any key it was not asked about.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void read(const char* key, T& target) {
    allowed_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      target = doc_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    allowed_.insert(key);
    return doc_.contains(key) ? &doc_.at(key) : nullptr;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!allowed_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> allowed_;
};

void check_mog_keys(const json& doc) {
  Section sec(doc, "mog");
  if (const json* comps = sec.child("components")) {
    if (!comps->is_array()) throw ConfigError("mog.components: expected an array");
    for (const auto& c : *comps) {
      Section cs(c, "mog.components[]");
      cs.child("mean");
      cs.child("variance");
      cs.child("weight");
      cs.finish();
    }
  }
  sec.finish();
}

void read_denoiser(const json& doc, DenoiserSection& out) {
  Section sec(doc, "denoiser");
  std::string kind = denoiser_source_name(out.kind);
  sec.read("kind", kind);
  out.kind = parse_denoiser_source(kind);
  if (const json* n = sec.child("neural")) {
    Section ns(*n, sec.path("neural"));
    ns.read("iterations", out.neural.iterations);
    ns.read("batch_size", out.neural.batch_size);
    ns.read("learning_rate", out.neural.learning_rate);
    ns.read("clip_norm", out.neural.clip_norm);
    ns.read("hidden", out.neural.hidden);
    ns.read("hidden_layers", out.neural.hidden_layers);
    ns.read("embedding_dim", out.neural.embedding_dim);
    ns.read("uncond_prob", out.neural.uncond_prob);
    ns.finish();
  }
  if (const json* c = sec.child("corruption")) {
    Section cs(*c, sec.path("corruption"));
    cs.read("mean_shrink", out.corruption.mean_shrink);
    cs.read("weight_skew", out.corruption.weight_skew);
    cs.read("noise_scale", out.corruption.noise_scale);
    cs.finish();
  }
  sec.finish();
}

void read_guidance(const json& doc, GuidanceSection& out) {
  Section sec(doc, "guidance");
  auto& n = out.net;
  sec.read("embed_hidden", n.embed_hidden);
  sec.read("embed_dim", n.embed_dim);
  sec.read("hidden", n.hidden);
  sec.read("hidden_layers", n.hidden_layers);
  sec.read("allow_negative", n.allow_negative);
  sec.read("dropout", n.dropout);
  sec.read("zero_output", n.zero_output);
  sec.read("init_omega", n.init_omega);
  sec.finish();
}

void read_train(const json& doc, TrainSection& out) {
  Section sec(doc, "train");
  auto& c = out.config;
  std::string mode = train_mode_name(c.mode);
  sec.read("mode", mode);
  try {
    c.mode = parse_train_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("train.mode: ") + e.what());
  }
  sec.read("iterations", c.iterations);
  sec.read("batch_size", c.batch_size);
  sec.read("particles", c.particles);
  sec.read("beta", c.mmd.beta);
  sec.read("lambda", c.mmd.lambda);
  sec.read("churn", c.churn);
  sec.read("s_min", c.times.s_min);
  sec.read("delta", c.times.delta);
  sec.read("learning_rate", c.learning_rate);
  sec.read("clip_norm", c.clip_norm);
  sec.read("ema_decay", c.ema_decay);
  sec.read("weight_decay", c.weight_decay);
  sec.read("omega_penalty", c.omega_penalty);
  sec.read("reward", out.reward);
  sec.read("reward_weight", c.reward_weight);
  std::string sign = c.reward_sign == RewardSign::Maximize ? "maximize" : "as_written";
  sec.read("reward_sign", sign);
  if (sign == "maximize") {
    c.reward_sign = RewardSign::Maximize;
  } else if (sign == "as_written") {
    c.reward_sign = RewardSign::AsWritten;
  } else {
    throw ConfigError("train.reward_sign: expected maximize or as_written");
  }
  sec.read("select_best", c.select_best);
  sec.read("probe_samples", c.probe_samples);
  sec.read("probe_steps", c.probe_steps);
  sec.finish();
}

void read_sample(const json& doc, SampleSection& out) {
  Section sec(doc, "sample");
  sec.read("steps", out.config.steps);
  sec.read("grid", out.config.grid);
  sec.read("churn", out.config.churn);
  sec.read("count", out.count);
  if (const json* c = sec.child("class")) {
    if (c->is_null()) {
      out.config.fixed_class.reset();
    } else if (c->is_number_integer()) {
      out.config.fixed_class = c->get<int>();
    } else {
      throw ConfigError("sample.class: expected an integer or null");
    }
  }
  if (const json* w = sec.child("weight")) {
    Section ws(*w, sec.path("weight"));
    ws.read("kind", out.weight.kind);
    ws.read("omega", out.weight.omega);
    ws.read("t_lo", out.weight.t_lo);
    ws.read("t_hi", out.weight.t_hi);
    ws.read("checkpoint", out.weight.checkpoint);
    ws.finish();
  }
  sec.finish();
}

void read_eval(const json& doc, EvalSection& out) {
  Section sec(doc, "eval");
  sec.read("beta", out.params.beta);
  sec.read("lambda", out.params.lambda);
  sec.read("samples", out.samples);
  sec.read("resamples", out.resamples);
  sec.read("omega_grid", out.omega_grid);
  sec.read("weights_dt", out.weights_dt);
  sec.read("weights_points", out.weights_points);
  sec.finish();
}

void read_io(const json& doc, IoSection& out) {
  Section sec(doc, "io");
  sec.read("out", out.out);
  sec.read("checkpoint_every", out.checkpoint_every);
  sec.finish();
}

}  // namespace

void ExperimentConfig::propagate() {
  denoiser.neural.seed = derive_seed(seed, "denoiser");
  denoiser.corruption.seed = derive_seed(seed, "corruption");
  guidance.net.num_classes = mog.num_classes();
  train.config.seed = derive_seed(seed, "guidance");
  train.config.checkpoint_every = io.checkpoint_every;
}

void ExperimentConfig::validate() const {
  try {
    mog.validate();
    denoiser.corruption.validate();
    train.config.validate();
    eval.params.validate();
    sample.config.time_grid(NoiseSchedule{});
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (denoiser.neural.iterations < 0 || denoiser.neural.batch_size < 1) throw ConfigError("denoiser.neural: invalid sizes");
  if (sample.count < 1 || eval.samples < 2) throw ConfigError("sample.count and eval.samples must be positive");
  if (eval.omega_grid.empty()) throw ConfigError("eval.omega_grid must be nonempty");
  if (sample.config.fixed_class && (*sample.config.fixed_class < 0 || *sample.config.fixed_class >= mog.num_classes())) {
    throw ConfigError("sample.class out of range");
  }
  const auto& w = sample.weight;
  if (w.kind != "constant" && w.kind != "limited_interval" && w.kind != "learned") {
    throw ConfigError("sample.weight.kind: expected constant, limited_interval or learned");
  }
  if (w.checkpoint != "best" && w.checkpoint != "final") throw ConfigError("sample.weight.checkpoint: best or final");
  if (guidance.net.hidden_layers < 1 || guidance.net.hidden < 1) throw ConfigError("guidance: invalid net size");
  if (train.reward != "neg_sq_distance" && train.reward != "mixture_log_density") {
    throw ConfigError("train.reward: unknown reward " + train.reward);
  }
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig config;
  Section root(doc, "config");
  root.read("seed", config.seed);
  if (const json* m = root.child("mog")) {
    check_mog_keys(*m);
    config.mog = mog_from_json(*m);
  }
  if (const json* d = root.child("denoiser")) read_denoiser(*d, config.denoiser);
  if (const json* g = root.child("guidance")) read_guidance(*g, config.guidance);
  if (const json* t = root.child("train")) read_train(*t, config.train);
  if (const json* s = root.child("sample")) read_sample(*s, config.sample);
  if (const json* e = root.child("eval")) read_eval(*e, config.eval);
  if (const json* i = root.child("io")) read_io(*i, config.io);
  root.finish();
  config.propagate();
  config.validate();
  return config;
}

json to_json(const ExperimentConfig& config) {
  const auto& n = config.denoiser.neural;
  const auto& g = config.guidance.net;
  const auto& t = config.train.config;
  const auto& s = config.sample;
  json sample_class = s.config.fixed_class ? json(*s.config.fixed_class) : json(nullptr);
  return {
      {"seed", config.seed},
      {"mog", to_json(config.mog)},
      {"denoiser",
       {{"kind", denoiser_source_name(config.denoiser.kind)},
        {"neural",
         {{"iterations", n.iterations},
          {"batch_size", n.batch_size},
          {"learning_rate", n.learning_rate},
          {"clip_norm", n.clip_norm},
          {"hidden", n.hidden},
          {"hidden_layers", n.hidden_layers},
          {"embedding_dim", n.embedding_dim},
          {"uncond_prob", n.uncond_prob}}},
        {"corruption",
         {{"mean_shrink", config.denoiser.corruption.mean_shrink},
          {"weight_skew", config.denoiser.corruption.weight_skew},
          {"noise_scale", config.denoiser.corruption.noise_scale}}}}},
      {"guidance",
       {{"embed_hidden", g.embed_hidden},
        {"embed_dim", g.embed_dim},
        {"hidden", g.hidden},
        {"hidden_layers", g.hidden_layers},
        {"allow_negative", g.allow_negative},
        {"dropout", g.dropout},
        {"zero_output", g.zero_output},
        {"init_omega", g.init_omega}}},
      {"train",
       {{"mode", train_mode_name(t.mode)},
        {"iterations", t.iterations},
        {"batch_size", t.batch_size},
        {"particles", t.particles},
        {"beta", t.mmd.beta},
        {"lambda", t.mmd.lambda},
        {"churn", t.churn},
        {"s_min", t.times.s_min},
        {"delta", t.times.delta},
        {"learning_rate", t.learning_rate},
        {"clip_norm", t.clip_norm},
        {"ema_decay", t.ema_decay},
        {"weight_decay", t.weight_decay},
        {"omega_penalty", t.omega_penalty},
        {"reward", config.train.reward},
        {"reward_weight", t.reward_weight},
        {"reward_sign", t.reward_sign == RewardSign::Maximize ? "maximize" : "as_written"},
        {"select_best", t.select_best},
        {"probe_samples", t.probe_samples},
        {"probe_steps", t.probe_steps}}},
      {"sample",
       {{"steps", s.config.steps},
        {"grid", s.config.grid},
        {"churn", s.config.churn},
        {"count", s.count},
        {"class", sample_class},
        {"weight",
         {{"kind", s.weight.kind},
          {"omega", s.weight.omega},
          {"t_lo", s.weight.t_lo},
          {"t_hi", s.weight.t_hi},
          {"checkpoint", s.weight.checkpoint}}}}},
      {"eval",
       {{"beta", config.eval.params.beta},
        {"lambda", config.eval.params.lambda},
        {"samples", config.eval.samples},
        {"resamples", config.eval.resamples},
        {"omega_grid", config.eval.omega_grid},
        {"weights_dt", config.eval.weights_dt},
        {"weights_points", config.eval.weights_points}}},
      {"io", {{"out", config.io.out}, {"checkpoint_every", config.io.checkpoint_every}}},
  };
}

ExperimentConfig load_config(const std::filesystem::path& path) { return config_from_json(read_json_file(path)); }

std::string config_digest(const ExperimentConfig& config) {
  json doc = to_json(config);
  doc["io"].erase("out");  // where outputs land does not change what they contain
  const std::string text = doc.dump();
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace guidelearn
