#include "guidelearn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "guidelearn/errors.hpp"

namespace guidelearn {

using nlohmann::json;

namespace {

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::GeLU: return "gelu";
    case Activation::ReLU: return "relu";
  }
  return "identity";
}

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::Identity;
  if (name == "gelu") return Activation::GeLU;
  if (name == "relu") return Activation::ReLU;
  throw ConfigError("unknown activation: " + name);
}

void check_header(const json& doc, const std::string& format) {
  if (!doc.is_object() || doc.value("format", std::string{}) != format) {
    throw ConfigError("expected a " + format + " document");
  }
  if (doc.value("version", 0) != kCheckpointVersion) {
    throw ConfigError(format + ": unsupported version");
  }
}

template <class F>
auto guarded(const char* what, F&& body) {
  try {
    return body();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

const char* denoiser_source_name(DenoiserSource source) {
  switch (source) {
    case DenoiserSource::Analytic: return "analytic";
    case DenoiserSource::Corrupted: return "corrupted";
    case DenoiserSource::Neural: return "neural";
  }
  return "analytic";
}

DenoiserSource parse_denoiser_source(const std::string& name) {
  if (name == "analytic") return DenoiserSource::Analytic;
  if (name == "corrupted") return DenoiserSource::Corrupted;
  if (name == "neural") return DenoiserSource::Neural;
  throw ConfigError("unknown denoiser kind: " + name);
}

DenoiserPair DenoiserArtifact::pair() const {
  switch (source) {
    case DenoiserSource::Analytic: return analytic_pair(spec);
    case DenoiserSource::Corrupted: return corrupted_pair(spec, corruption);
    case DenoiserSource::Neural:
      if (!model) throw ConfigError("neural denoiser artifact has no model");
      return neural_pair(model);
  }
  throw ConfigError("invalid denoiser artifact");
}

json to_json(const MlpArchitecture& arch) {
  return {{"widths", arch.widths},
          {"hidden", activation_name(arch.hidden)},
          {"output", activation_name(arch.output)},
          {"dropout_rate", arch.dropout_rate},
          {"dropout_layers", arch.dropout_layers}};
}

MlpArchitecture architecture_from_json(const json& doc) {
  return guarded("mlp architecture", [&] {
    MlpArchitecture arch;
    arch.widths = doc.at("widths").get<std::vector<int>>();
    arch.hidden = parse_activation(doc.at("hidden").get<std::string>());
    arch.output = parse_activation(doc.at("output").get<std::string>());
    arch.dropout_rate = doc.at("dropout_rate").get<double>();
    arch.dropout_layers = doc.at("dropout_layers").get<std::vector<int>>();
    arch.validate();
    return arch;
  });
}

json to_json(const Mlp& mlp) {
  return {{"architecture", to_json(mlp.architecture())}, {"parameters", mlp.flat_parameters()}};
}

Mlp mlp_from_json(const json& doc) {
  return guarded("mlp", [&] {
    Mlp mlp = Mlp::zeros(architecture_from_json(doc.at("architecture")));
    const auto params = doc.at("parameters").get<std::vector<double>>();
    if (params.size() != mlp.parameter_count()) throw ConfigError("mlp: parameter count mismatch");
    mlp.set_flat_parameters(params);
    return mlp;
  });
}

json to_json(const MogSpec& spec) {
  json comps = json::array();
  for (const auto& c : spec.components) {
    comps.push_back({{"mean", {c.mean.x(), c.mean.y()}}, {"variance", c.variance}, {"weight", c.weight}});
  }
  return {{"components", comps}};
}

MogSpec mog_from_json(const json& doc) {
  return guarded("mog", [&] {
    MogSpec spec;
    for (const auto& c : doc.at("components")) {
      const auto mean = c.at("mean").get<std::vector<double>>();
      if (mean.size() != 2) throw ConfigError("mog: component means must be 2-vectors");
      spec.components.push_back({Vec2(mean[0], mean[1]), c.at("variance").get<double>(), c.at("weight").get<double>()});
    }
    spec.validate();
    return spec;
  });
}

json to_json(const CorruptionSpec& corruption) {
  return {{"mean_shrink", corruption.mean_shrink},
          {"weight_skew", corruption.weight_skew},
          {"noise_scale", corruption.noise_scale},
          {"seed", corruption.seed}};
}

CorruptionSpec corruption_from_json(const json& doc) {
  return guarded("corruption", [&] {
    CorruptionSpec c;
    c.mean_shrink = doc.at("mean_shrink").get<double>();
    c.weight_skew = doc.at("weight_skew").get<double>();
    c.noise_scale = doc.at("noise_scale").get<double>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  });
}

json to_json(const DenoiserArtifact& artifact) {
  json doc = {{"format", "guidelearn.denoiser"},
              {"version", kCheckpointVersion},
              {"kind", denoiser_source_name(artifact.source)},
              {"mog", to_json(artifact.spec)}};
  if (artifact.source == DenoiserSource::Corrupted) doc["corruption"] = to_json(artifact.corruption);
  if (artifact.source == DenoiserSource::Neural) {
    const auto& m = *artifact.model;
    doc["neural"] = {{"num_classes", m.num_classes()},
                     {"embedding_dim", m.embedding_dim()},
                     {"data_std", m.data_std()},
                     {"iterations_trained", m.iterations_trained},
                     {"net", to_json(m.net())}};
  }
  return doc;
}

DenoiserArtifact denoiser_from_json(const json& doc) {
  check_header(doc, "guidelearn.denoiser");
  return guarded("denoiser", [&] {
    DenoiserArtifact artifact;
    artifact.source = parse_denoiser_source(doc.at("kind").get<std::string>());
    artifact.spec = mog_from_json(doc.at("mog"));
    if (artifact.source == DenoiserSource::Corrupted) artifact.corruption = corruption_from_json(doc.at("corruption"));
    if (artifact.source == DenoiserSource::Neural) {
      const auto& n = doc.at("neural");
      auto model = std::make_shared<NeuralDenoiserModel>(mlp_from_json(n.at("net")), n.at("num_classes").get<int>(),
                                                         n.at("embedding_dim").get<int>(),
                                                         n.at("data_std").get<double>());
      model->iterations_trained = n.at("iterations_trained").get<int>();
      artifact.model = std::move(model);
    }
    return artifact;
  });
}

json to_json(const GuidanceWeightFn& fn) {
  json doc = {{"format", "guidelearn.guidance"}, {"version", kCheckpointVersion}, {"tag", weight_fn_tag(fn)}};
  std::visit(
      [&](const auto& w) {
        using T = std::decay_t<decltype(w)>;
        if constexpr (std::is_same_v<T, ConstantWeight>) {
          doc["omega"] = w.omega;
        } else if constexpr (std::is_same_v<T, LimitedIntervalWeight>) {
          doc["omega"] = w.omega;
          doc["t_lo"] = w.t_lo;
          doc["t_hi"] = w.t_hi;
        } else if constexpr (std::is_same_v<T, TableWeight>) {
          doc["bins"] = w.bins;
          doc["num_classes"] = w.num_classes;
          doc["clamp"] = w.clamp;
          doc["values"] = w.values;
        } else {
          doc["num_classes"] = w.num_classes();
          doc["embed"] = to_json(w.embed());
          doc["trunk"] = to_json(w.trunk());
        }
      },
      fn);
  return doc;
}

GuidanceWeightFn weight_fn_from_json(const json& doc) {
  check_header(doc, "guidelearn.guidance");
  return guarded("guidance", [&]() -> GuidanceWeightFn {
    const auto tag = doc.at("tag").get<std::string>();
    if (tag == "constant") return ConstantWeight{doc.at("omega").get<double>()};
    if (tag == "limited_interval") {
      return LimitedIntervalWeight{doc.at("omega").get<double>(), doc.at("t_lo").get<double>(),
                                   doc.at("t_hi").get<double>()};
    }
    if (tag == "table") {
      TableWeight table;
      table.bins = doc.at("bins").get<int>();
      table.num_classes = doc.at("num_classes").get<int>();
      table.clamp = doc.at("clamp").get<double>();
      table.values = doc.at("values").get<std::vector<double>>();
      if (table.bins < 1 || table.num_classes < 1 ||
          table.values.size() != static_cast<std::size_t>(table.bins * table.bins * table.num_classes)) {
        throw ConfigError("guidance table: value count does not match bins and classes");
      }
      return table;
    }
    if (tag == "net") {
      return GuidanceNet(mlp_from_json(doc.at("embed")), mlp_from_json(doc.at("trunk")),
                         doc.at("num_classes").get<int>());
    }
    throw ConfigError("unknown guidance tag: " + tag);
  });
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& body) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << body;
  if (!out) throw ConfigError("failed writing " + path.string());
}

}  // namespace guidelearn
