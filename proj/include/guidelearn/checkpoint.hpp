#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <json.hpp>

#include "guidelearn/denoisers.hpp"
#include "guidelearn/guidance.hpp"
#include "guidelearn/nn.hpp"

namespace guidelearn {

inline constexpr int kCheckpointVersion = 1;

enum class DenoiserSource { Analytic, Corrupted, Neural };

const char* denoiser_source_name(DenoiserSource source);
DenoiserSource parse_denoiser_source(const std::string& name);

/// Everything needed to rebuild a conditional/unconditional denoiser pair.
struct DenoiserArtifact {
  DenoiserSource source = DenoiserSource::Analytic;
  MogSpec spec = MogSpec::default_mixture();
  CorruptionSpec corruption;
  std::shared_ptr<const NeuralDenoiserModel> model;

  DenoiserPair pair() const;
};

// All loaders throw ConfigError on malformed or version-mismatched documents.
nlohmann::json to_json(const MlpArchitecture& arch);
MlpArchitecture architecture_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const Mlp& mlp);
Mlp mlp_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const MogSpec& spec);
MogSpec mog_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const CorruptionSpec& corruption);
CorruptionSpec corruption_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const DenoiserArtifact& artifact);
DenoiserArtifact denoiser_from_json(const nlohmann::json& doc);

nlohmann::json to_json(const GuidanceWeightFn& fn);
GuidanceWeightFn weight_fn_from_json(const nlohmann::json& doc);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& body);

}  // namespace guidelearn
