#include "mminr/model_config.hpp"

#include "mminr/errors.hpp"

namespace mminr {

void ModelConfig::validate() const {
  if (n_in < 1) throw ConfigError("n_in must be at least 1");
  if (m_out < 1) throw ConfigError("m_out must be at least 1");
  const int stages = num_stages();
  if (stages < 2 || stages > 12) throw ConfigError("stage_channels must list between 2 and 12 stages");
  for (int c : stage_channels) {
    if (c < 1) throw ConfigError("stage channel counts must be positive");
  }
  for (int i = 0; i + 2 < stages; ++i) {
    if (stage_channels[i] != 2 * stage_channels[i + 1]) {
      throw ConfigError("stage channels must halve between consecutive stages (stage " +
                        std::to_string(i + 1) + " has " + std::to_string(stage_channels[i]) +
                        ", stage " + std::to_string(i + 2) + " has " +
                        std::to_string(stage_channels[i + 1]) + ")");
    }
  }
  if (stage_channels[stages - 1] != stage_channels[stages - 2]) {
    throw ConfigError("the deepest stage must keep its predecessor's channel count");
  }
  if (input_size < 1 || input_size % size_divisor() != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) + " must be divisible by " +
                      std::to_string(size_divisor()));
  }
  if (cbam_reduction < 1) throw ConfigError("cbam_reduction must be positive");
  for (int c : stage_channels) {
    if (c < cbam_reduction) {
      throw ConfigError("CBAM reduction ratio " + std::to_string(cbam_reduction) +
                        " exceeds a stage channel count of " + std::to_string(c));
    }
  }
  if (cbam_spatial_kernel < 1 || cbam_spatial_kernel % 2 == 0) {
    throw ConfigError("cbam_spatial_kernel must be odd and positive");
  }
}

ModelConfig ModelConfig::paper() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig cfg;
  cfg.stage_channels = {32, 16, 8, 4, 4};
  cfg.input_size = 64;
  cfg.cbam_reduction = 4;
  return cfg;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.n_in = 2;
  cfg.m_out = 2;
  cfg.stage_channels = {8, 4, 2, 2};
  cfg.input_size = 16;
  cfg.cbam_reduction = 2;
  return cfg;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "desk") return desk();
  if (name == "tiny") return tiny();
  throw ConfigError("unknown preset '" + name + "' (expected paper, desk or tiny)");
}

std::string to_string(UpsampleMode mode) {
  return mode == UpsampleMode::kNearest ? "nearest" : "bilinear";
}

UpsampleMode upsample_mode_from_string(const std::string& s) {
  if (s == "nearest") return UpsampleMode::kNearest;
  if (s == "bilinear") return UpsampleMode::kBilinear;
  throw ConfigError("unknown upsample mode '" + s + "'");
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{
      {"n_in", cfg.n_in},
      {"m_out", cfg.m_out},
      {"stage_channels", cfg.stage_channels},
      {"input_size", cfg.input_size},
      {"cbam_reduction", cfg.cbam_reduction},
      {"cbam_spatial_kernel", cfg.cbam_spatial_kernel},
      {"upsample_mode", to_string(cfg.upsample_mode)},
      {"seed", cfg.seed},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  ModelConfig out = cfg;
  try {
    if (j.contains("preset")) out = ModelConfig::preset(j.at("preset").get<std::string>());
    if (j.contains("n_in")) out.n_in = j.at("n_in").get<int>();
    if (j.contains("m_out")) out.m_out = j.at("m_out").get<int>();
    if (j.contains("stage_channels")) out.stage_channels = j.at("stage_channels").get<std::vector<int>>();
    if (j.contains("input_size")) out.input_size = j.at("input_size").get<int>();
    if (j.contains("cbam_reduction")) out.cbam_reduction = j.at("cbam_reduction").get<int>();
    if (j.contains("cbam_spatial_kernel")) out.cbam_spatial_kernel = j.at("cbam_spatial_kernel").get<int>();
    if (j.contains("upsample_mode")) {
      out.upsample_mode = upsample_mode_from_string(j.at("upsample_mode").get<std::string>());
    }
    if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  cfg = out;
}

}  // namespace mminr
