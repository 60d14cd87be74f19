#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mminr/balanced_loss.hpp"
#include "mminr/model_config.hpp"
#include "mminr/training.hpp"

namespace mminr {

/// Everything needed to rerun a training job, stored as one JSON file.
struct ExperimentConfig {
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;
  WeightSchedule weights;
  std::filesystem::path train_data;
  std::filesystem::path val_data;

  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
/// Missing keys keep their defaults; `model` may be a preset name or an object.
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);

ExperimentConfig load_experiment(const std::filesystem::path& path);
void save_experiment(const ExperimentConfig& cfg, const std::filesystem::path& path);

}  // namespace mminr
