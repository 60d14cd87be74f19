#include "mminr/experiment.hpp"

#include <fstream>

#include "mminr/errors.hpp"

namespace mminr {

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  weights.validate();
}

void to_json(nlohmann::json& j, const ExperimentConfig& cfg) {
  j = nlohmann::json{{"model", cfg.model},
                     {"train", cfg.train},
                     {"weights", cfg.weights},
                     {"data", {{"train", cfg.train_data.generic_string()},
                               {"val", cfg.val_data.generic_string()}}}};
}

void from_json(const nlohmann::json& j, ExperimentConfig& cfg) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  if (j.contains("model")) {
    const auto& m = j.at("model");
    cfg.model = m.is_string() ? ModelConfig::preset(m.get<std::string>()) : m.get<ModelConfig>();
  }
  if (j.contains("train")) cfg.train = j.at("train").get<TrainConfig>();
  if (j.contains("weights")) cfg.weights = j.at("weights").get<WeightSchedule>();
  if (j.contains("data")) {
    const auto& d = j.at("data");
    if (d.contains("train")) cfg.train_data = d.at("train").get<std::string>();
    if (d.contains("val")) cfg.val_data = d.at("val").get<std::string>();
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config " + path.string());
  ExperimentConfig cfg;
  try {
    cfg = nlohmann::json::parse(in).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("experiment config " + path.string() + ": " + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_experiment(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << nlohmann::json(cfg).dump(2) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace mminr
