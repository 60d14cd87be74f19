#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mminr/ops.hpp"

namespace mminr {

using UpsampleMode = ops::ResampleMode;

/// Architectural hyperparameters of the network.
///
/// Stage channels halve from one stage to the next and the deepest stage
/// repeats its predecessor's width, e.g. [256, 128, 64, 32, 32]. The input
/// size must be divisible by 2^(stages - 1).
struct ModelConfig {
  int n_in = 9;
  int m_out = 9;
  std::vector<int> stage_channels{256, 128, 64, 32, 32};
  int input_size = 288;
  int cbam_reduction = 16;
  int cbam_spatial_kernel = 7;
  UpsampleMode upsample_mode = UpsampleMode::kNearest;
  std::uint64_t seed = 0;

  int num_stages() const { return static_cast<int>(stage_channels.size()); }
  int size_divisor() const { return 1 << (num_stages() - 1); }
  /// Spatial size of stage `stage` (0-based).
  int stage_size(int stage) const { return input_size >> stage; }

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;

  /// 288x288, channels [256,128,64,32,32], 9 input frames.
  static ModelConfig paper();
  /// 64x64, channels [32,16,8,4,4]; reduction 4 so the 4-channel stages keep a hidden unit.
  static ModelConfig desk();
  /// 16x16, channels [8,4,2,2], 2-to-2 frames; for gradient checks.
  static ModelConfig tiny();
  /// Looks up "paper", "desk" or "tiny".
  static ModelConfig preset(const std::string& name);
};

std::string to_string(UpsampleMode mode);
UpsampleMode upsample_mode_from_string(const std::string& s);

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

}  // namespace mminr
