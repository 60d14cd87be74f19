#pragma once

#include <filesystem>

#include "json.hpp"
#include "mminr/mminr_net.hpp"

namespace mminr {

// Checkpoint layout:
//   8 bytes   magic "MMINRCKP"
//   u32 LE    format version
//   u64 LE    header length in bytes
//   header    UTF-8 JSON: format tag, version, dtype, model config echo,
//             parameter table (name, shape, count, offset) and free-form metadata
//   payload   parameter values, little-endian, in table order
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = kCheckpointVersion;
  std::string dtype;
  ModelConfig config;
  nlohmann::json metadata;
};

template <typename T>
void save_checkpoint(const MminrNet<T>& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Loads into precision T, converting from the stored dtype if needed.
template <typename T>
MminrNet<T> load_checkpoint(const std::filesystem::path& path, CheckpointHeader* header = nullptr);

CheckpointHeader read_checkpoint_header(const std::filesystem::path& path);

}  // namespace mminr
