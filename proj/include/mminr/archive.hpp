#pragma once

#include <filesystem>
#include <vector>

#include "mminr/radar_data.hpp"

namespace mminr {

// A sequence archive is a directory holding `manifest.json` and `frames.bin`
// (frame-major, row-major little-endian float32 rain rates in mm/h).
inline constexpr const char* kManifestName = "manifest.json";
inline constexpr const char* kFramesName = "frames.bin";

void write_archive(const RadarSequence& seq, const std::filesystem::path& dir);

/// Throws DataIntegrityError on malformed manifests, payload size mismatch,
/// and non-finite or negative cells. Values above the cap are kept.
RadarSequence read_archive(const std::filesystem::path& dir);

/// Reads every archive directly under `root`, ordered by directory name.
std::vector<RadarSequence> read_archive_set(const std::filesystem::path& root);

/// Writes each sequence to `root/<id>`.
void write_archive_set(const std::vector<RadarSequence>& seqs, const std::filesystem::path& root);

}  // namespace mminr
