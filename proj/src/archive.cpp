#include "mminr/archive.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

#include "mminr/errors.hpp"

namespace mminr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kDtype = "f32le";
constexpr const char* kOrder = "frame-major row-major";

void put_f32le(char* dst, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) dst[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
}

float get_f32le(const char* src) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[b])) << (8 * b);
  }
  return std::bit_cast<float>(bits);
}

template <typename V>
V manifest_field(const json& manifest, const char* key, const fs::path& dir) {
  if (!manifest.contains(key)) {
    throw DataIntegrityError("manifest in " + dir.string() + " is missing field '" + key + "'");
  }
  try {
    return manifest.at(key).get<V>();
  } catch (const json::exception& e) {
    throw DataIntegrityError("manifest in " + dir.string() + " has invalid field '" + key +
                             "': " + e.what());
  }
}

}  // namespace

void write_archive(const RadarSequence& seq, const fs::path& dir) {
  seq.validate();
  fs::create_directories(dir);
  json manifest = {
      {"id", seq.id},
      {"frames", seq.length()},
      {"height", seq.height()},
      {"width", seq.width()},
      {"interval_seconds", seq.interval_seconds},
      {"dtype", kDtype},
      {"order", kOrder},
  };
  {
    std::ofstream out(dir / kManifestName, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / kManifestName).string());
    out << manifest.dump(2) << '\n';
  }
  const std::size_t cells = seq.length() * static_cast<std::size_t>(seq.height()) * seq.width();
  std::vector<char> payload(cells * 4);
  std::size_t pos = 0;
  for (const auto& f : seq.frames) {
    for (float v : f.grid) {
      put_f32le(payload.data() + pos, v);
      pos += 4;
    }
  }
  std::ofstream out(dir / kFramesName, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / kFramesName).string());
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error("short write to " + (dir / kFramesName).string());
}

RadarSequence read_archive(const fs::path& dir) {
  std::ifstream mf(dir / kManifestName);
  if (!mf) throw DataIntegrityError("no manifest.json in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(mf);
  } catch (const json::exception& e) {
    throw DataIntegrityError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (!manifest.is_object()) throw DataIntegrityError("manifest in " + dir.string() + " is not an object");

  RadarSequence seq;
  seq.id = manifest_field<std::string>(manifest, "id", dir);
  const auto frames = manifest_field<long long>(manifest, "frames", dir);
  const auto height = manifest_field<long long>(manifest, "height", dir);
  const auto width = manifest_field<long long>(manifest, "width", dir);
  seq.interval_seconds = manifest_field<int>(manifest, "interval_seconds", dir);
  const auto dtype = manifest_field<std::string>(manifest, "dtype", dir);
  const auto order = manifest_field<std::string>(manifest, "order", dir);
  if (dtype != kDtype) throw DataIntegrityError("unsupported dtype '" + dtype + "'");
  if (order != kOrder) throw DataIntegrityError("unsupported order '" + order + "'");
  if (frames < 1 || height < 1 || width < 1) {
    throw DataIntegrityError("manifest in " + dir.string() + " has non-positive dimensions");
  }

  const auto cells = static_cast<std::size_t>(frames * height * width);
  const fs::path bin = dir / kFramesName;
  std::error_code ec;
  const auto bytes = fs::file_size(bin, ec);
  if (ec) throw DataIntegrityError("no frames.bin in " + dir.string());
  if (bytes != cells * 4) {
    throw DataIntegrityError("frames.bin in " + dir.string() + " holds " + std::to_string(bytes) +
                             " bytes; manifest shape " + std::to_string(frames) + "x" +
                             std::to_string(height) + "x" + std::to_string(width) + " needs " +
                             std::to_string(cells * 4));
  }
  std::vector<char> payload(bytes);
  std::ifstream in(bin, std::ios::binary);
  in.read(payload.data(), static_cast<std::streamsize>(bytes));
  if (!in) throw DataIntegrityError("short read from " + bin.string());

  std::size_t pos = 0;
  seq.frames.reserve(frames);
  for (long long t = 0; t < frames; ++t) {
    RainField f(static_cast<int>(height), static_cast<int>(width));
    for (float& v : f.grid) {
      v = get_f32le(payload.data() + pos);
      pos += 4;
      if (!std::isfinite(v)) {
        throw DataIntegrityError("non-finite value in frame " + std::to_string(t) + " of " +
                                 dir.string());
      }
      if (v < 0.0f) {
        throw DataIntegrityError("negative rain rate in frame " + std::to_string(t) + " of " +
                                 dir.string());
      }
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

std::vector<RadarSequence> read_archive_set(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error("dataset directory " + root.string() + " does not exist");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::exists(entry.path() / kManifestName)) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<RadarSequence> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(read_archive(d));
  return out;
}

void write_archive_set(const std::vector<RadarSequence>& seqs, const fs::path& root) {
  for (const auto& s : seqs) {
    if (s.id.empty() || s.id.find('/') != std::string::npos) {
      throw Error("sequence id '" + s.id + "' is not usable as a directory name");
    }
    write_archive(s, root / s.id);
  }
}

}  // namespace mminr
