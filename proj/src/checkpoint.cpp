#include "mminr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>

#include "mminr/errors.hpp"

namespace mminr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'M', 'M', 'I', 'N', 'R', 'C', 'K', 'P'};
constexpr const char* kFormatTag = "mminr-checkpoint";

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) {
    v |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  }
  return v;
}

template <typename T>
const char* dtype_name() {
  return std::is_same_v<T, float> ? "f32le" : "f64le";
}

struct RawCheckpoint {
  json header;
  std::uint32_t version = 0;
  std::string payload;
};

RawCheckpoint read_raw(const fs::path& path, bool with_payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataIntegrityError("cannot open checkpoint " + path.string());
  char prefix[20];
  in.read(prefix, sizeof prefix);
  if (!in || std::memcmp(prefix, kMagic, sizeof kMagic) != 0) {
    throw DataIntegrityError(path.string() + " is not a checkpoint file");
  }
  RawCheckpoint raw;
  raw.version = get_le<std::uint32_t>(prefix + 8);
  if (raw.version != kCheckpointVersion) {
    throw DataIntegrityError("unsupported checkpoint version " + std::to_string(raw.version));
  }
  const auto header_len = get_le<std::uint64_t>(prefix + 12);
  if (header_len > (std::uint64_t{1} << 30)) throw DataIntegrityError("implausible checkpoint header size");
  std::string header(header_len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataIntegrityError("truncated checkpoint header");
  try {
    raw.header = json::parse(header);
  } catch (const json::exception& e) {
    throw DataIntegrityError(std::string("malformed checkpoint header: ") + e.what());
  }
  if (raw.header.value("format", "") != kFormatTag) throw DataIntegrityError("checkpoint format tag mismatch");
  if (with_payload) {
    raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return raw;
}

}  // namespace

template <typename T>
void save_checkpoint(const MminrNet<T>& model, const fs::path& path, const json& metadata) {
  json table = json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.parameters()) {
    table.push_back({{"name", p.name}, {"shape", p.shape}, {"count", p.size()}, {"offset", offset}});
    offset += p.size() * sizeof(T);
  }
  json header = {
      {"format", kFormatTag},
      {"version", kCheckpointVersion},
      {"dtype", dtype_name<T>()},
      {"config", model.config()},
      {"parameters", table},
      {"metadata", metadata.is_null() ? json::object() : metadata},
  };
  const std::string header_text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
  out.reserve(out.size() + offset);
  for (const auto& p : model.parameters()) {
    for (T v : p.value) put_le<Bits>(out, std::bit_cast<Bits>(v));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("short write to " + path.string());
}

CheckpointHeader read_checkpoint_header(const fs::path& path) {
  auto raw = read_raw(path, false);
  CheckpointHeader h;
  h.version = raw.version;
  try {
    h.dtype = raw.header.at("dtype").get<std::string>();
    h.config = raw.header.at("config").get<ModelConfig>();
    h.metadata = raw.header.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw DataIntegrityError(std::string("incomplete checkpoint header: ") + e.what());
  }
  return h;
}

template <typename T>
MminrNet<T> load_checkpoint(const fs::path& path, CheckpointHeader* header_out) {
  auto raw = read_raw(path, true);
  CheckpointHeader h;
  json table;
  try {
    h.version = raw.version;
    h.dtype = raw.header.at("dtype").get<std::string>();
    h.config = raw.header.at("config").get<ModelConfig>();
    h.metadata = raw.header.value("metadata", json::object());
    table = raw.header.at("parameters");
  } catch (const json::exception& e) {
    throw DataIntegrityError(std::string("incomplete checkpoint header: ") + e.what());
  }
  if (h.dtype != "f32le" && h.dtype != "f64le") throw DataIntegrityError("unknown checkpoint dtype " + h.dtype);
  const std::size_t width = h.dtype == "f32le" ? 4 : 8;

  MminrNet<T> model(h.config);
  auto& params = model.parameters();
  if (table.size() != params.size()) {
    throw DataIntegrityError("checkpoint lists " + std::to_string(table.size()) +
                             " parameters, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    const auto& entry = table[i];
    if (entry.at("name").get<std::string>() != p.name ||
        entry.at("shape").get<std::vector<int>>() != p.shape) {
      throw DataIntegrityError("checkpoint parameter " + entry.at("name").get<std::string>() +
                               " does not match model parameter " + p.name);
    }
    const auto offset = entry.at("offset").get<std::uint64_t>();
    if (offset + p.size() * width > raw.payload.size()) throw DataIntegrityError("truncated checkpoint payload");
    const char* src = raw.payload.data() + offset;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (width == 4) {
        p.value[k] = static_cast<T>(std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * k)));
      } else {
        p.value[k] = static_cast<T>(std::bit_cast<double>(get_le<std::uint64_t>(src + 8 * k)));
      }
    }
  }
  if (header_out) *header_out = std::move(h);
  return model;
}

template void save_checkpoint(const MminrNet<float>&, const fs::path&, const json&);
template void save_checkpoint(const MminrNet<double>&, const fs::path&, const json&);
template MminrNet<float> load_checkpoint(const fs::path&, CheckpointHeader*);
template MminrNet<double> load_checkpoint(const fs::path&, CheckpointHeader*);

}  // namespace mminr
