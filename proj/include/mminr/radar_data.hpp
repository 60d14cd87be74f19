#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mminr/tensor.hpp"

namespace mminr {

/// Rain rates above this value (mm/h) are assigned the cap before normalization.
inline constexpr double kRainCapMmPerHour = 19.0;
inline constexpr int kDefaultIntervalSeconds = 300;

/// y = ln(x + 1) / 1.5 - 1
double normalize_value(double rain_rate);
/// x = exp(1.5 (y + 1)) - 1
double denormalize_value(double normalized);
/// Image of the cap under normalize_value: ln(20)/1.5 - 1.
double normalized_upper_bound();
inline constexpr double kNormalizedLowerBound = -1.0;

/// One rain-rate grid (mm/h) at one timestamp.
struct RainField {
  int height = 0;
  int width = 0;
  std::vector<float> grid;
  std::optional<std::int64_t> timestamp;

  RainField() = default;
  RainField(int h, int w, float fill = 0.0f);

  float& at(int y, int x) { return grid[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return grid[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return grid.size(); }
  bool operator==(const RainField&) const = default;
};

struct RadarSequence {
  std::vector<RainField> frames;
  int interval_seconds = kDefaultIntervalSeconds;
  std::string id;

  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t length() const { return frames.size(); }
  /// Throws ShapeError when frames disagree in size or the sequence is empty.
  void validate() const;
  bool operator==(const RadarSequence&) const = default;
};

/// Normalized frames stacked as a (1, frames, H, W) tensor.
struct NormalizedSequence {
  Tensor<double> tensor;
  std::string source_id;

  int frames() const { return tensor.channels(); }
};

struct DenormalizeStats {
  std::size_t clamped_high = 0;
  std::size_t clamped_low = 0;
};

/// Throws DataIntegrityError for negative or non-finite cells.
RainField cap_rainfall(const RainField& field);
RadarSequence cap_sequence(const RadarSequence& seq);

/// Requires a capped, non-negative sequence.
NormalizedSequence normalize(const RadarSequence& seq);

/// Values outside the normalized range are clamped to [0, 19] mm/h and counted in `stats`.
RadarSequence denormalize(const NormalizedSequence& norm, DenormalizeStats* stats = nullptr);

struct WindowPair {
  NormalizedSequence input;
  NormalizedSequence target;
};

/// Caps, then splits the first n frames (input) from the next m (target).
WindowPair window(const RadarSequence& seq, int n, int m);

struct SyntheticConfig {
  int num_cells = 6;
  std::pair<double, double> cell_intensity_range{1.0, 15.0};
  std::pair<double, double> cell_sigma_range{3.0, 7.0};
  std::pair<double, double> advection_velocity{2.0, 1.0};  // (x, y) pixels per frame
  double noise_rate = 0.2;
  std::pair<double, double> noise_sigma_range{1.5, 3.5};
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr int kMinSyntheticSize = 32;

/// Advecting Gaussian rain cells plus noise blobs that appear and vanish.
/// Pure function of its arguments.
RadarSequence generate_synthetic(const SyntheticConfig& cfg, int length, int size);

/// One semi-Lagrangian step: out(y, x) = bilinear(in, y - vy, x - vx), zero outside the grid.
std::vector<float> advect_bilinear(const std::vector<float>& field, int height, int width,
                                   double vx, double vy);

}  // namespace mminr
