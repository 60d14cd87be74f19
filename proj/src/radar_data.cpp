#include "mminr/radar_data.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mminr/errors.hpp"
#include "mminr/random.hpp"

namespace mminr {

double normalize_value(double rain_rate) { return std::log(rain_rate + 1.0) / 1.5 - 1.0; }

double denormalize_value(double normalized) { return std::exp(1.5 * (normalized + 1.0)) - 1.0; }

double normalized_upper_bound() { return normalize_value(kRainCapMmPerHour); }

RainField::RainField(int h, int w, float fill)
    : height(h), width(w), grid(static_cast<std::size_t>(h) * w, fill) {
  if (h <= 0 || w <= 0) throw ShapeError("rain field dimensions must be positive");
}

void RadarSequence::validate() const {
  if (frames.empty()) throw ShapeError("sequence '" + id + "' has no frames");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.height != height() || f.width != width() ||
        f.grid.size() != static_cast<std::size_t>(f.height) * f.width) {
      throw ShapeError("sequence '" + id + "' frame " + std::to_string(t) +
                       " does not match the first frame's shape");
    }
  }
}

RainField cap_rainfall(const RainField& field) {
  RainField out = field;
  for (float& v : out.grid) {
    if (!std::isfinite(v)) throw DataIntegrityError("non-finite rain rate");
    if (v < 0.0f) throw DataIntegrityError("negative rain rate " + std::to_string(v));
    v = std::min(v, static_cast<float>(kRainCapMmPerHour));
  }
  return out;
}

RadarSequence cap_sequence(const RadarSequence& seq) {
  RadarSequence out = seq;
  for (auto& f : out.frames) f = cap_rainfall(f);
  return out;
}

NormalizedSequence normalize(const RadarSequence& seq) {
  seq.validate();
  NormalizedSequence out;
  out.source_id = seq.id;
  const int frames = static_cast<int>(seq.length());
  out.tensor = Tensor<double>(1, frames, seq.height(), seq.width());
  for (int t = 0; t < frames; ++t) {
    auto plane = out.tensor.plane(0, t);
    const auto& grid = seq.frames[t].grid;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double x = grid[i];
      if (!std::isfinite(x) || x < 0.0) {
        throw DataIntegrityError("cannot normalize negative or non-finite rain rate in '" +
                                 seq.id + "'");
      }
      if (x > kRainCapMmPerHour) {
        throw DataIntegrityError("cannot normalize uncapped rain rate " + std::to_string(x) +
                                 " in '" + seq.id + "'");
      }
      plane[i] = normalize_value(x);
    }
  }
  return out;
}

RadarSequence denormalize(const NormalizedSequence& norm, DenormalizeStats* stats) {
  const auto& t = norm.tensor;
  if (t.batch() != 1) throw ShapeError("normalized sequence must have batch size 1");
  const double upper = normalized_upper_bound();
  RadarSequence out;
  out.id = norm.source_id;
  out.frames.reserve(t.channels());
  for (int f = 0; f < t.channels(); ++f) {
    RainField field(t.height(), t.width());
    auto plane = t.plane(0, f);
    for (std::size_t i = 0; i < plane.size(); ++i) {
      double y = plane[i];
      if (std::isnan(y)) throw DataIntegrityError("NaN in normalized sequence");
      if (y > upper) {
        y = upper;
        if (stats) ++stats->clamped_high;
      } else if (y < kNormalizedLowerBound) {
        y = kNormalizedLowerBound;
        if (stats) ++stats->clamped_low;
      }
      const double x = y >= upper ? kRainCapMmPerHour : denormalize_value(y);
      field.grid[i] = static_cast<float>(std::clamp(x, 0.0, kRainCapMmPerHour));
    }
    out.frames.push_back(std::move(field));
  }
  return out;
}

WindowPair window(const RadarSequence& seq, int n, int m) {
  if (n < 1 || m < 1) throw ConfigError("window sizes must be positive");
  const auto required = static_cast<std::size_t>(n + m);
  if (seq.length() < required) {
    throw ShapeError("sequence '" + seq.id + "' has " + std::to_string(seq.length()) +
                     " frames; windowing " + std::to_string(n) + "-to-" + std::to_string(m) +
                     " requires at least " + std::to_string(required));
  }
  RadarSequence head;
  head.id = seq.id;
  head.interval_seconds = seq.interval_seconds;
  head.frames.assign(seq.frames.begin(), seq.frames.begin() + n);
  RadarSequence tail = head;
  tail.frames.assign(seq.frames.begin() + n, seq.frames.begin() + n + m);
  return {normalize(cap_sequence(head)), normalize(cap_sequence(tail))};
}

void SyntheticConfig::validate() const {
  auto ordered = [](const std::pair<double, double>& p) { return p.first <= p.second; };
  if (num_cells < 0) throw ConfigError("num_cells must be non-negative");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) throw ConfigError("noise_rate must lie in [0,1]");
  if (!ordered(cell_intensity_range) || cell_intensity_range.first < 0.0 ||
      cell_intensity_range.second > kRainCapMmPerHour) {
    throw ConfigError("cell intensities must lie within [0, 19] mm/h");
  }
  if (!ordered(cell_sigma_range) || cell_sigma_range.first <= 0.0) {
    throw ConfigError("cell sigma range must be positive and ordered");
  }
  if (!ordered(noise_sigma_range) || noise_sigma_range.first <= 0.0) {
    throw ConfigError("noise sigma range must be positive and ordered");
  }
  if (!std::isfinite(advection_velocity.first) || !std::isfinite(advection_velocity.second)) {
    throw ConfigError("advection velocity must be finite");
  }
}

std::vector<float> advect_bilinear(const std::vector<float>& field, int height, int width,
                                   double vx, double vy) {
  std::vector<float> out(field.size(), 0.0f);
  auto sample = [&](int y, int x) -> double {
    if (y < 0 || y >= height || x < 0 || x >= width) return 0.0;
    return field[static_cast<std::size_t>(y) * width + x];
  };
  for (int y = 0; y < height; ++y) {
    const double sy = y - vy;
    const double y0 = std::floor(sy);
    const double fy = sy - y0;
    const int iy = static_cast<int>(y0);
    for (int x = 0; x < width; ++x) {
      const double sx = x - vx;
      const double x0 = std::floor(sx);
      const double fx = sx - x0;
      const int ix = static_cast<int>(x0);
      const double top = (1.0 - fx) * sample(iy, ix) + fx * sample(iy, ix + 1);
      const double bottom = (1.0 - fx) * sample(iy + 1, ix) + fx * sample(iy + 1, ix + 1);
      out[static_cast<std::size_t>(y) * width + x] =
          static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

namespace {

struct Blob {
  double cx;
  double cy;
  double sigma;
  double peak;
};

void splat(std::vector<double>& grid, int size, const Blob& b) {
  const double reach = 4.0 * b.sigma;
  const int y_lo = std::max(0, static_cast<int>(std::floor(b.cy - reach)));
  const int y_hi = std::min(size - 1, static_cast<int>(std::ceil(b.cy + reach)));
  const int x_lo = std::max(0, static_cast<int>(std::floor(b.cx - reach)));
  const int x_hi = std::min(size - 1, static_cast<int>(std::ceil(b.cx + reach)));
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const double dx = x - b.cx;
      const double dy = y - b.cy;
      grid[static_cast<std::size_t>(y) * size + x] += b.peak * std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
}

}  // namespace

RadarSequence generate_synthetic(const SyntheticConfig& cfg, int length, int size) {
  cfg.validate();
  if (size < kMinSyntheticSize) {
    throw ConfigError("synthetic frame size must be at least " +
                      std::to_string(kMinSyntheticSize) + " pixels");
  }
  if (length < 1) throw ConfigError("synthetic sequence length must be positive");

  const auto [vx, vy] = cfg.advection_velocity;
  // The predictable layer lives on a padded canvas so upwind inflow never reaches the view.
  const int margin = static_cast<int>(std::ceil(std::max(std::abs(vx), std::abs(vy)) * length)) + 2;
  const int canvas = size + 2 * margin;

  Rng rng(cfg.seed);
  const double area_ratio = static_cast<double>(canvas) * canvas / (static_cast<double>(size) * size);
  const int total_cells = static_cast<int>(std::lround(cfg.num_cells * area_ratio));

  std::vector<double> acc(static_cast<std::size_t>(canvas) * canvas, 0.0);
  for (int k = 0; k < total_cells; ++k) {
    Blob b;
    b.cx = rng.uniform(0.0, canvas);
    b.cy = rng.uniform(0.0, canvas);
    b.sigma = rng.uniform(cfg.cell_sigma_range.first, cfg.cell_sigma_range.second);
    b.peak = rng.uniform(cfg.cell_intensity_range.first, cfg.cell_intensity_range.second);
    splat(acc, canvas, b);
  }
  std::vector<float> field(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i) {
    field[i] = static_cast<float>(std::min(acc[i], kRainCapMmPerHour));
  }

  RadarSequence seq;
  seq.id = "synthetic-" + std::to_string(cfg.seed);
  seq.frames.reserve(length);
  std::vector<Blob> noise;
  std::vector<double> overlay(static_cast<std::size_t>(size) * size);

  for (int t = 0; t < length; ++t) {
    if (t > 0) {
      field = advect_bilinear(field, canvas, canvas, vx, vy);
      for (auto& b : noise) {
        b.cx += vx;
        b.cy += vy;
      }
      if (rng.uniform() < cfg.noise_rate) {
        if (noise.empty() || rng.uniform() < 0.5) {
          Blob b;
          b.cx = rng.uniform(0.0, size);
          b.cy = rng.uniform(0.0, size);
          b.sigma = rng.uniform(cfg.noise_sigma_range.first, cfg.noise_sigma_range.second);
          b.peak = rng.uniform(cfg.cell_intensity_range.first, cfg.cell_intensity_range.second);
          noise.push_back(b);
        } else {
          noise.erase(noise.begin() + static_cast<std::ptrdiff_t>(rng.index(noise.size())));
        }
      }
    }
    std::fill(overlay.begin(), overlay.end(), 0.0);
    for (const auto& b : noise) splat(overlay, size, b);

    RainField frame(size, size);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const std::size_t v = static_cast<std::size_t>(y) * size + x;
        const double base = field[static_cast<std::size_t>(y + margin) * canvas + x + margin];
        frame.grid[v] = static_cast<float>(std::min(base + overlay[v], kRainCapMmPerHour));
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

}  // namespace mminr
