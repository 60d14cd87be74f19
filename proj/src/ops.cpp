#include "mminr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "mminr/errors.hpp"

namespace mminr::ops {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using MapConstMat = Eigen::Map<const Mat<T>>;
template <typename T>
using StridedMap = Eigen::Map<Mat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using StridedConstMap = Eigen::Map<const Mat<T>, 0, Eigen::OuterStride<>>;

// Bound on im2col buffer entries per chunk (~64 MB for double).
constexpr std::size_t kMaxColumnEntries = std::size_t{1} << 23;

int rows_per_chunk(int reduce, int height, int width) {
  const std::size_t per_row = static_cast<std::size_t>(reduce) * width;
  return static_cast<int>(std::clamp<std::size_t>(kMaxColumnEntries / std::max<std::size_t>(per_row, 1),
                                                  1, static_cast<std::size_t>(height)));
}

// Column buffer is (pixels x reduce) column-major: one contiguous run of
// block pixels per (channel, ky, kx).
template <typename T>
void im2col(const T* x, int channels, int height, int width, int kernel, int y0, int y1, T* col) {
  const int pad = kernel / 2;
  const std::size_t block = static_cast<std::size_t>(y1 - y0) * width;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        T* dst = col + (static_cast<std::size_t>(c * kernel + ky) * kernel + kx) * block;
        const int dx = kx - pad;
        const int x_lo = std::max(0, -dx);
        const int x_hi = std::min(width, width - dx);
        for (int y = y0; y < y1; ++y) {
          T* row = dst + static_cast<std::size_t>(y - y0) * width;
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height || x_lo >= x_hi) {
            std::fill(row, row + width, T(0));
            continue;
          }
          std::fill(row, row + x_lo, T(0));
          std::memcpy(row + x_lo, plane + static_cast<std::size_t>(iy) * width + x_lo + dx,
                      sizeof(T) * static_cast<std::size_t>(x_hi - x_lo));
          std::fill(row + x_hi, row + width, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kernel, int y0, int y1, T* dx) {
  const int pad = kernel / 2;
  const std::size_t block = static_cast<std::size_t>(y1 - y0) * width;
  for (int c = 0; c < channels; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * height * width;
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const T* src = col + (static_cast<std::size_t>(c * kernel + ky) * kernel + kx) * block;
        const int dxo = kx - pad;
        const int x_lo = std::max(0, -dxo);
        const int x_hi = std::min(width, width - dxo);
        for (int y = y0; y < y1; ++y) {
          const int iy = y + ky - pad;
          if (iy < 0 || iy >= height) continue;
          const T* row = src + static_cast<std::size_t>(y - y0) * width;
          T* out = plane + static_cast<std::size_t>(iy) * width + dxo;
          for (int x = x_lo; x < x_hi; ++x) out[x] += row[x];
        }
      }
    }
  }
}

void check_kernel(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("convolution kernel must be odd and positive");
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                 int out_channels, int kernel) {
  check_kernel(kernel);
  const int cin = x.channels();
  const int h = x.height();
  const int w = x.width();
  const int reduce = cin * kernel * kernel;
  if (weight.size() != static_cast<std::size_t>(reduce) * out_channels) {
    throw ShapeError("conv2d weight size does not match " + std::to_string(out_channels) + "x" +
                     std::to_string(cin) + "x" + std::to_string(kernel) + "x" + std::to_string(kernel));
  }
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_channels)) {
    throw ShapeError("conv2d bias size mismatch");
  }
  Tensor<T> y(x.batch(), out_channels, h, w);
  const std::size_t pixels = x.plane_size();
  MapConstMat<T> wt(weight.data(), reduce, out_channels);

  for (int n = 0; n < x.batch(); ++n) {
    const T* xs = x.sample(n).data();
    T* ys = y.sample(n).data();
    if (kernel == 1) {
      MapConstMat<T> xin(xs, static_cast<Eigen::Index>(pixels), cin);
      MapMat<T> out(ys, static_cast<Eigen::Index>(pixels), out_channels);
      out.noalias() = xin * wt;
    } else {
      const int chunk = rows_per_chunk(reduce, h, w);
      std::vector<T> col(static_cast<std::size_t>(chunk) * w * reduce);
      for (int y0 = 0; y0 < h; y0 += chunk) {
        const int y1 = std::min(h, y0 + chunk);
        const auto block = static_cast<Eigen::Index>(y1 - y0) * w;
        im2col(xs, cin, h, w, kernel, y0, y1, col.data());
        MapConstMat<T> cols(col.data(), block, reduce);
        StridedMap<T> out(ys + static_cast<std::size_t>(y0) * w, block, out_channels,
                          Eigen::OuterStride<>(static_cast<Eigen::Index>(pixels)));
        out.noalias() = cols * wt;
      }
    }
    if (!bias.empty()) {
      for (int o = 0; o < out_channels; ++o) {
        T* p = ys + static_cast<std::size_t>(o) * pixels;
        const T b = bias[o];
        for (std::size_t i = 0; i < pixels; ++i) p[i] += b;
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy,
                     int kernel, Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias) {
  check_kernel(kernel);
  const int cin = x.channels();
  const int cout = dy.channels();
  const int h = x.height();
  const int w = x.width();
  const int reduce = cin * kernel * kernel;
  if (dy.batch() != x.batch() || dy.height() != h || dy.width() != w) {
    throw ShapeError("conv2d_backward gradient shape mismatch");
  }
  if (dweight.size() != weight.size() || weight.size() != static_cast<std::size_t>(reduce) * cout) {
    throw ShapeError("conv2d_backward weight size mismatch");
  }
  const std::size_t pixels = x.plane_size();
  MapConstMat<T> wt(weight.data(), reduce, cout);
  MapMat<T> dwt(dweight.data(), reduce, cout);
  if (dx) *dx = Tensor<T>(x.batch(), cin, h, w);

  for (int n = 0; n < x.batch(); ++n) {
    const T* xs = x.sample(n).data();
    const T* dys = dy.sample(n).data();
    if (!dbias.empty()) {
      for (int o = 0; o < cout; ++o) {
        const T* p = dys + static_cast<std::size_t>(o) * pixels;
        T s = 0;
        for (std::size_t i = 0; i < pixels; ++i) s += p[i];
        dbias[o] += s;
      }
    }
    if (kernel == 1) {
      MapConstMat<T> xin(xs, static_cast<Eigen::Index>(pixels), cin);
      MapConstMat<T> g(dys, static_cast<Eigen::Index>(pixels), cout);
      dwt.noalias() += xin.transpose() * g;
      if (dx) {
        MapMat<T> dxin(dx->sample(n).data(), static_cast<Eigen::Index>(pixels), cin);
        dxin.noalias() = g * wt.transpose();
      }
      continue;
    }
    const int chunk = rows_per_chunk(reduce, h, w);
    std::vector<T> col(static_cast<std::size_t>(chunk) * w * reduce);
    for (int y0 = 0; y0 < h; y0 += chunk) {
      const int y1 = std::min(h, y0 + chunk);
      const auto block = static_cast<Eigen::Index>(y1 - y0) * w;
      im2col(xs, cin, h, w, kernel, y0, y1, col.data());
      StridedConstMap<T> g(dys + static_cast<std::size_t>(y0) * w, block, cout,
                           Eigen::OuterStride<>(static_cast<Eigen::Index>(pixels)));
      {
        MapConstMat<T> cols(col.data(), block, reduce);
        dwt.noalias() += cols.transpose() * g;
      }
      if (dx) {
        MapMat<T> dcols(col.data(), block, reduce);
        dcols.noalias() = g * wt.transpose();
        col2im_add(col.data(), cin, h, w, kernel, y0, y1, dx->sample(n).data());
      }
    }
  }
}

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax) {
  if (x.height() % 2 != 0 || x.width() % 2 != 0) {
    throw ShapeError("downsample needs even spatial dimensions, got " + shape_string(x.shape()));
  }
  const int oh = x.height() / 2;
  const int ow = x.width() / 2;
  Tensor<T> y(x.batch(), x.channels(), oh, ow);
  if (argmax) argmax->assign(y.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < x.batch(); ++n) {
    for (int c = 0; c < x.channels(); ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * x.channels() + c) * x.plane_size();
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          std::size_t best = base + static_cast<std::size_t>(2 * oy) * x.width() + 2 * ox;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + static_cast<std::size_t>(2 * oy + dy) * x.width() + 2 * ox + dx;
              if (x.data()[idx] > x.data()[best]) best = idx;
            }
          }
          y.data()[o] = x.data()[best];
          if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> max_pool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                             const std::array<int, 4>& input_shape) {
  if (argmax.size() != dy.size()) throw ShapeError("max_pool2_backward index size mismatch");
  Tensor<T> dx(input_shape[0], input_shape[1], input_shape[2], input_shape[3]);
  for (std::size_t i = 0; i < dy.size(); ++i) dx.data()[argmax[i]] += dy.data()[i];
  return dx;
}

namespace {

// Source taps for one output coordinate of a 2x half-pixel bilinear upsample.
struct Taps {
  int i0;
  int i1;
  double w1;
};

Taps bilinear_taps(int out, int in_len) {
  double src = (out + 0.5) / 2.0 - 0.5;
  if (src < 0.0) src = 0.0;
  int i0 = static_cast<int>(std::floor(src));
  if (i0 > in_len - 1) i0 = in_len - 1;
  const int i1 = std::min(i0 + 1, in_len - 1);
  return {i0, i1, src - i0};
}

}  // namespace

template <typename T>
Tensor<T> upsample2(const Tensor<T>& x, ResampleMode mode) {
  const int h = x.height();
  const int w = x.width();
  Tensor<T> y(x.batch(), x.channels(), 2 * h, 2 * w);
  for (int n = 0; n < x.batch(); ++n) {
    for (int c = 0; c < x.channels(); ++c) {
      auto src = x.plane(n, c);
      auto dst = y.plane(n, c);
      for (int oy = 0; oy < 2 * h; ++oy) {
        for (int ox = 0; ox < 2 * w; ++ox) {
          T v;
          if (mode == ResampleMode::kNearest) {
            v = src[static_cast<std::size_t>(oy / 2) * w + ox / 2];
          } else {
            const Taps ty = bilinear_taps(oy, h);
            const Taps tx = bilinear_taps(ox, w);
            const T a = src[static_cast<std::size_t>(ty.i0) * w + tx.i0];
            const T b = src[static_cast<std::size_t>(ty.i0) * w + tx.i1];
            const T cc = src[static_cast<std::size_t>(ty.i1) * w + tx.i0];
            const T d = src[static_cast<std::size_t>(ty.i1) * w + tx.i1];
            const T wx = static_cast<T>(tx.w1);
            const T wy = static_cast<T>(ty.w1);
            v = (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * cc + wx * d);
          }
          dst[static_cast<std::size_t>(oy) * 2 * w + ox] = v;
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy, ResampleMode mode) {
  if (dy.height() % 2 != 0 || dy.width() % 2 != 0) throw ShapeError("upsample gradient must have even size");
  const int h = dy.height() / 2;
  const int w = dy.width() / 2;
  Tensor<T> dx(dy.batch(), dy.channels(), h, w);
  for (int n = 0; n < dy.batch(); ++n) {
    for (int c = 0; c < dy.channels(); ++c) {
      auto g = dy.plane(n, c);
      auto d = dx.plane(n, c);
      for (int oy = 0; oy < 2 * h; ++oy) {
        for (int ox = 0; ox < 2 * w; ++ox) {
          const T v = g[static_cast<std::size_t>(oy) * 2 * w + ox];
          if (mode == ResampleMode::kNearest) {
            d[static_cast<std::size_t>(oy / 2) * w + ox / 2] += v;
          } else {
            const Taps ty = bilinear_taps(oy, h);
            const Taps tx = bilinear_taps(ox, w);
            const T wx = static_cast<T>(tx.w1);
            const T wy = static_cast<T>(ty.w1);
            d[static_cast<std::size_t>(ty.i0) * w + tx.i0] += (1 - wy) * (1 - wx) * v;
            d[static_cast<std::size_t>(ty.i0) * w + tx.i1] += (1 - wy) * wx * v;
            d[static_cast<std::size_t>(ty.i1) * w + tx.i0] += wy * (1 - wx) * v;
            d[static_cast<std::size_t>(ty.i1) * w + tx.i1] += wy * wx * v;
          }
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, std::span<const T> gamma,
                     std::span<const T> beta, T eps, GroupNormCache<T>* cache) {
  const int c = x.channels();
  if (groups < 1 || c % groups != 0) throw ConfigError("group count must divide channel count");
  if (gamma.size() != static_cast<std::size_t>(c) || beta.size() != static_cast<std::size_t>(c)) {
    throw ShapeError("group_norm affine parameter size mismatch");
  }
  const int per_group = c / groups;
  const std::size_t group_len = x.plane_size() * per_group;
  Tensor<T> y(x.batch(), c, x.height(), x.width());
  Tensor<T> xhat;
  if (cache) {
    xhat = Tensor<T>(x.batch(), c, x.height(), x.width());
    cache->inv_std.assign(static_cast<std::size_t>(x.batch()) * groups, T(0));
    cache->groups = groups;
  }
  for (int n = 0; n < x.batch(); ++n) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t off = n * x.sample_size() + g * group_len;
      const T* src = x.data() + off;
      double mean = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) mean += src[i];
      mean /= static_cast<double>(group_len);
      double var = 0.0;
      for (std::size_t i = 0; i < group_len; ++i) {
        const double d = src[i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(group_len);
      const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const T m = static_cast<T>(mean);
      if (cache) cache->inv_std[static_cast<std::size_t>(n) * groups + g] = inv;
      for (int k = 0; k < per_group; ++k) {
        const int ch = g * per_group + k;
        const std::size_t poff = off + k * x.plane_size();
        for (std::size_t i = 0; i < x.plane_size(); ++i) {
          const T xh = (x.data()[poff + i] - m) * inv;
          if (cache) xhat.data()[poff + i] = xh;
          y.data()[poff + i] = gamma[ch] * xh + beta[ch];
        }
      }
    }
  }
  if (cache) cache->normalized = std::move(xhat);
  return y;
}

template <typename T>
Tensor<T> group_norm_backward(const Tensor<T>& dy, const GroupNormCache<T>& cache,
                              std::span<const T> gamma, std::span<T> dgamma, std::span<T> dbeta) {
  const auto& xhat = cache.normalized;
  if (!dy.same_shape(xhat)) throw ShapeError("group_norm_backward shape mismatch");
  const int c = dy.channels();
  const int groups = cache.groups;
  const int per_group = c / groups;
  const std::size_t plane = dy.plane_size();
  const std::size_t group_len = plane * per_group;
  Tensor<T> dx(dy.batch(), c, dy.height(), dy.width());
  for (int n = 0; n < dy.batch(); ++n) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t off = n * dy.sample_size() + g * group_len;
      double sum_dxh = 0.0;
      double sum_dxh_xh = 0.0;
      for (int k = 0; k < per_group; ++k) {
        const int ch = g * per_group + k;
        const std::size_t poff = off + k * plane;
        double sg = 0.0;
        double sb = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = dy.data()[poff + i];
          const double xh = xhat.data()[poff + i];
          sg += d * xh;
          sb += d;
        }
        dgamma[ch] += static_cast<T>(sg);
        dbeta[ch] += static_cast<T>(sb);
        sum_dxh += sb * gamma[ch];
        sum_dxh_xh += sg * gamma[ch];
      }
      const double inv = cache.inv_std[static_cast<std::size_t>(n) * groups + g];
      const double mean_dxh = sum_dxh / static_cast<double>(group_len);
      const double mean_dxh_xh = sum_dxh_xh / static_cast<double>(group_len);
      for (int k = 0; k < per_group; ++k) {
        const int ch = g * per_group + k;
        const std::size_t poff = off + k * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double dxh = static_cast<double>(dy.data()[poff + i]) * gamma[ch];
          const double xh = xhat.data()[poff + i];
          dx.data()[poff + i] = static_cast<T>(inv * (dxh - mean_dxh - xh * mean_dxh_xh));
        }
      }
    }
  }
  return dx;
}

template <typename T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  Tensor<T> dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(y.data()[i] > T(0))) dx.data()[i] = T(0);
  }
  return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (T& v : y.values()) v = sigmoid(v);
  return y;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.batch() != b.batch() || a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError("cannot concatenate " + shape_string(a.shape()) + " with " + shape_string(b.shape()));
  }
  Tensor<T> y(a.batch(), a.channels() + b.channels(), a.height(), a.width());
  for (int n = 0; n < a.batch(); ++n) {
    auto dst = y.sample(n);
    auto sa = a.sample(n);
    auto sb = b.sample(n);
    std::copy(sa.begin(), sa.end(), dst.begin());
    std::copy(sb.begin(), sb.end(), dst.begin() + static_cast<std::ptrdiff_t>(sa.size()));
  }
  return y;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first_channels) {
  if (first_channels < 0 || first_channels > x.channels()) throw ShapeError("bad channel split");
  Tensor<T> a(x.batch(), first_channels, x.height(), x.width());
  Tensor<T> b(x.batch(), x.channels() - first_channels, x.height(), x.width());
  for (int n = 0; n < x.batch(); ++n) {
    auto src = x.sample(n);
    auto da = a.sample(n);
    auto db = b.sample(n);
    std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(da.size()), da.begin());
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(da.size()), src.end(), db.begin());
  }
  return {std::move(a), std::move(b)};
}

#define MMINR_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int); \
  template void conv2d_backward(const Tensor<T>&, std::span<const T>, const Tensor<T>&, int,     \
                                Tensor<T>*, std::span<T>, std::span<T>);                         \
  template Tensor<T> max_pool2(const Tensor<T>&, std::vector<std::uint32_t>*);                   \
  template Tensor<T> max_pool2_backward(const Tensor<T>&, const std::vector<std::uint32_t>&,     \
                                        const std::array<int, 4>&);                              \
  template Tensor<T> upsample2(const Tensor<T>&, ResampleMode);                                  \
  template Tensor<T> upsample2_backward(const Tensor<T>&, ResampleMode);                         \
  template Tensor<T> group_norm(const Tensor<T>&, int, std::span<const T>, std::span<const T>,  \
                                T, GroupNormCache<T>*);                                          \
  template Tensor<T> group_norm_backward(const Tensor<T>&, const GroupNormCache<T>&,             \
                                         std::span<const T>, std::span<T>, std::span<T>);        \
  template T sigmoid(T);                                                                         \
  template Tensor<T> relu(const Tensor<T>&);                                                     \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                  \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                        \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);

MMINR_INSTANTIATE_OPS(float)
MMINR_INSTANTIATE_OPS(double)

}  // namespace mminr::ops
