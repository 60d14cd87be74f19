#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "mminr/tensor.hpp"

// Differentiable tensor kernels. Every forward has a matching backward that
// accumulates parameter gradients into caller-owned buffers.
namespace mminr::ops {

/// Stride-1 "same" convolution with an odd square kernel.
/// weight is laid out [out][in][ky][kx]; bias has one entry per output channel.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias,
                 int out_channels, int kernel);

/// Adds dL/dweight and dL/dbias into the given buffers; writes dL/dx when dx is non-null.
template <typename T>
void conv2d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy,
                     int kernel, Tensor<T>* dx, std::span<T> dweight, std::span<T> dbias);

/// 2x2 max pooling, stride 2. `argmax` receives the flat input offset of each output.
template <typename T>
Tensor<T> max_pool2(const Tensor<T>& x, std::vector<std::uint32_t>* argmax = nullptr);

template <typename T>
Tensor<T> max_pool2_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax,
                             const std::array<int, 4>& input_shape);

enum class ResampleMode { kNearest, kBilinear };

/// Doubles height and width. Bilinear uses half-pixel centers with edge clamping.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x, ResampleMode mode);

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& dy, ResampleMode mode);

template <typename T>
struct GroupNormCache {
  Tensor<T> normalized;     // x_hat
  std::vector<T> inv_std;   // one per (sample, group)
  int groups = 1;
};

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int groups, std::span<const T> gamma,
                     std::span<const T> beta, T eps, GroupNormCache<T>* cache);

template <typename T>
Tensor<T> group_norm_backward(const Tensor<T>& dy, const GroupNormCache<T>& cache,
                              std::span<const T> gamma, std::span<T> dgamma, std::span<T> dbeta);

template <typename T>
T sigmoid(T v);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);
/// Uses the forward output to mask the gradient.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Splits along channels at `first_channels`.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int first_channels);

}  // namespace mminr::ops
