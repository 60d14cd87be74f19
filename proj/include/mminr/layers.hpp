#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mminr/ops.hpp"
#include "mminr/parameters.hpp"
#include "mminr/random.hpp"
#include "mminr/tensor.hpp"

// Building blocks of the network. Blocks own parameter ids, not values: the
// values live in a ParamStore so a model can be snapshotted, serialized and
// optimized as one flat list. Each forward optionally fills a Trace that the
// matching backward consumes.
namespace mminr {

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
         int kernel);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  typename ParamStore<T>::Id weight_id() const { return weight_; }
  typename ParamStore<T>::Id bias_id() const { return bias_; }

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x) const;
  /// Accumulates parameter gradients; returns dL/dx unless `need_input_grad` is false.
  Tensor<T> backward(ParamStore<T>& store, const Tensor<T>& x, const Tensor<T>& dy,
                     bool need_input_grad = true) const;

  /// Fan-in scaled uniform weights, zero bias.
  void initialize(ParamStore<T>& store, Rng& rng) const;

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  typename ParamStore<T>::Id weight_ = 0;
  typename ParamStore<T>::Id bias_ = 0;
};

/// Group count used by the NDM normalization layers for a given width.
int norm_groups(int channels);

/// Noise Dropout Module: conv3x3 -> GroupNorm -> ReLU -> conv3x3 -> GroupNorm -> ReLU,
/// mapping its input to the stage's (reduced) channel count.
template <typename T>
class NdmBlock {
 public:
  struct Trace {
    Tensor<T> input;
    ops::GroupNormCache<T> norm1;
    Tensor<T> act1;
    ops::GroupNormCache<T> norm2;
    Tensor<T> output;
  };

  NdmBlock() = default;
  NdmBlock(ParamStore<T>& store, const std::string& name, int in_channels, int out_channels);

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, Trace* trace = nullptr) const;
  Tensor<T> backward(ParamStore<T>& store, const Trace& trace, const Tensor<T>& dy) const;
  void initialize(ParamStore<T>& store, Rng& rng) const;
  int out_channels() const { return conv1_.out_channels(); }

 private:
  Conv2d<T> conv1_;
  Conv2d<T> conv2_;
  typename ParamStore<T>::Id gamma1_ = 0, beta1_ = 0, gamma2_ = 0, beta2_ = 0;
  int groups_ = 1;
};

/// Channel attention (shared bottleneck MLP over average- and max-pooled
/// descriptors) followed by spatial attention (convolution over the
/// channel-wise mean and max maps), each gated by a sigmoid.
template <typename T>
class CbamBlock {
 public:
  struct Trace {
    Tensor<T> input;
    std::vector<T> avg, max;                  // N x C descriptors
    std::vector<std::uint32_t> max_index;     // flat input offset of each channel max
    std::vector<T> hidden_avg, hidden_max;    // N x hidden, post-ReLU
    std::vector<T> channel_gate;              // N x C
    Tensor<T> refined;                        // input * channel gate
    Tensor<T> pooled;                         // N x 2 x H x W
    std::vector<std::uint32_t> pooled_argmax; // channel index of the spatial max
    Tensor<T> spatial_gate;                   // N x 1 x H x W
  };

  CbamBlock() = default;
  CbamBlock(ParamStore<T>& store, const std::string& name, int channels, int reduction,
            int spatial_kernel);

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, Trace* trace = nullptr) const;
  Tensor<T> backward(ParamStore<T>& store, const Trace& trace, const Tensor<T>& dy) const;
  void initialize(ParamStore<T>& store, Rng& rng) const;

  /// Channel gate for each (sample, channel), exposed for range checks.
  std::vector<T> channel_gate(const ParamStore<T>& store, const Tensor<T>& x) const;

 private:
  void mlp(const ParamStore<T>& store, const T* in, T* hidden, T* out) const;

  int channels_ = 0;
  int hidden_ = 0;
  typename ParamStore<T>::Id fc1_w_ = 0, fc1_b_ = 0, fc2_w_ = 0, fc2_b_ = 0;
  Conv2d<T> spatial_;
};

/// Semantic Restore Module: out = Boost(c) + sigmoid(Weaken(c)) * Fusion(c),
/// with c the channel concatenation of the encoder feature and the upsampled
/// deeper decoder feature.
template <typename T>
class SrmBlock {
 public:
  struct Trace {
    Tensor<T> joined;
    Tensor<T> fusion;
    Tensor<T> gate;
  };

  SrmBlock() = default;
  SrmBlock(ParamStore<T>& store, const std::string& name, int skip_channels, int up_channels);

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& skip, const Tensor<T>& up,
                    Trace* trace = nullptr) const;
  /// Returns (dL/dskip, dL/dup).
  std::pair<Tensor<T>, Tensor<T>> backward(ParamStore<T>& store, const Trace& trace,
                                           const Tensor<T>& dy) const;
  void initialize(ParamStore<T>& store, Rng& rng) const;

  /// sigmoid(Weaken(c)) for the given inputs.
  Tensor<T> gate(const ParamStore<T>& store, const Tensor<T>& skip, const Tensor<T>& up) const;

  const Conv2d<T>& boost() const { return boost_; }
  const Conv2d<T>& fusion() const { return fusion_; }
  const Conv2d<T>& weaken() const { return weaken_; }

 private:
  // The three convolutions share one im2col pass through stacked weights.
  std::vector<T> stacked(const ParamStore<T>& store, bool bias) const;

  int skip_channels_ = 0;
  int up_channels_ = 0;
  Conv2d<T> boost_, fusion_, weaken_;
};

/// Resample x2, then a 3x3 projection convolution when the channel count changes.
template <typename T>
class UpBlock {
 public:
  struct Trace {
    Tensor<T> resampled;
  };

  UpBlock() = default;
  UpBlock(ParamStore<T>& store, const std::string& name, int in_channels, int out_channels,
          ops::ResampleMode mode);

  Tensor<T> forward(const ParamStore<T>& store, const Tensor<T>& x, Trace* trace = nullptr) const;
  Tensor<T> backward(ParamStore<T>& store, const Trace& trace, const Tensor<T>& dy) const;
  void initialize(ParamStore<T>& store, Rng& rng) const;
  bool has_projection() const { return projected_; }

 private:
  ops::ResampleMode mode_ = ops::ResampleMode::kNearest;
  bool projected_ = false;
  Conv2d<T> proj_;
};

}  // namespace mminr
