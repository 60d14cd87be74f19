#pragma once

#include <vector>

#include "mminr/frame_model.hpp"
#include "mminr/layers.hpp"
#include "mminr/model_config.hpp"
#include "mminr/parameters.hpp"

namespace mminr {

/// Encoder of NDM+CBAM stages joined by 2x2 max pooling, a decoder that folds
/// the deepest feature back up through SRM blocks, and a 1x1 head with one
/// output channel per predicted frame.
template <typename T>
class MminrNet final : public FrameModel<T> {
 public:
  struct Trace {
    std::vector<typename NdmBlock<T>::Trace> ndm;
    std::vector<typename CbamBlock<T>::Trace> cbam;
    std::vector<std::vector<std::uint32_t>> pool_index;  // pooling into stage i+1
    std::vector<std::array<int, 4>> pool_input_shape;
    std::vector<typename UpBlock<T>::Trace> up;          // indexed by target stage
    std::vector<typename SrmBlock<T>::Trace> srm;        // indexed by stage
    Tensor<T> head_input;
  };

  /// Builds the network and initializes parameters from `config.seed`.
  explicit MminrNet(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  int n_in() const override { return config_.n_in; }
  int m_out() const override { return config_.m_out; }
  int num_stages() const { return config_.num_stages(); }

  Tensor<T> predict(const Tensor<T>& input) const override { return forward(input); }

  /// Full forward pass; pass a trace to enable backward().
  Tensor<T> forward(const Tensor<T>& input, Trace* trace = nullptr) const;

  /// Backpropagates dL/doutput, accumulating into the parameter gradients.
  void backward(const Trace& trace, const Tensor<T>& grad_output);

  /// Encoder features f_1..f_S.
  std::vector<Tensor<T>> encode(const Tensor<T>& input) const;

  // Per-stage pieces, stage indices 0-based.
  Tensor<T> ndm_forward(int stage, const Tensor<T>& x) const;
  Tensor<T> cbam_forward(int stage, const Tensor<T>& x) const;
  static Tensor<T> downsample(const Tensor<T>& x);
  /// Upsamples a feature from `stage + 1` to the spatial size and width of `stage`.
  Tensor<T> upsample(int stage, const Tensor<T>& deeper) const;
  Tensor<T> srm_forward(int stage, const Tensor<T>& skip, const Tensor<T>& up) const;

  const CbamBlock<T>& cbam(int stage) const { return cbam_.at(stage); }
  const SrmBlock<T>& srm(int stage) const { return srm_.at(stage); }

  ParamStore<T>& parameters() { return params_; }
  const ParamStore<T>& parameters() const { return params_; }
  void zero_grad() { params_.zero_grad(); }

  /// Re-draws every parameter from `seed`.
  void initialize(std::uint64_t seed);

 private:
  void check_input(const Tensor<T>& input) const;

  ModelConfig config_;
  ParamStore<T> params_;
  std::vector<NdmBlock<T>> ndm_;
  std::vector<CbamBlock<T>> cbam_;
  std::vector<UpBlock<T>> up_;    // up_[i] lifts stage i+1 to stage i; last entry unused
  std::vector<SrmBlock<T>> srm_;  // srm_[i] for i < S-1
  Conv2d<T> head_;
};

extern template class MminrNet<float>;
extern template class MminrNet<double>;

}  // namespace mminr
