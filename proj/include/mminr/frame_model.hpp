#pragma once

#include "mminr/tensor.hpp"

namespace mminr {

/// Anything that maps an (N, n_in, H, W) stack of normalized frames to an
/// (N, m_out, H, W) stack of predicted frames.
template <typename T>
class FrameModel {
 public:
  virtual ~FrameModel() = default;
  virtual int n_in() const = 0;
  virtual int m_out() const = 0;
  virtual Tensor<T> predict(const Tensor<T>& input) const = 0;
};

}  // namespace mminr
