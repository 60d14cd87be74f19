#pragma once

#include <atomic>
#include <cstdint>
#include <string>

#include "mminr/frame_model.hpp"
#include "mminr/tensor.hpp"

namespace mminr {

enum class Strategy { kMmi, kMsiRecurrent, kPersistence };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

/// One forward pass producing all m_out frames.
template <typename T>
Tensor<T> predict_mmi(const FrameModel<T>& model, const Tensor<T>& input);

struct RolloutOptions {
  /// Clamp fed-back frames to the valid normalized range. Emitted frames are never clamped.
  bool clamp_feedback = false;
};

/// Single-frame model rolled forward `horizon` times, each prediction
/// appended to the input window while the oldest frame drops out.
template <typename T>
Tensor<T> predict_msi_recurrent(const FrameModel<T>& model, const Tensor<T>& input, int horizon,
                                const RolloutOptions& options = {});

/// Repeats the last input frame `horizon` times.
template <typename T>
Tensor<T> predict_persistence(const Tensor<T>& input, int horizon);

/// Forwards to another model and counts predict() calls.
template <typename T>
class CountingModel final : public FrameModel<T> {
 public:
  explicit CountingModel(const FrameModel<T>& inner) : inner_(inner) {}
  int n_in() const override { return inner_.n_in(); }
  int m_out() const override { return inner_.m_out(); }
  Tensor<T> predict(const Tensor<T>& input) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.predict(input);
  }
  std::uint64_t calls() const { return calls_.load(); }

 private:
  const FrameModel<T>& inner_;
  mutable std::atomic<std::uint64_t> calls_{0};
};

}  // namespace mminr
