#include "mminr/inference.hpp"

#include <algorithm>

#include "mminr/errors.hpp"
#include "mminr/radar_data.hpp"

namespace mminr {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kMmi: return "mmi";
    case Strategy::kMsiRecurrent: return "msi-recurrent";
    case Strategy::kPersistence: return "persistence";
  }
  return "mmi";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "mmi") return Strategy::kMmi;
  if (s == "msi-recurrent") return Strategy::kMsiRecurrent;
  if (s == "persistence") return Strategy::kPersistence;
  throw ConfigError("unknown strategy '" + s + "' (expected mmi, msi-recurrent or persistence)");
}

namespace {

template <typename T>
void check_frames(const FrameModel<T>& model, const Tensor<T>& input) {
  if (input.channels() != model.n_in()) {
    throw ConfigError("model expects " + std::to_string(model.n_in()) + " input frames, got " +
                      std::to_string(input.channels()));
  }
}

}  // namespace

template <typename T>
Tensor<T> predict_mmi(const FrameModel<T>& model, const Tensor<T>& input) {
  check_frames(model, input);
  auto out = model.predict(input);
  if (out.channels() != model.m_out()) throw ConfigError("model produced an unexpected frame count");
  return out;
}

template <typename T>
Tensor<T> predict_msi_recurrent(const FrameModel<T>& model, const Tensor<T>& input, int horizon,
                                const RolloutOptions& options) {
  if (model.m_out() != 1) {
    throw ConfigError("recurrent rollout needs a single-frame model, this one predicts " +
                      std::to_string(model.m_out()) + " frames");
  }
  if (horizon < 1) throw ConfigError("horizon must be positive");
  check_frames(model, input);

  const int n = input.channels();
  const std::size_t plane = input.plane_size();
  Tensor<T> window = input;
  Tensor<T> out(input.batch(), horizon, input.height(), input.width());
  const T lo = static_cast<T>(kNormalizedLowerBound);
  const T hi = static_cast<T>(normalized_upper_bound());

  for (int step = 0; step < horizon; ++step) {
    const auto next = model.predict(window);
    if (next.channels() != 1 || next.batch() != input.batch()) {
      throw ShapeError("single-frame model returned " + shape_string(next.shape()));
    }
    for (int b = 0; b < input.batch(); ++b) {
      auto src = next.plane(b, 0);
      std::copy(src.begin(), src.end(), out.plane(b, step).begin());
      // Slide: drop the oldest frame, append the prediction.
      auto w = window.sample(b);
      std::copy(w.begin() + static_cast<std::ptrdiff_t>(plane), w.end(), w.begin());
      auto last = window.plane(b, n - 1);
      std::copy(src.begin(), src.end(), last.begin());
      if (options.clamp_feedback) {
        for (T& v : last) v = std::clamp(v, lo, hi);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> predict_persistence(const Tensor<T>& input, int horizon) {
  if (input.channels() < 1) throw ConfigError("persistence needs at least one input frame");
  if (horizon < 1) throw ConfigError("horizon must be positive");
  Tensor<T> out(input.batch(), horizon, input.height(), input.width());
  for (int b = 0; b < input.batch(); ++b) {
    auto last = input.plane(b, input.channels() - 1);
    for (int k = 0; k < horizon; ++k) std::copy(last.begin(), last.end(), out.plane(b, k).begin());
  }
  return out;
}

template Tensor<float> predict_mmi(const FrameModel<float>&, const Tensor<float>&);
template Tensor<double> predict_mmi(const FrameModel<double>&, const Tensor<double>&);
template Tensor<float> predict_msi_recurrent(const FrameModel<float>&, const Tensor<float>&, int, const RolloutOptions&);
template Tensor<double> predict_msi_recurrent(const FrameModel<double>&, const Tensor<double>&, int, const RolloutOptions&);
template Tensor<float> predict_persistence(const Tensor<float>&, int);
template Tensor<double> predict_persistence(const Tensor<double>&, int);

}  // namespace mminr
