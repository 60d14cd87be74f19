#pragma once

#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mminr/radar_data.hpp"
#include "mminr/tensor.hpp"

namespace mminr {

/// Piecewise-constant pixel weights over rain-rate bins [t_k, t_{k+1}),
/// the last bin closed above.
struct WeightSchedule {
  std::vector<double> thresholds{0.5, 2.0, 5.0, 10.0};
  std::vector<double> weights{1.0, 2.0, 5.0, 10.0, 30.0};

  void validate() const;
  double weight_for(double rain_rate) const;
  bool operator==(const WeightSchedule&) const = default;
};

void to_json(nlohmann::json& j, const WeightSchedule& ws);
void from_json(const nlohmann::json& j, WeightSchedule& ws);

/// Weight map for a physical-space (mm/h) field.
std::vector<double> pixel_weights(const RainField& target, const WeightSchedule& ws);

/// Weight tensor from normalized targets, computed on their mm/h values.
template <typename T>
Tensor<T> weights_from_normalized(const Tensor<T>& normalized_target, const WeightSchedule& ws);

/// mean(w * (pred - target)^2)
template <typename T, typename W>
double b_mse(std::span<const T> pred, std::span<const T> target, std::span<const W> weights);
/// mean(w * |pred - target|)
template <typename T, typename W>
double b_mae(std::span<const T> pred, std::span<const T> target, std::span<const W> weights);

enum class LossKind { kBMae, kBMse, kSum };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

/// Loss value over whole tensors (mean over batch, frames and pixels); when
/// `grad` is non-null it receives dL/dpred. B-MAE uses sign(0) = 0.
template <typename T>
double balanced_loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target,
                     const Tensor<T>& weights, Tensor<T>* grad = nullptr);

}  // namespace mminr
