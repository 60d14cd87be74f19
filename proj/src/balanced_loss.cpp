#include "mminr/balanced_loss.hpp"

#include <algorithm>
#include <cmath>

#include "mminr/errors.hpp"

namespace mminr {

void WeightSchedule::validate() const {
  if (weights.size() != thresholds.size() + 1) {
    throw ConfigError("weight schedule needs exactly one more weight than thresholds");
  }
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > thresholds[i - 1])) throw ConfigError("thresholds must be strictly ascending");
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("weights must be positive and finite");
  }
}

double WeightSchedule::weight_for(double rain_rate) const {
  const auto bin = std::upper_bound(thresholds.begin(), thresholds.end(), rain_rate) - thresholds.begin();
  return weights[static_cast<std::size_t>(bin)];
}

void to_json(nlohmann::json& j, const WeightSchedule& ws) {
  j = nlohmann::json{{"thresholds", ws.thresholds}, {"weights", ws.weights}};
}

void from_json(const nlohmann::json& j, WeightSchedule& ws) {
  WeightSchedule out = ws;
  try {
    if (j.contains("thresholds")) out.thresholds = j.at("thresholds").get<std::vector<double>>();
    if (j.contains("weights")) out.weights = j.at("weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid weight schedule: ") + e.what());
  }
  out.validate();
  ws = out;
}

std::vector<double> pixel_weights(const RainField& target, const WeightSchedule& ws) {
  ws.validate();
  std::vector<double> out(target.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ws.weight_for(target.grid[i]);
  return out;
}

template <typename T>
Tensor<T> weights_from_normalized(const Tensor<T>& normalized_target, const WeightSchedule& ws) {
  ws.validate();
  Tensor<T> out(normalized_target.batch(), normalized_target.channels(), normalized_target.height(),
                normalized_target.width());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double y = std::clamp(static_cast<double>(normalized_target.data()[i]), kNormalizedLowerBound,
                                normalized_upper_bound());
    out.data()[i] = static_cast<T>(ws.weight_for(denormalize_value(y)));
  }
  return out;
}

namespace {

template <typename T, typename W>
void check_sizes(std::span<const T> pred, std::span<const T> target, std::span<const W> weights) {
  if (pred.size() != target.size() || pred.size() != weights.size()) {
    throw ShapeError("prediction, target and weight sizes differ (" + std::to_string(pred.size()) +
                     ", " + std::to_string(target.size()) + ", " + std::to_string(weights.size()) + ")");
  }
  if (pred.empty()) throw ShapeError("empty prediction");
}

}  // namespace

template <typename T, typename W>
double b_mse(std::span<const T> pred, std::span<const T> target, std::span<const W> weights) {
  check_sizes(pred, target, weights);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += static_cast<double>(weights[i]) * e * e;
  }
  return sum / static_cast<double>(pred.size());
}

template <typename T, typename W>
double b_mae(std::span<const T> pred, std::span<const T> target, std::span<const W> weights) {
  check_sizes(pred, target, weights);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sum += static_cast<double>(weights[i]) *
           std::abs(static_cast<double>(pred[i]) - static_cast<double>(target[i]));
  }
  return sum / static_cast<double>(pred.size());
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kBMae: return "b_mae";
    case LossKind::kBMse: return "b_mse";
    case LossKind::kSum: return "sum";
  }
  return "b_mae";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "b_mae") return LossKind::kBMae;
  if (s == "b_mse") return LossKind::kBMse;
  if (s == "sum") return LossKind::kSum;
  throw ConfigError("unknown loss '" + s + "' (expected b_mae, b_mse or sum)");
}

template <typename T>
double balanced_loss(LossKind kind, const Tensor<T>& pred, const Tensor<T>& target,
                     const Tensor<T>& weights, Tensor<T>* grad) {
  if (!pred.same_shape(target) || !pred.same_shape(weights)) {
    throw ShapeError("loss shape mismatch: " + shape_string(pred.shape()) + " vs " +
                     shape_string(target.shape()));
  }
  const bool use_mse = kind != LossKind::kBMae;
  const bool use_mae = kind != LossKind::kBMse;
  double loss = 0.0;
  if (use_mse) loss += b_mse<T, T>(pred.values(), target.values(), weights.values());
  if (use_mae) loss += b_mae<T, T>(pred.values(), target.values(), weights.values());
  if (grad) {
    *grad = Tensor<T>(pred.batch(), pred.channels(), pred.height(), pred.width());
    const double inv = 1.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = static_cast<double>(pred.data()[i]) - static_cast<double>(target.data()[i]);
      const double w = weights.data()[i];
      double g = 0.0;
      if (use_mse) g += 2.0 * w * e;
      if (use_mae) g += w * static_cast<double>((e > 0.0) - (e < 0.0));
      grad->data()[i] = static_cast<T>(g * inv);
    }
  }
  return loss;
}

template Tensor<float> weights_from_normalized(const Tensor<float>&, const WeightSchedule&);
template Tensor<double> weights_from_normalized(const Tensor<double>&, const WeightSchedule&);
template double b_mse<float, float>(std::span<const float>, std::span<const float>, std::span<const float>);
template double b_mse<float, double>(std::span<const float>, std::span<const float>, std::span<const double>);
template double b_mse<double, double>(std::span<const double>, std::span<const double>, std::span<const double>);
template double b_mae<float, float>(std::span<const float>, std::span<const float>, std::span<const float>);
template double b_mae<float, double>(std::span<const float>, std::span<const float>, std::span<const double>);
template double b_mae<double, double>(std::span<const double>, std::span<const double>, std::span<const double>);
template double balanced_loss(LossKind, const Tensor<float>&, const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double balanced_loss(LossKind, const Tensor<double>&, const Tensor<double>&, const Tensor<double>&, Tensor<double>*);

}  // namespace mminr
