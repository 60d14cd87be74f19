#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mminr/balanced_loss.hpp"
#include "mminr/mminr_net.hpp"
#include "mminr/radar_data.hpp"

namespace mminr {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int max_epochs = 100;
  int patience = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kBMae;
  long max_steps = 0;  // 0: no step cap
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Why a sample is being read. Validation data must never be read for gradients.
enum class Access { kGradient = 0, kEvaluation = 1 };

template <typename T>
struct Sample {
  Tensor<T> input;    // (1, n, H, W) normalized
  Tensor<T> target;   // (1, m, H, W) normalized
  Tensor<T> weights;  // (1, m, H, W) from the mm/h target
  std::string id;
};

/// Windowed training samples with per-purpose read counters (not thread-safe).
template <typename T>
class WindowDataset {
 public:
  WindowDataset() = default;

  /// One n-to-m window from the start of each sequence; cap, normalize, weight.
  static WindowDataset from_sequences(const std::vector<RadarSequence>& seqs, int n, int m,
                                      const WeightSchedule& ws);

  void add(Sample<T> s) { samples_.push_back(std::move(s)); }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  const Sample<T>& fetch(std::size_t i, Access access) const {
    ++reads_[static_cast<int>(access)];
    return samples_.at(i);
  }
  std::uint64_t reads(Access access) const { return reads_[static_cast<int>(access)]; }

 private:
  std::vector<Sample<T>> samples_;
  mutable std::array<std::uint64_t, 2> reads_{0, 0};
};

/// Stops after `patience` consecutive epochs without a strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);
  /// Returns true when `loss` is a new best.
  bool observe(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  int best_epoch() const { return best_epoch_; }  // 1-based, 0 before any observation
  double best_loss() const { return best_; }

 private:
  int patience_;
  int epochs_ = 0;
  int stale_ = 0;
  int best_epoch_ = 0;
  double best_;
};

/// Adaptive-moment gradient descent over a ParamStore.
template <typename T>
class Adam {
 public:
  Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
  void step(ParamStore<T>& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_bmae = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<double> step_losses;
  int best_epoch = 0;
  double best_val_bmae = 0.0;
  long steps = 0;
  bool early_stopped = false;
};

template <typename T>
struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Replaces validation B-MAE when set.
  std::function<double(const MminrNet<T>&, int epoch)> validation_loss;
};

/// Mean per-sample loss of `model` over `data`.
template <typename T>
double dataset_loss(const MminrNet<T>& model, const WindowDataset<T>& data, LossKind kind,
                    Access access = Access::kEvaluation);

/// Mini-batch training with validation B-MAE early stopping. On return the
/// model holds the parameters of the epoch with the lowest validation loss.
template <typename T>
TrainResult train(MminrNet<T>& model, const WindowDataset<T>& train_set,
                  const WindowDataset<T>& val_set, const TrainConfig& cfg,
                  const TrainHooks<T>& hooks = {});

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

struct GradientCheckOptions {
  int num_params = 32;
  bool all_params = false;
  double step = 1e-4;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kBMse;
  double abs_floor = 1e-6;  // denominator floor for the relative error
};

struct GradientCheckEntry {
  std::string name;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientCheckReport {
  double max_rel_error = 0.0;
  std::vector<GradientCheckEntry> entries;
};

/// Analytic parameter gradients of the scalar loss against central differences.
GradientCheckReport gradient_check(MminrNet<double>& model, const Sample<double>& sample,
                                   const GradientCheckOptions& options = {});

/// Central difference of the loss with respect to one parameter scalar.
double finite_difference(MminrNet<double>& model, const Sample<double>& sample, std::size_t param,
                         std::size_t index, double step, LossKind loss);

/// Analytic gradient of the loss for every parameter (fills the grad buffers).
double analytic_gradient(MminrNet<double>& model, const Sample<double>& sample, LossKind loss);

extern template class WindowDataset<float>;
extern template class WindowDataset<double>;
extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace mminr
