#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mminr/balanced_loss.hpp"
#include "mminr/radar_data.hpp"

namespace mminr {

inline const std::vector<double> kDefaultThresholds{0.5, 2.0, 5.0, 10.0};

struct ContingencyTable {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ContingencyTable& operator+=(const ContingencyTable& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  bool operator==(const ContingencyTable&) const = default;
};

/// A pixel is an event when its rain rate is >= threshold.
ContingencyTable contingency(std::span<const float> pred, std::span<const float> obs, double threshold);
ContingencyTable contingency(const RainField& pred, const RainField& obs, double threshold);

/// tp / (tp + fp + fn); nullopt when no events were forecast or observed.
std::optional<double> csi(const ContingencyTable& t);
/// Heidke skill score; nullopt when its denominator vanishes.
std::optional<double> hss(const ContingencyTable& t);

struct ThresholdScore {
  double threshold = 0.0;
  ContingencyTable table;
  std::optional<double> csi;             // pooled over all frames
  std::optional<double> hss;
  std::optional<double> csi_frame_mean;  // mean of per-frame scores, undefined frames skipped
  std::optional<double> hss_frame_mean;
};

struct LeadTimeScore {
  int lead = 0;  // 1-based prediction step
  std::vector<ThresholdScore> per_threshold;
  double b_mse = 0.0;
  double b_mae = 0.0;
};

struct SkillReport {
  std::vector<ThresholdScore> per_threshold;
  double b_mse = 0.0;
  double b_mae = 0.0;
  std::vector<LeadTimeScore> per_lead_time;  // empty unless requested
  std::size_t sequences = 0;
  std::size_t frames = 0;
};

struct EvaluateOptions {
  std::vector<double> thresholds = kDefaultThresholds;
  WeightSchedule weights;
  bool per_lead_time = false;
};

/// Scores physical-space (mm/h) predictions against observations frame by
/// frame. Both sets must pair up one-to-one with identical frame counts and
/// shapes. B-MSE/B-MAE use weights from the observations.
SkillReport evaluate(const std::vector<RadarSequence>& preds, const std::vector<RadarSequence>& obs,
                     const EvaluateOptions& options = {});

/// Fixed-width table: CSI and HSS columns per threshold, then B-MSE and B-MAE.
std::string format_table(const SkillReport& report, const std::string& label);
/// `key=value` lines; undefined scores are written as `nan`.
std::string format_key_values(const SkillReport& report);

}  // namespace mminr
