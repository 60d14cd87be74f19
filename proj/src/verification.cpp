#include "mminr/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mminr/errors.hpp"

namespace mminr {

ContingencyTable contingency(std::span<const float> pred, std::span<const float> obs, double threshold) {
  if (pred.size() != obs.size()) {
    throw ShapeError("contingency: prediction has " + std::to_string(pred.size()) +
                     " pixels, observation has " + std::to_string(obs.size()));
  }
  ContingencyTable t;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool o = obs[i] >= threshold;
    if (p && o) {
      ++t.tp;
    } else if (p) {
      ++t.fp;
    } else if (o) {
      ++t.fn;
    } else {
      ++t.tn;
    }
  }
  return t;
}

ContingencyTable contingency(const RainField& pred, const RainField& obs, double threshold) {
  if (pred.height != obs.height || pred.width != obs.width) {
    throw ShapeError("contingency: field shapes differ");
  }
  return contingency(std::span<const float>(pred.grid), std::span<const float>(obs.grid), threshold);
}

std::optional<double> csi(const ContingencyTable& t) {
  const double denom = static_cast<double>(t.tp) + static_cast<double>(t.fp) + static_cast<double>(t.fn);
  if (denom == 0.0) return std::nullopt;
  return static_cast<double>(t.tp) / denom;
}

std::optional<double> hss(const ContingencyTable& t) {
  const double tp = static_cast<double>(t.tp);
  const double fp = static_cast<double>(t.fp);
  const double fn = static_cast<double>(t.fn);
  const double tn = static_cast<double>(t.tn);
  const double denom = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
  if (denom == 0.0) return std::nullopt;
  return 2.0 * (tp * tn - fn * fp) / denom;
}

namespace {

struct Accumulator {
  std::vector<ContingencyTable> tables;
  std::vector<double> csi_sum, hss_sum;
  std::vector<std::size_t> csi_n, hss_n;
  double se = 0.0;
  double ae = 0.0;
  std::size_t pixels = 0;

  explicit Accumulator(std::size_t thresholds)
      : tables(thresholds), csi_sum(thresholds), hss_sum(thresholds), csi_n(thresholds), hss_n(thresholds) {}

  void add_frame(const RainField& p, const RainField& o, const std::vector<double>& thresholds,
                 const WeightSchedule& ws) {
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      const auto t = contingency(p, o, thresholds[k]);
      tables[k] += t;
      if (auto c = csi(t)) {
        csi_sum[k] += *c;
        ++csi_n[k];
      }
      if (auto h = hss(t)) {
        hss_sum[k] += *h;
        ++hss_n[k];
      }
    }
    for (std::size_t i = 0; i < p.grid.size(); ++i) {
      const double w = ws.weight_for(o.grid[i]);
      const double e = static_cast<double>(p.grid[i]) - static_cast<double>(o.grid[i]);
      se += w * e * e;
      ae += w * std::abs(e);
    }
    pixels += p.grid.size();
  }

  std::vector<ThresholdScore> scores(const std::vector<double>& thresholds) const {
    std::vector<ThresholdScore> out;
    for (std::size_t k = 0; k < thresholds.size(); ++k) {
      ThresholdScore s;
      s.threshold = thresholds[k];
      s.table = tables[k];
      s.csi = csi(tables[k]);
      s.hss = hss(tables[k]);
      if (csi_n[k] > 0) s.csi_frame_mean = csi_sum[k] / static_cast<double>(csi_n[k]);
      if (hss_n[k] > 0) s.hss_frame_mean = hss_sum[k] / static_cast<double>(hss_n[k]);
      out.push_back(s);
    }
    return out;
  }

  double b_mse() const { return pixels ? se / static_cast<double>(pixels) : 0.0; }
  double b_mae() const { return pixels ? ae / static_cast<double>(pixels) : 0.0; }
};

}  // namespace

SkillReport evaluate(const std::vector<RadarSequence>& preds, const std::vector<RadarSequence>& obs,
                     const EvaluateOptions& options) {
  options.weights.validate();
  if (preds.size() != obs.size()) {
    throw ShapeError("evaluate: " + std::to_string(preds.size()) + " predicted sequences vs " +
                     std::to_string(obs.size()) + " observed");
  }
  if (preds.empty()) throw ShapeError("evaluate: no sequences");
  const std::size_t lead_count = preds.front().length();
  for (std::size_t s = 0; s < preds.size(); ++s) {
    preds[s].validate();
    obs[s].validate();
    if (preds[s].length() != obs[s].length()) {
      throw ShapeError("evaluate: sequence " + std::to_string(s) + " has " +
                       std::to_string(preds[s].length()) + " predicted frames but " +
                       std::to_string(obs[s].length()) + " observed");
    }
    if (preds[s].height() != obs[s].height() || preds[s].width() != obs[s].width()) {
      throw ShapeError("evaluate: sequence " + std::to_string(s) + " frame sizes differ");
    }
    if (options.per_lead_time && preds[s].length() != lead_count) {
      throw ShapeError("evaluate: per-lead-time mode needs equal sequence lengths");
    }
  }

  const auto& th = options.thresholds;
  Accumulator overall(th.size());
  std::vector<Accumulator> by_lead;
  if (options.per_lead_time) by_lead.assign(lead_count, Accumulator(th.size()));

  SkillReport report;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    for (std::size_t f = 0; f < preds[s].length(); ++f) {
      const auto& p = preds[s].frames[f];
      const auto& o = obs[s].frames[f];
      overall.add_frame(p, o, th, options.weights);
      if (options.per_lead_time) by_lead[f].add_frame(p, o, th, options.weights);
      ++report.frames;
    }
  }
  report.sequences = preds.size();
  report.per_threshold = overall.scores(th);
  report.b_mse = overall.b_mse();
  report.b_mae = overall.b_mae();
  for (std::size_t f = 0; f < by_lead.size(); ++f) {
    LeadTimeScore lt;
    lt.lead = static_cast<int>(f + 1);
    lt.per_threshold = by_lead[f].scores(th);
    lt.b_mse = by_lead[f].b_mse();
    lt.b_mae = by_lead[f].b_mae();
    report.per_lead_time.push_back(std::move(lt));
  }
  return report;
}

namespace {

std::string fmt(std::optional<double> v) {
  if (!v) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

std::string fmt_full(std::optional<double> v) {
  if (!v) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

std::string threshold_label(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

}  // namespace

std::string format_table(const SkillReport& report, const std::string& label) {
  std::ostringstream out;
  const auto& ts = report.per_threshold;
  const std::size_t method_w = std::max<std::size_t>(label.size() + 13, 6) + 2;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  auto rule = [&] {
    out << std::string(method_w + 10 * (2 * ts.size() + 2), '-') << '\n';
  };
  rule();
  out << pad("Method", method_w);
  out << pad("CSI", 10 * ts.size()) << pad("HSS", 10 * ts.size()) << pad("B-MSE", 10) << "B-MAE\n";
  out << pad("", method_w);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& t : ts) out << pad("r>=" + threshold_label(t.threshold), 10);
  }
  out << '\n';
  rule();
  out << pad(label, method_w);
  for (const auto& t : ts) out << pad(fmt(t.csi), 10);
  for (const auto& t : ts) out << pad(fmt(t.hss), 10);
  out << pad(fmt(report.b_mse), 10) << fmt(report.b_mae) << '\n';
  out << pad(label + " (frame mean)", method_w);
  for (const auto& t : ts) out << pad(fmt(t.csi_frame_mean), 10);
  for (const auto& t : ts) out << pad(fmt(t.hss_frame_mean), 10);
  out << '\n';
  rule();
  out << "CSI/HSS pooled over " << report.frames << " frames from " << report.sequences
      << " sequences; rain rates in mm/h\n";
  return out.str();
}

std::string format_key_values(const SkillReport& report) {
  std::ostringstream out;
  out << "pooling=pooled\n";
  out << "sequences=" << report.sequences << '\n';
  out << "frames=" << report.frames << '\n';
  auto emit_thresholds = [&](const std::string& prefix, const std::vector<ThresholdScore>& ts) {
    for (const auto& t : ts) {
      const std::string r = threshold_label(t.threshold);
      out << prefix << "csi@" << r << '=' << fmt_full(t.csi) << '\n';
      out << prefix << "hss@" << r << '=' << fmt_full(t.hss) << '\n';
      out << prefix << "csi_frame_mean@" << r << '=' << fmt_full(t.csi_frame_mean) << '\n';
      out << prefix << "hss_frame_mean@" << r << '=' << fmt_full(t.hss_frame_mean) << '\n';
      out << prefix << "tp@" << r << '=' << t.table.tp << '\n';
      out << prefix << "fp@" << r << '=' << t.table.fp << '\n';
      out << prefix << "fn@" << r << '=' << t.table.fn << '\n';
      out << prefix << "tn@" << r << '=' << t.table.tn << '\n';
    }
  };
  emit_thresholds("", report.per_threshold);
  out << "b_mse=" << fmt_full(report.b_mse) << '\n';
  out << "b_mae=" << fmt_full(report.b_mae) << '\n';
  for (const auto& lt : report.per_lead_time) {
    const std::string prefix = "lead" + std::to_string(lt.lead) + ".";
    emit_thresholds(prefix, lt.per_threshold);
    out << prefix << "b_mse=" << fmt_full(lt.b_mse) << '\n';
    out << prefix << "b_mae=" << fmt_full(lt.b_mae) << '\n';
  }
  return out.str();
}

}  // namespace mminr
