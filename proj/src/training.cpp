#include "mminr/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mminr/errors.hpp"
#include "mminr/random.hpp"

namespace mminr {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw ConfigError("invalid Adam coefficients");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
  j = nlohmann::json{
      {"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
      {"max_epochs", cfg.max_epochs},       {"patience", cfg.patience},
      {"seed", cfg.seed},                   {"loss", to_string(cfg.loss)},
      {"max_steps", cfg.max_steps},         {"beta1", cfg.beta1},
      {"beta2", cfg.beta2},                 {"epsilon", cfg.epsilon},
  };
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
  TrainConfig out = cfg;
  try {
    if (j.contains("learning_rate")) out.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) out.batch_size = j.at("batch_size").get<int>();
    if (j.contains("max_epochs")) out.max_epochs = j.at("max_epochs").get<int>();
    if (j.contains("patience")) out.patience = j.at("patience").get<int>();
    if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("loss")) out.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    if (j.contains("max_steps")) out.max_steps = j.at("max_steps").get<long>();
    if (j.contains("beta1")) out.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) out.beta2 = j.at("beta2").get<double>();
    if (j.contains("epsilon")) out.epsilon = j.at("epsilon").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  out.validate();
  cfg = out;
}

template <typename T>
WindowDataset<T> WindowDataset<T>::from_sequences(const std::vector<RadarSequence>& seqs, int n, int m,
                                                  const WeightSchedule& ws) {
  ws.validate();
  WindowDataset<T> out;
  for (const auto& seq : seqs) {
    auto [input, target] = window(seq, n, m);
    Sample<T> s;
    s.id = seq.id;
    s.input = tensor_cast<T>(input.tensor);
    s.target = tensor_cast<T>(target.tensor);
    s.weights = Tensor<T>(1, m, seq.height(), seq.width());
    for (int f = 0; f < m; ++f) {
      const auto capped = cap_rainfall(seq.frames[static_cast<std::size_t>(n + f)]);
      auto w = s.weights.plane(0, f);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(ws.weight_for(capped.grid[i]));
    }
    out.add(std::move(s));
  }
  return out;
}

EarlyStopping::EarlyStopping(int patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::observe(double loss) {
  ++epochs_;
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epochs_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

template <typename T>
Adam<T>::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

template <typename T>
void Adam<T>::step(ParamStore<T>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.size(), T(0));
      v_.emplace_back(p.size(), T(0));
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const T step = static_cast<T>(lr_ / c1);
  const T b1 = static_cast<T>(beta1_);
  const T b2 = static_cast<T>(beta2_);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T eps = static_cast<T>(eps_);
  std::size_t k = 0;
  for (auto& p : params) {
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
    ++k;
  }
}

template <typename T>
double dataset_loss(const MminrNet<T>& model, const WindowDataset<T>& data, LossKind kind, Access access) {
  if (data.empty()) throw TrainingError("cannot evaluate a loss on an empty dataset");
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.fetch(i, access);
    sum += balanced_loss(kind, model.forward(s.input), s.target, s.weights);
  }
  return sum / static_cast<double>(data.size());
}

template <typename T>
TrainResult train(MminrNet<T>& model, const WindowDataset<T>& train_set, const WindowDataset<T>& val_set,
                  const TrainConfig& cfg, const TrainHooks<T>& hooks) {
  cfg.validate();
  if (train_set.empty()) throw TrainingError("training set is empty");
  if (val_set.empty() && !hooks.validation_loss) throw TrainingError("validation set is empty");

  Rng rng(cfg.seed);
  Adam<T> adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  EarlyStopping stopper(cfg.patience);
  auto best = model.parameters().snapshot();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  bool step_cap_hit = false;
  for (int epoch = 1; epoch <= cfg.max_epochs && !step_cap_hit; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const T scale = static_cast<T>(1.0 / static_cast<double>(stop - start));
      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = train_set.fetch(order[k], Access::kGradient);
        typename MminrNet<T>::Trace trace;
        const auto out = model.forward(s.input, &trace);
        Tensor<T> grad;
        batch_loss += balanced_loss(cfg.loss, out, s.target, s.weights, &grad) * static_cast<double>(scale);
        for (T& g : grad.values()) g *= scale;
        model.backward(trace, grad);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                            std::to_string(result.steps + 1));
      }
      adam.step(model.parameters());
      ++result.steps;
      result.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++batches;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        step_cap_hit = true;
        break;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / batches;
    rec.val_bmae = hooks.validation_loss ? hooks.validation_loss(model, epoch)
                                         : dataset_loss(model, val_set, LossKind::kBMae);
    if (!std::isfinite(rec.val_bmae)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (stopper.observe(rec.val_bmae)) best = model.parameters().snapshot();
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  model.parameters().restore(best);
  result.best_epoch = stopper.best_epoch();
  result.best_val_bmae = stopper.best_loss();
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_bmae\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_bmae);
    out << buf;
  }
}

double analytic_gradient(MminrNet<double>& model, const Sample<double>& sample, LossKind loss) {
  model.zero_grad();
  MminrNet<double>::Trace trace;
  const auto out = model.forward(sample.input, &trace);
  Tensor<double> grad;
  const double value = balanced_loss(loss, out, sample.target, sample.weights, &grad);
  model.backward(trace, grad);
  return value;
}

double finite_difference(MminrNet<double>& model, const Sample<double>& sample, std::size_t param,
                         std::size_t index, double step, LossKind loss) {
  auto& v = model.parameters()[param].value;
  const double saved = v.at(index);
  v[index] = saved + step;
  const double up = balanced_loss(loss, model.forward(sample.input), sample.target, sample.weights);
  v[index] = saved - step;
  const double down = balanced_loss(loss, model.forward(sample.input), sample.target, sample.weights);
  v[index] = saved;
  return (up - down) / (2.0 * step);
}

GradientCheckReport gradient_check(MminrNet<double>& model, const Sample<double>& sample,
                                   const GradientCheckOptions& options) {
  analytic_gradient(model, sample, options.loss);
  auto& params = model.parameters();

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  if (options.all_params) {
    for (std::size_t p = 0; p < params.size(); ++p) {
      for (std::size_t i = 0; i < params[p].size(); ++i) picks.emplace_back(p, i);
    }
  } else {
    // Cycle through tensors in shuffled order so small tensors are not starved.
    Rng rng(options.seed);
    std::vector<std::size_t> tensors(params.size());
    std::iota(tensors.begin(), tensors.end(), std::size_t{0});
    rng.shuffle(tensors.begin(), tensors.end());
    for (int k = 0; k < options.num_params; ++k) {
      const std::size_t p = tensors[static_cast<std::size_t>(k) % tensors.size()];
      picks.emplace_back(p, rng.index(params[p].size()));
    }
  }

  GradientCheckReport report;
  for (const auto& [p, i] : picks) {
    GradientCheckEntry e;
    e.name = params[p].name;
    e.index = i;
    e.analytic = params[p].grad[i];
    e.numeric = finite_difference(model, sample, p, i, options.step, options.loss);
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), options.abs_floor});
    e.rel_error = std::abs(e.analytic - e.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    report.entries.push_back(std::move(e));
  }
  return report;
}

template class WindowDataset<float>;
template class WindowDataset<double>;
template class Adam<float>;
template class Adam<double>;
template double dataset_loss(const MminrNet<float>&, const WindowDataset<float>&, LossKind, Access);
template double dataset_loss(const MminrNet<double>&, const WindowDataset<double>&, LossKind, Access);
template TrainResult train(MminrNet<float>&, const WindowDataset<float>&, const WindowDataset<float>&,
                           const TrainConfig&, const TrainHooks<float>&);
template TrainResult train(MminrNet<double>&, const WindowDataset<double>&, const WindowDataset<double>&,
                           const TrainConfig&, const TrainHooks<double>&);

}  // namespace mminr
