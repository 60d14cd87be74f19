#include "mminr/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "mminr/archive.hpp"
#include "mminr/checkpoint.hpp"
#include "mminr/errors.hpp"
#include "mminr/experiment.hpp"
#include "mminr/inference.hpp"
#include "mminr/plot.hpp"
#include "mminr/training.hpp"
#include "mminr/verification.hpp"

namespace fs = std::filesystem;

namespace mminr {
namespace {

class UsageError : public Error {
 public:
  using Error::Error;
};

// Relative output paths resolve under $MMINR_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("MMINR_OUTPUT_ROOT"); root && *root) return fs::path(root) / path;
  }
  return path;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<RadarSequence> read_set(const std::string& dir, const char* what) {
  if (dir.empty()) throw UsageError(std::string("missing ") + what + " dataset path");
  if (!fs::is_directory(dir)) throw UsageError(std::string(what) + " dataset not found: " + dir);
  auto seqs = read_archive_set(dir);
  if (seqs.empty()) throw DataIntegrityError(std::string(what) + " dataset is empty: " + dir);
  return seqs;
}

std::uint64_t sequence_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 of (base, index) so neighbouring seeds give unrelated sequences
  std::uint64_t z = base * 0x9E3779B97F4A7C15ull + index + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  int cells = 6;
  double noise_rate = 0.2;
  int frames = 18;
  int size = 64;
  int count = 8;
  std::uint64_t seed = 0;
  double vx = 2.0, vy = 1.0;
  std::string out;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (a.size % 16 != 0)
    throw ConfigError("--size must be divisible by 16, got " + std::to_string(a.size));
  if (a.count < 1) throw ConfigError("--count must be at least 1");
  if (a.frames < 2) throw ConfigError("--frames must be at least 2");
  SyntheticConfig cfg;
  cfg.num_cells = a.cells;
  cfg.noise_rate = a.noise_rate;
  cfg.advection_velocity = {a.vx, a.vy};
  cfg.validate();

  const fs::path root = output_path(a.out);
  ensure_dir(root);
  for (int i = 0; i < a.count; ++i) {
    cfg.seed = sequence_seed(a.seed, static_cast<std::uint64_t>(i));
    RadarSequence seq = generate_synthetic(cfg, a.frames, a.size);
    char id[32];
    std::snprintf(id, sizeof id, "seq-%05d", i);
    seq.id = id;
    write_archive(seq, root / seq.id);
  }
  out << "wrote " << a.count << " sequences (" << a.frames << " frames, " << a.size << "x" << a.size
      << ") to " << root.string() << '\n';
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string config, train, val, preset = "desk", mode = "mmi", loss, out, upsample;
  int epochs = 0, patience = 0, batch = 0, input_frames = 0, output_frames = 0, input_size = 0;
  double lr = 0.0;
  long max_steps = -1;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a, const CLI::App& app, std::ostream& out) {
  auto given = [&](const char* name) { return app.count(name) > 0; };

  ExperimentConfig exp;
  if (!a.config.empty()) exp = load_experiment(a.config);
  if (given("--preset") || a.config.empty()) exp.model = ModelConfig::preset(a.preset);
  if (given("--train")) exp.train_data = a.train;
  if (given("--val")) exp.val_data = a.val;
  if (given("--epochs")) exp.train.max_epochs = a.epochs;
  if (given("--patience")) exp.train.patience = a.patience;
  if (given("--lr")) exp.train.learning_rate = a.lr;
  if (given("--batch")) exp.train.batch_size = a.batch;
  if (given("--loss")) exp.train.loss = loss_kind_from_string(a.loss);
  if (given("--max-steps")) exp.train.max_steps = a.max_steps;
  if (given("--input-frames")) exp.model.n_in = a.input_frames;
  if (given("--output-frames")) exp.model.m_out = a.output_frames;
  if (given("--input-size")) exp.model.input_size = a.input_size;
  if (given("--upsample")) exp.model.upsample_mode = upsample_mode_from_string(a.upsample);
  if (a.seed) {
    exp.train.seed = *a.seed;
    exp.model.seed = *a.seed;
  }
  if (a.mode == "msi") {
    exp.model.m_out = 1;
  } else if (a.mode != "mmi") {
    throw UsageError("--mode must be mmi or msi, got '" + a.mode + "'");
  }
  exp.validate();

  const auto train_seqs = read_set(exp.train_data.string(), "training");
  const auto val_seqs = read_set(exp.val_data.string(), "validation");
  if (fs::weakly_canonical(exp.train_data) == fs::weakly_canonical(exp.val_data))
    throw UsageError("training and validation datasets must differ");
  for (const auto* set : {&train_seqs, &val_seqs}) {
    for (const auto& s : *set) {
      if (s.height() != exp.model.input_size || s.width() != exp.model.input_size)
        throw ShapeError("sequence " + s.id + " is " + std::to_string(s.height()) + "x" +
                         std::to_string(s.width()) + ", model expects " +
                         std::to_string(exp.model.input_size));
    }
  }

  const int n = exp.model.n_in, m = exp.model.m_out;
  const auto train_set = WindowDataset<float>::from_sequences(train_seqs, n, m, exp.weights);
  const auto val_set = WindowDataset<float>::from_sequences(val_seqs, n, m, exp.weights);

  const fs::path dir = output_path(a.out);
  ensure_dir(dir);

  MminrNet<float> model(exp.model);
  TrainHooks<float> hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    char line[128];
    std::snprintf(line, sizeof line, "epoch %3d  train_loss %.6f  val_bmae %.6f\n", r.epoch,
                  r.train_loss, r.val_bmae);
    out << line << std::flush;
  };
  const TrainResult result = train(model, train_set, val_set, exp.train, hooks);

  nlohmann::json meta{{"mode", a.mode},
                      {"train", exp.train},
                      {"weights", exp.weights},
                      {"best_epoch", result.best_epoch},
                      {"best_val_bmae", result.best_val_bmae},
                      {"steps", result.steps},
                      {"early_stopped", result.early_stopped}};
  save_checkpoint(model, dir / "checkpoint.bin", meta);
  write_history_csv(result.history, dir / "history.csv");
  save_experiment(exp, dir / "experiment.json");

  out << "best epoch " << result.best_epoch << " (val_bmae " << result.best_val_bmae << ") after "
      << result.steps << " steps; wrote " << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

// ---- predict --------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, input, strategy = "mmi", out;
  int horizon = 0, input_frames = 0;
  bool clamp_feedback = false;
};

Tensor<double> input_tensor(const RadarSequence& seq, int n) {
  if (static_cast<int>(seq.length()) < n)
    throw ShapeError("sequence " + seq.id + " has " + std::to_string(seq.length()) +
                     " frames, need " + std::to_string(n) + " inputs");
  RadarSequence head;
  head.frames.assign(seq.frames.begin(), seq.frames.begin() + n);
  head.interval_seconds = seq.interval_seconds;
  head.id = seq.id;
  return normalize(cap_sequence(head)).tensor;
}

int cmd_predict(const PredictArgs& a, std::ostream& out) {
  const Strategy strategy = strategy_from_string(a.strategy);
  std::optional<MminrNet<float>> model;
  if (strategy != Strategy::kPersistence) {
    if (a.checkpoint.empty()) throw UsageError("--checkpoint is required for " + a.strategy);
    model.emplace(load_checkpoint<float>(a.checkpoint));
  }

  int n = a.input_frames;
  if (model) {
    if (n != 0 && n != model->n_in())
      throw ConfigError("--input-frames " + std::to_string(n) + " does not match the model's " +
                        std::to_string(model->n_in()));
    n = model->n_in();
  } else if (n == 0) {
    n = 9;
  }
  int horizon = a.horizon;
  if (strategy == Strategy::kMmi) {
    if (horizon != 0 && horizon != model->m_out())
      throw ConfigError("mmi emits exactly " + std::to_string(model->m_out()) +
                        " frames; --horizon " + std::to_string(horizon) + " is not available");
    horizon = model->m_out();
  } else if (horizon == 0) {
    horizon = 9;
  }
  if (horizon < 1) throw ConfigError("--horizon must be at least 1");

  const auto seqs = read_set(a.input, "input");
  const fs::path root = output_path(a.out);
  ensure_dir(root);
  DenormalizeStats stats;
  for (const auto& seq : seqs) {
    const Tensor<double> x = input_tensor(seq, n);
    NormalizedSequence pred;
    pred.source_id = seq.id;
    switch (strategy) {
      case Strategy::kMmi:
        pred.tensor = tensor_cast<double>(predict_mmi<float>(*model, tensor_cast<float>(x)));
        break;
      case Strategy::kMsiRecurrent:
        pred.tensor = tensor_cast<double>(predict_msi_recurrent<float>(
            *model, tensor_cast<float>(x), horizon, RolloutOptions{a.clamp_feedback}));
        break;
      case Strategy::kPersistence:
        pred.tensor = predict_persistence<double>(x, horizon);
        break;
    }
    RadarSequence phys = denormalize(pred, &stats);
    phys.id = seq.id;
    phys.interval_seconds = seq.interval_seconds;
    write_archive(phys, root / seq.id);
  }
  out << "wrote " << seqs.size() << " predictions (" << to_string(strategy) << ", " << horizon
      << " frames) to " << root.string();
  if (stats.clamped_high + stats.clamped_low > 0)
    out << "; clamped " << stats.clamped_high << " high / " << stats.clamped_low << " low cells";
  out << '\n';
  return kExitOk;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string pred, obs, out, label = "model";
  int input_frames = 9;
  bool per_lead_time = false, plot = false;
  std::vector<double> thresholds = kDefaultThresholds;
};

void write_plots(const SkillReport& report, const fs::path& dir) {
  std::vector<double> leads;
  for (const auto& l : report.per_lead_time) leads.push_back(l.lead);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto threshold_curves = [&](bool use_csi) {
    std::vector<Curve> curves;
    for (std::size_t t = 0; t < report.per_threshold.size(); ++t) {
      Curve c;
      char name[32];
      std::snprintf(name, sizeof name, "r>=%g", report.per_threshold[t].threshold);
      c.name = name;
      c.x = leads;
      for (const auto& l : report.per_lead_time) {
        const auto& s = l.per_threshold[t];
        const auto v = use_csi ? s.csi : s.hss;
        c.y.push_back(v ? *v : nan);
      }
      curves.push_back(std::move(c));
    }
    return curves;
  };
  auto scalar_curve = [&](const char* name, double LeadTimeScore::*field) {
    Curve c{name, leads, {}};
    for (const auto& l : report.per_lead_time) c.y.push_back(l.*field);
    return std::vector<Curve>{c};
  };

  const std::vector<std::pair<std::string, std::vector<Curve>>> metrics{
      {"csi", threshold_curves(true)},
      {"hss", threshold_curves(false)},
      {"b_mse", scalar_curve("b_mse", &LeadTimeScore::b_mse)},
      {"b_mae", scalar_curve("b_mae", &LeadTimeScore::b_mae)}};
  for (const auto& [metric, curves] : metrics) {
    write_curves_csv(curves, "lead", dir / ("curve_" + metric + ".csv"));
    std::string upper = metric;
    std::transform(upper.begin(), upper.end(), upper.begin(), ::toupper);
    write_line_chart_svg(curves, {upper + " by lead time", "lead time (frames)", upper},
                         dir / ("curve_" + metric + ".svg"));
  }
}

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  if (a.plot && !a.per_lead_time) throw UsageError("--plot requires --per-lead-time");
  if (a.input_frames < 0) throw ConfigError("--input-frames must be non-negative");
  const auto preds = read_set(a.pred, "prediction");
  const auto obs_all = read_set(a.obs, "observation");
  if (preds.size() != obs_all.size())
    throw ShapeError("count mismatch: " + std::to_string(preds.size()) + " predictions vs " +
                     std::to_string(obs_all.size()) + " observations");

  std::map<std::string, const RadarSequence*> by_id;
  for (const auto& o : obs_all) by_id[o.id] = &o;

  std::vector<RadarSequence> p_set, o_set;
  for (const auto& p : preds) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw DataIntegrityError("no observation for prediction " + p.id);
    const RadarSequence& o = *it->second;
    const std::size_t first = static_cast<std::size_t>(a.input_frames);
    if (o.length() < first + p.length())
      throw ShapeError("observation " + o.id + " has " + std::to_string(o.length()) +
                       " frames, need " + std::to_string(first + p.length()));
    RadarSequence target;
    target.id = o.id;
    target.frames.assign(o.frames.begin() + static_cast<std::ptrdiff_t>(first),
                         o.frames.begin() + static_cast<std::ptrdiff_t>(first + p.length()));
    p_set.push_back(cap_sequence(p));
    o_set.push_back(cap_sequence(target));
  }

  EvaluateOptions opts;
  opts.thresholds = a.thresholds;
  opts.per_lead_time = a.per_lead_time;
  const SkillReport report = evaluate(p_set, o_set, opts);

  const fs::path dir = output_path(a.out);
  ensure_dir(dir);
  const std::string table = format_table(report, a.label);
  write_file(dir / "report.txt", table);
  write_file(dir / "report.kv", format_key_values(report));
  if (a.plot) write_plots(report, dir);
  out << table;
  return kExitOk;
}

int classify(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
  if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DataIntegrityError*>(&e)) return kExitData;
  if (dynamic_cast<const ShapeError*>(&e)) return kExitShape;
  if (dynamic_cast<const TrainingError*>(&e)) return kExitTraining;
  return kExitFailure;
}

const char* kind_name(int code) {
  switch (code) {
    case kExitUsage: return "usage";
    case kExitConfig: return "config";
    case kExitData: return "data";
    case kExitShape: return "shape";
    case kExitTraining: return "training";
    default: return "runtime";
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MMINR precipitation nowcasting", "mminr"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate synthetic radar sequences");
  synth->add_option("--cells", sa.cells, "rain cells per sequence")->capture_default_str();
  synth->add_option("--noise-rate", sa.noise_rate, "per-frame noise blob probability")->capture_default_str();
  synth->add_option("--frames", sa.frames, "frames per sequence")->capture_default_str();
  synth->add_option("--size", sa.size, "grid size (divisible by 16)")->capture_default_str();
  synth->add_option("--count", sa.count, "number of sequences")->capture_default_str();
  synth->add_option("--seed", sa.seed, "base seed")->capture_default_str();
  synth->add_option("--vx", sa.vx, "advection x velocity, pixels/frame")->capture_default_str();
  synth->add_option("--vy", sa.vy, "advection y velocity, pixels/frame")->capture_default_str();
  synth->add_option("--out", sa.out, "output directory")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train a model");
  trn->add_option("--config", ta.config, "experiment config JSON (flags override it)");
  trn->add_option("--train", ta.train, "training archive directory");
  trn->add_option("--val", ta.val, "validation archive directory");
  trn->add_option("--preset", ta.preset, "paper | desk | tiny")->capture_default_str();
  trn->add_option("--mode", ta.mode, "mmi (m-frame head) | msi (1-frame head)")->capture_default_str();
  trn->add_option("--input-frames", ta.input_frames, "override n_in");
  trn->add_option("--output-frames", ta.output_frames, "override m_out (mmi mode)");
  trn->add_option("--input-size", ta.input_size, "override the preset grid size");
  trn->add_option("--upsample", ta.upsample, "nearest | bilinear");
  trn->add_option("--epochs", ta.epochs, "maximum epochs");
  trn->add_option("--patience", ta.patience, "early-stopping patience");
  trn->add_option("--lr", ta.lr, "learning rate");
  trn->add_option("--batch", ta.batch, "mini-batch size");
  trn->add_option("--seed", ta.seed, "seed for init and shuffling");
  trn->add_option("--loss", ta.loss, "b_mae | b_mse | sum");
  trn->add_option("--max-steps", ta.max_steps, "stop after this many optimizer steps (0 = no cap)");
  trn->add_option("--out", ta.out, "output directory")->required();

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "run a forecast strategy");
  pred->add_option("--checkpoint", pa.checkpoint, "model checkpoint");
  pred->add_option("--input", pa.input, "input archive directory")->required();
  pred->add_option("--strategy", pa.strategy, "mmi | msi-recurrent | persistence")->capture_default_str();
  pred->add_option("--horizon", pa.horizon, "frames to forecast");
  pred->add_option("--input-frames", pa.input_frames, "input window length");
  pred->add_flag("--clamp-feedback", pa.clamp_feedback, "clamp recurrent feedback to the valid range");
  pred->add_option("--out", pa.out, "output directory")->required();

  EvaluateArgs ea;
  auto* evl = app.add_subcommand("evaluate", "score predictions against observations");
  evl->add_option("--pred", ea.pred, "prediction archive directory")->required();
  evl->add_option("--obs", ea.obs, "observation archive directory")->required();
  evl->add_option("--input-frames", ea.input_frames, "observation frames preceding the forecast")->capture_default_str();
  evl->add_option("--thresholds", ea.thresholds, "event thresholds, mm/h")->delimiter(',');
  evl->add_option("--label", ea.label, "row label in the report table")->capture_default_str();
  evl->add_flag("--per-lead-time", ea.per_lead_time, "score each lead time separately");
  evl->add_flag("--plot", ea.plot, "write per-metric curve CSV and SVG files");
  evl->add_option("--out", ea.out, "report directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      if (!app.get_subcommands().empty()) out << app.get_subcommands().front()->help();
      return kExitOk;
    }
    err << "error[usage]: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(sa, out);
    if (trn->parsed()) return cmd_train(ta, *trn, out);
    if (pred->parsed()) return cmd_predict(pa, out);
    if (evl->parsed()) return cmd_evaluate(ea, out);
  } catch (const std::exception& e) {
    const int code = classify(e);
    err << "error[" << kind_name(code) << "]: " << e.what() << '\n';
    return code;
  }
  return kExitUsage;
}

}  // namespace mminr
