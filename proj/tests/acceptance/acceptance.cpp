// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
//   mminr_acceptance [--work-dir DIR] [--only 1,2,...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mminr/archive.hpp"
#include "mminr/cli.hpp"
#include "mminr/inference.hpp"
#include "mminr/mminr_net.hpp"
#include "mminr/radar_data.hpp"
#include "mminr/training.hpp"
#include "mminr/verification.hpp"

namespace fs = std::filesystem;
using namespace mminr;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

template <typename T>
Tensor<T> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = -1, double hi = 1) {
  Tensor<T> t(n, c, h, w);
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

void cli_or_throw(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) {
    std::string joined;
    for (const auto& a : args) joined += a + ' ';
    throw std::runtime_error("command failed (" + std::to_string(code) + "): " + joined + "\n" + err.str());
  }
}

std::map<std::string, double> read_kv(const fs::path& p) {
  std::map<std::string, double> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string v = line.substr(eq + 1);
    kv[line.substr(0, eq)] = v == "nan" ? std::nan("") : std::strtod(v.c_str(), nullptr);
  }
  return kv;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string tree_bytes(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, root).generic_string() + '\n' + slurp(f);
  return all;
}

// ---- 1 ---------------------------------------------------------------------
Outcome shape_contract() {
  const auto cfg = ModelConfig::paper();
  MminrNet<float> net(cfg);
  const auto x = random_tensor<float>(1, 9, 288, 288, 1, -1.0, 1.0);
  const auto t0 = Clock::now();
  const auto y = net.forward(x);
  const double secs = seconds_since(t0);

  const auto feats = net.encode(x);
  const std::vector<std::array<int, 3>> want{{256, 288, 288}, {128, 144, 144}, {64, 72, 72}, {32, 36, 36}, {32, 18, 18}};
  bool ok = feats.size() == want.size() && y.shape() == std::array<int, 4>{1, 9, 288, 288} && secs < 60.0;
  std::string ledger;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const std::array<int, 3> got{feats[i].channels(), feats[i].height(), feats[i].width()};
    if (i < want.size() && got != want[i]) ok = false;
    ledger += (i ? "," : "") + std::to_string(got[0]) + "x" + std::to_string(got[1]) + "^2";
  }
  return {ok, "output " + shape_string(y.shape()) + ", features " + ledger + ", forward " + fmt("%.1f", secs) + " s (< 60)"};
}

// ---- 2 ---------------------------------------------------------------------
Outcome gradient_fidelity() {
  MminrNet<double> net(ModelConfig::tiny());
  Sample<double> s;
  s.input = random_tensor<double>(1, 2, 16, 16, 11);
  s.target = random_tensor<double>(1, 2, 16, 16, 12);
  s.weights = random_tensor<double>(1, 2, 16, 16, 13, 1.0, 30.0);
  GradientCheckOptions opts;  // 32 sampled scalars, step 1e-4
  opts.num_params = 32;
  opts.step = 1e-4;
  const auto t0 = Clock::now();
  const auto r = gradient_check(net, s, opts);
  const double secs = seconds_since(t0);
  const bool ok = r.entries.size() >= 32 && r.max_rel_error < 1e-4 && secs < 10.0;
  return {ok, std::to_string(r.entries.size()) + " params, step 1e-4, max rel err " + fmt("%.2e", r.max_rel_error) +
                  " (< 1e-4), " + fmt("%.2f", secs) + " s (< 10)"};
}

// ---- 3 ---------------------------------------------------------------------
Outcome metric_oracles() {
  const std::vector<double> thr{0.5, 2.0, 5.0, 10.0};
  const std::vector<double> wts{1, 2, 5, 10, 30};
  auto oracle_weight = [&](double r) {
    std::size_t k = 0;
    while (k < thr.size() && r >= thr[k]) ++k;
    return wts[k];
  };
  double worst = 0.0;
  int undefined_agree = 0;
  bool ok = true;
  for (int k = 0; k < 100; ++k) {
    Rng rng(1000 + k);
    RainField p(16, 16), o(16, 16);
    for (auto& v : p.grid) v = static_cast<float>(rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 19.0));
    for (auto& v : o.grid) v = static_cast<float>(rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 19.0));
    RadarSequence ps, os;
    ps.frames = {p};
    os.frames = {o};
    const auto rep = evaluate({ps}, {os});

    double se = 0, ae = 0;
    for (int i = 0; i < 256; ++i) {
      const double w = oracle_weight(o.grid[i]), d = static_cast<double>(p.grid[i]) - o.grid[i];
      se += w * d * d;
      ae += w * std::abs(d);
    }
    worst = std::max({worst, std::abs(rep.b_mse - se / 256), std::abs(rep.b_mae - ae / 256)});

    for (std::size_t t = 0; t < thr.size(); ++t) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (int i = 0; i < 256; ++i) {
        const bool pe = p.grid[i] >= thr[t], oe = o.grid[i] >= thr[t];
        tp += pe && oe;
        fp += pe && !oe;
        fn += !pe && oe;
        tn += !pe && !oe;
      }
      const auto& s = rep.per_threshold[t];
      const double csi_den = tp + fp + fn;
      const double hss_den = (tp + fn) * (fn + tn) + (tp + fp) * (fp + tn);
      if (csi_den == 0) {
        ok = ok && !s.csi.has_value();
        ++undefined_agree;
      } else {
        ok = ok && s.csi.has_value();
        if (s.csi) worst = std::max(worst, std::abs(*s.csi - tp / csi_den));
      }
      if (hss_den == 0) {
        ok = ok && !s.hss.has_value();
      } else {
        ok = ok && s.hss.has_value();
        if (s.hss) worst = std::max(worst, std::abs(*s.hss - 2 * (tp * tn - fn * fp) / hss_den));
      }
    }
  }
  ok = ok && worst <= 1e-10;
  return {ok, "100 pairs x 4 thresholds, max |diff| " + fmt("%.2e", worst) + " (<= 1e-10)"};
}

// ---- 4 ---------------------------------------------------------------------
Outcome normalization() {
  const double upper = 0.99715484903599399562348238409502718378;  // ln(20)/1.5 - 1, 40-digit oracle
  double worst = 0.0;
  const int n = 190000;
  for (int i = 0; i <= n; ++i) {
    const double x = 19.0 * i / n;
    worst = std::max(worst, std::abs(denormalize_value(normalize_value(x)) - x));
  }
  const double lo = normalize_value(0.0), hi = normalize_value(19.0);
  const bool ok = worst <= 1e-9 && lo == -1.0 && std::abs(hi - upper) < 1e-15;
  return {ok, "round trip max err " + fmt("%.2e", worst) + " over " + std::to_string(n + 1) + " points; f(0)=" +
                  fmt("%.17g", lo) + ", f(19)=" + fmt("%.17g", hi)};
}

// ---- 5 ---------------------------------------------------------------------
Outcome overfit() {
  std::vector<RadarSequence> seqs;
  SyntheticConfig sc;
  for (int i = 0; i < 4; ++i) {
    sc.seed = 500 + i;
    seqs.push_back(generate_synthetic(sc, 18, 64));
  }
  const auto cfg = ModelConfig::desk();
  const auto data = WindowDataset<float>::from_sequences(seqs, cfg.n_in, cfg.m_out, WeightSchedule{});
  MminrNet<float> model(cfg);

  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 4;
  tc.max_steps = 500;
  tc.max_epochs = 500;
  tc.patience = 500;
  TrainHooks<float> hooks;
  // Model selection on the training loss itself: this check is about fitting capacity.
  hooks.validation_loss = [&](const MminrNet<float>& m, int) { return dataset_loss(m, data, tc.loss); };
  const double initial = dataset_loss(model, data, tc.loss);
  const auto t0 = Clock::now();
  const auto r = train(model, data, data, tc, hooks);
  const double secs = seconds_since(t0);
  const double final_loss = dataset_loss(model, data, tc.loss);
  const double ratio = final_loss / initial;
  return {r.steps <= 500 && ratio <= 0.10,
          std::to_string(r.steps) + " steps, train B-MAE " + fmt("%.4f", initial) + " -> " + fmt("%.4f", final_loss) +
              " (" + fmt("%.1f", 100 * ratio) + "% of initial, <= 10%), " + fmt("%.0f", secs) + " s"};
}

// ---- 6 and 8 ---------------------------------------------------------------
struct SkillRun {
  bool done = false;
  std::string error;
  std::map<std::string, double> mmi, msi, persistence;
  double mmi_seconds = 0, msi_seconds = 0;
};

SkillRun run_skill(const fs::path& dir) {
  SkillRun run;
  try {
    fs::remove_all(dir);
    fs::create_directories(dir);
    auto p = [&](const char* s) { return (dir / s).string(); };
    cli_or_throw({"synth", "--count", "200", "--size", "64", "--noise-rate", "0.2", "--seed", "100", "--out", p("train")});
    cli_or_throw({"synth", "--count", "40", "--size", "64", "--noise-rate", "0.2", "--seed", "200", "--out", p("val")});
    cli_or_throw({"synth", "--count", "40", "--size", "64", "--noise-rate", "0.2", "--seed", "300", "--out", p("test")});
    const std::vector<std::string> common{"--preset", "desk", "--train", p("train"), "--val", p("val"), "--lr", "1e-3",
                                          "--batch", "16", "--epochs", "40", "--patience", "6", "--seed", "0"};

    auto t0 = Clock::now();
    auto args = std::vector<std::string>{"train", "--mode", "mmi", "--out", p("mmi")};
    args.insert(args.end(), common.begin(), common.end());
    cli_or_throw(args);
    cli_or_throw({"predict", "--checkpoint", p("mmi/checkpoint.bin"), "--strategy", "mmi", "--input", p("test"), "--out", p("pred_mmi")});
    cli_or_throw({"evaluate", "--pred", p("pred_mmi"), "--obs", p("test"), "--per-lead-time", "--plot", "--label", "MMINR-MMI", "--out", p("eval_mmi")});
    run.mmi_seconds = seconds_since(t0);

    cli_or_throw({"predict", "--strategy", "persistence", "--horizon", "9", "--input", p("test"), "--out", p("pred_persistence")});
    cli_or_throw({"evaluate", "--pred", p("pred_persistence"), "--obs", p("test"), "--per-lead-time", "--plot", "--label", "persistence", "--out", p("eval_persistence")});

    t0 = Clock::now();
    args = std::vector<std::string>{"train", "--mode", "msi", "--out", p("msi")};
    args.insert(args.end(), common.begin(), common.end());
    cli_or_throw(args);
    cli_or_throw({"predict", "--checkpoint", p("msi/checkpoint.bin"), "--strategy", "msi-recurrent", "--horizon", "9", "--input", p("test"), "--out", p("pred_msi")});
    cli_or_throw({"evaluate", "--pred", p("pred_msi"), "--obs", p("test"), "--per-lead-time", "--plot", "--label", "MMINR-MSI", "--out", p("eval_msi")});
    run.msi_seconds = seconds_since(t0);

    run.mmi = read_kv(dir / "eval_mmi" / "report.kv");
    run.msi = read_kv(dir / "eval_msi" / "report.kv");
    run.persistence = read_kv(dir / "eval_persistence" / "report.kv");
    run.done = true;
  } catch (const std::exception& e) {
    run.error = e.what();
  }
  return run;
}

Outcome skill(const SkillRun& run) {
  if (!run.done) return {false, "skill run failed: " + run.error};
  const double m = run.mmi.at("lead1.csi@0.5"), p = run.persistence.at("lead1.csi@0.5");
  const bool ok = m >= p && run.mmi_seconds <= 1800.0;
  return {ok, "lead-1 pooled CSI@0.5: MMINR " + fmt("%.4f", m) + " vs persistence " + fmt("%.4f", p) +
                  "; train+predict+evaluate " + fmt("%.0f", run.mmi_seconds) + " s (<= 1800)"};
}

Outcome lead_time(const SkillRun& run, const fs::path& dir) {
  if (!run.done) return {false, "skill run failed: " + run.error};
  bool ok = true;
  for (const char* metric : {"csi", "hss", "b_mse", "b_mae"}) {
    for (const char* ext : {".csv", ".svg"}) ok = ok && fs::exists(dir / "eval_msi" / (std::string("curve_") + metric + ext));
  }
  for (int lead = 1; lead <= 9; ++lead) {
    const std::string prefix = "lead" + std::to_string(lead) + ".";
    for (const char* key : {"csi@0.5", "hss@0.5", "b_mse", "b_mae"})
      ok = ok && run.msi.count(prefix + key) == 1;
  }
  ok = ok && run.msi.count("lead10.b_mse") == 0;
  const double b1 = run.msi.at("lead1.b_mse"), b9 = run.msi.at("lead9.b_mse");
  ok = ok && b9 >= b1;
  return {ok, "9 lead times per metric; MSI+recurrent B-MSE lead 1 " + fmt("%.3f", b1) + " -> lead 9 " + fmt("%.3f", b9)};
}

// ---- 7 ---------------------------------------------------------------------
Outcome strategy_contract() {
  auto cfg = ModelConfig::desk();
  MminrNet<float> mmi(cfg);
  cfg.m_out = 1;
  MminrNet<float> msi(cfg);
  const auto x = random_tensor<float>(1, 9, 64, 64, 21);

  CountingModel<float> c_mmi(mmi), c_msi(msi);
  const auto y_mmi = predict_mmi(c_mmi, x);
  const auto y_msi = predict_msi_recurrent(c_msi, x, 9);
  const auto single_mmi = predict_mmi(msi, x);
  const auto single_msi = predict_msi_recurrent(msi, x, 1);
  const bool bitwise = single_mmi.values() == single_msi.values();
  const bool ok = c_mmi.calls() == 1 && c_msi.calls() == 9 && y_mmi.channels() == 9 && y_msi.channels() == 9 && bitwise;
  return {ok, "MMI calls " + std::to_string(c_mmi.calls()) + " (1), MSI+recurrent calls " + std::to_string(c_msi.calls()) +
                  " (9), m=1 horizon-1 outputs bitwise " + (bitwise ? "identical" : "DIFFERENT")};
}

// ---- 9 ---------------------------------------------------------------------
Outcome determinism(const fs::path& dir) {
  try {
    fs::remove_all(dir);
    // Both repetitions use the same directory so recorded paths match too.
    auto run = [&](const std::string&) {
      const fs::path r = dir / "run";
      fs::remove_all(r);
      auto p = [&](const char* s) { return (r / s).string(); };
      cli_or_throw({"synth", "--count", "4", "--size", "32", "--frames", "8", "--seed", "9", "--out", p("data")});
      cli_or_throw({"synth", "--count", "2", "--size", "32", "--frames", "8", "--seed", "10", "--out", p("val")});
      cli_or_throw({"train", "--preset", "tiny", "--input-size", "32", "--train", p("data"), "--val", p("val"),
                    "--epochs", "3", "--batch", "2", "--lr", "1e-3", "--seed", "3", "--out", p("run_mmi")});
      cli_or_throw({"train", "--preset", "tiny", "--input-size", "32", "--mode", "msi", "--train", p("data"), "--val",
                    p("val"), "--epochs", "3", "--batch", "2", "--lr", "1e-3", "--seed", "3", "--out", p("run_msi")});
      cli_or_throw({"predict", "--checkpoint", p("run_mmi/checkpoint.bin"), "--input", p("val"), "--out", p("pred_mmi")});
      cli_or_throw({"predict", "--checkpoint", p("run_msi/checkpoint.bin"), "--strategy", "msi-recurrent", "--horizon", "6",
                    "--input", p("val"), "--out", p("pred_msi")});
      cli_or_throw({"predict", "--strategy", "persistence", "--input-frames", "2", "--horizon", "6", "--input", p("val"),
                    "--out", p("pred_persistence")});
      cli_or_throw({"evaluate", "--pred", p("pred_msi"), "--obs", p("val"), "--input-frames", "2", "--per-lead-time",
                    "--plot", "--out", p("eval")});
      return tree_bytes(r);
    };
    const std::string a = run("a"), b = run("b");
    const bool ok = a == b && !a.empty();
    return {ok, "synth, train (mmi+msi), predict (3 strategies), evaluate repeated: " + std::to_string(a.size()) +
                    " bytes, " + (ok ? "bit-identical" : "DIFFERENT")};
  } catch (const std::exception& e) {
    return {false, e.what()};
  }
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "mminr-acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: mminr_acceptance [--work-dir DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);
  auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

  SkillRun skill_run;
  if (wanted(6) || wanted(8)) skill_run = run_skill(work / "skill");

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"shape contract", shape_contract},
      {"gradient fidelity", gradient_fidelity},
      {"metric oracle equivalence", metric_oracles},
      {"normalization", normalization},
      {"overfit check", overfit},
      {"skill check", [&] { return skill(skill_run); }},
      {"strategy contract", strategy_contract},
      {"per-lead-time degradation", [&] { return lead_time(skill_run, work / "skill"); }},
      {"determinism", [&] { return determinism(work / "determinism"); }},
  };

  int failures = 0;
  std::ofstream summary(work / "summary.txt");
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[k].first << "): " << o.detail;
    std::cout << line.str() << std::endl;
    summary << line.str() << '\n';
  }
  return failures == 0 ? 0 : 1;
}
