#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "mminr/archive.hpp"
#include "mminr/checkpoint.hpp"
#include "mminr/cli.hpp"
#include "mminr/errors.hpp"
#include "mminr/inference.hpp"
#include "mminr/training.hpp"
#include "mminr/verification.hpp"

namespace py = pybind11;
using namespace mminr;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

F32Array frames_to_array(const RadarSequence& seq) {
  F32Array out({static_cast<py::ssize_t>(seq.length()), static_cast<py::ssize_t>(seq.height()),
                static_cast<py::ssize_t>(seq.width())});
  float* dst = out.mutable_data();
  for (const auto& f : seq.frames) dst = std::copy(f.grid.begin(), f.grid.end(), dst);
  return out;
}

RadarSequence array_to_frames(const F32Array& a, const std::string& id = "") {
  if (a.ndim() != 3) throw ShapeError("expected a (frames, height, width) array");
  RadarSequence seq;
  seq.id = id;
  const int t = static_cast<int>(a.shape(0)), h = static_cast<int>(a.shape(1)), w = static_cast<int>(a.shape(2));
  const float* src = a.data();
  for (int k = 0; k < t; ++k) {
    RainField f(h, w);
    std::copy(src, src + static_cast<std::size_t>(h) * w, f.grid.begin());
    src += static_cast<std::size_t>(h) * w;
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

py::object optional_score(const std::optional<double>& v) {
  return v ? py::cast(*v) : py::none();
}

py::dict threshold_dict(const std::vector<ThresholdScore>& ts) {
  py::dict d;
  for (const auto& t : ts) {
    py::dict s;
    s["csi"] = optional_score(t.csi);
    s["hss"] = optional_score(t.hss);
    s["csi_frame_mean"] = optional_score(t.csi_frame_mean);
    s["hss_frame_mean"] = optional_score(t.hss_frame_mean);
    s["tp"] = t.table.tp;
    s["fp"] = t.table.fp;
    s["fn"] = t.table.fn;
    s["tn"] = t.table.tn;
    d[py::float_(t.threshold)] = s;
  }
  return d;
}

// Float32 model handle: loads a checkpoint and forecasts in mm/h.
class Model {
 public:
  explicit Model(MminrNet<float> net) : net_(std::move(net)) {}

  static Model load(const std::filesystem::path& path) { return Model(load_checkpoint<float>(path)); }
  static Model create(const std::string& preset, int m_out, std::uint64_t seed) {
    auto cfg = ModelConfig::preset(preset);
    if (m_out > 0) cfg.m_out = m_out;
    cfg.seed = seed;
    return Model(MminrNet<float>(cfg));
  }

  // frames: (n, H, W) mm/h; returns (horizon, H, W) mm/h.
  F32Array forecast(const F32Array& frames, const std::string& strategy, int horizon, bool clamp_feedback) const {
    const Strategy which = strategy_from_string(strategy);
    const auto seq = cap_sequence(array_to_frames(frames));
    NormalizedSequence out;
    {
      py::gil_scoped_release release;
      const auto x = tensor_cast<float>(normalize(seq).tensor);
      switch (which) {
        case Strategy::kMmi:
          out.tensor = tensor_cast<double>(predict_mmi(net_, x));
          break;
        case Strategy::kMsiRecurrent:
          out.tensor = tensor_cast<double>(predict_msi_recurrent(net_, x, horizon, RolloutOptions{clamp_feedback}));
          break;
        case Strategy::kPersistence:
          out.tensor = tensor_cast<double>(predict_persistence(x, horizon));
          break;
      }
    }
    return frames_to_array(denormalize(out));
  }

  int n_in() const { return net_.n_in(); }
  int m_out() const { return net_.m_out(); }
  std::size_t parameter_count() const { return net_.parameters().scalar_count(); }
  void save(const std::filesystem::path& path) const { save_checkpoint(net_, path); }

 private:
  MminrNet<float> net_;
};

}  // namespace

PYBIND11_MODULE(_mminr, m) {
  m.doc() = "MMINR precipitation nowcasting core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataIntegrityError>(m, "DataIntegrityError", PyExc_ValueError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def("normalize_value", &normalize_value, py::arg("rain_rate"));
  m.def("denormalize_value", &denormalize_value, py::arg("normalized"));
  m.def("normalized_upper_bound", &normalized_upper_bound);

  m.def(
      "generate_synthetic",
      [](int length, int size, std::uint64_t seed, double noise_rate, int cells) {
        SyntheticConfig cfg;
        cfg.seed = seed;
        cfg.noise_rate = noise_rate;
        cfg.num_cells = cells;
        return frames_to_array(generate_synthetic(cfg, length, size));
      },
      py::arg("length"), py::arg("size"), py::arg("seed") = 0, py::arg("noise_rate") = 0.2, py::arg("cells") = 6,
      "Synthetic advecting rain field, (length, size, size) float32 mm/h.");

  m.def(
      "read_archive",
      [](const std::filesystem::path& dir) {
        const auto seq = read_archive(dir);
        return py::make_tuple(seq.id, frames_to_array(seq));
      },
      py::arg("path"));
  m.def(
      "write_archive",
      [](const std::filesystem::path& dir, const F32Array& frames, const std::string& id) {
        write_archive(array_to_frames(frames, id), dir);
      },
      py::arg("path"), py::arg("frames"), py::arg("id"));

  m.def(
      "evaluate",
      [](const std::vector<F32Array>& preds, const std::vector<F32Array>& obs, bool per_lead_time) {
        std::vector<RadarSequence> p, o;
        for (const auto& a : preds) p.push_back(cap_sequence(array_to_frames(a)));
        for (const auto& a : obs) o.push_back(cap_sequence(array_to_frames(a)));
        EvaluateOptions opts;
        opts.per_lead_time = per_lead_time;
        const auto r = evaluate(p, o, opts);
        py::dict d;
        d["thresholds"] = threshold_dict(r.per_threshold);
        d["b_mse"] = r.b_mse;
        d["b_mae"] = r.b_mae;
        py::list leads;
        for (const auto& l : r.per_lead_time) {
          py::dict ld;
          ld["lead"] = l.lead;
          ld["thresholds"] = threshold_dict(l.per_threshold);
          ld["b_mse"] = l.b_mse;
          ld["b_mae"] = l.b_mae;
          leads.append(ld);
        }
        d["per_lead_time"] = leads;
        d["table"] = format_table(r, "model");
        return d;
      },
      py::arg("predictions"), py::arg("observations"), py::arg("per_lead_time") = false,
      "Scores mm/h predictions against observations (lists of (frames, H, W) arrays).");

  m.def(
      "gradient_check",
      [](int num_params, double step, std::uint64_t seed) {
        MminrNet<double> net(ModelConfig::tiny());
        Sample<double> s;
        Rng rng(seed);
        s.input = Tensor<double>(1, 2, 16, 16);
        s.target = Tensor<double>(1, 2, 16, 16);
        s.weights = Tensor<double>(1, 2, 16, 16);
        for (auto& v : s.input.values()) v = rng.uniform(-1, 1);
        for (auto& v : s.target.values()) v = rng.uniform(-1, 1);
        for (auto& v : s.weights.values()) v = rng.uniform(1, 30);
        GradientCheckOptions opts;
        opts.num_params = num_params;
        opts.step = step;
        opts.seed = seed;
        return gradient_check(net, s, opts).max_rel_error;
      },
      py::arg("num_params") = 32, py::arg("step") = 1e-4, py::arg("seed") = 0,
      "Max relative error between analytic and central-difference gradients on the tiny network.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a CLI command in-process; returns (exit_code, stdout, stderr).");

  py::class_<Model>(m, "Model")
      .def_static("load", &Model::load, py::arg("path"))
      .def_static("create", &Model::create, py::arg("preset") = "desk", py::arg("m_out") = 0, py::arg("seed") = 0)
      .def("forecast", &Model::forecast, py::arg("frames"), py::arg("strategy") = "mmi", py::arg("horizon") = 9,
           py::arg("clamp_feedback") = false)
      .def("save", &Model::save, py::arg("path"))
      .def_property_readonly("n_in", &Model::n_in)
      .def_property_readonly("m_out", &Model::m_out)
      .def_property_readonly("parameter_count", &Model::parameter_count);
}
