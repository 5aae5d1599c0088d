#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cacl/compression.hpp"
#include "cacl/harness.hpp"
#include "cacl/regularizers.hpp"
#include "cacl/serialize.hpp"
#include "cacl/trainer.hpp"

namespace py = pybind11;
using namespace cacl;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  Matrix m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.storage().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.storage().begin(), m.storage().end(), out.mutable_data());
  return out;
}

std::vector<float> to_vector(const Array& a) { return std::vector<float>(a.data(), a.data() + a.size()); }

Array vector_array(const std::vector<float>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

using FactorTuple = std::tuple<Array, Array, Array>;

TaskFactors to_factors(const std::vector<FactorTuple>& layers) {
  TaskFactors f;
  for (const auto& [u, s, v] : layers) f.layers.push_back(LayerFactors{to_matrix(u), to_vector(s), to_matrix(v)});
  return f;
}

std::vector<FactorTuple> from_factors(const TaskFactors& f) {
  std::vector<FactorTuple> out;
  for (const LayerFactors& l : f.layers) out.emplace_back(to_array(l.u), vector_array(l.sigma), to_array(l.v));
  return out;
}

PruneConfig prune_config(double energy_e, std::size_t min_rank, const std::string& criterion) {
  PruneConfig c;
  c.energy_e = energy_e;
  c.min_rank = min_rank;
  if (criterion == "retained_fraction")
    c.criterion = EnergyCriterion::kRetainedFraction;
  else if (criterion == "tail_to_retained")
    c.criterion = EnergyCriterion::kTailToRetained;
  else
    throw ConfigError("unknown energy criterion '" + criterion + "'");
  c.validate();
  return c;
}

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

}  // namespace

PYBIND11_MODULE(_cacl, m) {
  m.doc() = "Compression-aware continual learning core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);

  m.def(
      "svd",
      [](const Array& a) {
        const SvdFactors f = svd(to_matrix(a));
        return FactorTuple(to_array(f.u), vector_array(f.sigma), to_array(f.v));
      },
      py::arg("a"), "Reduced SVD as (u, sigma, v) with a ~= u @ diag(sigma) @ v.T.");
  m.def(
      "rank_k_approx",
      [](const Array& u, const Array& sigma, const Array& v, std::size_t k) {
        return to_array(rank_k_approx(SvdFactors{to_matrix(u), to_vector(sigma), to_matrix(v)}, k));
      },
      py::arg("u"), py::arg("sigma"), py::arg("v"), py::arg("k"));
  m.def(
      "random_orthonormal",
      [](std::size_t rows, std::size_t cols, std::uint64_t seed) { return to_array(random_orthonormal(rows, cols, seed)); },
      py::arg("rows"), py::arg("cols"), py::arg("seed"));

  m.def(
      "expansion_rank", [](std::size_t c, std::size_t n, std::size_t h, std::size_t w) {
        return expansion_rank(LayerShape{c, n, h, w});
      },
      py::arg("c"), py::arg("n"), py::arg("h"), py::arg("w"));
  m.def(
      "l_orth", [](const std::vector<FactorTuple>& layers) { return l_orth(to_factors(layers)); }, py::arg("layers"));
  m.def(
      "l_sparse", [](const std::vector<FactorTuple>& layers) { return l_sparse(to_factors(layers)); },
      py::arg("layers"));
  m.def(
      "energy_topk",
      [](const Array& sigma, double energy_e, std::size_t min_rank, const std::string& criterion) {
        return energy_topk(to_vector(sigma), prune_config(energy_e, min_rank, criterion));
      },
      py::arg("sigma"), py::arg("energy_e") = 1e-5, py::arg("min_rank") = 1,
      py::arg("criterion") = "retained_fraction");
  m.def(
      "compress",
      [](const std::vector<FactorTuple>& layers, double energy_e, std::size_t min_rank, const std::string& criterion) {
        return from_factors(compress(to_factors(layers), prune_config(energy_e, min_rank, criterion)));
      },
      py::arg("layers"), py::arg("energy_e") = 1e-5, py::arg("min_rank") = 1,
      py::arg("criterion") = "retained_fraction");

  m.def(
      "compute_metrics",
      [](const std::vector<std::vector<double>>& acc, const std::vector<std::size_t>& sizes) {
        const MetricsReport r = compute_metrics(acc, sizes);
        py::dict d;
        d["acc"] = r.acc;
        d["bwt"] = r.bwt;
        d["size_bytes"] = r.size_bytes;
        return d;
      },
      py::arg("acc_matrix"), py::arg("sizes"), "NaN marks entries above the diagonal.");

  py::class_<SharedSpace>(m, "SharedSpace")
      .def_property_readonly("num_tasks", &SharedSpace::num_tasks)
      .def_property_readonly("num_layers", &SharedSpace::num_layers)
      .def_property_readonly("rank_table", &SharedSpace::rank_table)
      .def("rank", &SharedSpace::rank, py::arg("layer"), py::arg("task"))
      .def("param_count", [](const SharedSpace& s) { return param_count(s); })
      .def("size_bytes", [](const SharedSpace& s) { return size_bytes(param_count(s)); })
      .def("task_block", [](const SharedSpace& s, std::size_t t) { return from_factors(task_block(s, t)); },
           py::arg("task"))
      .def(
          "extract_subnetwork",
          [](const SharedSpace& s, std::size_t t) {
            const Subnetwork sub = extract_subnetwork(s, t);
            std::vector<Array> w;
            for (const Matrix& x : sub.weights) w.push_back(to_array(x));
            return std::make_tuple(w, to_array(sub.head.weight), to_array(sub.head.bias));
          },
          py::arg("task"), "(per-layer c x nhw weights, head weight, head bias) for task t.")
      .def(
          "logits", [](const SharedSpace& s, std::size_t t, const Array& x) { return to_array(task_logits(s, t, to_matrix(x))); },
          py::arg("task"), py::arg("x"), "Inference logits for a batch stored as B x input_size.")
      .def("to_bytes",
           [](const SharedSpace& s) {
             const auto b = encode_space(s);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& b) {
                    const std::string raw = b;
                    return decode_space(std::span(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
                  })
      .def("save", [](const SharedSpace& s, const std::string& path) { save_space(s, path); }, py::arg("path"))
      .def_static("load", &load_space, py::arg("path"))
      .def("__eq__", [](const SharedSpace& a, const SharedSpace& b) { return a == b; });

  m.def(
      "run",
      [](const std::string& config_json) {
        const RunConfig cfg = parse_run_config(config_json);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_continual(generate_stream(cfg.stream), cfg.network, cfg.train);
        }
        py::dict out;
        out["metrics"] = json_loads(metrics_to_json(r.report, cfg));
        out["ranks_csv"] = ranks_csv(r.report);
        out["warnings"] = r.warnings;
        if (cfg.train.mode == TrainMode::kSingleTask)
          out["spaces"] = r.single_task;
        else if (cfg.train.mode != TrainMode::kBaselineUb)
          out["space"] = r.shared;
        return out;
      },
      py::arg("config_json"), "Train a task stream from a flat JSON config; returns metrics and the model.");
}
