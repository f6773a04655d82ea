// pybind11 bindings: numpy in/out for the matrix operations, thin wrappers
// around the pipeline commands for everything artifact-shaped.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "codir/pipeline.hpp"

namespace py = pybind11;
using namespace codir;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
  return m;
}

py::array_t<double> to_numpy(const Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::copy(m.data.begin(), m.data.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_codir, mod) {
  mod.doc() = "structured decomposable image representations";

  py::register_exception<ConfigError>(mod, "ConfigError");
  py::register_exception<DependencyError>(mod, "DependencyError");

  py::enum_<Method>(mod, "Method")
      .value("CODIR", Method::kCodir)
      .value("BXENT", Method::kBxent);
  py::enum_<EnvSource>(mod, "EnvSource")
      .value("CLASS", EnvSource::kClass)
      .value("CONTEXT", EnvSource::kContext);

  py::class_<RunConfig>(mod, "RunConfig")
      .def(py::init<>())
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("n_classes", &RunConfig::n_classes)
      .def_readwrite("n_context", &RunConfig::n_context)
      .def_readwrite("height", &RunConfig::height)
      .def_readwrite("width", &RunConfig::width)
      .def_readwrite("n_train", &RunConfig::n_train)
      .def_readwrite("n_val", &RunConfig::n_val)
      .def_readwrite("n_test", &RunConfig::n_test)
      .def_readwrite("n_envs", &RunConfig::n_envs)
      .def_readwrite("max_labels", &RunConfig::max_labels)
      .def_readwrite("method", &RunConfig::method)
      .def_readwrite("env_source", &RunConfig::env_source)
      .def_readwrite("lr", &RunConfig::lr)
      .def_readwrite("rho", &RunConfig::rho)
      .def_readwrite("batch_size", &RunConfig::batch_size)
      .def_readwrite("epochs", &RunConfig::epochs)
      .def("validate", [](const RunConfig& c) { validate_config(c); })
      .def("echo", &config_echo)
      .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; });

  mod.def("parse_config", &parse_config, py::arg("text"));
  mod.def("load_config", &load_config, py::arg("path"));

  py::class_<PrfReport>(mod, "PrfReport")
      .def_readonly("precision", &PrfReport::precision)
      .def_readonly("recall", &PrfReport::recall)
      .def_readonly("f1", &PrfReport::f1);

  py::class_<RetrievalReport>(mod, "RetrievalReport")
      .def_readonly("nn_f1", &RetrievalReport::nn_f1)
      .def_readonly("mnn_f1", &RetrievalReport::mnn_f1)
      .def_readonly("mnn_prec", &RetrievalReport::mnn_prec)
      .def_readonly("f1_pct", &RetrievalReport::f1_pct);

  py::class_<ProbeMethodResult>(mod, "ProbeMethodResult")
      .def_readonly("method", &ProbeMethodResult::method)
      .def_readonly("fold_f1", &ProbeMethodResult::fold_f1)
      .def_readonly("mean", &ProbeMethodResult::mean)
      .def_readonly("stddev", &ProbeMethodResult::stddev);

  py::class_<GradcheckReport>(mod, "GradcheckReport")
      .def_readonly("head_err", &GradcheckReport::head_err)
      .def_readonly("conv_err", &GradcheckReport::conv_err);

  // Pipeline commands; each reads and writes artifacts under run_dir.
  mod.def("gen", &cmd_gen, py::arg("config"), py::arg("run_dir"));
  mod.def("train", &cmd_train, py::arg("config"), py::arg("run_dir"),
          py::call_guard<py::gil_scoped_release>());
  mod.def("fit", &cmd_fit, py::arg("config"), py::arg("run_dir"));
  mod.def("eval", &cmd_eval, py::arg("config"), py::arg("run_dir"), py::arg("k") = 0);
  mod.def("dump_reps", &cmd_dump_reps, py::arg("config"), py::arg("run_dir"));
  mod.def("retrieve", &cmd_retrieve, py::arg("config"), py::arg("run_dir"),
          py::arg("query_count") = 200);
  mod.def("compose_demo", &cmd_compose_demo, py::arg("config"), py::arg("run_dir"));
  mod.def("compress_run", &cmd_compress, py::arg("config"), py::arg("run_dir"), py::arg("k"));
  mod.def("rank", &cmd_rank, py::arg("config"), py::arg("run_dir"), py::arg("count"),
          py::arg("rows"), py::arg("cols"));
  mod.def("probe", &cmd_probe, py::arg("config"), py::arg("run_dir"), py::arg("holdout_label"));
  mod.def("gradcheck", &cmd_gradcheck, py::arg("config"), py::arg("run_dir"));

  // Templates and stored representations.
  py::class_<TemplateSet>(mod, "TemplateSet")
      .def_property_readonly("ebar", [](const TemplateSet& t) { return to_numpy(t.ebar); })
      .def_property_readonly("templates",
                             [](const TemplateSet& t) { return to_numpy(t.templates); })
      .def_readonly("thresholds", &TemplateSet::thresholds)
      .def_readonly("template_ids", &TemplateSet::template_ids)
      .def_readonly("threshold_ids", &TemplateSet::threshold_ids);

  mod.def("read_templates", &read_templates, py::arg("path"));

  py::class_<RepRecord>(mod, "RepRecord")
      .def_readonly("sample_id", &RepRecord::sample_id)
      .def_property_readonly("d", [](const RepRecord& r) { return to_numpy(r.d); })
      .def_readonly("class_labels", &RepRecord::class_labels)
      .def_readonly("context_labels", &RepRecord::context_labels);

  mod.def("read_reps", &read_reps, py::arg("path"));

  // Matrix-level operations on numpy arrays.
  mod.def("svd", [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    const SvdResult r = svd(to_matrix(a));
    return py::make_tuple(to_numpy(r.u), r.s, to_numpy(r.v));
  });
  mod.def("effective_rank",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
            return effective_rank(to_matrix(a));
          });
  mod.def("compress",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
             std::size_t k) {
            const CompressedRep r = compress(to_matrix(a), k);
            return py::make_tuple(to_numpy(r.u_k), r.s_k, to_numpy(r.v_k));
          },
          py::arg("d"), py::arg("k"));
  mod.def("decompress",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& u,
             const std::vector<double>& s,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& v) {
            CompressedRep r{s.size(), to_matrix(u), s, to_matrix(v)};
            return to_numpy(decompress(r));
          },
          py::arg("u"), py::arg("s"), py::arg("v"));
  mod.def("compression_ratio", &compression_ratio, py::arg("n_c"), py::arg("n_e"),
          py::arg("k"));
  mod.def("representation_rank",
          [](const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>&
                 reps,
             std::size_t rows, std::size_t cols) {
            std::vector<Matrix> ms;
            ms.reserve(reps.size());
            for (const auto& r : reps) ms.push_back(to_matrix(r));
            return representation_rank(ms, rows, cols);
          },
          py::arg("reps"), py::arg("rows"), py::arg("cols"));

  mod.def("classify",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d,
             const TemplateSet& ts) { return classify(to_matrix(d), ts); },
          py::arg("d"), py::arg("templates"));
  mod.def("similarity",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& da,
             const py::array_t<double, py::array::c_style | py::array::forcecast>& db,
             const TemplateSet& ts) { return similarity(to_matrix(da), to_matrix(db), ts); },
          py::arg("da"), py::arg("db"), py::arg("templates"));
  mod.def("compose_swap",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& d,
             std::size_t c_plus, std::size_t c_minus, const TemplateSet& ts,
             const LabelSet& predicted) {
            return to_numpy(compose_swap(to_matrix(d), c_plus, c_minus, ts, predicted));
          },
          py::arg("d"), py::arg("c_plus"), py::arg("c_minus"), py::arg("templates"),
          py::arg("predicted"));
}
