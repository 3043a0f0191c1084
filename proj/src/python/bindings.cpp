#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "apn/cli.hpp"
#include "apn/config.hpp"
#include "apn/corpus.hpp"
#include "apn/errors.hpp"
#include "apn/gradcheck.hpp"
#include "apn/metrics.hpp"
#include "apn/model.hpp"
#include "apn/train.hpp"

namespace py = pybind11;
using namespace apn;

namespace {

py::dict complexity(const std::string& arch, int input) {
  const auto report = count_complexity(preset(arch), {input, input});
  py::list modules;
  for (const auto& m : report.modules) {
    modules.append(py::dict(py::arg("module") = m.module, py::arg("params") = m.params, py::arg("flops") = m.macs));
  }
  return py::dict(py::arg("arch") = arch, py::arg("params") = report.total_params,
                  py::arg("flops") = report.total_macs, py::arg("modules") = modules);
}

std::uint64_t hash_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& img) {
  if (img.ndim() != 2) throw ShapeError("perceptual_hash expects a 2-D grayscale array");
  GrayImage g{static_cast<int>(img.shape(1)), static_cast<int>(img.shape(0)), {}};
  g.pixels.assign(img.data(), img.data() + img.size());
  return perceptual_hash(g);
}

py::dict dedup_records(const std::vector<std::pair<std::string, std::uint64_t>>& records, int threshold) {
  std::vector<HashedRecord> recs;
  for (const auto& [id, h] : records) recs.push_back({id, h});
  const auto r = dedup(recs, threshold);
  std::vector<std::tuple<std::string, std::string, int>> pairs;
  for (const auto& d : r.duplicates) pairs.emplace_back(d.kept_id, d.removed_id, d.hamming);
  return py::dict(py::arg("kept") = r.kept, py::arg("duplicates") = pairs);
}

py::tuple reconcile_labels(const std::vector<std::string>& labels) {
  const auto r = reconcile(labels);
  return py::make_tuple(std::string(outcome_name(r.outcome)), r.label);
}

py::dict metrics(int k, const std::vector<std::int64_t>& confusion) {
  const auto m = metrics_from_confusion(k, confusion);
  return py::dict(py::arg("top1") = m.top1, py::arg("macro_precision") = m.macro_precision,
                  py::arg("macro_recall") = m.macro_recall, py::arg("macro_f1") = m.macro_f1);
}

py::list gradient_suite(bool include_e2e) {
  GradSuiteOptions opts;
  opts.include_e2e = include_e2e;
  py::list out;
  for (const auto& e : run_gradient_suite(opts)) {
    out.append(py::dict(py::arg("name") = e.name, py::arg("end_to_end") = e.end_to_end,
                        py::arg("max_rel_err") = e.max_rel_err, py::arg("tolerance") = e.tolerance,
                        py::arg("passed") = e.passed()));
  }
  return out;
}

py::tuple cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(args, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Attentional pyramid network core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("preset_names", &preset_names, "Named architectures.");
  m.def("complexity", &complexity, py::arg("arch"), py::arg("input") = 224,
        "Parameter and multiply-add counts of a named architecture.");
  m.def("perceptual_hash", &hash_array, py::arg("image"), "64-bit average hash of a 2-D grayscale array.");
  m.def("hamming", &hamming, py::arg("a"), py::arg("b"));
  m.def("dedup", &dedup_records, py::arg("records"), py::arg("threshold") = 5,
        "Greedy first-wins dedup over (id, hash) pairs.");
  m.def("reconcile", &reconcile_labels, py::arg("labels"), "Majority vote over 2 or 3 labels: (outcome, label).");
  m.def("metrics", &metrics, py::arg("num_classes"), py::arg("confusion"),
        "Top-1 and macro metrics of a row-major confusion matrix (rows are truth).");
  m.def("gradient_suite", &gradient_suite, py::arg("include_e2e") = false,
        "Finite-difference gradient checks of every op.");
  m.def("run_cli", &cli, py::arg("args"), "Runs the apn command line: (exit code, stdout, stderr).");
}
