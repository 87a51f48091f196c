#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "wsm/bench.hpp"
#include "wsm/checks.hpp"
#include "wsm/cli.hpp"
#include "wsm/ctc.hpp"
#include "wsm/errors.hpp"

namespace py = pybind11;
using namespace wsm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array");
  return Tensor({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))},
                std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict to_dict(const checks::CheckResult& r) {
  py::dict d;
  d["suite"] = r.suite;
  d["name"] = r.name;
  d["cases"] = r.cases;
  d["max_error"] = r.max_error;
  d["tolerance"] = r.tolerance;
  d["passed"] = r.pass;
  return d;
}

py::list to_list(const std::vector<checks::CheckResult>& results) {
  py::list out;
  for (const auto& r : results) out.append(to_dict(r));
  return out;
}

MixingConfig mixing_config(std::size_t d_model, std::size_t window_k, std::size_t heads) {
  MixingConfig c;
  c.d_model = d_model;
  c.d_summary = d_model;
  c.window_k = window_k;
  c.heads = heads;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Windowed SummaryMixing core routines";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<EmptySequenceError>(m, "EmptySequenceError", error.ptr());
  py::register_exception<InfeasibleTargetError>(m, "InfeasibleTargetError", error.ptr());
  py::register_exception<FitError>(m, "FitError", error.ptr());

  m.def(
      "windowed_mean",
      [](const Array& x, std::size_t k, const std::string& boundary, std::size_t valid) {
        const Tensor t = to_tensor(x);
        return to_array(sliding_window_mean(t, valid == 0 ? t.rows() : valid, k, parse_boundary(boundary)));
      },
      py::arg("x"), py::arg("k"), py::arg("boundary") = "valid-count", py::arg("valid") = 0,
      "Sliding-window mean over rows [t-k, t+k] of a [T, d] array (valid=0 means all rows).");

  m.def(
      "ctc_loss",
      [](const Array& log_probs, const std::vector<int>& labels, int blank, std::size_t valid) {
        Tape tape(false);
        return ctc_loss(tape.constant(to_tensor(log_probs)), labels, blank, valid).value().item();
      },
      py::arg("log_probs"), py::arg("labels"), py::arg("blank") = 0, py::arg("valid") = 0,
      "Negative log-likelihood of `labels` under per-frame log-probabilities [T, V].");

  m.def(
      "greedy_decode",
      [](const Array& log_probs, int blank, std::size_t valid) {
        return greedy_decode(to_tensor(log_probs), blank, valid);
      },
      py::arg("log_probs"), py::arg("blank") = 0, py::arg("valid") = 0);

  m.def(
      "peak_activation_memory",
      [](const std::string& variant, std::size_t T, std::size_t d_model, std::size_t window_k,
         std::size_t heads) {
        return peak_activation_memory(parse_variant(variant), T, mixing_config(d_model, window_k, heads));
      },
      py::arg("variant"), py::arg("T"), py::arg("d_model") = 64, py::arg("window_k") = 5,
      py::arg("heads") = 4, "Saved-activation bytes of one taped forward pass of a mixing block.");

  m.def(
      "run_scaling_bench",
      [](const std::vector<std::string>& variants, const std::vector<std::size_t>& lengths,
         std::size_t repeats, std::size_t d_model, std::size_t window_k, std::size_t heads,
         std::uint64_t seed) {
        BenchSpec spec;
        spec.variants.clear();
        for (const auto& v : variants) spec.variants.push_back(parse_variant(v));
        spec.lengths = lengths;
        spec.repeats = repeats;
        spec.d_model = d_model;
        spec.window_k = window_k;
        spec.heads = heads;
        spec.seed = seed;
        spec.validate();
        std::vector<BenchRecord> records;
        {
          py::gil_scoped_release release;
          records = run_scaling_bench(spec);
        }
        py::list out;
        for (const auto& r : records) {
          py::dict d;
          d["variant"] = to_string(r.variant);
          d["T"] = r.T;
          d["median_ns"] = r.median_ns;
          d["macs"] = r.macs;
          d["peak_bytes"] = r.peak_bytes;
          d["skipped"] = r.skipped;
          out.append(d);
        }
        return out;
      },
      py::arg("variants") = std::vector<std::string>{"SM", "WSM", "Attention"},
      py::arg("lengths") = std::vector<std::size_t>{256, 512, 1024, 2048}, py::arg("repeats") = 5,
      py::arg("d_model") = 64, py::arg("window_k") = 5, py::arg("heads") = 4, py::arg("seed") = 0,
      "Times forward passes of each mixing block; returns one dict per (variant, T).");

  m.def(
      "fit_loglog_slope",
      [](const std::vector<std::size_t>& lengths, const std::vector<double>& times) {
        if (lengths.size() != times.size()) throw DimensionError("lengths and times differ in size");
        std::vector<BenchRecord> records;
        for (std::size_t i = 0; i < lengths.size(); ++i) {
          BenchRecord r;
          r.T = lengths[i];
          r.median_ns = times[i];
          records.push_back(r);
        }
        return fit_loglog_slope(records, Variant::WSM);
      },
      py::arg("lengths"), py::arg("times"),
      "Log-log slope of time against length over the largest four lengths.");

  m.def("oracle_suite", [](std::uint64_t seed) { return to_list(checks::run_oracle_suite(seed)); },
        py::arg("seed") = 0);
  m.def("gradcheck_suite", [](std::uint64_t seed) { return to_list(checks::run_gradcheck_suite(seed)); },
        py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the wsm command line in-process; returns (exit_code, stdout, stderr).");
}
