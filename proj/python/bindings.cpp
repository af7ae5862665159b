// Copyright 2026 The mfs Authors
// SPDX-License-Identifier: Apache-2.0
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "mfs/data.hpp"
#include "mfs/distill.hpp"
#include "mfs/latency.hpp"
#include "mfs/metrics.hpp"
#include "mfs/search.hpp"

namespace py = pybind11;
using namespace mfs;

namespace {

py::object to_python(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::ordered_json from_python(const py::object& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::ordered_json::parse(text);
}

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

DoubleArray to_array(const Tensor& t) {
  DoubleArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

std::vector<int> to_labels(const IntArray& a) { return {a.data(), a.data() + a.size()}; }

std::size_t row_width(const IntArray& a) {
  return a.ndim() >= 1 ? static_cast<std::size_t>(a.shape(a.ndim() - 1)) : 1;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latency-constrained segmentation search, distillation and metrics";

  // Search space and network descriptions ----------------------------------
  py::class_<SearchSpaceConfig>(m, "SearchSpaceConfig")
      .def(py::init<>())
      .def_readwrite("num_layers", &SearchSpaceConfig::num_layers)
      .def_readwrite("rates", &SearchSpaceConfig::rates)
      .def_readwrite("expansion_ratios", &SearchSpaceConfig::expansion_ratios)
      .def_readwrite("student_max_expansion", &SearchSpaceConfig::student_max_expansion)
      .def_readwrite("base_width", &SearchSpaceConfig::base_width)
      .def_readwrite("cell_width", &SearchSpaceConfig::cell_width)
      .def_readwrite("trunk_layers", &SearchSpaceConfig::trunk_layers)
      .def_readwrite("num_classes", &SearchSpaceConfig::num_classes)
      .def("validate", &SearchSpaceConfig::validate)
      .def("to_dict", [](const SearchSpaceConfig& c) { return to_python(c.to_json()); })
      .def_static("from_dict",
                  [](const py::object& d) { return SearchSpaceConfig::from_json(from_python(d)); });

  py::class_<NetworkSpec>(m, "NetworkSpec")
      .def_property_readonly("role", [](const NetworkSpec& s) { return role_name(s.role); })
      .def_readwrite("attention", &NetworkSpec::attention)
      .def_readonly("fingerprint", &NetworkSpec::fingerprint)
      .def_readonly("num_classes", &NetworkSpec::num_classes)
      .def("max_expansion", &NetworkSpec::max_expansion)
      .def("to_dict", [](const NetworkSpec& s) { return to_python(s.to_json()); })
      .def("dump", &NetworkSpec::dump)
      .def_static("parse", &NetworkSpec::parse)
      .def_static("from_dict",
                  [](const py::object& d) { return NetworkSpec::from_json(from_python(d)); });

  py::class_<ParameterStore>(m, "ParameterStore")
      .def(py::init<>())
      .def("copy", [](const ParameterStore& s) { return ParameterStore(s); })
      .def("names", &ParameterStore::names)
      .def("__len__", &ParameterStore::size)
      .def("total_values", &ParameterStore::total_values)
      .def("content_hash", &ParameterStore::content_hash)
      .def_property_readonly("origin", &ParameterStore::origin)
      .def("get", [](const ParameterStore& s, const std::string& n) { return to_array(s.get(n).value); })
      .def("save", &ParameterStore::save)
      .def_static("load", &ParameterStore::load);

  // Data -------------------------------------------------------------------
  py::class_<Dataset>(m, "Dataset")
      .def_static(
          "load", [](const std::filesystem::path& dir) { return load_dataset(DatasetManifest::load(dir)); },
          py::arg("dir"))
      .def("__len__", &Dataset::size)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_readonly("ignore_index", &Dataset::ignore_index)
      .def("image", [](const Dataset& d, std::size_t i) { return to_array(d.samples.at(i).image); })
      .def("labels", [](const Dataset& d, std::size_t i) {
        const Sample& s = d.samples.at(i);
        py::array_t<int> out({s.height, s.width});
        std::copy(s.labels.begin(), s.labels.end(), out.mutable_data());
        return out;
      });

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& root, const std::string& split, std::size_t count,
         std::size_t height, std::size_t width, int num_classes, std::uint64_t seed) {
        return generate_synthetic(root, split, count, height, width, num_classes, seed).dir;
      },
      py::arg("root"), py::arg("split"), py::arg("count"), py::arg("height") = 64,
      py::arg("width") = 128, py::arg("num_classes") = 4, py::arg("seed") = 0,
      "Writes a synthetic split and returns its directory.");
  m.def(
      "load_cityscapes",
      [](const std::filesystem::path& root, const std::string& split, std::size_t height,
         const std::filesystem::path& out) { return load_cityscapes_dir(root, split, height, out).dir; },
      py::arg("root"), py::arg("split"), py::arg("height"), py::arg("out"));
  m.def("cityscapes_train_id", &cityscapes_train_id);

  // Latency and cost -------------------------------------------------------
  py::class_<LatencyTable>(m, "LatencyTable")
      .def("__len__", &LatencyTable::size)
      .def("scaled", &LatencyTable::scaled)
      .def("to_csv", &LatencyTable::to_csv)
      .def_static("from_csv", &LatencyTable::from_csv)
      .def("save_csv", &LatencyTable::save_csv)
      .def_static("load_csv", &LatencyTable::load_csv);

  m.def("benchmark_table", &benchmark_table, py::arg("config"), py::arg("height"),
        py::arg("width"), py::arg("reps") = 5, py::arg("seed") = 0,
        py::call_guard<py::gil_scoped_release>());
  m.def(
      "regularized_latency",
      [](double op, double stride, double expansion) {
        return regularized_latency(LayerMarginals{op, stride, expansion});
      },
      py::arg("op_ms"), py::arg("stride_ms"), py::arg("expansion_ms"));
  m.def("network_latency",
        py::overload_cast<const LatencyTable&, const NetworkSpec&>(&regularized_latency),
        py::arg("table"), py::arg("spec"));
  m.def("conv_flops", &conv_flops, py::arg("ci"), py::arg("k"), py::arg("h"), py::arg("w"),
        py::arg("co"));
  m.def("conv_params", &conv_params, py::arg("ci"), py::arg("k"), py::arg("co"));
  m.def("network_flops", &network_flops, py::arg("spec"), py::arg("height"), py::arg("width"));
  m.def("network_params", &network_params, py::arg("spec"));

  // Search -----------------------------------------------------------------
  py::class_<SearchResult>(m, "SearchResult")
      .def_readonly("teacher", &SearchResult::teacher)
      .def_readonly("student", &SearchResult::student)
      .def_readonly("weights", &SearchResult::weights)
      .def_property_readonly("history", [](const SearchResult& r) {
        py::list out;
        for (const auto& s : r.history) {
          py::dict d;
          d["iteration"] = s.iteration;
          d["weight_loss"] = s.weight_loss;
          d["arch_loss"] = s.arch_loss;
          d["latency_ms"] = s.latency_ms;
          out.append(d);
        }
        return out;
      });

  m.def(
      "search",
      [](const SearchSpaceConfig& config, const Dataset& data, const LatencyTable& table,
         int iterations, std::uint64_t seed, double lambda_latency, double tau) {
        SearchOptions o;
        o.iterations = iterations;
        o.seed = seed;
        o.lambda_latency = lambda_latency;
        o.tau = tau;
        py::gil_scoped_release release;
        return search(config, data, table, o);
      },
      py::arg("config"), py::arg("data"), py::arg("table"), py::arg("iterations") = 200,
      py::arg("seed") = 0, py::arg("lambda_latency") = 0.01, py::arg("tau") = 1.0);
  m.def(
      "gumbel_sample",
      [](const std::vector<double>& gamma, double tau, std::uint64_t seed, int draws) {
        Rng rng(seed);
        std::vector<int> out(static_cast<std::size_t>(draws));
        for (int& v : out) v = gumbel_sample(gamma, tau, rng);
        return out;
      },
      py::arg("gamma"), py::arg("tau"), py::arg("seed"), py::arg("draws") = 1);

  // Training ---------------------------------------------------------------
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("momentum", &TrainConfig::momentum)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("temperature", &TrainConfig::temperature)
      .def_readwrite("distill_weight", &TrainConfig::distill_weight)
      .def_readwrite("grad_clip", &TrainConfig::grad_clip)
      .def_readwrite("ignore_index", &TrainConfig::ignore_index);

  auto report = [](const TrainReport& r) { return to_python(r.to_json()); };
  m.def(
      "train_teacher",
      [report](const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
               const Dataset* val, const TrainConfig& config) {
        TrainReport r;
        {
          py::gil_scoped_release release;
          r = train_teacher(spec, weights, train, val, config);
        }
        return report(r);
      },
      py::arg("spec"), py::arg("weights"), py::arg("train"), py::arg("val") = nullptr,
      py::arg("config") = TrainConfig{});
  m.def(
      "train_student",
      [report](const NetworkSpec& spec, ParameterStore& weights, const Dataset& train,
               const Dataset* val, const TrainConfig& config) {
        TrainReport r;
        {
          py::gil_scoped_release release;
          r = train_student(spec, weights, train, val, config);
        }
        return report(r);
      },
      py::arg("spec"), py::arg("weights"), py::arg("train"), py::arg("val") = nullptr,
      py::arg("config") = TrainConfig{});
  m.def(
      "distill_student",
      [report](const NetworkSpec& student, ParameterStore& weights, const NetworkSpec& teacher,
               const ParameterStore& teacher_weights, const Dataset& train, const Dataset* val,
               const TrainConfig& config) {
        TrainReport r;
        {
          py::gil_scoped_release release;
          r = distill_student(student, weights, teacher, teacher_weights, train, val, config);
        }
        return report(r);
      },
      py::arg("student"), py::arg("weights"), py::arg("teacher"), py::arg("teacher_weights"),
      py::arg("train"), py::arg("val") = nullptr, py::arg("config") = TrainConfig{});
  m.def(
      "predict",
      [](const NetworkSpec& spec, ParameterStore& weights, const DoubleArray& images) {
        if (images.ndim() != 4) throw std::invalid_argument("images must be [N,3,H,W]");
        const std::vector<int> labels = predict(spec, weights, to_tensor(images));
        py::array_t<int> out({images.shape(0), images.shape(2), images.shape(3)});
        std::copy(labels.begin(), labels.end(), out.mutable_data());
        return out;
      },
      py::arg("spec"), py::arg("weights"), py::arg("images"));
  m.def(
      "evaluate",
      [](const NetworkSpec& spec, ParameterStore& weights, const Dataset& data) {
        return to_python(evaluate(spec, weights, data).report());
      },
      py::arg("spec"), py::arg("weights"), py::arg("data"));
  m.def(
      "temperature_softmax",
      [](const DoubleArray& logits, double temperature, int axis) {
        return to_array(temperature_softmax(to_tensor(logits), temperature, axis));
      },
      py::arg("logits"), py::arg("temperature"), py::arg("axis") = 1);

  // Metrics ----------------------------------------------------------------
  m.def(
      "segmentation_metrics",
      [](const IntArray& truth, const IntArray& pred, int num_classes, std::optional<int> ignore) {
        if (truth.size() != pred.size()) throw std::invalid_argument("truth and pred sizes differ");
        ConfusionMatrix cm(num_classes, ignore);
        cm.accumulate(to_labels(truth), to_labels(pred), row_width(truth));
        return to_python(cm.report());
      },
      py::arg("truth"), py::arg("pred"), py::arg("num_classes"), py::arg("ignore") = py::none(),
      "Pixel accuracy, mean pixel accuracy, mean IoU and per-class IoU.");
}
