// Copyright 2026 The tssaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python bindings for the core operations.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tssaudit/commands.hpp"
#include "tssaudit/embstore.hpp"
#include "tssaudit/error.hpp"
#include "tssaudit/geometry.hpp"
#include "tssaudit/probes.hpp"
#include "tssaudit/splitter.hpp"
#include "tssaudit/stainproc.hpp"
#include "tssaudit/synthgen.hpp"

namespace py = pybind11;
using namespace tssaudit;

namespace {

template <class T>
std::vector<py::object> optional_list(const EmbeddingTable& t, T PatchMeta::*field) {
  std::vector<py::object> out;
  out.reserve(t.rows());
  for (const auto& m : t.meta()) {
    const auto& v = m.*field;
    out.push_back(v ? py::object(py::int_(*v)) : py::object(py::none()));
  }
  return out;
}

std::vector<std::string> string_list(const EmbeddingTable& t, std::string PatchMeta::*field) {
  std::vector<std::string> out;
  out.reserve(t.rows());
  for (const auto& m : t.meta()) out.push_back(m.*field);
  return out;
}

EmbeddingTable make_table(const py::array_t<float, py::array::c_style | py::array::forcecast>& features,
                          const std::vector<std::string>& patch_ids, const std::vector<std::string>& slide_ids,
                          const std::vector<std::string>& patient_ids,
                          const std::vector<std::optional<int>>& site_labels,
                          const std::vector<std::optional<int>>& class_labels, const std::string& model_tag) {
  if (features.ndim() != 2) throw ParameterError("features must be a 2-D array");
  const auto n = static_cast<std::size_t>(features.shape(0));
  for (std::size_t len : {patch_ids.size(), slide_ids.size(), patient_ids.size()}) {
    if (len != n) throw ConsistencyError("metadata length does not match the number of feature rows");
  }
  if ((!site_labels.empty() && site_labels.size() != n) || (!class_labels.empty() && class_labels.size() != n)) {
    throw ConsistencyError("label length does not match the number of feature rows");
  }
  FeatureMatrix f = Eigen::Map<const FeatureMatrix>(features.data(), features.shape(0), features.shape(1));
  std::vector<PatchMeta> meta(n);
  for (std::size_t i = 0; i < n; ++i) {
    meta[i].patch_id = patch_ids[i];
    meta[i].slide_id = slide_ids[i];
    meta[i].patient_id = patient_ids[i];
    if (!site_labels.empty()) meta[i].site_label = site_labels[i];
    if (!class_labels.empty()) meta[i].class_label = class_labels[i];
  }
  return EmbeddingTable(std::move(f), std::move(meta), model_tag);
}

py::dict split_dict(const GroupedSplit& s) {
  py::dict d;
  d["train"] = s.train;
  d["val"] = s.val;
  d["test"] = s.test;
  d["level"] = std::string(to_string(s.level));
  return d;
}

SynthConfig synth_config(const py::dict& kw) {
  SynthConfig c;
  for (const auto& [key, value] : kw) {
    const auto k = key.cast<std::string>();
    if (k == "dims") c.dims = value.cast<std::size_t>();
    else if (k == "n_sites") c.n_sites = value.cast<std::size_t>();
    else if (k == "n_classes") c.n_classes = value.cast<std::size_t>();
    else if (k == "patients_per_site") c.patients_per_site = value.cast<std::size_t>();
    else if (k == "slides_per_patient") c.slides_per_patient = value.cast<std::size_t>();
    else if (k == "patches_per_slide") c.patches_per_slide = value.cast<std::size_t>();
    else if (k == "site_strength") c.site_strength = value.cast<double>();
    else if (k == "class_strength") c.class_strength = value.cast<double>();
    else if (k == "slide_strength") c.slide_strength = value.cast<double>();
    else if (k == "noise") c.noise = value.cast<double>();
    else if (k == "noise_anisotropy") c.noise_anisotropy = value.cast<double>();
    else if (k == "signature_placement") c.placement = parse_signature_placement(value.cast<std::string>());
    else if (k == "class_layout") c.class_layout = parse_class_layout(value.cast<std::string>());
    else if (k == "seed") c.seed = value.cast<std::uint64_t>();
    else throw ParameterError("unknown parameter '" + k + "'");
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core bindings of the tssaudit toolkit";
  m.attr("__version__") = TSSAUDIT_VERSION;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<StageError>(m, "StageError", base.ptr());

  py::class_<EmbeddingTable>(m, "EmbeddingTable")
      .def(py::init(&make_table), py::arg("features"), py::arg("patch_ids"), py::arg("slide_ids"),
           py::arg("patient_ids"), py::arg("site_labels") = std::vector<std::optional<int>>{},
           py::arg("class_labels") = std::vector<std::optional<int>>{}, py::arg("model_tag") = "")
      .def_property_readonly("rows", &EmbeddingTable::rows)
      .def_property_readonly("dim", &EmbeddingTable::dim)
      .def_property_readonly("model_tag", &EmbeddingTable::model_tag)
      .def_property_readonly("features", [](const EmbeddingTable& t) { return FeatureMatrix(t.features()); })
      .def_property_readonly("patch_ids", [](const EmbeddingTable& t) { return string_list(t, &PatchMeta::patch_id); })
      .def_property_readonly("slide_ids", [](const EmbeddingTable& t) { return string_list(t, &PatchMeta::slide_id); })
      .def_property_readonly("patient_ids",
                             [](const EmbeddingTable& t) { return string_list(t, &PatchMeta::patient_id); })
      .def_property_readonly("site_labels",
                             [](const EmbeddingTable& t) { return optional_list(t, &PatchMeta::site_label); })
      .def_property_readonly("class_labels",
                             [](const EmbeddingTable& t) { return optional_list(t, &PatchMeta::class_label); })
      .def("select", [](const EmbeddingTable& t, const std::vector<std::size_t>& rows) { return t.select(rows); })
      .def("__len__", &EmbeddingTable::rows)
      .def("__eq__", &EmbeddingTable::operator==);

  m.def("load_table", [](const std::filesystem::path& p) { return load_table(p); }, py::arg("path"));
  m.def("save_table", [](const EmbeddingTable& t, const std::filesystem::path& p) { save_table(t, p); },
        py::arg("table"), py::arg("path"));
  m.def("generate", [](const py::kwargs& kw) { return generate(synth_config(kw)); },
        "Synthetic embedding table; keyword arguments are SynthConfig fields.");

  m.def("subsample_per_site",
        [](const EmbeddingTable& t, std::size_t budget, std::uint64_t seed) {
          return subsample_per_site(t, budget, seed).rows;
        },
        py::arg("table"), py::arg("budget_per_site"), py::arg("seed"));
  m.def("patient_split",
        [](const EmbeddingTable& t, std::array<double, 3> fractions, std::uint64_t seed) {
          return split_dict(patient_split(t, fractions, seed));
        },
        py::arg("table"), py::arg("fractions"), py::arg("seed"));
  m.def("build_bias_splits",
        [](const EmbeddingTable& t, std::uint64_t seed, std::size_t pps, std::size_t per_cell) {
          BiasConfig cfg;
          cfg.patches_per_slide = pps;
          cfg.slides_per_cell = per_cell;
          py::list out;
          for (const auto& b : build_bias_splits(t, seed, cfg)) {
            auto d = split_dict(b.split);
            d["index"] = b.spec.index;
            d["ratio"] = b.spec.ratio_label;
            out.append(d);
          }
          return out;
        },
        py::arg("table"), py::arg("seed"), py::arg("patches_per_slide") = 2500, py::arg("slides_per_cell") = 7);
  m.def("count_group_violations",
        [](const EmbeddingTable& t, const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
           const std::vector<std::size_t>& test, const std::string& level) {
          GroupedSplit s{train, val, test, level == "slide" ? GroupLevel::slide : GroupLevel::patient};
          return count_group_violations(t, s);
        },
        py::arg("table"), py::arg("train"), py::arg("val"), py::arg("test"), py::arg("level") = "patient");

  m.def("run_site_prediction",
        [](const EmbeddingTable& t, std::uint64_t seed, std::size_t budget, int k) {
          SitePredictionConfig cfg;
          cfg.budget_per_site = budget;
          cfg.k = k;
          const auto r = run_site_prediction(t, seed, cfg);
          py::dict acc;
          for (const auto& [clf, rep] : r.reports) acc[py::str(std::string(to_string(clf)))] = rep.accuracy;
          return acc;
        },
        py::arg("table"), py::arg("seed"), py::arg("budget_per_site") = 50000, py::arg("k") = 5,
        "Accuracy of each site classifier on a patient-level test split.");

  m.def("fit_pca",
        [](const RowMatrix& x) {
          const auto p = fit_pca(x);
          py::dict d;
          d["mean"] = p.mean;
          d["components"] = p.components;
          d["eigenvalues"] = p.eigenvalues;
          d["evr"] = p.evr;
          d["rank"] = p.rank;
          return d;
        },
        py::arg("x"));
  m.def("ovo_auroc",
        [](const std::vector<double>& scores, const std::vector<int>& labels) {
          if (scores.size() != labels.size()) throw ParameterError("scores and labels differ in length");
          return ovo_auroc_oriented(scores, labels);
        },
        py::arg("scores"), py::arg("labels"));
  m.def("choose_reference", &choose_reference, py::arg("table"), py::arg("seed"));
  m.def("distance_profiles",
        [](const EmbeddingTable& t, const std::string& ref, std::uint64_t seed, std::size_t n_per_group) {
          DistanceConfig cfg;
          cfg.n_per_group = n_per_group;
          py::dict out;
          for (const auto& p : distance_profiles(t, ref, seed, cfg)) {
            std::vector<double> d;
            for (const auto& e : p.entries) d.push_back(e.distance);
            out[py::str(std::string(to_string(p.group)))] = d;
          }
          return out;
        },
        py::arg("table"), py::arg("reference_patch_id"), py::arg("seed"), py::arg("n_per_group") = 1000);

  m.def("otsu_threshold",
        [](const std::array<std::uint64_t, 256>& h) { return otsu_threshold(h).threshold; },
        py::arg("histogram"));

  m.def("default_params", [](const std::string& e) { return default_params(e).dump(); }, py::arg("experiment"));
  m.def("run_command",
        [](const std::string& config_json) {
          return run_command(audit_config_from_json(nlohmann::json::parse(config_json))).dump();
        },
        py::arg("config_json"), "Runs a CLI command from a JSON config and returns the report as JSON.");
}
