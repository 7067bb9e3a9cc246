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

#include "tssaudit/synthgen.hpp"

#include <cmath>
#include <string>

#include <Eigen/QR>

#include "tssaudit/error.hpp"
#include "tssaudit/rng.hpp"

namespace tssaudit {
namespace {

Eigen::VectorXd gaussian_vector(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  return v;
}

/// Orthonormalises `v` against the first `count` columns of `basis`.
Eigen::VectorXd orthonormalize(Eigen::VectorXd v, const Eigen::MatrixXd& basis, Eigen::Index count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < count; ++j) v -= basis.col(j).dot(v) * basis.col(j);
  }
  const double n = v.norm();
  if (!(n > 1e-12)) throw DataError("synthgen: degenerate random direction");
  return v / n;
}

}  // namespace

std::string_view to_string(SignaturePlacement p) {
  switch (p) {
    case SignaturePlacement::top_variance: return "top_variance";
    case SignaturePlacement::low_variance: return "low_variance";
    case SignaturePlacement::random: return "random";
  }
  return "random";
}

SignaturePlacement parse_signature_placement(std::string_view s) {
  if (s == "top_variance") return SignaturePlacement::top_variance;
  if (s == "low_variance") return SignaturePlacement::low_variance;
  if (s == "random") return SignaturePlacement::random;
  throw ParameterError("unknown signature placement '" + std::string(s) + "'");
}

std::string_view to_string(ClassLayout l) {
  return l == ClassLayout::per_slide ? "per_slide" : "per_patch";
}

ClassLayout parse_class_layout(std::string_view s) {
  if (s == "per_slide") return ClassLayout::per_slide;
  if (s == "per_patch") return ClassLayout::per_patch;
  throw ParameterError("unknown class layout '" + std::string(s) + "'");
}

void SynthConfig::validate() const {
  if (dims < 1 || n_sites < 1 || n_classes < 1 || patients_per_site < 1 ||
      slides_per_patient < 1 || patches_per_slide < 1) {
    throw ParameterError("synth: all counts must be >= 1");
  }
  for (double s : {site_strength, class_strength, slide_strength, noise_anisotropy}) {
    if (!std::isfinite(s) || s < 0.0) {
      throw ParameterError("synth: strengths must be finite and non-negative");
    }
  }
  if (!std::isfinite(noise) || !(noise > 0.0)) throw ParameterError("synth: noise must be > 0");
  if (n_sites + n_classes > dims) {
    throw ParameterError("synth: dims must be >= n_sites + n_classes for orthogonal signatures");
  }
}

SynthResult generate_with_truth(const SynthConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.dims);
  const auto s_count = static_cast<Eigen::Index>(config.n_sites);
  const auto c_count = static_cast<Eigen::Index>(config.n_classes);

  SynthTruth truth;
  {
    Rng rng(derive_seed(config.seed, "synth/basis"));
    Eigen::MatrixXd g(d, d);
    for (Eigen::Index j = 0; j < d; ++j) g.col(j) = gaussian_vector(config.dims, rng);
    truth.noise_basis = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  }
  truth.noise_scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double rel = d > 1 ? static_cast<double>(d - 1 - j) / static_cast<double>(d - 1) : 0.0;
    truth.noise_scale(j) = config.noise * (1.0 + config.noise_anisotropy * rel);
  }

  truth.site_vectors.resize(d, s_count);
  {
    Rng rng(derive_seed(config.seed, "synth/sites"));
    for (Eigen::Index s = 0; s < s_count; ++s) {
      switch (config.placement) {
        case SignaturePlacement::top_variance:
          truth.site_vectors.col(s) = truth.noise_basis.col(s);
          break;
        case SignaturePlacement::low_variance:
          truth.site_vectors.col(s) = truth.noise_basis.col(d - 1 - s);
          break;
        case SignaturePlacement::random:
          truth.site_vectors.col(s) =
              orthonormalize(gaussian_vector(config.dims, rng), truth.site_vectors, s);
          break;
      }
    }
  }
  {
    Rng rng(derive_seed(config.seed, "synth/classes"));
    Eigen::MatrixXd all(d, s_count + c_count);
    all.leftCols(s_count) = truth.site_vectors;
    for (Eigen::Index c = 0; c < c_count; ++c) {
      all.col(s_count + c) = orthonormalize(gaussian_vector(config.dims, rng), all, s_count + c);
    }
    truth.class_vectors = all.rightCols(c_count);
  }

  const std::size_t n = config.rows();
  FeatureMatrix features(static_cast<Eigen::Index>(n), d);
  std::vector<PatchMeta> meta;
  meta.reserve(n);
  Rng slide_rng(derive_seed(config.seed, "synth/slides"));
  const std::uint64_t noise_seed = derive_seed(config.seed, "synth/noise");
  std::normal_distribution<double> normal;
  std::size_t row = 0;
  for (std::size_t s = 0; s < config.n_sites; ++s) {
    for (std::size_t p = 0; p < config.patients_per_site; ++p) {
      const std::string patient = "s" + std::to_string(s) + "_p" + std::to_string(p);
      for (std::size_t k = 0; k < config.slides_per_patient; ++k) {
        const std::string slide = patient + "_sl" + std::to_string(k);
        const Eigen::VectorXd eta = gaussian_vector(config.dims, slide_rng).normalized();
        const std::size_t slide_index = p * config.slides_per_patient + k;
        for (std::size_t i = 0; i < config.patches_per_slide; ++i, ++row) {
          const std::size_t cls = config.class_layout == ClassLayout::per_slide
                                      ? slide_index % config.n_classes
                                      : i % config.n_classes;
          Rng rng(derive_seed(noise_seed, static_cast<std::uint64_t>(row)));
          Eigen::VectorXd z(d);
          for (Eigen::Index j = 0; j < d; ++j) z(j) = normal(rng) * truth.noise_scale(j);
          normal.reset();
          const Eigen::VectorXd x =
              config.class_strength * truth.class_vectors.col(static_cast<Eigen::Index>(cls)) +
              config.site_strength * truth.site_vectors.col(static_cast<Eigen::Index>(s)) +
              config.slide_strength * eta + truth.noise_basis * z;
          features.row(static_cast<Eigen::Index>(row)) = x.transpose().cast<float>();
          PatchMeta m;
          m.patch_id = slide + "_" + std::to_string(i);
          m.slide_id = slide;
          m.patient_id = patient;
          m.site_label = static_cast<int>(s);
          m.class_label = static_cast<int>(cls);
          meta.push_back(std::move(m));
        }
      }
    }
  }

  LabelCodebook book;
  for (std::size_t s = 0; s < config.n_sites; ++s) book.site_names.push_back("site_" + std::to_string(s));
  if (config.n_classes == 2) {
    book.class_names = {"normal", "tumor"};
  } else {
    for (std::size_t c = 0; c < config.n_classes; ++c) {
      book.class_names.push_back("class_" + std::to_string(c));
    }
  }
  return {EmbeddingTable(std::move(features), std::move(meta), "synthgen", std::move(book)),
          std::move(truth)};
}

EmbeddingTable generate(const SynthConfig& config) { return generate_with_truth(config).table; }

}  // namespace tssaudit
