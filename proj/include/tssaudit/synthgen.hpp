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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include <Eigen/Dense>

#include "tssaudit/embstore.hpp"

namespace tssaudit {

enum class SignaturePlacement { top_variance, low_variance, random };
enum class ClassLayout {
  per_slide,  // every slide carries a single class (slide index mod C)
  per_patch,  // classes alternate within each slide
};

std::string_view to_string(SignaturePlacement p);
SignaturePlacement parse_signature_placement(std::string_view s);
std::string_view to_string(ClassLayout l);
ClassLayout parse_class_layout(std::string_view s);

/// Additive ground-truth model:
///   x = class_strength * mu[class] + site_strength * sigma[site]
///     + slide_strength * eta[slide] + noise * diag(profile) * z,
/// with z standard normal in a seeded orthonormal basis Q. The noise
/// standard deviation along Q[:, j] is noise * (1 + anisotropy * (D-1-j)/(D-1)),
/// so anisotropy = 0 gives isotropic noise.
struct SynthConfig {
  std::size_t dims = 64;
  std::size_t n_sites = 2;
  std::size_t n_classes = 1;
  std::size_t patients_per_site = 10;
  std::size_t slides_per_patient = 1;
  std::size_t patches_per_slide = 100;
  double site_strength = 0.0;   // kappa
  double class_strength = 0.0;  // gamma
  double slide_strength = 0.0;  // rho
  double noise = 1.0;           // tau
  double noise_anisotropy = 0.0;
  SignaturePlacement placement = SignaturePlacement::random;
  ClassLayout class_layout = ClassLayout::per_slide;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t rows() const {
    return n_sites * patients_per_site * slides_per_patient * patches_per_slide;
  }
};

struct SynthTruth {
  Eigen::MatrixXd site_vectors;   // D x S, orthonormal
  Eigen::MatrixXd class_vectors;  // D x C, orthonormal and orthogonal to sites
  Eigen::MatrixXd noise_basis;    // D x D orthonormal
  Eigen::VectorXd noise_scale;    // D, standard deviation along noise_basis columns
};

struct SynthResult {
  EmbeddingTable table;
  SynthTruth truth;
};

SynthResult generate_with_truth(const SynthConfig& config);
EmbeddingTable generate(const SynthConfig& config);

}  // namespace tssaudit
