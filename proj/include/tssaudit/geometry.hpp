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
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tssaudit/embstore.hpp"
#include "tssaudit/splitter.hpp"

namespace tssaudit {

/// Principal axes of a point cloud.
///
/// `components` is D x D with orthonormal columns ordered by descending
/// eigenvalue; each column's largest-magnitude entry is positive. Only the
/// first `rank` = min(N - 1, D) eigenvalues can be non-zero; the rest are
/// stored as exactly 0.
struct PcaModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;
  Eigen::VectorXd eigenvalues;  // sample covariance eigenvalues (divisor N - 1)
  Eigen::VectorXd evr;          // eigenvalues / sum(eigenvalues)
  std::size_t rank = 0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// PCA from the SVD of the centered data. Throws DataError for N < 2 or
/// zero total variance.
PcaModel fit_pca(const RowMatrix& x);
PcaModel fit_pca(const EmbeddingTable& table);

/// (x - mean) projected onto the first `ell` components; N x ell.
RowMatrix project(const RowMatrix& x, const PcaModel& model, std::size_t ell);
RowMatrix project(const EmbeddingTable& table, const PcaModel& model, std::size_t ell);
/// Inverse of a (possibly truncated) projection.
RowMatrix reconstruct(const RowMatrix& z, const PcaModel& model);

struct CurvePoint {
  std::size_t ell = 0;
  double accuracy = 0.0;
};

struct ReducedCurve {
  std::vector<CurvePoint> points;
  double baseline = 0.0;              // KNN on the non-reduced features
  std::vector<std::size_t> skipped;   // requested ell values larger than D
};

inline const std::vector<std::size_t> kDefaultEllList = {1, 2, 3, 5, 10, 20, 30, 50};

/// KNN site accuracy on the split's test rows (train rows as neighbours) in
/// the space of the first ell principal components, per ell.
ReducedCurve reduced_knn_curve(const EmbeddingTable& table, const GroupedSplit& split,
                               const PcaModel& model,
                               std::span<const std::size_t> ell_list = kDefaultEllList,
                               int k = 5);

/// AUROC of `scores` with non-zero `positive[i]` marking positives, via midranks
/// (ties count 1/2). Returns 0.5 when either side is empty.
double auroc_midrank(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Macro one-vs-one AUROC over all pairs of present classes, each pair
/// oriented as max(auc, 1 - auc). Always in [0.5, 1]. Throws TaskError
/// with fewer than two classes present.
double ovo_auroc_oriented(std::span<const double> scores, std::span<const int> labels);

struct ComponentSeparability {
  std::size_t component = 0;
  double evr = 0.0;
  double ovo_auroc = 0.5;
};

struct SeparabilityProfile {
  std::vector<ComponentSeparability> components;
  std::size_t analyzed = 0;
};

/// Per-component site separability of one-dimensional projections. Only
/// components with a meaningful eigenvalue (index < rank) are analysed.
SeparabilityProfile separability_profile(const EmbeddingTable& table, const PcaModel& model,
                                         std::size_t n_components);

enum class DistanceGroup { ss, ossh, osoh };
std::string_view to_string(DistanceGroup g);

struct DistanceEntry {
  double distance = 0.0;
  int class_label = 0;
  std::size_t row = 0;
};

struct DistanceProfile {
  DistanceGroup group = DistanceGroup::ss;
  std::string reference_patch_id;
  std::vector<std::string> slides;     // slides the entries were drawn from
  std::vector<DistanceEntry> entries;  // ascending distance
};

struct DistanceConfig {
  std::size_t n_per_group = 1000;  // patches per slide, split evenly by class
  std::size_t n_other_slides = 5;
  bool include_reference = false;  // allow the reference itself in ss
};

/// Sorted Euclidean distances from a tumor reference patch to patches of
/// its own slide (ss), other cancerous slides of its site (ossh) and
/// cancerous slides of other sites (osoh). A cancerous slide is one with
/// at least one tumor patch.
std::vector<DistanceProfile> distance_profiles(const EmbeddingTable& table,
                                               const std::string& reference_patch_id,
                                               std::uint64_t seed,
                                               const DistanceConfig& config = {});

/// Random tumor patch from a random cancerous slide.
std::string choose_reference(const EmbeddingTable& table, std::uint64_t seed);

}  // namespace tssaudit
