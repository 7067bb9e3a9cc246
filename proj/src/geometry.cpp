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

#include "tssaudit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include <Eigen/SVD>

#include "tssaudit/error.hpp"
#include "tssaudit/probes.hpp"
#include "tssaudit/rng.hpp"

namespace tssaudit {

PcaModel fit_pca(const RowMatrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n < 2) throw DataError("fit_pca: need at least 2 rows, got " + std::to_string(n));

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  Eigen::MatrixXd centered = x.rowwise() - model.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);

  model.rank = static_cast<std::size_t>(std::min(n - 1, d));
  model.components = svd.matrixV();
  model.eigenvalues = Eigen::VectorXd::Zero(d);
  const auto& s = svd.singularValues();
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(model.rank); ++j) {
    model.eigenvalues(j) = s(j) * s(j) / static_cast<double>(n - 1);
  }
  const double total = model.eigenvalues.sum();
  if (!(total > 0.0)) throw DataError("fit_pca: data has zero variance");
  model.evr = model.eigenvalues / total;

  for (Eigen::Index j = 0; j < d; ++j) {
    auto col = model.components.col(j);
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < d; ++i) {
      if (std::abs(col(i)) > std::abs(col(arg))) arg = i;
    }
    if (col(arg) < 0) col = -col;
  }

  const double ortho =
      (model.components.transpose() * model.components - Eigen::MatrixXd::Identity(d, d))
          .cwiseAbs()
          .maxCoeff();
  if (ortho > 1e-8) throw DataError("fit_pca: components lost orthonormality");
  return model;
}

PcaModel fit_pca(const EmbeddingTable& table) { return fit_pca(table.to_double()); }

RowMatrix project(const RowMatrix& x, const PcaModel& model, std::size_t ell) {
  if (ell < 1 || ell > model.dim()) {
    throw ParameterError("project: ell must be in [1, " + std::to_string(model.dim()) + "], got " +
                         std::to_string(ell));
  }
  if (static_cast<std::size_t>(x.cols()) != model.dim()) {
    throw ShapeError("project: dimension mismatch");
  }
  RowMatrix centered = x.rowwise() - model.mean.transpose();
  return centered * model.components.leftCols(static_cast<Eigen::Index>(ell));
}

RowMatrix project(const EmbeddingTable& table, const PcaModel& model, std::size_t ell) {
  return project(table.to_double(), model, ell);
}

RowMatrix reconstruct(const RowMatrix& z, const PcaModel& model) {
  if (z.cols() < 1 || static_cast<std::size_t>(z.cols()) > model.dim()) {
    throw ShapeError("reconstruct: bad number of components");
  }
  RowMatrix x = z * model.components.leftCols(z.cols()).transpose();
  x.rowwise() += model.mean.transpose();
  return x;
}

ReducedCurve reduced_knn_curve(const EmbeddingTable& table, const GroupedSplit& split,
                               const PcaModel& model, std::span<const std::size_t> ell_list,
                               int k) {
  if (model.dim() != table.dim()) throw ShapeError("reduced_knn_curve: PCA dimension mismatch");
  const auto sites = table.site_labels();
  std::vector<int> ytr, yte;
  for (auto r : split.train) ytr.push_back(sites[r]);
  for (auto r : split.test) yte.push_back(sites[r]);
  const RowMatrix xtr = table.gather(split.train);
  const RowMatrix xte = table.gather(split.test);

  ReducedCurve curve;
  curve.baseline = make_report(Classifier::knn, yte, knn_predict(xtr, ytr, xte, k), 0).accuracy;

  const std::size_t d = model.dim();
  const RowMatrix ztr = project(xtr, model, d);
  const RowMatrix zte = project(xte, model, d);
  for (auto ell : ell_list) {
    if (ell < 1) throw ParameterError("reduced_knn_curve: ell must be >= 1");
    if (ell > d) {
      curve.skipped.push_back(ell);
      continue;
    }
    const auto e = static_cast<Eigen::Index>(ell);
    const RowMatrix a = ztr.leftCols(e);
    const RowMatrix b = zte.leftCols(e);
    curve.points.push_back(
        {ell, make_report(Classifier::knn, yte, knn_predict(a, ytr, b, k), 0).accuracy});
  }
  return curve;
}

double auroc_midrank(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw ShapeError("auroc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share the midrank
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double ovo_auroc_oriented(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ShapeError("ovo_auroc: length mismatch");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) {
    throw TaskError("ovo_auroc: need at least 2 classes with rows, found " +
                    std::to_string(by_class.size()));
  }
  double total = 0.0;
  std::size_t pairs = 0;
  std::vector<double> s;
  std::vector<std::uint8_t> pos;
  for (auto a = by_class.begin(); a != by_class.end(); ++a) {
    for (auto b = std::next(a); b != by_class.end(); ++b) {
      s.clear();
      pos.clear();
      for (auto i : a->second) {
        s.push_back(scores[i]);
        pos.push_back(0);
      }
      for (auto i : b->second) {
        s.push_back(scores[i]);
        pos.push_back(1);
      }
      const double auc = auroc_midrank(s, pos);
      total += std::max(auc, 1.0 - auc);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

SeparabilityProfile separability_profile(const EmbeddingTable& table, const PcaModel& model,
                                         std::size_t n_components) {
  if (n_components > model.dim()) {
    throw ParameterError("separability_profile: n_components exceeds D");
  }
  const auto sites = table.site_labels();
  SeparabilityProfile profile;
  profile.analyzed = std::min(n_components, model.rank);
  if (profile.analyzed == 0) return profile;
  const RowMatrix z = project(table, model, profile.analyzed);
  std::vector<double> scores(static_cast<std::size_t>(z.rows()));
  for (std::size_t j = 0; j < profile.analyzed; ++j) {
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
      scores[static_cast<std::size_t>(r)] = z(r, static_cast<Eigen::Index>(j));
    }
    profile.components.push_back(
        {j, model.evr(static_cast<Eigen::Index>(j)), ovo_auroc_oriented(scores, sites)});
  }
  return profile;
}

std::string_view to_string(DistanceGroup g) {
  switch (g) {
    case DistanceGroup::ss: return "ss";
    case DistanceGroup::ossh: return "ossh";
    case DistanceGroup::osoh: return "osoh";
  }
  return "ss";
}

namespace {

struct SlidePatches {
  int site = 0;
  std::vector<std::size_t> normal, tumor;
};

std::map<std::string, SlidePatches> slides_by_id(const EmbeddingTable& table) {
  const auto sites = table.site_labels();
  const auto classes = table.class_labels();
  std::map<std::string, SlidePatches> slides;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto& s = slides[table.meta(r).slide_id];
    s.site = sites[r];
    (classes[r] == kTumor ? s.tumor : s.normal).push_back(r);
  }
  return slides;
}

std::vector<std::size_t> draw_from(std::vector<std::size_t> rows, std::size_t n, Rng& rng) {
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(n);
  return rows;
}

}  // namespace

std::string choose_reference(const EmbeddingTable& table, std::uint64_t seed) {
  const auto slides = slides_by_id(table);
  std::vector<const SlidePatches*> cancerous;
  for (const auto& [id, s] : slides) {
    if (!s.tumor.empty()) cancerous.push_back(&s);
  }
  if (cancerous.empty()) throw CapacityError("no cancerous slide to draw a reference from");
  Rng rng(derive_seed(seed, "distances/reference"));
  std::uniform_int_distribution<std::size_t> pick_slide(0, cancerous.size() - 1);
  const auto* slide = cancerous[pick_slide(rng)];
  std::uniform_int_distribution<std::size_t> pick_patch(0, slide->tumor.size() - 1);
  return table.meta(slide->tumor[pick_patch(rng)]).patch_id;
}

std::vector<DistanceProfile> distance_profiles(const EmbeddingTable& table,
                                               const std::string& reference_patch_id,
                                               std::uint64_t seed,
                                               const DistanceConfig& config) {
  if (config.n_per_group < 2) throw ParameterError("distance_profiles: n_per_group must be >= 2");
  if (config.n_other_slides < 1) throw ParameterError("distance_profiles: need >= 1 other slide");
  const auto ref = table.find(reference_patch_id);
  if (!ref) throw ParameterError("reference patch '" + reference_patch_id + "' not found");
  const auto& ref_meta = table.meta(*ref);
  if (ref_meta.class_label != kTumor) {
    throw ParameterError("reference patch '" + reference_patch_id + "' is not a tumor patch");
  }
  const auto slides = slides_by_id(table);
  const auto& ref_slide = slides.at(ref_meta.slide_id);
  const std::size_t n_normal = config.n_per_group / 2;
  const std::size_t n_tumor = config.n_per_group - n_normal;

  auto tumor_pool = [&](const std::string& id, const SlidePatches& s) {
    if (config.include_reference || id != ref_meta.slide_id) return s.tumor;
    std::vector<std::size_t> t;
    for (auto r : s.tumor) {
      if (r != *ref) t.push_back(r);
    }
    return t;
  };
  auto eligible = [&](const std::string& id, const SlidePatches& s) {
    return s.normal.size() >= n_normal && tumor_pool(id, s).size() >= n_tumor;
  };

  const Eigen::VectorXd x = table.features().row(static_cast<Eigen::Index>(*ref)).cast<double>().transpose();
  auto fill = [&](DistanceProfile& p, const std::string& id, const SlidePatches& s, Rng& rng) {
    p.slides.push_back(id);
    auto picked = draw_from(s.normal, n_normal, rng);
    auto t = draw_from(tumor_pool(id, s), n_tumor, rng);
    picked.insert(picked.end(), t.begin(), t.end());
    for (auto r : picked) {
      const double d =
          (table.features().row(static_cast<Eigen::Index>(r)).cast<double>().transpose() - x).norm();
      p.entries.push_back({d, *table.meta(r).class_label, r});
    }
  };

  std::vector<DistanceProfile> out(3);
  out[0].group = DistanceGroup::ss;
  out[1].group = DistanceGroup::ossh;
  out[2].group = DistanceGroup::osoh;
  for (auto& p : out) p.reference_patch_id = reference_patch_id;

  Rng rng(derive_seed(seed, "distances/sample"));
  if (!eligible(ref_meta.slide_id, ref_slide)) {
    throw CapacityError("reference slide '" + ref_meta.slide_id + "' lacks " +
                        std::to_string(n_normal) + " normal and " + std::to_string(n_tumor) +
                        " tumor patches");
  }
  fill(out[0], ref_meta.slide_id, ref_slide, rng);

  for (int g = 1; g <= 2; ++g) {
    std::vector<std::string> candidates;
    for (const auto& [id, s] : slides) {
      if (s.tumor.empty() || id == ref_meta.slide_id) continue;
      const bool same_site = s.site == ref_slide.site;
      if ((g == 1) == same_site && eligible(id, s)) candidates.push_back(id);
    }
    if (candidates.size() < config.n_other_slides) {
      throw CapacityError(std::string("distance_profiles: ") + (g == 1 ? "same" : "other") +
                          "-site group has " + std::to_string(candidates.size()) +
                          " eligible cancerous slides, need " +
                          std::to_string(config.n_other_slides));
    }
    std::shuffle(candidates.begin(), candidates.end(), rng);
    candidates.resize(config.n_other_slides);
    std::sort(candidates.begin(), candidates.end());
    for (const auto& id : candidates) fill(out[static_cast<std::size_t>(g)], id, slides.at(id), rng);
  }
  for (auto& p : out) {
    std::stable_sort(p.entries.begin(), p.entries.end(),
                     [](const DistanceEntry& a, const DistanceEntry& b) {
                       if (a.distance != b.distance) return a.distance < b.distance;
                       return a.row < b.row;
                     });
  }
  return out;
}

}  // namespace tssaudit
