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

// Shared helpers and independent reference implementations for tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tssaudit/embstore.hpp"
#include "tssaudit/image.hpp"
#include "tssaudit/splitter.hpp"
#include "tssaudit/synthgen.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("tssaudit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Random table with a valid patient/slide/site hierarchy. Labels are
/// present unless `with_labels` is false.
inline tssaudit::EmbeddingTable random_table(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                             bool with_labels = true) {
  std::normal_distribution<float> normal;
  std::uniform_int_distribution<int> slide_pick(0, 5);
  tssaudit::FeatureMatrix f(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = normal(rng);
  std::vector<tssaudit::PatchMeta> meta(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int slide = slide_pick(rng);
    auto& m = meta[i];
    m.patch_id = "p" + std::to_string(i) + (i % 3 == 0 ? ",\"q\"" : "");
    m.slide_id = "sl" + std::to_string(slide);
    m.patient_id = "pt" + std::to_string(slide / 2);
    if (with_labels) {
      m.site_label = slide / 3;
      m.class_label = static_cast<int>(i % 2);
    }
    m.norm_variant = static_cast<tssaudit::NormVariant>(i % 3);
  }
  return tssaudit::EmbeddingTable(std::move(f), std::move(meta), with_labels ? "rand" : "");
}

/// Table whose patients have uneven patch counts, for split properties.
inline tssaudit::EmbeddingTable uneven_table(std::mt19937_64& rng, std::size_t sites,
                                             std::size_t max_patients) {
  std::uniform_int_distribution<std::size_t> patients(3, max_patients);
  std::uniform_int_distribution<std::size_t> slides(1, 3);
  std::uniform_int_distribution<std::size_t> patches(1, 40);
  std::vector<tssaudit::PatchMeta> meta;
  for (std::size_t s = 0; s < sites; ++s) {
    const auto np = patients(rng);
    for (std::size_t p = 0; p < np; ++p) {
      const auto ns = slides(rng);
      for (std::size_t k = 0; k < ns; ++k) {
        const auto m = patches(rng);
        for (std::size_t i = 0; i < m; ++i) {
          tssaudit::PatchMeta pm;
          pm.slide_id = "s" + std::to_string(s) + "p" + std::to_string(p) + "k" + std::to_string(k);
          pm.patient_id = "s" + std::to_string(s) + "p" + std::to_string(p);
          pm.patch_id = pm.slide_id + "_" + std::to_string(i);
          pm.site_label = static_cast<int>(s);
          pm.class_label = static_cast<int>(k % 2);
          meta.push_back(std::move(pm));
        }
      }
    }
  }
  tssaudit::FeatureMatrix f = tssaudit::FeatureMatrix::Zero(static_cast<Eigen::Index>(meta.size()), 2);
  return tssaudit::EmbeddingTable(std::move(f), std::move(meta));
}

/// Synthetic table with exactly `per_cell` normal and `per_cell` tumor
/// slides of `pps` patches on each of two sites.
inline tssaudit::SynthConfig bias_table_config(std::size_t per_cell, std::size_t pps,
                                               std::size_t dims, std::uint64_t seed) {
  tssaudit::SynthConfig c;
  c.dims = dims;
  c.n_sites = 2;
  c.n_classes = 2;
  c.patients_per_site = 2 * per_cell;
  c.slides_per_patient = 1;
  c.patches_per_slide = pps;
  c.class_layout = tssaudit::ClassLayout::per_slide;
  c.seed = seed;
  return c;
}

/// Subset membership per group name, computed by a full scan.
inline std::size_t brute_force_violations(const tssaudit::EmbeddingTable& t,
                                          const tssaudit::GroupedSplit& s, bool by_slide) {
  std::map<std::string, std::set<int>> where;
  const std::vector<const std::vector<std::size_t>*> subsets = {&s.train, &s.val, &s.test};
  for (int k = 0; k < 3; ++k) {
    for (auto r : *subsets[static_cast<std::size_t>(k)]) {
      const auto& m = t.meta(r);
      where[by_slide ? m.slide_id : m.patient_id].insert(k);
    }
  }
  std::size_t bad = 0;
  for (const auto& [g, ks] : where) bad += ks.size() > 1 ? 1 : 0;
  return bad;
}

/// Pair-counting AUROC: fraction of (positive, negative) pairs with the
/// positive scored higher, ties counting one half.
inline double pair_count_auroc(const std::vector<double>& scores, const std::vector<int>& labels,
                               int negative, int positive) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != positive) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != negative) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

inline double pair_count_ovo(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::set<int> classes(labels.begin(), labels.end());
  std::vector<int> c(classes.begin(), classes.end());
  double sum = 0.0;
  int n = 0;
  for (std::size_t a = 0; a < c.size(); ++a) {
    for (std::size_t b = a + 1; b < c.size(); ++b) {
      const double auc = pair_count_auroc(scores, labels, c[a], c[b]);
      sum += std::max(auc, 1.0 - auc);
      ++n;
    }
  }
  return sum / n;
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenpairs
/// sorted by descending eigenvalue, eigenvectors as columns.
inline void jacobi_eigen(std::vector<std::vector<double>> a, std::vector<double>& values,
                         std::vector<std::vector<double>>& vectors) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p];
          const double vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  values.assign(n, 0.0);
  vectors.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    values[j] = a[order[j]][order[j]];
    for (std::size_t k = 0; k < n; ++k) vectors[k][j] = v[k][order[j]];
  }
}

/// Sample covariance (divisor N - 1) with plain loops.
inline std::vector<std::vector<double>> naive_covariance(const tssaudit::RowMatrix& x) {
  const auto n = static_cast<std::size_t>(x.rows());
  const auto d = static_cast<std::size_t>(x.cols());
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<std::vector<double>> c(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) - mean[a];
      for (std::size_t b = 0; b < d; ++b) {
        c[a][b] += xa * (x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) - mean[b]);
      }
    }
  }
  for (auto& row : c) {
    for (auto& v : row) v /= static_cast<double>(n - 1);
  }
  return c;
}

/// Otsu by direct evaluation of the between-class variance at every t.
inline int exhaustive_otsu(const std::array<std::uint64_t, 256>& h) {
  double total = 0.0;
  for (auto c : h) total += static_cast<double>(c);
  int best_t = -1;
  long double best = -1.0L;
  for (int t = 1; t < 256; ++t) {
    long double w0 = 0, w1 = 0, s0 = 0, s1 = 0;
    for (int i = 0; i < 256; ++i) {
      if (i < t) {
        w0 += h[static_cast<std::size_t>(i)];
        s0 += static_cast<long double>(i) * h[static_cast<std::size_t>(i)];
      } else {
        w1 += h[static_cast<std::size_t>(i)];
        s1 += static_cast<long double>(i) * h[static_cast<std::size_t>(i)];
      }
    }
    if (w0 == 0 || w1 == 0) continue;
    const long double diff = s0 / w0 - s1 / w1;
    const long double v = w0 * w1 * diff * diff;
    if (v > best * (1.0L + 1e-15L)) {
      best = v;
      best_t = t;
    }
  }
  return best_t;
}

/// Synthetic H&E patch under the two-stain Beer-Lambert model with 8-bit
/// quantisation: background blocks, pure hematoxylin and pure eosin pixels
/// (15% each, dense enough to clear the tissue OD threshold in every
/// channel) and random mixtures. `noise` adds Gaussian OD noise per channel.
inline tssaudit::RgbImage synthetic_he_patch(const Eigen::Matrix<double, 3, 2>& stains, int size,
                                             std::mt19937_64& rng, double noise = 0.0) {
  std::uniform_real_distribution<double> pure_h(0.6, 1.4);
  std::uniform_real_distribution<double> pure_e(0.65, 1.1);
  std::uniform_real_distribution<double> mix_h(0.1, 1.2);
  std::uniform_real_distribution<double> mix_e(0.1, 0.9);
  std::uniform_real_distribution<double> kind(0.0, 1.0);
  std::normal_distribution<double> nz(0.0, noise > 0 ? noise : 1.0);
  tssaudit::RgbImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool background = ((x / 8) + (y / 8)) % 7 == 0;
      double h = 0.0;
      double e = 0.0;
      if (!background) {
        const double k = kind(rng);
        if (k < 0.15) {
          h = pure_h(rng);
        } else if (k < 0.30) {
          e = pure_e(rng);
        } else {
          h = mix_h(rng);
          e = mix_e(rng);
        }
      }
      for (int c = 0; c < 3; ++c) {
        double od = stains(c, 0) * h + stains(c, 1) * e;
        if (noise > 0) od += nz(rng);
        const double v = 256.0 * std::pow(10.0, -od) - 1.0;
        img.at(x, y)[c] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return img;
}

/// Hematoxylin (larger blue OD) and eosin unit OD vectors.
inline Eigen::Matrix<double, 3, 2> reference_stains() {
  Eigen::Matrix<double, 3, 2> m;
  m << 0.65, 0.30, 0.70, 0.90, 0.29, 0.25;
  m.col(0).normalize();
  m.col(1).normalize();
  return m;
}

}  // namespace testsupport
