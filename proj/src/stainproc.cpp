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

#include "tssaudit/stainproc.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "tssaudit/error.hpp"

namespace tssaudit {
namespace {

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

const Eigen::Matrix3d& rgb_to_lms() {
  static const Eigen::Matrix3d m = (Eigen::Matrix3d() << 0.3811, 0.5783, 0.0402,  //
                                    0.1967, 0.7244, 0.0782,                      //
                                    0.0241, 0.1288, 0.8444)
                                       .finished();
  return m;
}

const Eigen::Matrix3d& loglms_to_lab() {
  static const Eigen::Matrix3d m =
      Eigen::Vector3d(1.0 / std::sqrt(3.0), 1.0 / std::sqrt(6.0), 1.0 / std::sqrt(2.0))
          .asDiagonal() *
      (Eigen::Matrix3d() << 1, 1, 1, 1, 1, -2, 1, -1, 0).finished();
  return m;
}

const Eigen::Matrix3d& lms_to_rgb() {
  static const Eigen::Matrix3d m = rgb_to_lms().inverse();
  return m;
}

const Eigen::Matrix3d& lab_to_loglms() {
  static const Eigen::Matrix3d m = loglms_to_lab().inverse();
  return m;
}

}  // namespace

// --------------------------------------------------------------------------- Otsu

OtsuResult otsu_threshold(std::span<const std::uint64_t, 256> histogram) {
  unsigned __int128 n = 0, s = 0;
  int nonzero = 0, last = 0;
  for (int i = 0; i < 256; ++i) {
    n += histogram[i];
    s += static_cast<unsigned __int128>(histogram[i]) * static_cast<unsigned>(i);
    if (histogram[i]) {
      ++nonzero;
      last = i;
    }
  }
  if (n == 0) throw ParameterError("otsu_threshold: empty histogram");
  if (nonzero == 1) return {last, true};

  // Between-class variance up to the constant 1/N^2:
  // (S0 * N1 - S1 * N0)^2 / (N0 * N1).
  OtsuResult best{1, false};
  long double best_var = -1.0L;
  unsigned __int128 n0 = 0, s0 = 0;
  for (int t = 1; t < 256; ++t) {
    n0 += histogram[t - 1];
    s0 += static_cast<unsigned __int128>(histogram[t - 1]) * static_cast<unsigned>(t - 1);
    const unsigned __int128 n1 = n - n0, s1 = s - s0;
    if (n0 == 0 || n1 == 0) continue;
    const __int128 diff = static_cast<__int128>(s0 * n1) - static_cast<__int128>(s1 * n0);
    const long double d = static_cast<long double>(diff);
    const long double var =
        d * d / (static_cast<long double>(n0) * static_cast<long double>(n1));
    if (var > best_var) {
      best_var = var;
      best.threshold = t;
    }
  }
  return best;
}

std::array<std::uint64_t, 256> histogram(const GrayImage& image) {
  std::array<std::uint64_t, 256> h{};
  for (auto v : image.pixels) ++h[v];
  return h;
}

GrayImage tissue_mask(const GrayImage& thumb, const MaskConfig& config) {
  GrayImage mask(thumb.width, thumb.height, 0);
  if (thumb.pixels.empty()) return mask;
  const auto h = histogram(thumb);
  const auto otsu = otsu_threshold(h);
  int threshold = otsu.threshold;
  if (config.glass_level > 0) {
    double sum = 0.0, count = 0.0;
    for (int i = otsu.threshold; i < 256; ++i) {
      sum += static_cast<double>(h[i]) * i;
      count += static_cast<double>(h[i]);
    }
    if (count > 0.0 && sum / count < config.glass_level) threshold = config.glass_level;
  }
  for (std::size_t i = 0; i < thumb.pixels.size(); ++i) {
    mask.pixels[i] = thumb.pixels[i] < threshold ? 255 : 0;
  }
  return mask;
}

double tissue_fraction(const GrayImage& mask, int x, int y, int size, int factor) {
  const int x0 = x / factor, y0 = y / factor;
  const int x1 = std::min(mask.width, (x + size + factor - 1) / factor);
  const int y1 = std::min(mask.height, (y + size + factor - 1) / factor);
  std::size_t tissue = 0, total = 0;
  for (int ty = y0; ty < y1; ++ty) {
    for (int tx = x0; tx < x1; ++tx) {
      ++total;
      if (mask.at(tx, ty)) ++tissue;
    }
  }
  return total ? static_cast<double>(tissue) / static_cast<double>(total) : 0.0;
}

double patch_std(const RgbImage& patch, StdMode mode) {
  const std::size_t n = patch.pixel_count();
  if (n == 0) return 0.0;
  auto welford = [&](auto&& value) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = value(&patch.pixels[i * 3]);
      const double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    return std::sqrt(m2 / static_cast<double>(n));
  };
  if (mode == StdMode::gray) return welford([](const std::uint8_t* p) { return luma(p); });
  double lowest = std::numeric_limits<double>::infinity();
  for (int c = 0; c < 3; ++c) {
    lowest = std::min(lowest, welford([c](const std::uint8_t* p) { return double(p[c]); }));
  }
  return lowest;
}

bool patch_std_filter(const RgbImage& patch, double min_std, StdMode mode) {
  return patch_std(patch, mode) >= min_std;
}

// --------------------------------------------------------------------------- Reinhard

Eigen::Vector3d rgb_to_lab(const Eigen::Vector3d& rgb) {
  const Eigen::Vector3d lms = rgb_to_lms() * ((rgb.array() + 1.0) / 256.0).matrix();
  return loglms_to_lab() * lms.array().log10().matrix();
}

Eigen::Vector3d lab_to_rgb(const Eigen::Vector3d& lab) {
  const Eigen::Vector3d lms = (lab_to_loglms() * lab).unaryExpr([](double v) {
    return std::pow(10.0, v);
  });
  return (lms_to_rgb() * lms).array() * 256.0 - 1.0;
}

Eigen::MatrixX3d image_to_lab(const RgbImage& image) {
  Eigen::MatrixX3d lab(static_cast<Eigen::Index>(image.pixel_count()), 3);
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    const auto* p = &image.pixels[i * 3];
    lab.row(static_cast<Eigen::Index>(i)) = rgb_to_lab(Eigen::Vector3d(p[0], p[1], p[2]));
  }
  return lab;
}

ReinhardTarget lab_statistics(const Eigen::MatrixX3d& lab) {
  ReinhardTarget t;
  if (lab.rows() == 0) throw DataError("lab_statistics: empty image");
  for (int c = 0; c < 3; ++c) {
    const double mean = lab.col(c).mean();
    t.means[c] = mean;
    t.stds[c] = std::sqrt((lab.col(c).array() - mean).square().mean());
  }
  return t;
}

ReinhardTarget reinhard_fit(std::span<const RgbImage> pool) {
  if (pool.empty()) throw ParameterError("reinhard_fit: empty pool");
  ReinhardTarget sum;
  for (const auto& patch : pool) {
    const auto s = lab_statistics(image_to_lab(patch));
    for (int c = 0; c < 3; ++c) {
      sum.means[c] += s.means[c];
      sum.stds[c] += s.stds[c];
    }
  }
  const double n = static_cast<double>(pool.size());
  for (int c = 0; c < 3; ++c) {
    sum.means[c] /= n;
    sum.stds[c] /= n;
    if (!(sum.stds[c] > 1e-6)) {
      throw DataError("reinhard_fit: pooled deviation of channel " + std::to_string(c) +
                      " is zero");
    }
  }
  return sum;
}

Eigen::MatrixX3d reinhard_transfer(const Eigen::MatrixX3d& lab, const ReinhardTarget& target,
                                   std::vector<std::string>* warnings) {
  const auto own = lab_statistics(lab);
  Eigen::MatrixX3d out(lab.rows(), 3);
  for (int c = 0; c < 3; ++c) {
    double scale = target.stds[c] / own.stds[c];
    if (own.stds[c] < 1e-6) {
      scale = 1.0;
      if (warnings) {
        warnings->push_back("channel " + std::to_string(c) + " has no variance; shifted only");
      }
    }
    out.col(c) = ((lab.col(c).array() - own.means[c]) * scale + target.means[c]).matrix();
  }
  return out;
}

ReinhardResult reinhard_apply(const RgbImage& patch, const ReinhardTarget& target) {
  ReinhardResult res;
  const auto lab = reinhard_transfer(image_to_lab(patch), target, &res.warnings);
  res.image = RgbImage(patch.width, patch.height);
  for (std::size_t i = 0; i < patch.pixel_count(); ++i) {
    const auto rgb = lab_to_rgb(lab.row(static_cast<Eigen::Index>(i)).transpose());
    for (int c = 0; c < 3; ++c) res.image.pixels[i * 3 + c] = to_u8(rgb(c));
  }
  return res;
}

// --------------------------------------------------------------------------- Macenko

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ParameterError("percentile of empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + (values[hi] - values[lo]) * frac;
}

double optical_density(std::uint8_t intensity, double io) {
  return -std::log10((static_cast<double>(intensity) + 1.0) / io);
}

Eigen::Matrix<double, 3, 2> estimate_stain_vectors(const Eigen::MatrixX3d& od, double alpha) {
  if (od.rows() < 3) throw DegenerateStainError("too few tissue pixels for a stain estimate");
  const Eigen::RowVector3d mean = od.colwise().mean();
  const Eigen::MatrixX3d centered = od.rowwise() - mean;
  const Eigen::Matrix3d cov =
      centered.transpose() * centered / static_cast<double>(od.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const auto& values = eig.eigenvalues();  // ascending
  if (!(values(2) > 0.0) || values(1) <= 1e-10 * values(2)) {
    throw DegenerateStainError("optical-density covariance has rank < 2");
  }
  Eigen::Vector3d v1 = eig.eigenvectors().col(2);
  Eigen::Vector3d v2 = eig.eigenvectors().col(1);
  if (v1.sum() < 0) v1 = -v1;
  if (v2.sum() < 0) v2 = -v2;

  std::vector<double> angles(static_cast<std::size_t>(od.rows()));
  for (Eigen::Index r = 0; r < od.rows(); ++r) {
    const Eigen::Vector3d p = od.row(r).transpose();
    angles[static_cast<std::size_t>(r)] = std::atan2(p.dot(v2), p.dot(v1));
  }
  const double lo = percentile(angles, alpha);
  const double hi = percentile(angles, 100.0 - alpha);
  auto direction = [&](double phi) {
    Eigen::Vector3d v = v1 * std::cos(phi) + v2 * std::sin(phi);
    if (v.sum() < 0) v = -v;
    v = v.cwiseMax(0.0);
    const double norm = v.norm();
    if (!(norm > 0.0)) throw DegenerateStainError("extreme stain direction has no positive part");
    return Eigen::Vector3d(v / norm);
  };
  const Eigen::Vector3d a = direction(lo);
  const Eigen::Vector3d b = direction(hi);
  Eigen::Matrix<double, 3, 2> he;
  // Hematoxylin absorbs more in the blue channel than eosin.
  if (a(2) >= b(2)) {
    he << a, b;
  } else {
    he << b, a;
  }
  return he;
}

namespace {

Eigen::MatrixX3d image_od(const RgbImage& image, double io) {
  Eigen::MatrixX3d od(static_cast<Eigen::Index>(image.pixel_count()), 3);
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      od(static_cast<Eigen::Index>(i), c) = optical_density(image.pixels[i * 3 + c], io);
    }
  }
  return od;
}

/// Least-squares stain concentrations, N x 2.
Eigen::MatrixX2d concentrations(const Eigen::MatrixX3d& od, const Eigen::Matrix<double, 3, 2>& he) {
  const Eigen::Matrix2d gram = he.transpose() * he;
  const Eigen::Matrix<double, 2, 3> pinv = gram.ldlt().solve(he.transpose());
  return od * pinv.transpose();
}

struct PatchStains {
  MacenkoTarget target;
  Eigen::MatrixX2d conc;
};

std::optional<PatchStains> estimate(const RgbImage& patch, const MacenkoParams& params) {
  const Eigen::MatrixX3d od = image_od(patch, params.io);
  std::vector<Eigen::Index> tissue;
  for (Eigen::Index r = 0; r < od.rows(); ++r) {
    if ((od.row(r).array() > params.beta).all()) tissue.push_back(r);
  }
  if (tissue.size() < params.min_tissue_pixels) return std::nullopt;
  Eigen::MatrixX3d tod(static_cast<Eigen::Index>(tissue.size()), 3);
  for (std::size_t i = 0; i < tissue.size(); ++i) {
    tod.row(static_cast<Eigen::Index>(i)) = od.row(tissue[i]);
  }
  PatchStains out;
  out.target.stain_matrix = estimate_stain_vectors(tod, params.alpha);
  out.conc = concentrations(od, out.target.stain_matrix);
  for (int k = 0; k < 2; ++k) {
    std::vector<double> c(out.conc.col(k).data(), out.conc.col(k).data() + out.conc.rows());
    out.target.max_concentrations(k) = percentile(std::move(c), 99.0);
  }
  return out;
}

}  // namespace

std::optional<MacenkoTarget> macenko_estimate(const RgbImage& patch, const MacenkoParams& params) {
  auto s = estimate(patch, params);
  if (!s) return std::nullopt;
  return s->target;
}

MacenkoTarget macenko_fit(std::span<const RgbImage> pool, const MacenkoParams& params) {
  if (pool.empty()) throw ParameterError("macenko_fit: empty pool");
  Eigen::Matrix<double, 3, 2> he = Eigen::Matrix<double, 3, 2>::Zero();
  Eigen::Vector2d max_c = Eigen::Vector2d::Zero();
  std::size_t used = 0;
  for (const auto& patch : pool) {
    std::optional<MacenkoTarget> t;
    try {
      t = macenko_estimate(patch, params);
    } catch (const DegenerateStainError&) {
      continue;
    }
    if (!t) continue;
    he += t->stain_matrix;
    max_c += t->max_concentrations;
    ++used;
  }
  if (used == 0) throw DataError("macenko_fit: no patch in the pool has enough stained tissue");
  MacenkoTarget out;
  out.stain_matrix = he;
  out.stain_matrix.col(0).normalize();
  out.stain_matrix.col(1).normalize();
  out.max_concentrations = max_c / static_cast<double>(used);
  return out;
}

MacenkoResult macenko_apply(const RgbImage& patch, const MacenkoTarget& target,
                            const MacenkoParams& params) {
  auto src = estimate(patch, params);
  if (!src) return {patch, true};
  Eigen::Vector2d scale;
  for (int k = 0; k < 2; ++k) {
    if (!(src->target.max_concentrations(k) > 1e-12)) {
      throw DegenerateStainError("source stain " + std::to_string(k) + " has no concentration");
    }
    scale(k) = target.max_concentrations(k) / src->target.max_concentrations(k);
  }
  const Eigen::MatrixX2d conc = src->conc * scale.asDiagonal();
  const Eigen::MatrixX3d od = conc * target.stain_matrix.transpose();
  MacenkoResult out;
  out.image = RgbImage(patch.width, patch.height);
  for (std::size_t i = 0; i < patch.pixel_count(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const double v = params.io * std::pow(10.0, -od(static_cast<Eigen::Index>(i), c)) - 1.0;
      out.image.pixels[i * 3 + c] = to_u8(v);
    }
  }
  return out;
}

}  // namespace tssaudit
