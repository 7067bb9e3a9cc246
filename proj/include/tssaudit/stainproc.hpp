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

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tssaudit/image.hpp"

namespace tssaudit {

// ---------------------------------------------------------------------------
// Background exclusion

struct OtsuResult {
  int threshold = 0;
  bool degenerate = false;  // all mass in a single bin
};

/// Smallest t in [1, 255] maximising the between-class variance of the
/// partition {<= t-1}, {>= t}. With all mass in one bin, returns that bin
/// and flags the result degenerate. Throws ParameterError on an empty
/// histogram.
OtsuResult otsu_threshold(std::span<const std::uint64_t, 256> histogram);

std::array<std::uint64_t, 256> histogram(const GrayImage& image);

struct MaskConfig {
  /// When the bright Otsu class has mean intensity below this level the
  /// thumbnail contains no glass and pixels below this level count as
  /// tissue instead. 0 disables the rule.
  int glass_level = 200;
};

/// Tissue is darker than glass: pixel is tissue iff intensity < threshold.
GrayImage tissue_mask(const GrayImage& thumbnail, const MaskConfig& config = {});

/// Fraction of tissue pixels in the thumbnail footprint of the full-
/// resolution window [x, x+size) x [y, y+size) at the given downsample.
double tissue_fraction(const GrayImage& mask, int x, int y, int size, int factor);

enum class StdMode { gray, per_channel };

/// Population standard deviation of the patch intensities. In per_channel
/// mode returns the smallest channel deviation.
double patch_std(const RgbImage& patch, StdMode mode = StdMode::gray);
bool patch_std_filter(const RgbImage& patch, double min_std = 8.0, StdMode mode = StdMode::gray);

// ---------------------------------------------------------------------------
// Reinhard

/// Channel statistics in l-alpha-beta space.
struct ReinhardTarget {
  std::array<double, 3> means{};
  std::array<double, 3> stds{};
};

/// Pixel (0..255 per channel) to l-alpha-beta. Intensities are offset by
/// one so the logarithm stays finite: rgb' = (I + 1) / 256.
Eigen::Vector3d rgb_to_lab(const Eigen::Vector3d& rgb);
Eigen::Vector3d lab_to_rgb(const Eigen::Vector3d& lab);

/// Per-pixel l-alpha-beta values, N x 3.
Eigen::MatrixX3d image_to_lab(const RgbImage& image);
ReinhardTarget lab_statistics(const Eigen::MatrixX3d& lab);

/// Mean over the pool of per-patch channel statistics.
ReinhardTarget reinhard_fit(std::span<const RgbImage> pool);

struct ReinhardResult {
  RgbImage image;
  std::vector<std::string> warnings;
};

/// Continuous (unclamped) transfer in l-alpha-beta. Channels whose own
/// deviation is below 1e-6 are shifted only.
Eigen::MatrixX3d reinhard_transfer(const Eigen::MatrixX3d& lab, const ReinhardTarget& target,
                                   std::vector<std::string>* warnings = nullptr);
ReinhardResult reinhard_apply(const RgbImage& patch, const ReinhardTarget& target);

// ---------------------------------------------------------------------------
// Macenko

struct MacenkoParams {
  double io = 256.0;        // incident intensity; OD = -log10((I + 1) / io)
  double beta = 0.15;       // OD threshold for tissue pixels
  double alpha = 1.0;       // percentile of the extreme stain angles
  std::size_t min_tissue_pixels = 100;
};

struct MacenkoTarget {
  Eigen::Matrix<double, 3, 2> stain_matrix;  // columns: hematoxylin, eosin
  Eigen::Vector2d max_concentrations;        // 99th percentile per stain
};

/// Optical density of an 8-bit intensity.
double optical_density(std::uint8_t intensity, double io = 256.0);

/// Stain vectors from OD rows (N x 3) of tissue pixels. Throws
/// DegenerateStainError when the OD covariance has rank < 2.
Eigen::Matrix<double, 3, 2> estimate_stain_vectors(const Eigen::MatrixX3d& tissue_od,
                                                   double alpha = 1.0);

/// Stain matrix and max concentrations of one patch; nullopt when it has
/// fewer than `min_tissue_pixels` tissue pixels.
std::optional<MacenkoTarget> macenko_estimate(const RgbImage& patch,
                                              const MacenkoParams& params = {});

/// Averages per-patch stain matrices (re-normalised to unit columns) and
/// max concentrations over the patches with enough tissue.
MacenkoTarget macenko_fit(std::span<const RgbImage> pool, const MacenkoParams& params = {});

struct MacenkoResult {
  RgbImage image;
  bool passed_through = false;  // too little tissue; image is the input
};

MacenkoResult macenko_apply(const RgbImage& patch, const MacenkoTarget& target,
                            const MacenkoParams& params = {});

/// Linear-interpolated percentile (q in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double q);

}  // namespace tssaudit
