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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tssaudit/stainproc.hpp"

namespace tssaudit {

struct PipelineConfig {
  int tile_size = 256;
  int thumbnail_factor = 32;
  double min_tissue_fraction = 0.5;
  double min_std = 8.0;
  StdMode std_mode = StdMode::gray;
  MaskConfig mask{};
  bool reinhard = false;
  bool macenko = false;
  std::size_t target_pool_size = 500;
  std::uint64_t seed = 0;
  MacenkoParams macenko_params{};
  // Fitted from a random pool of kept patches when absent.
  std::optional<ReinhardTarget> reinhard_target;
  std::optional<MacenkoTarget> macenko_target;
};

struct ManifestRow {
  std::string patch_id;
  std::string slide_id;
  int x = 0;
  int y = 0;
  std::string variant;  // raw | reinhard | macenko
  bool kept = false;
  std::string reason;   // background | low_std | passthrough | empty
};

struct PipelineResult {
  std::vector<ManifestRow> manifest;
  std::size_t slides = 0;
  std::size_t tiles = 0;
  std::size_t kept = 0;
  std::optional<ReinhardTarget> reinhard_target;
  std::optional<MacenkoTarget> macenko_target;
  std::vector<std::string> errors;  // unreadable slides, skipped
};

/// Tiles every slide image into non-overlapping squares, drops background
/// and low-contrast tiles, and writes kept patches (plus normalised
/// variants) as PNG under `out_dir/<variant>/`, with `out_dir/manifest.csv`.
/// Slide ids are the file stems; slides are processed in id order.
PipelineResult run_patch_pipeline(std::span<const std::filesystem::path> slides,
                                  const std::filesystem::path& out_dir,
                                  const PipelineConfig& config);

std::string format_manifest(std::span<const ManifestRow> rows);

}  // namespace tssaudit
