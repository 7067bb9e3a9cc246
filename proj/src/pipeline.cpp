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

#include "tssaudit/pipeline.hpp"

#include <algorithm>
#include <map>

#include "tssaudit/csv.hpp"
#include "tssaudit/error.hpp"
#include "tssaudit/rng.hpp"

namespace tssaudit {
namespace fs = std::filesystem;

std::string format_manifest(std::span<const ManifestRow> rows) {
  std::string out = "patch_id,slide_id,x,y,variant,kept,reason\n";
  for (const auto& r : rows) {
    out += csv::join({r.patch_id, r.slide_id, std::to_string(r.x), std::to_string(r.y), r.variant,
                      r.kept ? "1" : "0", r.reason});
    out += '\n';
  }
  return out;
}

PipelineResult run_patch_pipeline(std::span<const fs::path> slides, const fs::path& out_dir,
                                  const PipelineConfig& config) {
  if (config.tile_size < 1) throw ParameterError("tile size must be positive");
  if (config.thumbnail_factor < 1) throw ParameterError("thumbnail factor must be positive");

  std::map<std::string, fs::path> by_id;
  for (const auto& p : slides) {
    const auto id = p.stem().string();
    if (!by_id.emplace(id, p).second) throw ParameterError("duplicate slide id '" + id + "'");
  }
  fs::create_directories(out_dir / "raw");
  if (config.reinhard) fs::create_directories(out_dir / "reinhard");
  if (config.macenko) fs::create_directories(out_dir / "macenko");

  PipelineResult result;
  std::vector<ManifestRow> tiles;
  const int size = config.tile_size;
  for (const auto& [slide_id, path] : by_id) {
    RgbImage slide;
    try {
      slide = read_png(path);
    } catch (const Error& e) {
      result.errors.push_back(slide_id + ": " + e.what());
      continue;
    }
    ++result.slides;
    const auto mask = tissue_mask(thumbnail(slide, config.thumbnail_factor), config.mask);
    for (int x = 0; x + size <= slide.width; x += size) {
      for (int y = 0; y + size <= slide.height; y += size) {
        ManifestRow row;
        row.patch_id = slide_id + "_x" + std::to_string(x) + "_y" + std::to_string(y);
        row.slide_id = slide_id;
        row.x = x;
        row.y = y;
        row.variant = "raw";
        ++result.tiles;
        if (tissue_fraction(mask, x, y, size, config.thumbnail_factor) <
            config.min_tissue_fraction) {
          row.reason = "background";
        } else {
          const auto patch = slide.crop(x, y, size, size);
          if (!patch_std_filter(patch, config.min_std, config.std_mode)) {
            row.reason = "low_std";
          } else {
            row.kept = true;
            write_png(out_dir / "raw" / (row.patch_id + ".png"), patch);
            ++result.kept;
          }
        }
        tiles.push_back(std::move(row));
      }
    }
  }

  std::vector<const ManifestRow*> kept;
  for (const auto& t : tiles) {
    if (t.kept) kept.push_back(&t);
  }
  auto raw_path = [&](const ManifestRow& r) { return out_dir / "raw" / (r.patch_id + ".png"); };

  const bool need_reinhard = config.reinhard && !config.reinhard_target;
  const bool need_macenko = config.macenko && !config.macenko_target;
  if ((need_reinhard || need_macenko) && !kept.empty()) {
    auto sample = kept;
    Rng rng(derive_seed(config.seed, "stain/target-pool"));
    std::shuffle(sample.begin(), sample.end(), rng);
    sample.resize(std::min(sample.size(), config.target_pool_size));
    std::vector<RgbImage> pool;
    for (const auto* r : sample) pool.push_back(read_png(raw_path(*r)));
    if (need_reinhard) result.reinhard_target = reinhard_fit(pool);
    if (need_macenko) result.macenko_target = macenko_fit(pool, config.macenko_params);
  }
  if (config.reinhard_target) result.reinhard_target = config.reinhard_target;
  if (config.macenko_target) result.macenko_target = config.macenko_target;

  for (const auto& t : tiles) {
    result.manifest.push_back(t);
    if (!t.kept) continue;
    if (!config.reinhard && !config.macenko) continue;
    const auto patch = read_png(raw_path(t));
    if (config.reinhard) {
      auto norm = reinhard_apply(patch, *result.reinhard_target);
      write_png(out_dir / "reinhard" / (t.patch_id + ".png"), norm.image);
      ManifestRow row = t;
      row.variant = "reinhard";
      result.manifest.push_back(std::move(row));
    }
    if (config.macenko) {
      ManifestRow row = t;
      row.variant = "macenko";
      RgbImage image = patch;
      try {
        auto norm = macenko_apply(patch, *result.macenko_target, config.macenko_params);
        image = std::move(norm.image);
        if (norm.passed_through) row.reason = "passthrough";
      } catch (const DegenerateStainError&) {
        row.reason = "passthrough";
      }
      write_png(out_dir / "macenko" / (t.patch_id + ".png"), image);
      result.manifest.push_back(std::move(row));
    }
  }
  csv::write_file_atomic(out_dir / "manifest.csv", format_manifest(result.manifest));
  return result;
}

}  // namespace tssaudit
