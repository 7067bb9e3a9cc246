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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tssaudit/embstore.hpp"

namespace tssaudit {

enum class GroupLevel { patient, slide };

std::string_view to_string(GroupLevel level);

/// Disjoint train/val/test row sets. No group (patient or slide, per
/// `level`) occurs in more than one subset.
struct GroupedSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
  GroupLevel level = GroupLevel::patient;
  std::uint64_t seed = 0;
};

struct SubsampleResult {
  std::vector<std::size_t> rows;  // ascending
  std::vector<std::string> warnings;
};

/// Draws floor(budget / m_i) patches from every slide of site i (m_i
/// slides); slides with fewer patches contribute all of theirs.
SubsampleResult subsample_per_site(const EmbeddingTable& table, std::size_t budget_per_site,
                                   std::uint64_t seed);

/// Patient-level split over `rows` (all rows when empty) targeting the given
/// patch-count fractions.
GroupedSplit patient_split(const EmbeddingTable& table, std::array<double, 3> fractions,
                           std::uint64_t seed, std::span<const std::size_t> rows = {});

/// Patch counts per (site, class) cell, indexed [site][class] with
/// class 0 = normal, 1 = tumor.
using CellCounts = std::array<std::array<std::size_t, 2>, 2>;

struct BiasSpec {
  int index = 0;            // 1-based split number
  std::string ratio_label;  // e.g. "0.67/0.33"
  CellCounts train{};
  CellCounts val{};
  CellCounts test{};

  std::size_t train_total() const;
  std::size_t val_total() const;
  std::size_t test_total() const;
};

struct BiasSplit {
  BiasSpec spec;
  GroupedSplit split;  // slide level
};

struct BiasConfig {
  std::size_t patches_per_slide = 2500;
  std::size_t slides_per_cell = 7;  // normal and tumor slides drawn per site
};

/// The four slide-level training compositions with a fixed inverted test
/// set. Uses sites 0 and 1; other sites are ignored. Throws CapacityError
/// listing the deficit when too few eligible slides exist.
std::vector<BiasSplit> build_bias_splits(const EmbeddingTable& table, std::uint64_t seed,
                                         const BiasConfig& config = {});

/// Expected cell counts for split `index` (1..4) at the given slide size.
BiasSpec bias_spec(int index, std::size_t patches_per_slide = 2500);

/// Audit file listing patch ids per subset.
std::string format_split(const EmbeddingTable& table, const GroupedSplit& split);
GroupedSplit parse_split(const EmbeddingTable& table, const std::string& text);

/// Number of groups that occur in more than one subset (0 for a valid split).
std::size_t count_group_violations(const EmbeddingTable& table, const GroupedSplit& split);

}  // namespace tssaudit
