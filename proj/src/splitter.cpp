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

#include "tssaudit/splitter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "tssaudit/error.hpp"
#include "tssaudit/rng.hpp"

namespace tssaudit {
namespace {

/// Rows grouped by a key, groups in ascending key order, rows ascending.
std::map<std::string, std::vector<std::size_t>> group_rows(
    const EmbeddingTable& table, std::span<const std::size_t> rows, GroupLevel level) {
  std::map<std::string, std::vector<std::size_t>> groups;
  auto add = [&](std::size_t r) {
    const auto& m = table.meta(r);
    groups[level == GroupLevel::patient ? m.patient_id : m.slide_id].push_back(r);
  };
  if (rows.empty()) {
    for (std::size_t r = 0; r < table.rows(); ++r) add(r);
  } else {
    for (auto r : rows) add(r);
  }
  for (auto& [k, v] : groups) std::sort(v.begin(), v.end());
  return groups;
}

/// First `n` of a seeded uniform permutation of `rows`.
std::vector<std::size_t> draw(std::vector<std::size_t> rows, std::size_t n, std::uint64_t seed) {
  if (n >= rows.size()) return rows;
  Rng rng(seed);
  std::shuffle(rows.begin(), rows.end(), rng);
  rows.resize(n);
  std::sort(rows.begin(), rows.end());
  return rows;
}

const char* const kRatioLabels[] = {"0.5/0.5", "0.67/0.33", "0.83/0.17", "1/0"};

// Training slides per split, [site][class].
CellCounts train_slides(int index) {
  const auto i = static_cast<std::size_t>(index);
  return {{{4 - i, 2 + i}, {2 + i, 4 - i}}};
}

}  // namespace

std::string_view to_string(GroupLevel level) {
  return level == GroupLevel::patient ? "patient" : "slide";
}

SubsampleResult subsample_per_site(const EmbeddingTable& table, std::size_t budget_per_site,
                                   std::uint64_t seed) {
  const auto sites = table.site_labels();
  std::map<int, std::map<std::string, std::vector<std::size_t>>> by_site;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    by_site[sites[r]][table.meta(r).slide_id].push_back(r);
  }
  SubsampleResult out;
  if (table.codebook()) {
    for (std::size_t s = 0; s < table.codebook()->site_names.size(); ++s) {
      if (!by_site.count(static_cast<int>(s))) {
        out.warnings.push_back("site " + std::to_string(s) + " has no slides");
      }
    }
  }
  for (const auto& [site, slides] : by_site) {
    if (budget_per_site < slides.size()) {
      throw ParameterError("budget per site (" + std::to_string(budget_per_site) +
                           ") is smaller than the number of slides of site " +
                           std::to_string(site) + " (" + std::to_string(slides.size()) + ")");
    }
    const std::size_t per_slide = budget_per_site / slides.size();
    for (const auto& [slide, rows] : slides) {
      auto picked = draw(rows, per_slide, derive_seed(seed, "subsample/" + slide));
      out.rows.insert(out.rows.end(), picked.begin(), picked.end());
    }
  }
  std::sort(out.rows.begin(), out.rows.end());
  return out;
}

GroupedSplit patient_split(const EmbeddingTable& table, std::array<double, 3> fractions,
                           std::uint64_t seed, std::span<const std::size_t> rows) {
  for (double f : fractions) {
    if (!(f > 0.0)) throw ParameterError("split fractions must be positive");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ParameterError("split fractions must sum to 1");
  }
  auto groups = group_rows(table, rows, GroupLevel::patient);
  if (groups.size() < 3) {
    throw SplitError("patient split needs at least 3 patients, found " +
                     std::to_string(groups.size()));
  }
  // Patients are stratified by site: each site fills its own 60/10/30
  // targets. Rows without a site label form one extra stratum.
  struct Patient {
    const std::vector<std::size_t>* rows;
    int stratum;
  };
  std::vector<Patient> order;
  std::map<int, std::size_t> stratum_total;
  for (const auto& [id, g] : groups) {
    const auto& site = table.meta(g.front()).site_label;
    const int stratum = site ? *site : -1;
    order.push_back({&g, stratum});
    stratum_total[stratum] += g.size();
  }
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::map<int, std::array<double, 3>> target;
  std::map<int, std::array<std::size_t, 3>> filled;
  for (const auto& [stratum, total] : stratum_total) {
    for (int k = 0; k < 3; ++k) target[stratum][k] = fractions[k] * static_cast<double>(total);
    filled[stratum] = {};
  }
  std::array<std::size_t, 3> members{};
  std::array<std::vector<std::size_t>*, 3> subsets;
  GroupedSplit split;
  split.level = GroupLevel::patient;
  split.seed = seed;
  subsets = {&split.train, &split.val, &split.test};

  for (std::size_t p = 0; p < order.size(); ++p) {
    const std::size_t remaining = order.size() - p;
    const auto empty = static_cast<std::size_t>(std::count(members.begin(), members.end(), 0u));
    // Reserve the last patients for subsets that are still empty.
    const bool only_empty = remaining <= empty;
    const int stratum = order[p].stratum;
    int best = -1;
    double best_deficit = 0.0;
    for (int k = 0; k < 3; ++k) {
      if (only_empty && members[k] != 0) continue;
      const double deficit = target[stratum][k] - static_cast<double>(filled[stratum][k]);
      if (best < 0 || deficit > best_deficit) {
        best = k;
        best_deficit = deficit;
      }
    }
    const auto& g = *order[p].rows;
    subsets[best]->insert(subsets[best]->end(), g.begin(), g.end());
    filled[stratum][best] += g.size();
    ++members[best];
  }
  for (auto* s : subsets) std::sort(s->begin(), s->end());
  return split;
}

std::size_t BiasSpec::train_total() const {
  return train[0][0] + train[0][1] + train[1][0] + train[1][1];
}
std::size_t BiasSpec::val_total() const {
  return val[0][0] + val[0][1] + val[1][0] + val[1][1];
}
std::size_t BiasSpec::test_total() const {
  return test[0][0] + test[0][1] + test[1][0] + test[1][1];
}

BiasSpec bias_spec(int index, std::size_t patches_per_slide) {
  if (index < 1 || index > 4) throw ParameterError("bias split index must be 1..4");
  BiasSpec spec;
  spec.index = index;
  spec.ratio_label = kRatioLabels[index - 1];
  const auto slides = train_slides(index);
  std::size_t slide_total = 0;
  for (auto& site : slides) slide_total += site[0] + site[1];

  // Validation: two slides' worth of patches in the training proportions,
  // apportioned by largest remainder.
  const std::size_t val_total = 2 * patches_per_slide;
  std::array<double, 4> remainder{};
  std::size_t assigned = 0;
  for (int s = 0; s < 2; ++s) {
    for (int c = 0; c < 2; ++c) {
      spec.train[s][c] = slides[s][c] * patches_per_slide;
      const double exact = static_cast<double>(val_total * slides[s][c]) /
                           static_cast<double>(slide_total);
      spec.val[s][c] = static_cast<std::size_t>(std::floor(exact));
      remainder[2 * s + c] = exact - static_cast<double>(spec.val[s][c]);
      assigned += spec.val[s][c];
    }
  }
  std::array<int, 4> cells = {0, 1, 2, 3};
  std::stable_sort(cells.begin(), cells.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < val_total; ++i, ++assigned) {
    ++spec.val[cells[i] / 2][cells[i] % 2];
  }
  spec.test[0][kNormal] = 2 * patches_per_slide;
  spec.test[1][kTumor] = 2 * patches_per_slide;
  return spec;
}

std::vector<BiasSplit> build_bias_splits(const EmbeddingTable& table, std::uint64_t seed,
                                         const BiasConfig& config) {
  if (config.slides_per_cell < 7) {
    throw ParameterError("bias splits need at least 7 slides per (site, class) cell");
  }
  if (config.patches_per_slide == 0) throw ParameterError("patches_per_slide must be > 0");
  const auto sites = table.site_labels();
  const auto classes = table.class_labels();

  struct SlideRows {
    std::vector<std::size_t> normal, tumor;
  };
  std::array<std::map<std::string, SlideRows>, 2> slides;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (sites[r] != 0 && sites[r] != 1) continue;
    auto& s = slides[sites[r]][table.meta(r).slide_id];
    (classes[r] == kTumor ? s.tumor : s.normal).push_back(r);
  }

  // pool[site][class] = per selected slide, its drawn patch rows.
  std::array<std::array<std::vector<std::vector<std::size_t>>, 2>, 2> pool;
  std::string deficit;
  for (int s = 0; s < 2; ++s) {
    for (int c = 0; c < 2; ++c) {
      std::vector<std::string> eligible;
      for (const auto& [id, rows] : slides[s]) {
        const bool is_tumor_slide = !rows.tumor.empty();
        if (c == kTumor && is_tumor_slide && rows.tumor.size() >= config.patches_per_slide) {
          eligible.push_back(id);
        } else if (c == kNormal && !is_tumor_slide &&
                   rows.normal.size() >= config.patches_per_slide) {
          eligible.push_back(id);
        }
      }
      if (eligible.size() < config.slides_per_cell) {
        if (!deficit.empty()) deficit += "; ";
        deficit += "site " + std::to_string(s) + (c == kTumor ? " tumor" : " normal") +
                   ": " + std::to_string(eligible.size()) + " eligible slides, need " +
                   std::to_string(config.slides_per_cell) + " (missing " +
                   std::to_string(config.slides_per_cell - eligible.size()) + ")";
        continue;
      }
      Rng rng(derive_seed(seed, "bias/slides/" + std::to_string(s) + "/" + std::to_string(c)));
      std::shuffle(eligible.begin(), eligible.end(), rng);
      eligible.resize(config.slides_per_cell);
      for (const auto& id : eligible) {
        const auto& rows = slides[s][id];
        pool[s][c].push_back(draw(c == kTumor ? rows.tumor : rows.normal,
                                  config.patches_per_slide,
                                  derive_seed(seed, "bias/patches/" + id)));
      }
    }
  }
  if (!deficit.empty()) {
    throw CapacityError("insufficient slides with >= " +
                        std::to_string(config.patches_per_slide) +
                        " eligible patches: " + deficit);
  }

  std::vector<BiasSplit> out;
  for (int index = 1; index <= 4; ++index) {
    BiasSplit bs;
    bs.spec = bias_spec(index, config.patches_per_slide);
    bs.split.level = GroupLevel::slide;
    bs.split.seed = seed;
    const auto train = train_slides(index);
    for (int s = 0; s < 2; ++s) {
      for (int c = 0; c < 2; ++c) {
        const auto& cell = pool[s][c];
        std::size_t next = 0;
        const std::size_t n_test = bs.spec.test[s][c] / config.patches_per_slide;
        for (; next < n_test; ++next) {
          bs.split.test.insert(bs.split.test.end(), cell[next].begin(), cell[next].end());
        }
        for (std::size_t k = 0; k < train[s][c]; ++k, ++next) {
          bs.split.train.insert(bs.split.train.end(), cell[next].begin(), cell[next].end());
        }
        if (bs.spec.val[s][c] > 0) {
          auto picked = draw(cell[next], bs.spec.val[s][c],
                             derive_seed(seed, "bias/val/" + std::to_string(index) + "/" +
                                                   std::to_string(s) + "/" + std::to_string(c)));
          bs.split.val.insert(bs.split.val.end(), picked.begin(), picked.end());
        }
      }
    }
    std::sort(bs.split.train.begin(), bs.split.train.end());
    std::sort(bs.split.val.begin(), bs.split.val.end());
    std::sort(bs.split.test.begin(), bs.split.test.end());
    out.push_back(std::move(bs));
  }
  return out;
}

std::string format_split(const EmbeddingTable& table, const GroupedSplit& split) {
  std::ostringstream os;
  os << "# tssaudit split v1\n";
  os << "# level=" << to_string(split.level) << " seed=" << split.seed << "\n";
  auto section = [&](const char* name, const std::vector<std::size_t>& rows) {
    os << "[" << name << "]\n";
    for (auto r : rows) os << table.meta(r).patch_id << "\n";
  };
  section("train", split.train);
  section("val", split.val);
  section("test", split.test);
  return os.str();
}

GroupedSplit parse_split(const EmbeddingTable& table, const std::string& text) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t r = 0; r < table.rows(); ++r) index.emplace(table.meta(r).patch_id, r);
  GroupedSplit split;
  std::vector<std::size_t>* current = nullptr;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto lp = line.find("level=");
      if (lp != std::string::npos) {
        split.level = line.compare(lp + 6, 5, "slide") == 0 ? GroupLevel::slide
                                                             : GroupLevel::patient;
      }
      auto sp = line.find("seed=");
      if (sp != std::string::npos) split.seed = std::stoull(line.substr(sp + 5));
      continue;
    }
    if (line == "[train]") {
      current = &split.train;
    } else if (line == "[val]") {
      current = &split.val;
    } else if (line == "[test]") {
      current = &split.test;
    } else {
      if (!current) throw FormatError("split file: patch id before any section header");
      auto it = index.find(line);
      if (it == index.end()) throw FormatError("split file: unknown patch id '" + line + "'");
      current->push_back(it->second);
    }
  }
  return split;
}

std::size_t count_group_violations(const EmbeddingTable& table, const GroupedSplit& split) {
  std::unordered_map<std::string_view, unsigned> seen;  // bitmask of subsets
  const std::vector<std::size_t>* subsets[] = {&split.train, &split.val, &split.test};
  for (unsigned k = 0; k < 3; ++k) {
    for (auto r : *subsets[k]) {
      const auto& m = table.meta(r);
      seen[split.level == GroupLevel::patient ? m.patient_id : m.slide_id] |= 1u << k;
    }
  }
  std::size_t violations = 0;
  for (const auto& [g, mask] : seen) {
    if (mask & (mask - 1)) ++violations;
  }
  return violations;
}

}  // namespace tssaudit
