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
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace tssaudit {

/// Feature storage precision. Rows are patches.
using FeatureMatrix =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// Widened working precision used by every analysis.
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class NormVariant { raw, reinhard, macenko };

std::string_view to_string(NormVariant v);
NormVariant parse_norm_variant(std::string_view s);

/// Class label convention used throughout: tumor = 1, normal = 0.
inline constexpr int kNormal = 0;
inline constexpr int kTumor = 1;

struct PatchMeta {
  std::string patch_id;
  std::string slide_id;
  std::string patient_id;
  std::optional<int> site_label;
  std::optional<int> class_label;
  NormVariant norm_variant = NormVariant::raw;

  bool operator==(const PatchMeta&) const = default;
};

struct LabelCodebook {
  std::vector<std::string> site_names;
  std::vector<std::string> class_names;

  bool operator==(const LabelCodebook&) const = default;
};

/// Immutable, validated table of patch embeddings plus aligned metadata.
///
/// Construction enforces: one metadata row per feature row, D >= 1, all
/// values finite, unique patch ids, and slide -> patient / slide -> site
/// being functions. Violations throw ConsistencyError or DataError.
class EmbeddingTable {
 public:
  EmbeddingTable(FeatureMatrix features, std::vector<PatchMeta> meta,
                 std::string model_tag = {},
                 std::optional<LabelCodebook> codebook = std::nullopt);

  std::size_t rows() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  const FeatureMatrix& features() const { return features_; }
  const std::vector<PatchMeta>& meta() const { return meta_; }
  const PatchMeta& meta(std::size_t i) const { return meta_[i]; }
  const std::string& model_tag() const { return model_tag_; }
  const std::optional<LabelCodebook>& codebook() const { return codebook_; }

  /// Site label of every row; throws LabelError naming the first row
  /// without one.
  std::vector<int> site_labels() const;
  /// Class label of every row; throws LabelError naming the first row
  /// without one.
  std::vector<int> class_labels() const;

  /// Rows widened to double, in the given order.
  RowMatrix gather(std::span<const std::size_t> rows) const;
  RowMatrix to_double() const;

  /// Sub-table in the given row order (indices must be distinct).
  EmbeddingTable select(std::span<const std::size_t> rows) const;

  /// Row index of a patch id, if present.
  std::optional<std::size_t> find(std::string_view patch_id) const;

  bool operator==(const EmbeddingTable& other) const;

 private:
  FeatureMatrix features_;
  std::vector<PatchMeta> meta_;
  std::string model_tag_;
  std::optional<LabelCodebook> codebook_;
};

/// Sidecar paths derived from the container path.
std::filesystem::path meta_path_for(const std::filesystem::path& emb_path);
std::filesystem::path codebook_path_for(const std::filesystem::path& emb_path);

/// Reads an EMB1 container plus its ".meta.csv" sidecar (and the optional
/// ".codebook.json").
EmbeddingTable load_table(const std::filesystem::path& path);

/// Writes container, sidecar and codebook. Files are written to temporaries
/// and renamed into place.
void save_table(const EmbeddingTable& table, const std::filesystem::path& path);

/// Row-wise concatenation in argument order.
EmbeddingTable concat_tables(std::span<const EmbeddingTable> tables);

}  // namespace tssaudit
