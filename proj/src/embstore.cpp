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

#include "tssaudit/embstore.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "tssaudit/csv.hpp"
#include "tssaudit/error.hpp"

namespace tssaudit {
namespace {

constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0x01;
constexpr std::size_t kHeaderBytes = 32;
const char* const kMetaHeader[] = {"patch_id", "slide_id", "patient_id",
                                   "site",     "class",    "norm_variant"};

void put_le(unsigned char* dst, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) dst[i] = static_cast<unsigned char>(v >> (8 * i));
}

std::uint64_t get_le(const unsigned char* src, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(src[i]) << (8 * i);
  return v;
}

std::optional<int> parse_label(const std::string& s, const char* column, std::size_t row) {
  if (s.empty()) return std::nullopt;
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || v < 0) {
    throw FormatError("metadata row " + std::to_string(row) + ": invalid " + column +
                      " label '" + s + "'");
  }
  return v;
}

std::string label_str(const std::optional<int>& v) {
  return v ? std::to_string(*v) : std::string();
}

std::string write_meta_csv(const std::vector<PatchMeta>& meta) {
  std::string out = "patch_id,slide_id,patient_id,site,class,norm_variant\n";
  for (const auto& m : meta) {
    out += csv::join({m.patch_id, m.slide_id, m.patient_id, label_str(m.site_label),
                      label_str(m.class_label), std::string(to_string(m.norm_variant))});
    out += '\n';
  }
  return out;
}

std::vector<PatchMeta> read_meta_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open metadata sidecar: " + path.string());
  auto header = csv::read_record(in);
  if (!header || header->size() != 6) throw FormatError("metadata sidecar: bad header");
  for (std::size_t i = 0; i < 6; ++i) {
    if ((*header)[i] != kMetaHeader[i]) {
      throw FormatError("metadata sidecar: expected column '" + std::string(kMetaHeader[i]) +
                        "', got '" + (*header)[i] + "'");
    }
  }
  std::vector<PatchMeta> meta;
  while (auto rec = csv::read_record(in)) {
    if (rec->size() == 1 && (*rec)[0].empty()) continue;  // trailing blank line
    const std::size_t row = meta.size();
    if (rec->size() != 6) {
      throw FormatError("metadata row " + std::to_string(row) + ": expected 6 fields");
    }
    PatchMeta m;
    m.patch_id = (*rec)[0];
    m.slide_id = (*rec)[1];
    m.patient_id = (*rec)[2];
    m.site_label = parse_label((*rec)[3], "site", row);
    m.class_label = parse_label((*rec)[4], "class", row);
    m.norm_variant = parse_norm_variant((*rec)[5]);
    meta.push_back(std::move(m));
  }
  return meta;
}

}  // namespace

std::string_view to_string(NormVariant v) {
  switch (v) {
    case NormVariant::raw: return "raw";
    case NormVariant::reinhard: return "reinhard";
    case NormVariant::macenko: return "macenko";
  }
  return "raw";
}

NormVariant parse_norm_variant(std::string_view s) {
  if (s == "raw" || s.empty()) return NormVariant::raw;
  if (s == "reinhard") return NormVariant::reinhard;
  if (s == "macenko") return NormVariant::macenko;
  throw FormatError("unknown norm_variant '" + std::string(s) + "'");
}

EmbeddingTable::EmbeddingTable(FeatureMatrix features, std::vector<PatchMeta> meta,
                               std::string model_tag,
                               std::optional<LabelCodebook> codebook)
    : features_(std::move(features)),
      meta_(std::move(meta)),
      model_tag_(std::move(model_tag)),
      codebook_(std::move(codebook)) {
  if (features_.cols() < 1) throw ConsistencyError("embedding dimension must be >= 1");
  if (static_cast<std::size_t>(features_.rows()) != meta_.size()) {
    throw ConsistencyError("feature rows (" + std::to_string(features_.rows()) +
                           ") != metadata rows (" + std::to_string(meta_.size()) + ")");
  }
  for (Eigen::Index r = 0; r < features_.rows(); ++r) {
    if (!features_.row(r).allFinite()) {
      throw DataError("non-finite feature value in row " + std::to_string(r));
    }
  }
  std::unordered_set<std::string_view> ids;
  struct SlideInfo {
    std::string_view patient;
    std::optional<int> site;
  };
  std::unordered_map<std::string_view, SlideInfo> slides;
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    const auto& m = meta_[i];
    if (!ids.insert(m.patch_id).second) {
      throw ConsistencyError("duplicate patch_id '" + m.patch_id + "'");
    }
    auto [it, fresh] = slides.try_emplace(m.slide_id, SlideInfo{m.patient_id, m.site_label});
    if (!fresh) {
      if (it->second.patient != m.patient_id) {
        throw ConsistencyError("slide '" + m.slide_id + "' maps to more than one patient");
      }
      if (it->second.site != m.site_label) {
        throw ConsistencyError("slide '" + m.slide_id + "' maps to more than one site");
      }
    }
    if (codebook_) {
      if (m.site_label && static_cast<std::size_t>(*m.site_label) >= codebook_->site_names.size()) {
        throw ConsistencyError("codebook does not cover site label " +
                               std::to_string(*m.site_label));
      }
      if (m.class_label &&
          static_cast<std::size_t>(*m.class_label) >= codebook_->class_names.size()) {
        throw ConsistencyError("codebook does not cover class label " +
                               std::to_string(*m.class_label));
      }
    }
  }
}

std::vector<int> EmbeddingTable::site_labels() const {
  std::vector<int> out(meta_.size());
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    if (!meta_[i].site_label) {
      throw LabelError("site labels are required but row " + std::to_string(i) + " ('" +
                       meta_[i].patch_id + "') has none");
    }
    out[i] = *meta_[i].site_label;
  }
  return out;
}

std::vector<int> EmbeddingTable::class_labels() const {
  std::vector<int> out(meta_.size());
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    if (!meta_[i].class_label) {
      throw LabelError("class labels are required but row " + std::to_string(i) + " ('" +
                       meta_[i].patch_id + "') has none");
    }
    out[i] = *meta_[i].class_label;
  }
  return out;
}

RowMatrix EmbeddingTable::gather(std::span<const std::size_t> rows) const {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), features_.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        features_.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  }
  return out;
}

RowMatrix EmbeddingTable::to_double() const { return features_.cast<double>(); }

EmbeddingTable EmbeddingTable::select(std::span<const std::size_t> rows) const {
  FeatureMatrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<PatchMeta> m;
  m.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    f.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(rows[i]));
    m.push_back(meta_[rows[i]]);
  }
  return EmbeddingTable(std::move(f), std::move(m), model_tag_, codebook_);
}

std::optional<std::size_t> EmbeddingTable::find(std::string_view patch_id) const {
  for (std::size_t i = 0; i < meta_.size(); ++i) {
    if (meta_[i].patch_id == patch_id) return i;
  }
  return std::nullopt;
}

bool EmbeddingTable::operator==(const EmbeddingTable& other) const {
  if (features_.rows() != other.features_.rows() || features_.cols() != other.features_.cols()) {
    return false;
  }
  const auto bytes = static_cast<std::size_t>(features_.size()) * sizeof(float);
  return std::memcmp(features_.data(), other.features_.data(), bytes) == 0 &&
         meta_ == other.meta_ && model_tag_ == other.model_tag_ &&
         codebook_ == other.codebook_;
}

std::filesystem::path meta_path_for(const std::filesystem::path& emb_path) {
  auto p = emb_path;
  p += ".meta.csv";
  return p;
}

std::filesystem::path codebook_path_for(const std::filesystem::path& emb_path) {
  auto p = emb_path;
  p += ".codebook.json";
  return p;
}

EmbeddingTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path.string());
  unsigned char header[kHeaderBytes];
  in.read(reinterpret_cast<char*>(header), kHeaderBytes);
  if (in.gcount() != static_cast<std::streamsize>(kHeaderBytes)) {
    throw FormatError("truncated EMB1 header: " + path.string());
  }
  if (std::memcmp(header, kMagic.data(), 4) != 0) throw FormatError("bad magic, expected EMB1");
  if (get_le(header + 4, 4) != kVersion) {
    throw FormatError("unsupported EMB1 version " + std::to_string(get_le(header + 4, 4)));
  }
  const std::uint64_t n = get_le(header + 8, 8);
  const std::uint64_t d = get_le(header + 16, 8);
  if (header[24] != kDtypeF32) throw FormatError("unsupported dtype code");
  for (std::size_t i = 25; i < kHeaderBytes; ++i) {
    if (header[i] != 0) throw FormatError("reserved header bytes must be zero");
  }
  if (d == 0) throw FormatError("EMB1 header declares D = 0");
  if (d > (1ULL << 24) || n > (1ULL << 40) / d) throw FormatError("EMB1 header size out of range");

  FeatureMatrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<unsigned char> buf(static_cast<std::size_t>(d) * 4);
  for (std::uint64_t r = 0; r < n; ++r) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw FormatError("truncated EMB1 payload at row " + std::to_string(r));
    }
    for (std::uint64_t c = 0; c < d; ++c) {
      const auto bits = static_cast<std::uint32_t>(get_le(buf.data() + 4 * c, 4));
      float v;
      std::memcpy(&v, &bits, 4);
      features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after EMB1 payload");
  }

  auto meta = read_meta_csv(meta_path_for(path));

  std::string tag;
  std::optional<LabelCodebook> codebook;
  const auto cb_path = codebook_path_for(path);
  if (std::filesystem::exists(cb_path)) {
    std::ifstream cb(cb_path);
    nlohmann::json j;
    try {
      cb >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("codebook: " + std::string(e.what()));
    }
    tag = j.value("model_tag", std::string());
    if (j.contains("site_names") || j.contains("class_names")) {
      LabelCodebook book;
      book.site_names = j.value("site_names", std::vector<std::string>{});
      book.class_names = j.value("class_names", std::vector<std::string>{});
      codebook = std::move(book);
    }
  }
  return EmbeddingTable(std::move(features), std::move(meta), std::move(tag),
                        std::move(codebook));
}

void save_table(const EmbeddingTable& table, const std::filesystem::path& path) {
  const auto& f = table.features();
  std::string blob(kHeaderBytes + static_cast<std::size_t>(f.size()) * 4, '\0');
  auto* p = reinterpret_cast<unsigned char*>(blob.data());
  std::memcpy(p, kMagic.data(), 4);
  put_le(p + 4, kVersion, 4);
  put_le(p + 8, table.rows(), 8);
  put_le(p + 16, table.dim(), 8);
  p[24] = kDtypeF32;
  p += kHeaderBytes;
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    for (Eigen::Index c = 0; c < f.cols(); ++c) {
      std::uint32_t bits;
      const float v = f(r, c);
      std::memcpy(&bits, &v, 4);
      put_le(p, bits, 4);
      p += 4;
    }
  }
  csv::write_file_atomic(path, blob);
  csv::write_file_atomic(meta_path_for(path), write_meta_csv(table.meta()));

  const auto cb_path = codebook_path_for(path);
  if (table.model_tag().empty() && !table.codebook()) {
    std::error_code ec;
    std::filesystem::remove(cb_path, ec);
    return;
  }
  nlohmann::json j;
  j["model_tag"] = table.model_tag();
  if (table.codebook()) {
    j["site_names"] = table.codebook()->site_names;
    j["class_names"] = table.codebook()->class_names;
  }
  csv::write_file_atomic(cb_path, j.dump(2) + "\n");
}

EmbeddingTable concat_tables(std::span<const EmbeddingTable> tables) {
  if (tables.empty()) throw ParameterError("concat_tables: no tables given");
  const auto& first = tables.front();
  std::size_t total = 0;
  for (const auto& t : tables) {
    if (t.dim() != first.dim()) {
      throw IncompatibleError("cannot concatenate tables with D=" + std::to_string(first.dim()) +
                              " and D=" + std::to_string(t.dim()));
    }
    if (t.model_tag() != first.model_tag()) {
      throw IncompatibleError("cannot concatenate tables with model tags '" + first.model_tag() +
                              "' and '" + t.model_tag() + "'");
    }
    total += t.rows();
  }
  FeatureMatrix f(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(first.dim()));
  std::vector<PatchMeta> meta;
  meta.reserve(total);
  Eigen::Index at = 0;
  for (const auto& t : tables) {
    f.middleRows(at, static_cast<Eigen::Index>(t.rows())) = t.features();
    at += static_cast<Eigen::Index>(t.rows());
    meta.insert(meta.end(), t.meta().begin(), t.meta().end());
  }
  // The constructor reports duplicate patch ids as ConsistencyError.
  return EmbeddingTable(std::move(f), std::move(meta), first.model_tag(), first.codebook());
}

}  // namespace tssaudit
