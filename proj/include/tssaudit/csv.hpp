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

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tssaudit::csv {

/// RFC 4180 field quoting; fields without separators/quotes/newlines are
/// written verbatim.
std::string escape(std::string_view field);
std::string join(const std::vector<std::string>& fields);

/// Reads one record (which may span lines inside quotes). Returns nullopt
/// at end of input. Throws FormatError on an unterminated quote.
std::optional<std::vector<std::string>> read_record(std::istream& in);

/// Writes `content` to `path` through a sibling temporary and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string format_double(double v);

}  // namespace tssaudit::csv
