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

#include <stdexcept>
#include <string>

namespace tssaudit {

/// Base of every error raised by the toolkit. `kind()` is a short stable
/// tag ("format", "capacity", ...) used in CLI diagnostics.
class Error : public std::runtime_error {
 public:
  Error(const char* kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  const char* kind() const noexcept { return kind_; }

 private:
  const char* kind_;
};

#define TSSAUDIT_DEFINE_ERROR(Name, tag)                                  \
  class Name : public Error {                                             \
   public:                                                                \
    explicit Name(const std::string& what) : Error(tag, what) {}          \
  };

TSSAUDIT_DEFINE_ERROR(FormatError, "format")
TSSAUDIT_DEFINE_ERROR(ConsistencyError, "consistency")
TSSAUDIT_DEFINE_ERROR(DataError, "data")
TSSAUDIT_DEFINE_ERROR(IoError, "io")
TSSAUDIT_DEFINE_ERROR(IncompatibleError, "incompatible")
TSSAUDIT_DEFINE_ERROR(ParameterError, "parameter")
TSSAUDIT_DEFINE_ERROR(LabelError, "label")
TSSAUDIT_DEFINE_ERROR(SplitError, "split")
TSSAUDIT_DEFINE_ERROR(CapacityError, "capacity")
TSSAUDIT_DEFINE_ERROR(TaskError, "task")
TSSAUDIT_DEFINE_ERROR(DivergenceError, "divergence")
TSSAUDIT_DEFINE_ERROR(ShapeError, "shape")
TSSAUDIT_DEFINE_ERROR(DegenerateStainError, "degenerate-stain")

#undef TSSAUDIT_DEFINE_ERROR

}  // namespace tssaudit
