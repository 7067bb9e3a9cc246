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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tssaudit {

inline constexpr int kReportSchemaVersion = 1;

/// Everything needed to run (and re-run) one command.
struct AuditConfig {
  std::string experiment;  // site-predict | bias | distances | reduced | separability | stain | synth
  std::vector<std::string> inputs;
  std::string out;
  std::optional<std::uint64_t> seed;
  nlohmann::json params = nlohmann::json::object();  // hyperparameter overrides
};

nlohmann::json to_json(const AuditConfig& config);
AuditConfig audit_config_from_json(const nlohmann::json& j);

const std::vector<std::string>& experiment_names();

/// Default parameters of a command; user overrides must use these keys.
nlohmann::json default_params(const std::string& experiment);

/// Runs a command, writes its report and plot data under `config.out`, and
/// returns the report. The report's "config" member is the fully resolved
/// configuration; feeding it back reproduces the payload byte for byte.
/// Throws StageError on failure.
nlohmann::json run_command(const AuditConfig& config);

/// Where a command writes its report.
std::string report_path(const AuditConfig& config);

class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, std::string kind, const std::string& what)
      : std::runtime_error(what), stage_(std::move(stage)), kind_(std::move(kind)) {}
  const std::string& stage() const { return stage_; }
  const std::string& kind() const { return kind_; }

 private:
  std::string stage_;
  std::string kind_;
};

/// Entry point of the `tssaudit` executable.
int cli_main(int argc, char** argv);

}  // namespace tssaudit
