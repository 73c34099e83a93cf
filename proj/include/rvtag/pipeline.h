// Copyright 2026 The rvtag Authors
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

// assemble -> instrument -> link -> run, and baseline-versus-tagged
// differential runs. Shared by the command-line tool and the tests.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rvtag/emitlink.h"
#include "rvtag/emulator.h"
#include "rvtag/error.h"
#include "rvtag/frontend.h"
#include "rvtag/instrument.h"
#include "rvtag/tagplan.h"

namespace rvtag {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitBuild = 2,
  kExitPolicy = 3,
  kExitEquivalence = 4,
};

int ExitCodeFor(ErrorKind kind);

struct BuildOptions {
  std::optional<TagConfig> config;  // absent: baseline only
  InstrumentOptions instrument;
  uint32_t max_pair_gap = kDefaultMaxPairGap;
};

struct BuildArtifacts {
  Program baseline_program;
  LinkResult baseline;
  std::optional<Program> tagged_program;
  std::optional<LinkResult> tagged;
};

// The baseline is the assembled program linked without tags or labels.
BuildArtifacts BuildProgram(const Program& assembled, const BuildOptions& options);
BuildArtifacts BuildSources(const std::vector<SourceFile>& sources, const AssembleOptions& assemble,
                            const BuildOptions& options);

SizeInfo Sizes(const LinkResult& link);
std::string SizeTable(const BuildArtifacts& build);

// A code address, named by layout-independent program point: the fragment
// and the origin of the first source instruction at or after it. Returns
// nullopt for values outside text.
std::optional<std::string> ProgramPoint(const LinkMap& map, uint64_t value);

struct Divergence {
  std::string location;  // "x5", "data+0x18", "exit_code", ...
  std::string baseline;
  std::string tagged;

  std::string Describe() const;
};

// Registers x1..x31, the data section, exit code, stop reason and output.
// Values equal bit for bit, or code addresses naming the same program
// point, compare equal.
std::optional<Divergence> CompareRuns(const LinkResult& baseline_link, const RunResult& baseline,
                                      const LinkResult& tagged_link, const RunResult& tagged);

struct DiffOutcome {
  RunResult baseline;
  RunResult tagged;
  std::optional<Divergence> divergence;
  Report report;
};

// Runs the baseline untagged and the tagged image in compat mode.
DiffOutcome DiffRun(const BuildArtifacts& build, const RunLimits& limits = {});

inline constexpr std::string_view kReportSchema = "rvtag-report/1";

// Versioned report document and its read-back validation. ReportFromJson
// throws Error{FormatError} on a schema mismatch or missing fields.
nlohmann::json ReportDocument(const std::vector<std::pair<std::string, Report>>& rows);
std::vector<std::pair<std::string, Report>> ReportFromJson(const nlohmann::json& doc);

}  // namespace rvtag
