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

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "rvtag/pipeline.h"

namespace rvtag::testing {

inline std::string ProgramPath(const std::string& name) {
  return std::string(RVTAG_PROGRAMS_DIR) + "/" + name;
}

inline std::string ReadProgram(const std::string& name) {
  std::ifstream in(ProgramPath(name));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Program AssembleFile(const std::string& name, const AssembleOptions& options = {}) {
  return Assemble(ReadProgram(name), options, name);
}

inline TagConfig Config(std::string_view text) { return ParseConfig(text, "<test>"); }

inline TagConfig CfiConfig(int coverage = 3, bool labels = true) {
  return Config("carrier = lui\ncoverage = " + std::to_string(coverage) + "\npolicy = cfi\nlabels = " +
                (labels ? "true" : "false") + "\n");
}

inline TagConfig UnarithConfig() { return Config("carrier = lui\ncoverage = 3\npolicy = unarith\n"); }

inline TagConfig CoverageConfig() { return Config("carrier = lui\ncoverage = 7\npolicy = coverage\n"); }

inline BuildArtifacts BuildWith(const Program& program, std::optional<TagConfig> config,
                                InstrumentOptions instrument = {}) {
  BuildOptions options;
  options.config = std::move(config);
  options.instrument = instrument;
  return BuildProgram(program, options);
}

// Tagged-build address of a function symbol.
inline uint64_t Symbol(const LinkResult& link, const std::string& name) { return link.map.symbols.at(name); }

}  // namespace rvtag::testing
