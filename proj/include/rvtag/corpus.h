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

// Seeded generator of random, terminating assembly programs for
// differential testing: straight-line arithmetic, counted loops, direct
// calls and labelled indirect calls, with loads and stores to a data buffer.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rvtag {

struct CorpusProgram {
  std::string name;
  uint64_t seed = 0;
  std::string source;
};

// Output depends only on `seed`, on every platform.
CorpusProgram GenerateProgram(uint64_t seed);
std::vector<CorpusProgram> GenerateCorpus(uint64_t seed, size_t count);

}  // namespace rvtag
