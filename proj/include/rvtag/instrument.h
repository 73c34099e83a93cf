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

// Tagging API and the policy passes that drive it.
//
// Passes only set tags that differ from the configured default; everything
// they leave untouched reads back as the default. After a pass,
// PropagateLineage copies the first tag set on a pseudo-instruction to every
// instruction it expanded into.

#pragma once

#include <cstdint>
#include <string_view>

#include "rvtag/program.h"
#include "rvtag/tagplan.h"

namespace rvtag {

// Fixed tag encodings the emulator enforces, per policy.
namespace tags {
inline constexpr Tag kCfiNormal = 0;
inline constexpr Tag kCfl = 1;
inline constexpr Tag kUnarithNormal = 0;
inline constexpr Tag kUnArth = 1;
inline constexpr Tag kCl = 0;
inline constexpr Tag kCi = 1;
inline constexpr Tag kBcf = 2;
inline constexpr Tag kCoverageNormal = 3;
}  // namespace tags

enum class CoverageMode : uint8_t { kAllBranches, kComputedOnly };

struct InstrumentOptions {
  bool label_direct_calls = false;
  CoverageMode coverage_mode = CoverageMode::kAllBranches;
};

// Throws Error{InvalidRef} for a bad reference, Error{UnknownTag} for a tag
// the config does not declare.
void SetTag(Program& program, const TagConfig& config, InsnRef ref, Tag tag);
Tag GetTag(const Program& program, const TagConfig& config, InsnRef ref);

void PropagateLineage(Program& program);

// Inserts `lui x0, label_value` before instruction `position` of `fragment`
// (position == size appends). Relocations at or after the position move down
// one word; local labels exactly at the position keep pointing at the new
// label. Throws Error{LabelOverflow} or Error{InvalidRef}.
void InsertLabel(Program& program, size_t fragment, size_t position, uint32_t label_value,
                 Tag tag);

// 20-bit, nonzero label derived from a canonical signature string.
uint32_t SignatureLabel(std::string_view signature);

// A jalr not covered by a LO12_I relocation.
bool IsComputedJalr(const Fragment& fragment, size_t index);
bool IsReturn(const Instruction& insn);

void PassCfi(Program& program, const TagConfig& config, const InstrumentOptions& options = {});
void PassUnarith(Program& program, const TagConfig& config);
void PassCoverage(Program& program, const TagConfig& config, CoverageMode mode);

// Runs the configured policy's pass, then lineage propagation.
void Instrument(Program& program, const TagConfig& config, const InstrumentOptions& options = {});

}  // namespace rvtag
