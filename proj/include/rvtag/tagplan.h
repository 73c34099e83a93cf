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

// Tag configuration and the tagged-layout arithmetic.
//
// A tag carrier word PRECEDES the N instructions it covers:
//
//   untagged:  i0 i1 i2 i3 i4 ...           (N = 3)
//   tagged:    T0 i0 i1 i2 T1 i3 i4 ...
//
// Every untagged byte offset names a program point, the position right
// before instruction o/4. RemapOffset maps that point into the tagged
// layout; a point on a group boundary maps onto the group's carrier slot, so
// control transfers to it fetch the carrier first.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rvtag/codec.h"
#include "rvtag/program.h"

namespace rvtag {

enum class Policy : uint8_t { kNone = 0, kCfi = 1, kUnarith = 2, kCoverage = 3 };

std::string_view PolicyName(Policy policy);
std::optional<Policy> PolicyFromName(std::string_view name);

struct TagConfig {
  CarrierKind carrier = CarrierKind::kLuiNop;
  int coverage = 3;
  int bits_per_tag = 6;
  bool labels_enabled = true;
  Tag default_tag = 0;
  Policy policy = Policy::kNone;
  std::vector<std::pair<std::string, Tag>> tag_names;

  std::optional<Tag> TagValue(std::string_view name) const;
  bool Declares(Tag value) const;
};

// Parses `key = value` lines (`#` comments). Throws Error{ConfigError}
// naming the offending key, or Error{TableNA} for unsupported
// carrier/coverage cells.
TagConfig ParseConfig(std::string_view text, std::string_view origin = "<config>");
TagConfig LoadConfig(const std::filesystem::path& path);

// The emission schedule derived from a config.
struct TagPlan {
  CarrierKind carrier = CarrierKind::kLuiNop;
  int coverage = 3;
  int bits_per_tag = 6;
  Tag default_tag = 0;

  static TagPlan FromConfig(const TagConfig& config);
};

// Program point at untagged offset `offset` -> tagged-layout offset:
// offset + 4*ceil(offset / 4N). Throws Error{Misaligned}.
uint32_t RemapOffset(uint32_t offset, int coverage);

// Tagged-layout offset of the instruction itself (one word past the point
// when the instruction opens a group).
uint32_t InsnOffset(uint32_t offset, int coverage);

uint32_t GroupCount(size_t insn_count, int coverage);
uint32_t TaggedBytes(size_t insn_count, int coverage);

// Carrier slots for a fragment of `insn_count` instructions, in tagged offsets.
std::vector<uint32_t> TagSlotAddresses(size_t insn_count, int coverage);

enum class ReachKind : uint8_t { kBranch, kJal };

// Whether a branch at untagged `site` can still reach untagged `target`
// once tags are inserted, keeping one spare instruction of margin.
bool ReachCheck(uint32_t site, uint32_t target, int coverage, ReachKind kind);

}  // namespace rvtag
