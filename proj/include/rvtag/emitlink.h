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

// Tag interleaving, tagged-layout symbol adjustment, relocation resolution
// and the RVTI flat image format.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rvtag/codec.h"
#include "rvtag/program.h"
#include "rvtag/tagplan.h"

namespace rvtag {

inline constexpr uint64_t kDefaultTextBase = 0x10000;
inline constexpr uint64_t kDefaultDataBase = 0x100000;
inline constexpr uint32_t kFunctionAlignment = 16;
inline constexpr uint32_t kDefaultMaxPairGap = 3;

struct TagRegion {
  uint64_t start = 0;
  uint32_t group_count = 0;
  uint8_t coverage = 0;
  CarrierKind carrier = CarrierKind::kLuiNop;

  friend bool operator==(const TagRegion&, const TagRegion&) = default;
};

// RVTI image. Flags: bit0 tags present, bit1 backward compatible, bits 2-3
// the enforced policy.
struct Image {
  uint16_t flags = 0;
  uint64_t entry = 0;
  uint64_t text_base = kDefaultTextBase;
  std::vector<uint8_t> text;
  uint64_t data_base = kDefaultDataBase;
  std::vector<uint8_t> data;
  std::vector<TagRegion> tag_regions;

  bool tags_present() const { return flags & 1; }
  bool backward_compatible() const { return flags & 2; }
  Policy policy() const { return static_cast<Policy>((flags >> 2) & 3); }
  uint64_t text_end() const { return text_base + text.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

inline constexpr uint16_t kImageVersion = 1;

void WriteImage(const Image& image, const std::filesystem::path& path);
Image ReadImage(const std::filesystem::path& path);
std::vector<uint8_t> SerializeImage(const Image& image);
// Throws Error{FormatError} on bad magic, version, or truncation.
Image DeserializeImage(std::span<const uint8_t> bytes);

struct TaggedWord {
  InsnWord word = 0;
  bool is_carrier = false;
};

// Interleaves one carrier before every group of `plan.coverage` words. A
// trailing partial group is padded with the default tag.
std::vector<TaggedWord> EmitTags(std::span<const InsnWord> words, std::span<const Tag> tags,
                                 const TagPlan& plan);
// Same, for a fragment as currently encoded (unresolved relocations encode as 0).
std::vector<TaggedWord> EmitTags(const Fragment& fragment, const TagPlan& plan);

// Tagged-layout placement of every fragment and symbol.
struct Layout {
  struct FragmentPlacement {
    uint64_t base = 0;
    uint32_t bytes = 0;  // without trailing alignment padding
    std::map<std::string, uint64_t> locals;
    std::vector<uint64_t> insn_addrs;
  };
  std::vector<FragmentPlacement> fragments;
  std::map<std::string, uint64_t> symbols;  // functions and data
  uint64_t text_end = 0;
  uint64_t data_base = 0;
};

// `plan` absent means an untagged build.
Layout AdjustSymbols(const Program& program, const std::optional<TagPlan>& plan,
                     uint64_t text_base = kDefaultTextBase, uint64_t data_base = kDefaultDataBase);

struct LinkOptions {
  std::optional<TagPlan> plan;
  Policy policy = Policy::kNone;
  uint32_t max_pair_gap = kDefaultMaxPairGap;
  uint64_t text_base = kDefaultTextBase;
  uint64_t data_base = kDefaultDataBase;
};

// Where every word of the linked text came from; not part of the image file.
struct LinkMap {
  struct Word {
    uint64_t address = 0;
    bool is_carrier = false;
    bool is_label = false;
    std::optional<uint32_t> origin;
    Tag tag = 0;
  };
  struct FragmentMap {
    std::string name;
    uint64_t base = 0;
    uint32_t bytes = 0;
    size_t insn_count = 0;
    std::vector<Word> words;
  };
  struct LabelSite {
    uint64_t address = 0;
    Tag tag = 0;
    uint32_t value = 0;
  };
  std::vector<FragmentMap> fragments;
  std::vector<LabelSite> labels;
  std::map<std::string, uint64_t> symbols;
};

struct LinkResult {
  Image image;
  LinkMap map;
};

// Throws Error{UndefinedSymbol, RelocOutOfRange, PairTooFar, LinkError}.
LinkResult Link(const Program& program, const LinkOptions& options);

}  // namespace rvtag
