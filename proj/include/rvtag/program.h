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

// The assembled program model shared by the front end, the tagging passes
// and the linker. All offsets here are in the untagged layout: instruction k
// of a fragment sits at byte offset 4*k.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rvtag/codec.h"

namespace rvtag {

using Tag = uint32_t;

struct SourceLoc {
  std::string file;
  int line = 0;

  friend bool operator==(const SourceLoc&, const SourceLoc&) = default;
};

// Trailing `!name` tokens on a source line.
struct Annotations {
  bool is_unsigned = false;
  bool optout = false;
  bool count = false;

  friend bool operator==(const Annotations&, const Annotations&) = default;
};

struct TaggedInsn {
  Instruction insn;
  std::optional<Tag> tag;  // nullopt reads back as the configured default
  uint64_t set_order = 0;  // sequence number of the set that produced `tag`
  std::optional<uint32_t> lineage;
  bool is_label = false;
  std::optional<uint32_t> label_value;
  // Identity of the source instruction this word came from; inserted labels
  // have none. Used to compare program points across layouts.
  std::optional<uint32_t> origin;
  Annotations annotations;
  std::optional<std::string> calltype;  // `.calltype` signature for an indirect callsite
  SourceLoc loc;

  friend bool operator==(const TaggedInsn&, const TaggedInsn&) = default;
};

enum class RelocKind : uint8_t { kHi20, kLo12I, kBranch, kJal };

std::string_view RelocKindName(RelocKind kind);

struct Relocation {
  RelocKind kind = RelocKind::kBranch;
  uint32_t offset = 0;  // byte offset of the patched instruction
  std::string target;
  std::optional<uint32_t> pair_id;

  friend bool operator==(const Relocation&, const Relocation&) = default;
};

struct FragmentAttributes {
  bool exported = false;
  bool address_taken = false;
  bool internal = false;
  std::string signature;  // empty when not annotated

  friend bool operator==(const FragmentAttributes&, const FragmentAttributes&) = default;
};

struct Fragment {
  std::string name;
  std::vector<TaggedInsn> insns;
  std::vector<Relocation> relocations;
  std::map<std::string, uint32_t> locals;  // `.L` label -> byte offset
  FragmentAttributes attributes;

  uint32_t size_bytes() const { return static_cast<uint32_t>(insns.size() * 4); }
  const Relocation* RelocationAt(uint32_t offset) const;

  friend bool operator==(const Fragment&, const Fragment&) = default;
};

struct DataSection {
  std::vector<uint8_t> bytes;
  std::map<std::string, uint32_t> symbols;

  friend bool operator==(const DataSection&, const DataSection&) = default;
};

enum class SymbolSection : uint8_t { kText, kData };

struct SymbolInfo {
  SymbolSection section = SymbolSection::kText;
  size_t fragment = 0;  // text symbols only
  uint32_t offset = 0;
  FragmentAttributes attributes;
};

struct InsnRef {
  size_t fragment = 0;
  size_t index = 0;
};

struct Program {
  std::vector<Fragment> fragments;
  DataSection data;
  std::string entry;
  uint32_t next_lineage = 0;
  uint32_t next_pair = 0;
  uint64_t next_set_order = 1;

  // name -> location for every function and data symbol.
  std::map<std::string, SymbolInfo> Globals() const;
  std::optional<size_t> FindFragment(const std::string& name) const;
  size_t InsnCount() const;

  friend bool operator==(const Program&, const Program&) = default;
};

}  // namespace rvtag
