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

// Two-pass assembler for a small RV64 assembly dialect.
//
// Grammar (one statement per line, `#` starts a comment):
//
//   label:                 in .text a label not starting with `.L` opens a
//                          new function fragment; `.L` labels are local
//   mnemonic operands      base instructions, plus the pseudos
//                          call j jr ret li la mv nop beqz bnez
//   ... !unsigned !optout !count     trailing annotations
//   .text / .data
//   .globl f   .internal f   .entry f
//   .signature "i64(i64)"  signature of the enclosing function
//   .calltype "i64(i64)"   signature expected at the next jalr
//   .byte/.word/.dword v, ...   .zero n   .align p      (data only)
//
// Branch and jump targets may be labels or signed numeric byte offsets;
// numeric offsets are converted into synthesized local labels so later
// insertions keep them pointing at the same instruction.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rvtag/program.h"

namespace rvtag {

struct SourceFile {
  std::string path;
  std::string text;
};

struct AssembleOptions {
  std::map<std::string, int64_t> defsyms;  // --defsym name=value
};

Program Assemble(std::string_view source, const AssembleOptions& options = {},
                 std::string_view file = "<input>");
Program Assemble(const std::vector<SourceFile>& sources, const AssembleOptions& options = {});

struct PseudoExpansion {
  std::vector<TaggedInsn> insns;
  std::vector<Relocation> relocations;  // offsets relative to the first instruction
};

// Expands one pseudo-instruction line such as "call f" or "li a0, 0x12345".
// All produced instructions share `lineage`; relocation pairs use `pair_id`.
// Throws Error{UnsupportedPseudo} for anything that is not a pseudo.
PseudoExpansion ExpandPseudo(std::string_view line, uint32_t lineage = 0,
                             uint32_t pair_id = 0, const AssembleOptions& options = {});

bool IsPseudoMnemonic(std::string_view mnemonic);

// Renders a fragment back into source accepted by Assemble. Branch targets
// are printed as numeric offsets, so reassembling yields identical words.
std::string DisassembleFragment(const Fragment& fragment);

}  // namespace rvtag
