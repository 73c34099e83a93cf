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

#include <gtest/gtest.h>

#include <algorithm>
#include <tuple>

#include <fmt/format.h>

#include "rvtag/corpus.h"
#include "test_util.h"

namespace rvtag {
namespace {

using testing::AssembleFile;

ErrorKind KindOf(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::IoError;
}

TEST(Frontend, BackwardBranchResolvesToOffset) {
  const Program p = Assemble("f:\n.Ltop:\n  addi a0, a0, 1\n  addi a1, a1, 1\n  bne a0, a1, .Ltop\n  ret\n");
  ASSERT_EQ(p.fragments.size(), 1u);
  const Fragment& f = p.fragments[0];
  ASSERT_EQ(f.insns.size(), 4u);
  EXPECT_EQ(f.insns[2].insn.op, Opcode::kBne);
  EXPECT_EQ(f.insns[2].insn.imm, -8);
  EXPECT_EQ(f.locals.at(".Ltop"), 0u);
  ASSERT_EQ(f.relocations.size(), 1u);
  EXPECT_EQ(f.relocations[0].kind, RelocKind::kBranch);
  EXPECT_EQ(f.relocations[0].offset, 8u);
}

TEST(Frontend, CallExpandsToPairedAuipcJalr) {
  const PseudoExpansion e = ExpandPseudo("call f", 7, 11);
  ASSERT_EQ(e.insns.size(), 2u);
  EXPECT_EQ(e.insns[0].insn, (Instruction{Opcode::kAuipc, 1, 0, 0, 0}));
  EXPECT_EQ(e.insns[1].insn, (Instruction{Opcode::kJalr, 1, 1, 0, 0}));
  for (const auto& i : e.insns) EXPECT_EQ(i.lineage, 7u);
  ASSERT_EQ(e.relocations.size(), 2u);
  EXPECT_EQ(e.relocations[0].kind, RelocKind::kHi20);
  EXPECT_EQ(e.relocations[1].kind, RelocKind::kLo12I);
  EXPECT_EQ(e.relocations[0].offset, 0u);
  EXPECT_EQ(e.relocations[1].offset, 4u);
  EXPECT_EQ(e.relocations[0].pair_id, e.relocations[1].pair_id);
  EXPECT_EQ(e.relocations[0].target, "f");
}

TEST(Frontend, SimplePseudos) {
  EXPECT_EQ(ExpandPseudo("nop").insns.at(0).insn, (Instruction{Opcode::kAddi, 0, 0, 0, 0}));
  EXPECT_EQ(ExpandPseudo("ret").insns.at(0).insn, (Instruction{Opcode::kJalr, 0, 1, 0, 0}));
  EXPECT_EQ(ExpandPseudo("mv a0, s1").insns.at(0).insn, (Instruction{Opcode::kAddi, 10, 9, 0, 0}));
  EXPECT_EQ(ExpandPseudo("li a0, -5").insns.size(), 1u);
  EXPECT_EQ(KindOf([] { ExpandPseudo("add a0, a0, a1"); }), ErrorKind::UnsupportedPseudo);
  EXPECT_EQ(KindOf([] { ExpandPseudo("tail f"); }), ErrorKind::UnsupportedPseudo);
}

TEST(Frontend, LoadImmediateMaterializes) {
  const PseudoExpansion e = ExpandPseudo("li a0, 0x12345", 3);
  ASSERT_EQ(e.insns.size(), 2u);
  EXPECT_EQ(e.insns[0].lineage, e.insns[1].lineage);
  // Run it to confirm the value, rather than trusting the split.
  for (int64_t v : {int64_t{0x12345}, int64_t{-0x12345}, int64_t{0x7FFFFFFF}, int64_t{INT32_MIN}, int64_t{0x800},
                    int64_t{0xFFF}, int64_t{-2049}}) {
    const Program p = Assemble(fmt::format("main:\n  li a0, {}\n  li a7, 93\n  ecall\n", v));
    const LinkResult link = Link(p, {});
    const RunResult r = rvtag::Run(link.image, ExecMode::kCompat);
    EXPECT_EQ(r.state.regs[10], static_cast<uint64_t>(v)) << v;
  }
  EXPECT_EQ(KindOf([] { ExpandPseudo("li a0, 0x100000000"); }), ErrorKind::OperandRange);
}

TEST(Frontend, LoopExampleIsFourInstructions) {
  const Program p = AssembleFile("asm_ex.s");
  ASSERT_EQ(p.fragments.size(), 1u);
  EXPECT_EQ(p.fragments[0].insns.size(), 4u);
  EXPECT_EQ(p.fragments[0].insns[3].insn.op, Opcode::kJal);
  // A function-symbol target is resolved by the linker.
  const Relocation* r = p.fragments[0].RelocationAt(12);
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->kind, RelocKind::kJal);
  EXPECT_EQ(r->target, "loop_start");
  const Image image = Link(p, {}).image;
  EXPECT_EQ(image.text[12] | image.text[13] << 8 | image.text[14] << 16 | uint32_t{image.text[15]} << 24,
            0xff5ff06fu);  // jal x0, -12
}

TEST(Frontend, ParseErrorCarriesPosition) {
  try {
    Assemble("main:\n  addi a0, a0, 1\n  addi a0, q9, 1\n", {}, "bad.s");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    EXPECT_NE(std::string(e.what()).find("bad.s:3:"), std::string::npos) << e.what();
  }
  EXPECT_EQ(KindOf([] { Assemble("main:\n  frobnicate a0\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(KindOf([] { Assemble("main:\n  addi a0, a0, 1 !bogus\n"); }), ErrorKind::ParseError);
  EXPECT_EQ(KindOf([] { Assemble("main:\n  j .Lnowhere\n"); }), ErrorKind::UndefinedSymbol);
  EXPECT_EQ(KindOf([] { Link(Assemble("main:\n  call missing\n"), {}); }), ErrorKind::UndefinedSymbol);
}

TEST(Frontend, AnnotationsAndDirectives) {
  const Program p = Assemble(
      ".globl f\n.internal g\nmain:\n  sub a0, a0, a1 !unsigned !optout\n  ret\n"
      "f:\n  .signature \"i64(i64)\"\n  ret\ng:\n  ret\n");
  EXPECT_TRUE(p.fragments[0].insns[0].annotations.is_unsigned);
  EXPECT_TRUE(p.fragments[0].insns[0].annotations.optout);
  EXPECT_TRUE(p.fragments[1].attributes.exported);
  EXPECT_EQ(p.fragments[1].attributes.signature, "i64(i64)");
  EXPECT_TRUE(p.fragments[2].attributes.internal);
  EXPECT_EQ(p.entry, "main");
}

TEST(Frontend, DataSection) {
  const Program p = Assemble(".data\nx:\n  .byte 1, 2\n  .align 3\ny:\n  .dword -1\n.text\nmain:\n  ret\n");
  EXPECT_EQ(p.data.symbols.at("x"), 0u);
  EXPECT_EQ(p.data.symbols.at("y"), 8u);
  ASSERT_EQ(p.data.bytes.size(), 16u);
  EXPECT_EQ(p.data.bytes[1], 2);
  EXPECT_EQ(p.data.bytes[15], 0xFF);
}

// Disassembly feeds back into the assembler and reproduces every word.
TEST(Frontend, ReassemblyIsAFixpoint) {
  std::vector<std::string> sources;
  for (const char* f : {"sum10.s", "fib.s", "sort.s", "dispatch.s", "memcpy.s", "coverage.s"}) {
    sources.push_back(testing::ReadProgram(f));
  }
  for (const auto& c : GenerateCorpus(5, 20)) sources.push_back(c.source);
  for (const std::string& src : sources) {
    const Program p = Assemble(src);
    for (const Fragment& f : p.fragments) {
      const Program again = Assemble(DisassembleFragment(f));
      ASSERT_EQ(again.fragments.size(), 1u);
      const Fragment& g = again.fragments[0];
      ASSERT_EQ(g.insns.size(), f.insns.size()) << f.name;
      for (size_t i = 0; i < f.insns.size(); ++i) {
        // Symbolic HI/LO operands stay zero until link time in both.
        EXPECT_EQ(Encode(g.insns[i].insn), Encode(f.insns[i].insn)) << f.name << " #" << i;
      }
    }
  }
}

// Every HI20 has exactly one LO12_I partner, in the same fragment, after it.
TEST(Frontend, RelocationPairing) {
  for (const auto& c : GenerateCorpus(17, 40)) {
    const Program p = Assemble(c.source);
    for (const Fragment& f : p.fragments) {
      std::map<uint32_t, std::vector<const Relocation*>> pairs;
      for (const Relocation& r : f.relocations) {
        if (r.kind == RelocKind::kHi20 || r.kind == RelocKind::kLo12I) {
          ASSERT_TRUE(r.pair_id.has_value());
          pairs[*r.pair_id].push_back(&r);
        } else {
          EXPECT_FALSE(r.pair_id.has_value());
        }
      }
      for (const auto& [id, rs] : pairs) {
        ASSERT_EQ(rs.size(), 2u) << c.name;
        const Relocation* hi = rs[0]->kind == RelocKind::kHi20 ? rs[0] : rs[1];
        const Relocation* lo = rs[0]->kind == RelocKind::kHi20 ? rs[1] : rs[0];
        EXPECT_EQ(hi->kind, RelocKind::kHi20);
        EXPECT_EQ(lo->kind, RelocKind::kLo12I);
        EXPECT_EQ(lo->offset, hi->offset + 4);
        EXPECT_EQ(lo->target, hi->target);
      }
    }
  }
}

}  // namespace
}  // namespace rvtag
