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

#include "test_util.h"

namespace rvtag {
namespace {

using testing::AssembleFile;
using testing::BuildWith;

RunLimits Limit(uint64_t n) { return RunLimits{n}; }

TEST(Emulator, SumRunsInEveryMode) {
  const auto build = BuildWith(AssembleFile("sum10.s"), testing::CfiConfig());
  const RunResult base = rvtag::Run(build.baseline.image, ExecMode::kCompat);
  const RunResult compat = rvtag::Run(build.tagged->image, ExecMode::kCompat);
  const RunResult aware = rvtag::Run(build.tagged->image, ExecMode::kAware);
  for (const RunResult* r : {&base, &compat, &aware}) {
    EXPECT_EQ(r->stop, StopReason::kExit);
    EXPECT_EQ(r->state.exit_code, 55);
  }
  EXPECT_EQ(base.counters.tag_fetches, 0u);
  EXPECT_EQ(compat.counters.retired, base.counters.retired);
  EXPECT_GT(aware.counters.tag_fetches, 0u);
}

TEST(Emulator, LoopExampleOverheadIsHalf) {
  const auto build = BuildWith(AssembleFile("asm_ex.s"), testing::Config("carrier = lui\ncoverage = 3\n"));
  const RunResult base = rvtag::Run(build.baseline.image, ExecMode::kCompat, Limit(400));
  const RunResult tagged = rvtag::Run(build.tagged->image, ExecMode::kCompat, Limit(400));
  EXPECT_EQ(base.stop, StopReason::kLimitExceeded);
  EXPECT_EQ(base.counters.retired, 400u);
  EXPECT_EQ(tagged.counters.retired, 400u);
  // Two carriers per four-instruction iteration.
  EXPECT_EQ(tagged.counters.tag_fetches, 200u);
  const Report r = MakeReport(base.counters, tagged.counters, Sizes(build.baseline), Sizes(*build.tagged));
  EXPECT_DOUBLE_EQ(r.dynamic_overhead_pct, 50.0);
  EXPECT_DOUBLE_EQ(r.static_overhead_pct, 50.0);

  // Aware mode fetches the same carriers out of line when the jump re-enters.
  const RunResult aware = rvtag::Run(build.tagged->image, ExecMode::kAware, Limit(400));
  EXPECT_EQ(aware.counters.tag_fetches, 200u);
}

TEST(Emulator, EmptyProgramRetiresOne) {
  const auto build = BuildWith(AssembleFile("empty.s"), std::nullopt);
  const RunResult r = rvtag::Run(build.baseline.image, ExecMode::kCompat);
  EXPECT_EQ(r.stop, StopReason::kExit);
  EXPECT_EQ(r.counters.retired, 1u);
}

TEST(Emulator, CarriersAreArchitecturallyInert) {
  for (const char* name : {"fib.s", "sort.s", "memcpy.s", "hello.s"}) {
    for (int n : {1, 3, 7, 15}) {
      const auto build = BuildWith(AssembleFile(name), testing::Config("coverage = " + std::to_string(n) + "\n"));
      const RunResult base = rvtag::Run(build.baseline.image, ExecMode::kCompat);
      const RunResult tagged = rvtag::Run(build.tagged->image, ExecMode::kCompat);
      EXPECT_EQ(base.state.exit_code, tagged.state.exit_code) << name;
      EXPECT_EQ(base.output, tagged.output);
      EXPECT_EQ(base.counters.retired, tagged.counters.retired);
      EXPECT_FALSE(CompareRuns(build.baseline, base, *build.tagged, tagged).has_value()) << name << " " << n;
    }
  }
}

TEST(Emulator, KnownResults) {
  struct Case {
    const char* file;
    int64_t exit;
  };
  for (const Case c : {Case{"fib.s", 144}, Case{"memcpy.s", 112}, Case{"dispatch.s", -9}, Case{"sort.s", 244},
                       Case{"call_simple.s", 42}, Case{"cfi_matched.s", 0}}) {
    const auto build = BuildWith(AssembleFile(c.file), std::nullopt);
    const RunResult r = rvtag::Run(build.baseline.image, ExecMode::kCompat);
    EXPECT_EQ(r.stop, StopReason::kExit) << c.file << " " << r.fault;
    EXPECT_EQ(r.state.exit_code, c.exit) << c.file;
  }
  const RunResult hello = rvtag::Run(BuildWith(AssembleFile("hello.s"), std::nullopt).baseline.image, ExecMode::kCompat);
  EXPECT_EQ(hello.output, "hi\n");
}

TEST(Emulator, CfiScenarios) {
  auto aware = [](const char* file) {
    const auto build = BuildWith(AssembleFile(file), testing::CfiConfig());
    return rvtag::Run(build.tagged->image, ExecMode::kAware);
  };
  const RunResult ok = aware("cfi_matched.s");
  EXPECT_EQ(ok.stop, StopReason::kExit);
  EXPECT_EQ(ok.state.exit_code, 0);

  const RunResult mismatch = aware("cfi_mismatch.s");
  ASSERT_EQ(mismatch.stop, StopReason::kPolicyViolation);
  EXPECT_EQ(mismatch.violation->kind, ViolationKind::kCfiMismatch);

  const RunResult past = aware("cfi_past_entry.s");
  ASSERT_EQ(past.stop, StopReason::kPolicyViolation);
  EXPECT_EQ(past.violation->kind, ViolationKind::kCfiMissingEntryLabel);

  // Without site labels a computed call has nothing to check against.
  const auto unlabelled = BuildWith(AssembleFile("cfi_matched.s"), testing::CfiConfig(3, false));
  const RunResult missing = rvtag::Run(unlabelled.tagged->image, ExecMode::kAware);
  ASSERT_EQ(missing.stop, StopReason::kPolicyViolation);
  EXPECT_EQ(missing.violation->kind, ViolationKind::kCfiMissingSiteLabel);

  // Compat mode ignores the policy.
  const auto bad = BuildWith(AssembleFile("cfi_mismatch.s"), testing::CfiConfig());
  EXPECT_EQ(rvtag::Run(bad.tagged->image, ExecMode::kCompat).stop, StopReason::kExit);
}

TEST(Emulator, CfiHook) {
  PolicyState p;
  p.mode = Policy::kCfi;
  const Instruction label = Decode(LabelWord(77));
  const Instruction call{Opcode::kJalr, 1, 5, 0, 0};
  const Instruction add{Opcode::kAdd, 10, 10, 10, 0};
  EXPECT_FALSE(EnforceCfi(p, label, tags::kCfl, 0x100, true));
  EXPECT_FALSE(EnforceCfi(p, call, 0, 0x104, false));
  ASSERT_TRUE(p.expect_landing);
  EXPECT_FALSE(EnforceCfi(p, Decode(LabelWord(77)), tags::kCfl, 0x200, true));
  EXPECT_FALSE(p.expect_landing);

  EXPECT_FALSE(EnforceCfi(p, label, tags::kCfl, 0x100, true));
  EXPECT_FALSE(EnforceCfi(p, call, 0, 0x104, false));
  auto v = EnforceCfi(p, add, 0, 0x300, false);
  ASSERT_TRUE(v);
  EXPECT_EQ(v->kind, ViolationKind::kCfiMissingEntryLabel);

  PolicyState q;
  q.mode = Policy::kCfi;
  auto site = EnforceCfi(q, call, 0, 0x104, false);
  ASSERT_TRUE(site);
  EXPECT_EQ(site->kind, ViolationKind::kCfiMissingSiteLabel);
  EXPECT_FALSE(EnforceCfi(q, Instruction{Opcode::kJalr, 0, 1, 0, 0}, 0, 0x108, false));  // ret
}

TEST(Emulator, UnarithHook) {
  MachineState s;
  s.regs[10] = 2;
  s.regs[11] = 3;
  const Instruction sub{Opcode::kSub, 12, 10, 11, 0};
  const Instruction rsub{Opcode::kSub, 12, 11, 10, 0};
  EXPECT_TRUE(EnforceUnarith(s, sub, tags::kUnArth));
  EXPECT_FALSE(EnforceUnarith(s, rsub, tags::kUnArth));
  EXPECT_FALSE(EnforceUnarith(s, sub, tags::kUnarithNormal));

  s.regs[10] = ~uint64_t{0};
  s.regs[11] = 1;
  EXPECT_TRUE(EnforceUnarith(s, Instruction{Opcode::kAdd, 12, 10, 11, 0}, tags::kUnArth));
  EXPECT_TRUE(EnforceUnarith(s, Instruction{Opcode::kAddi, 12, 10, 0, 1}, tags::kUnArth));
  // 32-bit forms carry out of bit 31.
  s.regs[10] = 0xFFFFFFFF;
  EXPECT_TRUE(EnforceUnarith(s, Instruction{Opcode::kAddw, 12, 10, 11, 0}, tags::kUnArth));
  s.regs[10] = 0x7FFFFFFF;
  EXPECT_FALSE(EnforceUnarith(s, Instruction{Opcode::kAddw, 12, 10, 11, 0}, tags::kUnArth));
  s.regs[10] = 0;
  EXPECT_TRUE(EnforceUnarith(s, Instruction{Opcode::kAddi, 12, 10, 0, -1}, tags::kUnArth));
  EXPECT_FALSE(EnforceUnarith(s, Instruction{Opcode::kMul, 12, 10, 11, 0}, tags::kUnArth));
}

TEST(Emulator, UnarithStopsOverflowBeforeCopy) {
  const auto build = BuildWith(AssembleFile("cve3330.s"), testing::UnarithConfig());
  const RunResult r = rvtag::Run(build.tagged->image, ExecMode::kAware);
  ASSERT_EQ(r.stop, StopReason::kPolicyViolation);
  EXPECT_EQ(r.violation->kind, ViolationKind::kUnsignedOverflow);
  const Instruction at = Decode(static_cast<uint32_t>(r.state.memory.Load(r.violation->pc, 4)));
  EXPECT_EQ(at.op, Opcode::kSub);
  const uint64_t dst = build.tagged->map.symbols.at("dst");
  for (uint64_t i = 0; i < 16; ++i) EXPECT_EQ(r.state.memory.Load8(dst + i), 0) << i;

  // Untagged, the wrapped length copies 16 bytes.
  const RunResult base = rvtag::Run(build.baseline.image, ExecMode::kCompat);
  EXPECT_EQ(base.stop, StopReason::kExit);
  EXPECT_EQ(base.state.memory.Load8(build.baseline.map.symbols.at("dst") + 15), 16);

  for (const char* ok : {"cve3330_optout.s", "cve3330_inrange.s"}) {
    const auto b = BuildWith(AssembleFile(ok), testing::UnarithConfig());
    EXPECT_EQ(rvtag::Run(b.tagged->image, ExecMode::kAware).stop, StopReason::kExit) << ok;
  }
}

TEST(Emulator, CoverageCounts) {
  const auto build = BuildWith(AssembleFile("coverage.s"), testing::CoverageConfig());
  const RunResult r = rvtag::Run(build.tagged->image, ExecMode::kAware);
  ASSERT_EQ(r.stop, StopReason::kExit);
  const LinkMap& map = build.tagged->map;
  const auto& cov = map.fragments[1];
  ASSERT_EQ(cov.name, "cov");
  std::vector<uint64_t> counts;
  for (const auto& w : cov.words) {
    if (w.is_label && w.tag == tags::kCl) {
      counts.push_back(*LabelValue(static_cast<uint32_t>(r.state.memory.Load(w.address, 4))));
    }
  }
  EXPECT_EQ(counts, (std::vector<uint64_t>{3, 2, 3}));

  // The conditional branch: two fallthroughs, one taken.
  std::optional<uint64_t> branch;
  for (const auto& w : cov.words) {
    if (w.is_carrier || w.is_label) continue;
    const Instruction in = Decode(static_cast<uint32_t>(r.state.memory.Load(w.address, 4)));
    if (IsBranch(in.op)) branch = w.address;
  }
  ASSERT_TRUE(branch);
  const auto& edges = r.policy.bcf.at(*branch);
  ASSERT_EQ(edges.size(), 2u);
  uint64_t fall = 0, taken = 0;
  const Instruction beq = Decode(static_cast<uint32_t>(r.state.memory.Load(*branch, 4)));
  for (const auto& [next, n] : edges) (next == *branch + beq.imm ? taken : fall) = n;
  EXPECT_EQ(fall, 2u);
  EXPECT_EQ(taken, 1u);

  const auto json = CoverageJson(build.tagged->image, r);
  EXPECT_TRUE(json.contains("cl"));
  EXPECT_TRUE(json.contains("bcf"));
}

TEST(Emulator, UnreachedCoverageLabelStaysZero) {
  const auto build = BuildWith(
      Assemble("main:\n  li a0, 0\n  beqz a0, .Lout\n  addi a0, a0, 1\n.Lout:\n  li a7, 93\n  ecall\n"),
      testing::CoverageConfig());
  const RunResult r = rvtag::Run(build.tagged->image, ExecMode::kAware);
  ASSERT_EQ(r.stop, StopReason::kExit);
  std::vector<uint64_t> counts;
  for (const auto& w : build.tagged->map.fragments[0].words) {
    if (w.is_label) counts.push_back(*LabelValue(static_cast<uint32_t>(r.state.memory.Load(w.address, 4))));
  }
  EXPECT_EQ(counts, (std::vector<uint64_t>{1, 0, 1}));
}

TEST(Emulator, Reports) {
  const ExecCounters same{100, 0, 0};
  EXPECT_DOUBLE_EQ(MakeReport(same, same, {16, 16}, {16, 16}).dynamic_overhead_pct, 0.0);
  EXPECT_DOUBLE_EQ(MakeReport(same, same, {16, 16}, {16, 16}).static_overhead_pct, 0.0);
  // Nine instructions at N=3: three carriers.
  const Report nine = MakeReport({9, 0, 0}, {9, 3, 0}, {36, 36}, {48, 48});
  EXPECT_NEAR(nine.dynamic_overhead_pct, 100.0 / 3, 1e-9);
  EXPECT_NEAR(nine.static_overhead_pct, 100.0 / 3, 1e-9);
  const auto j = nine.Json();
  EXPECT_EQ(j.at("tagged").at("counters").at("tag_fetches"), 3);
  EXPECT_NE(nine.Text().find("33.3%"), std::string::npos);
}

TEST(Emulator, StoreToTextFaults) {
  const Program p = Assemble("main:\n  auipc t0, 0\n  sw zero, 0(t0)\n  li a7, 93\n  ecall\n");
  const auto build = BuildWith(p, testing::CfiConfig());
  EXPECT_EQ(rvtag::Run(build.baseline.image, ExecMode::kCompat).stop, StopReason::kMemFault);
  EXPECT_EQ(rvtag::Run(build.tagged->image, ExecMode::kAware).stop, StopReason::kMemFault);
}

TEST(Emulator, ZeroRegisterIsHardwired) {
  const Program p = Assemble("main:\n  addi x0, x0, 5\n  lui x0, 7\n  mv a0, x0\n  li a7, 93\n  ecall\n");
  const RunResult r = rvtag::Run(Link(p, {}).image, ExecMode::kCompat);
  EXPECT_EQ(r.state.regs[0], 0u);
  EXPECT_EQ(r.state.exit_code, 0);
}

TEST(Emulator, BadInstructionAndBreakpoint) {
  Image image = Link(Assemble("main:\n  ebreak\n"), {}).image;
  EXPECT_EQ(rvtag::Run(image, ExecMode::kCompat).stop, StopReason::kBreakpoint);
  image.text.assign(4, 0);
  EXPECT_EQ(rvtag::Run(image, ExecMode::kCompat).stop, StopReason::kBadInstruction);
}

TEST(Emulator, Deterministic) {
  const auto build = BuildWith(AssembleFile("sort.s"), testing::CoverageConfig());
  const RunResult a = rvtag::Run(build.tagged->image, ExecMode::kAware);
  const RunResult b = rvtag::Run(build.tagged->image, ExecMode::kAware);
  EXPECT_EQ(a.counters, b.counters);
  EXPECT_EQ(a.state.regs, b.state.regs);
  EXPECT_TRUE(a.state.memory == b.state.memory);
  EXPECT_EQ(CoverageJson(build.tagged->image, a), CoverageJson(build.tagged->image, b));
}

}  // namespace
}  // namespace rvtag
