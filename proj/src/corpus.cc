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

#include "rvtag/corpus.h"

#include <fmt/format.h>

#include <array>
#include <random>
#include <string_view>

namespace rvtag {

namespace {

// mt19937_64's output sequence is fixed by the standard; the standard
// distributions are not, so ranges are mapped by hand.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  uint64_t Below(uint64_t n) { return engine_() % n; }
  int64_t Range(int64_t lo, int64_t hi) { return lo + static_cast<int64_t>(Below(uint64_t(hi - lo + 1))); }
  template <typename T, size_t N>
  const T& Pick(const std::array<T, N>& items) { return items[Below(N)]; }

 private:
  std::mt19937_64 engine_;
};

constexpr std::array<std::string_view, 9> kMainRegs = {"s1", "s2", "s3", "s4", "s5", "s6", "t0", "t1", "t2"};
constexpr std::array<std::string_view, 5> kHelperRegs = {"a0", "a1", "t0", "t1", "t2"};
constexpr std::array<std::string_view, 2> kSignatures = {"i64(i64)", "i64(i64, i64)"};

constexpr std::array<std::string_view, 9> kRegOps = {"add", "sub", "xor", "or", "and", "mul", "addw", "subw", "sltu"};
constexpr std::array<std::string_view, 7> kImmOps = {"addi", "xori", "ori", "andi", "slli", "srli", "addiw"};

template <size_t N>
std::string Op(Rng& rng, const std::array<std::string_view, N>& regs) {
  const auto rd = rng.Pick(regs);
  const auto rs1 = rng.Pick(regs);
  if (rng.Below(2) == 0) {
    const auto op = rng.Pick(kRegOps);
    const auto rs2 = rng.Pick(regs);
    return fmt::format("  {} {}, {}, {}\n", op, rd, rs1, rs2);
  }
  const auto op = rng.Pick(kImmOps);
  const int64_t imm = (op == "slli" || op == "srli") ? rng.Range(0, 13) : rng.Range(-2048, 2047);
  return fmt::format("  {} {}, {}, {}\n", op, rd, rs1, imm);
}

}  // namespace

CorpusProgram GenerateProgram(uint64_t seed) {
  Rng rng(seed);
  std::string out = fmt::format("# generated, seed {}\n.data\nbuf:\n  .zero 128\ntable:\n", seed);
  for (int i = 0; i < 4; ++i) out += fmt::format("  .dword {}\n", rng.Range(-1000000, 1000000));

  struct Helper {
    std::string name;
    std::string_view signature;
  };
  std::vector<Helper> helpers;
  const int helper_count = static_cast<int>(rng.Range(1, 3));
  for (int h = 0; h < helper_count; ++h) helpers.push_back({fmt::format("h{}", h), rng.Pick(kSignatures)});

  out += ".text\n.entry main\nmain:\n  la s0, buf\n";
  for (auto reg : {"s1", "s2", "s3", "s4", "s5", "s6"}) {
    out += fmt::format("  li {}, {}\n", reg, rng.Range(-100000, 100000));
  }
  const int blocks = static_cast<int>(rng.Range(3, 8));
  for (int b = 0; b < blocks; ++b) {
    switch (rng.Below(6)) {
      case 0: {
        for (int i = rng.Range(3, 8); i > 0; --i) out += Op(rng, kMainRegs);
        break;
      }
      case 1: {
        out += fmt::format("  li t3, {}\n.Lloop{}:\n", rng.Range(1, 8), b);
        for (int i = rng.Range(2, 5); i > 0; --i) out += Op(rng, kMainRegs);
        out += fmt::format("  addi t3, t3, -1\n  bnez t3, .Lloop{}\n", b);
        break;
      }
      case 2: {
        const auto lhs = rng.Pick(kMainRegs);
        const auto rhs = rng.Pick(kMainRegs);
        out += fmt::format("  blt {}, {}, .Lelse{}\n", lhs, rhs, b);
        for (int i = rng.Range(1, 4); i > 0; --i) out += Op(rng, kMainRegs);
        out += fmt::format("  j .Ljoin{}\n.Lelse{}:\n", b, b);
        for (int i = rng.Range(1, 4); i > 0; --i) out += Op(rng, kMainRegs);
        out += fmt::format(".Ljoin{}:\n", b);
        break;
      }
      case 3: {
        const Helper& h = helpers[rng.Below(helpers.size())];
        const auto dst = rng.Pick(kMainRegs);
        const auto arg0 = rng.Pick(kMainRegs);
        const auto arg1 = rng.Pick(kMainRegs);
        out += fmt::format("  mv a0, {}\n  mv a1, {}\n  call {}\n  add {}, {}, a0\n", arg0, arg1, h.name,
                           dst, dst);
        break;
      }
      case 4: {
        const Helper& h = helpers[rng.Below(helpers.size())];
        const auto dst = rng.Pick(kMainRegs);
        const auto arg0 = rng.Pick(kMainRegs);
        const auto arg1 = rng.Pick(kMainRegs);
        out += fmt::format("  la t4, {}\n  mv a0, {}\n  mv a1, {}\n  .calltype \"{}\"\n  jalr ra, 0(t4)\n",
                           h.name, arg0, arg1, h.signature);
        out += fmt::format("  xor {}, {}, a0\n", dst, dst);
        break;
      }
      default: {
        for (std::string_view op : {"sd", "ld", "lw"}) {
          const auto reg = rng.Pick(kMainRegs);
          const int64_t offset = op == "lw" ? 4 * rng.Range(0, 31) : 8 * rng.Range(0, 15);
          out += fmt::format("  {} {}, {}(s0)\n", op, reg, offset);
        }
        break;
      }
    }
  }
  out += "  xor a0, s1, s2\n  xor a0, a0, s3\n  add a0, a0, s4\n  sub a0, a0, s5\n  xor a0, a0, s6\n";
  out += "  sd a0, 120(s0)\n  andi a0, a0, 255\n  li a7, 93\n  ecall\n";

  for (const Helper& h : helpers) {
    out += fmt::format("\n.globl {}\n{}:\n  .signature \"{}\"\n", h.name, h.name, h.signature);
    for (int i = rng.Range(1, 5); i > 0; --i) out += Op(rng, kHelperRegs);
    if (rng.Below(2) == 0) {
      out += fmt::format("  li t3, {}\n.L{}_loop:\n", rng.Range(1, 4), h.name);
      out += Op(rng, kHelperRegs);
      out += fmt::format("  addi t3, t3, -1\n  bnez t3, .L{}_loop\n", h.name);
    }
    out += "  add a0, a0, a1\n  ret\n";
  }
  return {fmt::format("gen{}", seed), seed, std::move(out)};
}

std::vector<CorpusProgram> GenerateCorpus(uint64_t seed, size_t count) {
  std::vector<CorpusProgram> corpus;
  corpus.reserve(count);
  std::mt19937_64 seeds(seed);
  for (size_t i = 0; i < count; ++i) corpus.push_back(GenerateProgram(seeds()));
  return corpus;
}

}  // namespace rvtag
