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

// Bit-exact encoding and decoding of the supported RV64I(+mul) subset, and
// the packing of per-instruction tags into NOP-encoded carrier words.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rvtag {

using InsnWord = uint32_t;

enum class Opcode : uint8_t {
  kLui, kAuipc, kJal, kJalr,
  kBeq, kBne, kBlt, kBge, kBltu, kBgeu,
  kLb, kLh, kLw, kLd, kLbu, kLhu, kLwu,
  kSb, kSh, kSw, kSd,
  kAddi, kAddiw, kSlti, kSltiu, kXori, kOri, kAndi, kSlli, kSrli, kSrai,
  kAdd, kAddw, kSub, kSubw, kSll, kSlt, kSltu, kXor, kSrl, kSra, kOr, kAnd,
  kMul,
  kEcall, kEbreak,
};

inline constexpr int kOpcodeCount = static_cast<int>(Opcode::kEbreak) + 1;

enum class Format : uint8_t { kR, kI, kShift, kLoad, kS, kB, kU, kJ, kSystem };

struct OpcodeInfo {
  std::string_view mnemonic;
  Format format;
  uint8_t opcode7;
  uint8_t funct3;
  uint8_t funct7;  // for shifts: the upper funct6 shifted left by one
};

const OpcodeInfo& Info(Opcode op);
std::optional<Opcode> OpcodeFromMnemonic(std::string_view mnemonic);

// One instruction in operand form. Immediate conventions:
//   U-type: the raw 20-bit field (0..0xFFFFF).
//   B/J-type: signed byte offset from the instruction.
//   I/S-type: signed 12-bit value. Shifts: shamt 0..63.
struct Instruction {
  Opcode op = Opcode::kAddi;
  uint8_t rd = 0;
  uint8_t rs1 = 0;
  uint8_t rs2 = 0;
  int64_t imm = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

// Throws Error{OperandRange} when a field does not fit.
InsnWord Encode(const Instruction& insn);
// Throws Error{BadInstruction} for anything outside the supported subset.
Instruction Decode(InsnWord word);
std::optional<Instruction> TryDecode(InsnWord word);

bool IsBranch(Opcode op);
bool IsLoad(Opcode op);
bool IsStore(Opcode op);
bool IsControlTransfer(Opcode op);  // branches, jal, jalr

std::string RegisterName(uint8_t reg);
std::optional<uint8_t> ParseRegister(std::string_view name);
std::string Disassemble(const Instruction& insn);

inline constexpr InsnWord kCanonicalNop = 0x00000013;  // addi x0, x0, 0

// --- tag carriers -----------------------------------------------------------

enum class CarrierKind : uint8_t { kLuiNop = 0, kAddiNop = 1, kCustomOpcode = 2 };

struct TagCarrier {
  CarrierKind kind;
  int bits_available;
  bool backward_compatible;
};

TagCarrier Carrier(CarrierKind kind);
std::string_view CarrierName(CarrierKind kind);
std::optional<CarrierKind> CarrierFromName(std::string_view name);

inline constexpr std::array<int, 5> kCoverageColumns = {1, 3, 7, 15, 31};

// Bits per covered instruction for a carrier at coverage N, or nullopt for
// cells the tag-width table marks NA (and for coverages outside the table).
std::optional<int> BitsPerTag(CarrierKind kind, int coverage);

// Major opcode used by the non-backward-compatible carrier (custom-0).
inline constexpr uint8_t kCustomCarrierOpcode = 0b0001011;

struct TagPack {
  int coverage = 1;
  int bits_per_tag = 0;
  std::vector<uint32_t> tags;  // tags[i] covers the i-th instruction of the group

  friend bool operator==(const TagPack&, const TagPack&) = default;
};

// Tag i occupies payload bits [i*bits_per_tag, (i+1)*bits_per_tag), low
// bits first. LuiNop payload is the U immediate, AddiNop the I immediate,
// CustomOpcode bits [31:7].
InsnWord PackTags(CarrierKind carrier, const TagPack& pack);
TagPack UnpackTags(CarrierKind carrier, int coverage, InsnWord word);
bool IsCarrierWord(CarrierKind carrier, InsnWord word);

// Metadata labels are `lui x0, value`.
inline constexpr uint32_t kLabelLimit = 1u << 20;
InsnWord LabelWord(uint32_t value);
std::optional<uint32_t> LabelValue(InsnWord word);

}  // namespace rvtag
