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

#include "rvtag/codec.h"

#include <fmt/format.h>

#include "rvtag/error.h"

namespace rvtag {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::OperandRange: return "OperandRange";
    case ErrorKind::PackOverflow: return "PackOverflow";
    case ErrorKind::NotACarrier: return "NotACarrier";
    case ErrorKind::BadInstruction: return "BadInstruction";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::UndefinedSymbol: return "UndefinedSymbol";
    case ErrorKind::UnsupportedPseudo: return "UnsupportedPseudo";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::TableNA: return "TableNA";
    case ErrorKind::Misaligned: return "Misaligned";
    case ErrorKind::UnknownTag: return "UnknownTag";
    case ErrorKind::InvalidRef: return "InvalidRef";
    case ErrorKind::LabelOverflow: return "LabelOverflow";
    case ErrorKind::MissingSignature: return "MissingSignature";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::RelocOutOfRange: return "RelocOutOfRange";
    case ErrorKind::PairTooFar: return "PairTooFar";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::LinkError: return "LinkError";
    case ErrorKind::UsageError: return "UsageError";
    case ErrorKind::EquivalenceFailure: return "EquivalenceFailure";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr uint8_t kOpLui = 0x37;
constexpr uint8_t kOpAuipc = 0x17;
constexpr uint8_t kOpJal = 0x6F;
constexpr uint8_t kOpJalr = 0x67;
constexpr uint8_t kOpBranch = 0x63;
constexpr uint8_t kOpLoad = 0x03;
constexpr uint8_t kOpStore = 0x23;
constexpr uint8_t kOpImm = 0x13;
constexpr uint8_t kOpImm32 = 0x1B;
constexpr uint8_t kOpReg = 0x33;
constexpr uint8_t kOpReg32 = 0x3B;
constexpr uint8_t kOpSystem = 0x73;

// Indexed by Opcode.
constexpr std::array<OpcodeInfo, kOpcodeCount> kTable = {{
    {"lui", Format::kU, kOpLui, 0, 0},
    {"auipc", Format::kU, kOpAuipc, 0, 0},
    {"jal", Format::kJ, kOpJal, 0, 0},
    {"jalr", Format::kI, kOpJalr, 0, 0},
    {"beq", Format::kB, kOpBranch, 0, 0},
    {"bne", Format::kB, kOpBranch, 1, 0},
    {"blt", Format::kB, kOpBranch, 4, 0},
    {"bge", Format::kB, kOpBranch, 5, 0},
    {"bltu", Format::kB, kOpBranch, 6, 0},
    {"bgeu", Format::kB, kOpBranch, 7, 0},
    {"lb", Format::kLoad, kOpLoad, 0, 0},
    {"lh", Format::kLoad, kOpLoad, 1, 0},
    {"lw", Format::kLoad, kOpLoad, 2, 0},
    {"ld", Format::kLoad, kOpLoad, 3, 0},
    {"lbu", Format::kLoad, kOpLoad, 4, 0},
    {"lhu", Format::kLoad, kOpLoad, 5, 0},
    {"lwu", Format::kLoad, kOpLoad, 6, 0},
    {"sb", Format::kS, kOpStore, 0, 0},
    {"sh", Format::kS, kOpStore, 1, 0},
    {"sw", Format::kS, kOpStore, 2, 0},
    {"sd", Format::kS, kOpStore, 3, 0},
    {"addi", Format::kI, kOpImm, 0, 0},
    {"addiw", Format::kI, kOpImm32, 0, 0},
    {"slti", Format::kI, kOpImm, 2, 0},
    {"sltiu", Format::kI, kOpImm, 3, 0},
    {"xori", Format::kI, kOpImm, 4, 0},
    {"ori", Format::kI, kOpImm, 6, 0},
    {"andi", Format::kI, kOpImm, 7, 0},
    {"slli", Format::kShift, kOpImm, 1, 0x00},
    {"srli", Format::kShift, kOpImm, 5, 0x00},
    {"srai", Format::kShift, kOpImm, 5, 0x20},
    {"add", Format::kR, kOpReg, 0, 0x00},
    {"addw", Format::kR, kOpReg32, 0, 0x00},
    {"sub", Format::kR, kOpReg, 0, 0x20},
    {"subw", Format::kR, kOpReg32, 0, 0x20},
    {"sll", Format::kR, kOpReg, 1, 0x00},
    {"slt", Format::kR, kOpReg, 2, 0x00},
    {"sltu", Format::kR, kOpReg, 3, 0x00},
    {"xor", Format::kR, kOpReg, 4, 0x00},
    {"srl", Format::kR, kOpReg, 5, 0x00},
    {"sra", Format::kR, kOpReg, 5, 0x20},
    {"or", Format::kR, kOpReg, 6, 0x00},
    {"and", Format::kR, kOpReg, 7, 0x00},
    {"mul", Format::kR, kOpReg, 0, 0x01},
    {"ecall", Format::kSystem, kOpSystem, 0, 0},
    {"ebreak", Format::kSystem, kOpSystem, 0, 0},
}};

constexpr std::array<std::string_view, 32> kAbiNames = {
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0",
    "a1",   "a2", "a3", "a4", "a5", "a6", "a7", "s2", "s3", "s4", "s5",
    "s6",   "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};

uint32_t Bits(uint32_t value, int hi, int lo) {
  return (value >> lo) & ((1u << (hi - lo + 1)) - 1);
}

int64_t SignExtend(uint64_t value, int bits) {
  const uint64_t m = 1ull << (bits - 1);
  value &= (bits == 64) ? ~0ull : ((1ull << bits) - 1);
  return static_cast<int64_t>((value ^ m) - m);
}

void CheckReg(uint8_t reg, const char* field) {
  if (reg > 31) {
    throw Error(ErrorKind::OperandRange, fmt::format("register {} = {} out of range", field, reg));
  }
}

void CheckRange(const Instruction& insn, int64_t lo, int64_t hi) {
  if (insn.imm < lo || insn.imm > hi) {
    throw Error(ErrorKind::OperandRange,
                fmt::format("{}: immediate {} outside [{}, {}]", Info(insn.op).mnemonic,
                            insn.imm, lo, hi));
  }
}

void CheckEven(const Instruction& insn) {
  if (insn.imm % 2 != 0) {
    throw Error(ErrorKind::OperandRange,
                fmt::format("{}: offset {} is not even", Info(insn.op).mnemonic, insn.imm));
  }
}

}  // namespace

const OpcodeInfo& Info(Opcode op) { return kTable[static_cast<size_t>(op)]; }

std::optional<Opcode> OpcodeFromMnemonic(std::string_view mnemonic) {
  for (int i = 0; i < kOpcodeCount; ++i) {
    if (kTable[i].mnemonic == mnemonic) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

bool IsBranch(Opcode op) { return Info(op).format == Format::kB; }
bool IsLoad(Opcode op) { return Info(op).format == Format::kLoad; }
bool IsStore(Opcode op) { return Info(op).format == Format::kS; }
bool IsControlTransfer(Opcode op) {
  return IsBranch(op) || op == Opcode::kJal || op == Opcode::kJalr;
}

InsnWord Encode(const Instruction& insn) {
  const OpcodeInfo& info = Info(insn.op);
  CheckReg(insn.rd, "rd");
  CheckReg(insn.rs1, "rs1");
  CheckReg(insn.rs2, "rs2");
  const uint32_t rd = insn.rd;
  const uint32_t rs1 = insn.rs1;
  const uint32_t rs2 = insn.rs2;
  const uint32_t f3 = info.funct3;
  const uint32_t op = info.opcode7;
  const auto imm = static_cast<uint32_t>(insn.imm);

  switch (info.format) {
    case Format::kR:
      return uint32_t{info.funct7} << 25 | rs2 << 20 | rs1 << 15 | f3 << 12 | rd << 7 | op;
    case Format::kI:
    case Format::kLoad:
      CheckRange(insn, -2048, 2047);
      return (imm & 0xFFF) << 20 | rs1 << 15 | f3 << 12 | rd << 7 | op;
    case Format::kShift:
      CheckRange(insn, 0, 63);
      return uint32_t{info.funct7} << 25 | imm << 20 | rs1 << 15 | f3 << 12 | rd << 7 | op;
    case Format::kS:
      CheckRange(insn, -2048, 2047);
      return Bits(imm, 11, 5) << 25 | rs2 << 20 | rs1 << 15 | f3 << 12 | Bits(imm, 4, 0) << 7 | op;
    case Format::kB:
      CheckRange(insn, -4096, 4094);
      CheckEven(insn);
      return Bits(imm, 12, 12) << 31 | Bits(imm, 10, 5) << 25 | rs2 << 20 | rs1 << 15 |
             f3 << 12 | Bits(imm, 4, 1) << 8 | Bits(imm, 11, 11) << 7 | op;
    case Format::kU:
      CheckRange(insn, 0, 0xFFFFF);
      return imm << 12 | rd << 7 | op;
    case Format::kJ:
      CheckRange(insn, -(1 << 20), (1 << 20) - 2);
      CheckEven(insn);
      return Bits(imm, 20, 20) << 31 | Bits(imm, 10, 1) << 21 | Bits(imm, 11, 11) << 20 |
             Bits(imm, 19, 12) << 12 | rd << 7 | op;
    case Format::kSystem:
      return insn.op == Opcode::kEbreak ? 0x00100073u : 0x00000073u;
  }
  return 0;
}

std::optional<Instruction> TryDecode(InsnWord word) {
  if ((word & 0b11) != 0b11) return std::nullopt;
  const uint8_t op = word & 0x7F;
  const uint8_t rd = Bits(word, 11, 7);
  const uint8_t f3 = Bits(word, 14, 12);
  const uint8_t rs1 = Bits(word, 19, 15);
  const uint8_t rs2 = Bits(word, 24, 20);
  const uint8_t f7 = Bits(word, 31, 25);

  if (op == kOpSystem) {
    if (word == 0x00000073) return Instruction{Opcode::kEcall};
    if (word == 0x00100073) return Instruction{Opcode::kEbreak};
    return std::nullopt;
  }

  for (int i = 0; i < kOpcodeCount; ++i) {
    const OpcodeInfo& info = kTable[i];
    if (info.opcode7 != op || info.format == Format::kSystem) continue;
    const auto opcode = static_cast<Opcode>(i);
    Instruction insn{opcode};
    switch (info.format) {
      case Format::kR:
        if (info.funct3 != f3 || info.funct7 != f7) continue;
        insn.rd = rd, insn.rs1 = rs1, insn.rs2 = rs2;
        return insn;
      case Format::kI:
      case Format::kLoad:
        if (info.funct3 != f3) continue;
        insn.rd = rd, insn.rs1 = rs1;
        insn.imm = SignExtend(Bits(word, 31, 20), 12);
        return insn;
      case Format::kShift:
        if (info.funct3 != f3 || (info.funct7 >> 1) != Bits(word, 31, 26)) continue;
        insn.rd = rd, insn.rs1 = rs1;
        insn.imm = Bits(word, 25, 20);
        return insn;
      case Format::kS:
        if (info.funct3 != f3) continue;
        insn.rs1 = rs1, insn.rs2 = rs2;
        insn.imm = SignExtend(Bits(word, 31, 25) << 5 | Bits(word, 11, 7), 12);
        return insn;
      case Format::kB:
        if (info.funct3 != f3) continue;
        insn.rs1 = rs1, insn.rs2 = rs2;
        insn.imm = SignExtend(Bits(word, 31, 31) << 12 | Bits(word, 7, 7) << 11 |
                                  Bits(word, 30, 25) << 5 | Bits(word, 11, 8) << 1,
                              13);
        return insn;
      case Format::kU:
        insn.rd = rd;
        insn.imm = Bits(word, 31, 12);
        return insn;
      case Format::kJ:
        insn.rd = rd;
        insn.imm = SignExtend(Bits(word, 31, 31) << 20 | Bits(word, 19, 12) << 12 |
                                  Bits(word, 20, 20) << 11 | Bits(word, 30, 21) << 1,
                              21);
        return insn;
      case Format::kSystem:
        break;
    }
  }
  return std::nullopt;
}

Instruction Decode(InsnWord word) {
  if (auto insn = TryDecode(word)) return *insn;
  throw Error(ErrorKind::BadInstruction, fmt::format("cannot decode 0x{:08x}", word));
}

std::string RegisterName(uint8_t reg) {
  return reg < 32 ? std::string(kAbiNames[reg]) : fmt::format("x{}", reg);
}

std::optional<uint8_t> ParseRegister(std::string_view name) {
  for (uint8_t i = 0; i < 32; ++i) {
    if (kAbiNames[i] == name) return i;
  }
  if (name == "fp") return 8;
  if (name.size() >= 2 && name.size() <= 3 && name[0] == 'x') {
    int value = 0;
    for (char c : name.substr(1)) {
      if (c < '0' || c > '9') return std::nullopt;
      value = value * 10 + (c - '0');
    }
    if (name.size() == 3 && name[1] == '0') return std::nullopt;
    if (value < 32) return static_cast<uint8_t>(value);
  }
  return std::nullopt;
}

std::string Disassemble(const Instruction& insn) {
  const OpcodeInfo& info = Info(insn.op);
  const auto r = [](uint8_t reg) { return RegisterName(reg); };
  switch (info.format) {
    case Format::kR:
      return fmt::format("{} {}, {}, {}", info.mnemonic, r(insn.rd), r(insn.rs1), r(insn.rs2));
    case Format::kI:
      if (insn.op == Opcode::kJalr) {
        return fmt::format("jalr {}, {}({})", r(insn.rd), insn.imm, r(insn.rs1));
      }
      [[fallthrough]];
    case Format::kShift:
      return fmt::format("{} {}, {}, {}", info.mnemonic, r(insn.rd), r(insn.rs1), insn.imm);
    case Format::kLoad:
      return fmt::format("{} {}, {}({})", info.mnemonic, r(insn.rd), insn.imm, r(insn.rs1));
    case Format::kS:
      return fmt::format("{} {}, {}({})", info.mnemonic, r(insn.rs2), insn.imm, r(insn.rs1));
    case Format::kB:
      return fmt::format("{} {}, {}, {}", info.mnemonic, r(insn.rs1), r(insn.rs2), insn.imm);
    case Format::kU:
      return fmt::format("{} {}, 0x{:x}", info.mnemonic, r(insn.rd), insn.imm);
    case Format::kJ:
      return fmt::format("jal {}, {}", r(insn.rd), insn.imm);
    case Format::kSystem:
      return std::string(info.mnemonic);
  }
  return "?";
}

// --- carriers ---------------------------------------------------------------

TagCarrier Carrier(CarrierKind kind) {
  switch (kind) {
    case CarrierKind::kLuiNop: return {kind, 20, true};
    case CarrierKind::kAddiNop: return {kind, 12, true};
    case CarrierKind::kCustomOpcode: return {kind, 25, false};
  }
  return {kind, 0, false};
}

std::string_view CarrierName(CarrierKind kind) {
  switch (kind) {
    case CarrierKind::kLuiNop: return "lui";
    case CarrierKind::kAddiNop: return "addi";
    case CarrierKind::kCustomOpcode: return "custom";
  }
  return "?";
}

std::optional<CarrierKind> CarrierFromName(std::string_view name) {
  if (name == "lui") return CarrierKind::kLuiNop;
  if (name == "addi") return CarrierKind::kAddiNop;
  if (name == "custom") return CarrierKind::kCustomOpcode;
  return std::nullopt;
}

std::optional<int> BitsPerTag(CarrierKind kind, int coverage) {
  // Columns: C1, C3, C7, C15, C31. Zero marks NA.
  static constexpr int kLui[] = {20, 6, 2, 1, 0};
  static constexpr int kAddi[] = {12, 4, 1, 0, 0};
  static constexpr int kCustom[] = {15, 8, 3, 1, 0};
  const int* row = kind == CarrierKind::kLuiNop    ? kLui
                   : kind == CarrierKind::kAddiNop ? kAddi
                                                   : kCustom;
  for (size_t i = 0; i < kCoverageColumns.size(); ++i) {
    if (kCoverageColumns[i] == coverage) {
      if (row[i] == 0) return std::nullopt;
      return row[i];
    }
  }
  return std::nullopt;
}

namespace {

struct PayloadField {
  int shift;
  int width;
};

PayloadField Payload(CarrierKind kind) {
  switch (kind) {
    case CarrierKind::kLuiNop: return {12, 20};
    case CarrierKind::kAddiNop: return {20, 12};
    case CarrierKind::kCustomOpcode: return {7, 25};
  }
  return {0, 0};
}

InsnWord CarrierBase(CarrierKind kind) {
  switch (kind) {
    case CarrierKind::kLuiNop: return kOpLui;
    case CarrierKind::kAddiNop: return kOpImm;
    case CarrierKind::kCustomOpcode: return kCustomCarrierOpcode;
  }
  return 0;
}

}  // namespace

bool IsCarrierWord(CarrierKind carrier, InsnWord word) {
  switch (carrier) {
    case CarrierKind::kLuiNop:
      return (word & 0xFFF) == kOpLui;  // opcode + rd = x0
    case CarrierKind::kAddiNop:
      return (word & 0xFFFFF) == kOpImm;  // opcode, rd, funct3, rs1 all zero
    case CarrierKind::kCustomOpcode:
      return (word & 0x7F) == kCustomCarrierOpcode;
  }
  return false;
}

InsnWord PackTags(CarrierKind carrier, const TagPack& pack) {
  const auto bits = BitsPerTag(carrier, pack.coverage);
  if (!bits || *bits != pack.bits_per_tag ||
      pack.tags.size() != static_cast<size_t>(pack.coverage)) {
    throw Error(ErrorKind::TableNA,
                fmt::format("{} carrier cannot hold {} tags of {} bits", CarrierName(carrier),
                            pack.coverage, pack.bits_per_tag));
  }
  uint32_t payload = 0;
  for (size_t i = 0; i < pack.tags.size(); ++i) {
    if (pack.tags[i] >= (1u << pack.bits_per_tag)) {
      throw Error(ErrorKind::PackOverflow,
                  fmt::format("tag {} = {} does not fit {} bits", i, pack.tags[i],
                              pack.bits_per_tag));
    }
    payload |= pack.tags[i] << (i * pack.bits_per_tag);
  }
  const PayloadField field = Payload(carrier);
  return payload << field.shift | CarrierBase(carrier);
}

TagPack UnpackTags(CarrierKind carrier, int coverage, InsnWord word) {
  const auto bits = BitsPerTag(carrier, coverage);
  if (!bits) {
    throw Error(ErrorKind::TableNA, fmt::format("{} carrier has no coverage-{} layout",
                                                CarrierName(carrier), coverage));
  }
  if (!IsCarrierWord(carrier, word)) {
    throw Error(ErrorKind::NotACarrier,
                fmt::format("0x{:08x} is not a {} carrier", word, CarrierName(carrier)));
  }
  const PayloadField field = Payload(carrier);
  const uint32_t payload = Bits(word, field.shift + field.width - 1, field.shift);
  TagPack pack{coverage, *bits, {}};
  pack.tags.reserve(coverage);
  for (int i = 0; i < coverage; ++i) {
    pack.tags.push_back((payload >> (i * *bits)) & ((1u << *bits) - 1));
  }
  return pack;
}

InsnWord LabelWord(uint32_t value) {
  if (value >= kLabelLimit) {
    throw Error(ErrorKind::LabelOverflow, fmt::format("label value 0x{:x} exceeds 20 bits", value));
  }
  return value << 12 | kOpLui;
}

std::optional<uint32_t> LabelValue(InsnWord word) {
  if (!IsCarrierWord(CarrierKind::kLuiNop, word)) return std::nullopt;
  return word >> 12;
}

}  // namespace rvtag
