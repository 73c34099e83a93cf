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

#include "rvtag/emulator.h"

#include <fmt/format.h>

#include <algorithm>

#include "rvtag/error.h"
#include "rvtag/instrument.h"

namespace rvtag {

// --- memory -----------------------------------------------------------------

uint8_t Memory::Load8(uint64_t addr) const {
  auto it = pages_.find(addr / kPageSize);
  return it == pages_.end() ? 0 : it->second[addr % kPageSize];
}

void Memory::Store8(uint64_t addr, uint8_t value) {
  auto [it, inserted] = pages_.try_emplace(addr / kPageSize);
  if (inserted) it->second.fill(0);
  it->second[addr % kPageSize] = value;
}

uint64_t Memory::Load(uint64_t addr, int size) const {
  uint64_t v = 0;
  for (int i = 0; i < size; ++i) v |= uint64_t{Load8(addr + i)} << (8 * i);
  return v;
}

void Memory::Store(uint64_t addr, int size, uint64_t value) {
  for (int i = 0; i < size; ++i) Store8(addr + i, static_cast<uint8_t>(value >> (8 * i)));
}

std::vector<uint8_t> Memory::Read(uint64_t addr, size_t size) const {
  std::vector<uint8_t> out(size);
  for (size_t i = 0; i < size; ++i) out[i] = Load8(addr + i);
  return out;
}

void Memory::Write(uint64_t addr, const std::vector<uint8_t>& bytes) {
  for (size_t i = 0; i < bytes.size(); ++i) Store8(addr + i, bytes[i]);
}

bool Memory::operator==(const Memory& other) const {
  static const Page kZero{};
  auto covered = [](const Memory& a, const Memory& b) {
    for (const auto& [index, page] : a.pages_) {
      auto it = b.pages_.find(index);
      if (page != (it == b.pages_.end() ? kZero : it->second)) return false;
    }
    return true;
  };
  return covered(*this, other) && covered(other, *this);
}

// --- names ------------------------------------------------------------------

std::string_view ExecModeName(ExecMode mode) { return mode == ExecMode::kCompat ? "compat" : "aware"; }

std::optional<ExecMode> ExecModeFromName(std::string_view name) {
  if (name == "compat") return ExecMode::kCompat;
  if (name == "aware") return ExecMode::kAware;
  return std::nullopt;
}

std::string_view ViolationKindName(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kCfiMismatch: return "CfiMismatch";
    case ViolationKind::kCfiMissingSiteLabel: return "CfiMissingSiteLabel";
    case ViolationKind::kCfiMissingEntryLabel: return "CfiMissingEntryLabel";
    case ViolationKind::kUnsignedOverflow: return "UnsignedOverflow";
  }
  return "?";
}

std::string_view StopReasonName(StopReason reason) {
  switch (reason) {
    case StopReason::kExit: return "exit";
    case StopReason::kBreakpoint: return "breakpoint";
    case StopReason::kPolicyViolation: return "policy-violation";
    case StopReason::kLimitExceeded: return "limit-exceeded";
    case StopReason::kBadInstruction: return "bad-instruction";
    case StopReason::kMemFault: return "mem-fault";
  }
  return "?";
}

// --- policy hooks -----------------------------------------------------------

std::optional<PolicyViolation> EnforceCfi(PolicyState& policy, const Instruction& insn, Tag tag,
                                          uint64_t pc, bool is_label) {
  const bool cfl_label = is_label && tag == tags::kCfl;
  const uint32_t value = static_cast<uint32_t>(insn.imm);
  if (policy.expect_landing) {
    const uint32_t expected = *policy.expect_landing;
    policy.expect_landing.reset();
    policy.pending_cfl.reset();
    if (!cfl_label) {
      return PolicyViolation{ViolationKind::kCfiMissingEntryLabel, pc,
                             fmt::format("expected label 0x{:05x}, found '{}'", expected, Disassemble(insn))};
    }
    if (value != expected) {
      return PolicyViolation{ViolationKind::kCfiMismatch, pc,
                             fmt::format("callsite label 0x{:05x}, entry label 0x{:05x}", expected, value)};
    }
    return std::nullopt;
  }
  if (cfl_label) {
    policy.pending_cfl = value;
    return std::nullopt;
  }
  const std::optional<uint32_t> pending = policy.pending_cfl;
  policy.pending_cfl.reset();
  if (insn.op == Opcode::kJalr && !IsReturn(insn) && !policy.pc_relative[insn.rs1]) {
    if (!pending) {
      return PolicyViolation{ViolationKind::kCfiMissingSiteLabel, pc,
                             fmt::format("computed '{}' has no callsite label", Disassemble(insn))};
    }
    policy.expect_landing = pending;
  }
  return std::nullopt;
}

std::optional<PolicyViolation> EnforceUnarith(const MachineState& state, const Instruction& insn, Tag tag) {
  if (tag != tags::kUnArth) return std::nullopt;
  const uint64_t a = state.regs[insn.rs1];
  const uint64_t b = state.regs[insn.rs2];
  const uint64_t imm = static_cast<uint64_t>(insn.imm);
  bool trapped = false;
  std::string what;
  auto carry = [&](uint64_t x, uint64_t y, int width) {
    const uint64_t mask = width == 64 ? ~uint64_t{0} : 0xFFFFFFFFu;
    x &= mask;
    y &= mask;
    trapped = ((x + y) & mask) < x;
    what = fmt::format("{} + {} carries out of {} bits", x, y, width);
  };
  auto borrow = [&](uint64_t x, uint64_t y, int width) {
    const uint64_t mask = width == 64 ? ~uint64_t{0} : 0xFFFFFFFFu;
    x &= mask;
    y &= mask;
    trapped = x < y;
    what = fmt::format("{} - {} borrows at {} bits", x, y, width);
  };
  switch (insn.op) {
    case Opcode::kAdd: carry(a, b, 64); break;
    case Opcode::kAddw: carry(a, b, 32); break;
    case Opcode::kSub: borrow(a, b, 64); break;
    case Opcode::kSubw: borrow(a, b, 32); break;
    case Opcode::kAddi:
    case Opcode::kAddiw: {
      const int width = insn.op == Opcode::kAddi ? 64 : 32;
      if (insn.imm >= 0) carry(a, imm, width);
      else borrow(a, static_cast<uint64_t>(-insn.imm), width);
      break;
    }
    default: return std::nullopt;
  }
  if (!trapped) return std::nullopt;
  return PolicyViolation{ViolationKind::kUnsignedOverflow, state.pc,
                         fmt::format("'{}': {}", Disassemble(insn), what)};
}

void TrackCoverage(MachineState& state, PolicyState& policy, const Instruction& insn, Tag tag,
                   uint64_t pc, uint64_t next_pc, bool is_label) {
  (void)insn;
  if (tag == tags::kCl && is_label) {
    const auto word = static_cast<InsnWord>(state.memory.Load(pc, 4));
    const uint32_t count = word >> 12;
    if (count + 1 < kLabelLimit) state.memory.Store(pc, 4, LabelWord(count + 1));
  } else if (tag == tags::kCi) {
    ++policy.ci_counts[pc];
  } else if (tag == tags::kBcf) {
    ++policy.bcf[pc][next_pc];
  }
}

// --- interpreter ------------------------------------------------------------

namespace {

struct SlotInfo {
  const TagRegion* region = nullptr;
  uint64_t group_start = 0;  // address of the carrier slot
  int index = -1;            // -1: the pc is the carrier slot itself
};

class Machine {
 public:
  Machine(const Image& image, ExecMode mode, const RunLimits& limits)
      : image_(image), mode_(mode), limits_(limits) {
    aware_ = mode == ExecMode::kAware && image.tags_present();
    result_.policy.mode = aware_ ? image.policy() : Policy::kNone;
    coverage_ = result_.policy.mode == Policy::kCoverage;
    MachineState& s = result_.state;
    s.memory.Write(image.text_base, image.text);
    s.memory.Write(image.data_base, image.data);
    s.pc = image.entry;
    s.regs[2] = kStackTop;
    regions_ = image.tag_regions;
    std::sort(regions_.begin(), regions_.end(),
              [](const TagRegion& a, const TagRegion& b) { return a.start < b.start; });
  }

  RunResult Run() {
    while (!Step()) {
    }
    return std::move(result_);
  }

 private:
  std::optional<SlotInfo> Locate(uint64_t pc) const {
    auto it = std::upper_bound(regions_.begin(), regions_.end(), pc,
                               [](uint64_t v, const TagRegion& r) { return v < r.start; });
    if (it == regions_.begin()) return std::nullopt;
    const TagRegion& r = *std::prev(it);
    const uint64_t stride = 4 * (uint64_t{r.coverage} + 1);
    if (pc >= r.start + stride * r.group_count) return std::nullopt;
    const uint64_t rel = pc - r.start;
    SlotInfo info{&r, r.start + rel / stride * stride, static_cast<int>((rel % stride) / 4) - 1};
    return info;
  }

  bool Stop(StopReason reason, std::string detail = {}) {
    result_.stop = reason;
    result_.fault = std::move(detail);
    result_.state.halted = true;
    return true;
  }

  // Loads the carrier for the group at `slot` into the tag window.
  bool LoadWindow(const SlotInfo& slot) {
    const auto word = static_cast<InsnWord>(result_.state.memory.Load(slot.group_start, 4));
    ++result_.counters.tag_fetches;
    try {
      window_ = UnpackTags(slot.region->carrier, slot.region->coverage, word).tags;
    } catch (const Error& e) {
      return Stop(StopReason::kBadInstruction, fmt::format("pc 0x{:x}: {}", slot.group_start, e.what()));
    }
    window_start_ = slot.group_start;
    return false;
  }

  void WriteReg(uint8_t rd, uint64_t value, bool pc_relative = false) {
    if (rd == 0) return;
    result_.state.regs[rd] = value;
    result_.policy.pc_relative[rd] = pc_relative;
  }

  bool Step() {
    MachineState& s = result_.state;
    ExecCounters& c = result_.counters;
    if (c.retired >= limits_.max_retired) {
      return Stop(StopReason::kLimitExceeded, fmt::format("{} instructions retired", c.retired));
    }
    const uint64_t pc = s.pc;
    if (pc % 4 != 0 || pc < image_.text_base || pc >= image_.text_end()) {
      return Stop(StopReason::kMemFault, fmt::format("fetch from 0x{:x} outside text", pc));
    }

    std::optional<SlotInfo> slot;
    if (image_.tags_present()) slot = Locate(pc);
    if (slot && slot->index < 0 && aware_) {
      if (LoadWindow(*slot)) return true;
      s.pc = pc + 4;
      return false;
    }

    const auto word = static_cast<InsnWord>(s.memory.Load(pc, 4));
    const std::optional<Instruction> decoded = TryDecode(word);
    if (!decoded) return Stop(StopReason::kBadInstruction, fmt::format("pc 0x{:x}: word 0x{:08x}", pc, word));
    const Instruction& insn = *decoded;
    const bool is_carrier = slot && slot->index < 0;

    std::optional<Tag> tag;
    if (aware_ && slot) {
      if (window_start_ != slot->group_start && LoadWindow(*slot)) return true;
      tag = window_[static_cast<size_t>(slot->index)];
    }
    const bool is_label = insn.op == Opcode::kLui && insn.rd == 0;

    if (tag) {
      PolicyState& p = result_.policy;
      std::optional<PolicyViolation> violation;
      if (p.mode == Policy::kCfi) violation = EnforceCfi(p, insn, *tag, pc, is_label);
      if (p.mode == Policy::kUnarith) {
        s.pc = pc;
        violation = EnforceUnarith(s, insn, *tag);
      }
      if (violation) {
        result_.violation = std::move(violation);
        return Stop(StopReason::kPolicyViolation);
      }
      if (is_label && ((p.mode == Policy::kCfi && *tag == tags::kCfl) ||
                       (p.mode == Policy::kCoverage && *tag == tags::kCl))) {
        ++c.labels_seen;
      }
    }

    uint64_t next = pc + 4;
    if (Execute(insn, pc, next)) return true;

    if (tag && coverage_) TrackCoverage(s, result_.policy, insn, *tag, pc, next, is_label);
    if (is_carrier) ++c.tag_fetches;
    else ++c.retired;
    if (s.halted) return true;
    s.pc = next;
    return false;
  }

  bool StoreChecked(uint64_t addr, int size, uint64_t value, uint64_t pc) {
    if (addr < image_.text_end() && addr + size > image_.text_base && !coverage_) {
      return Stop(StopReason::kMemFault, fmt::format("pc 0x{:x}: store to text at 0x{:x}", pc, addr));
    }
    result_.state.memory.Store(addr, size, value);
    return false;
  }

  // Returns true when execution stops.
  bool Execute(const Instruction& in, uint64_t pc, uint64_t& next) {
    MachineState& s = result_.state;
    const uint64_t a = s.regs[in.rs1];
    const uint64_t b = s.regs[in.rs2];
    const uint64_t imm = static_cast<uint64_t>(in.imm);
    auto sext32 = [](uint64_t v) { return static_cast<uint64_t>(static_cast<int64_t>(static_cast<int32_t>(v))); };
    auto sx = [](uint64_t v, int bits) {
      const int shift = 64 - bits;
      return static_cast<uint64_t>(static_cast<int64_t>(v << shift) >> shift);
    };
    auto branch = [&](bool taken) {
      if (taken) next = pc + imm;
    };
    switch (in.op) {
      case Opcode::kLui: WriteReg(in.rd, sext32(imm << 12)); break;
      case Opcode::kAuipc: WriteReg(in.rd, pc + sext32(imm << 12), true); break;
      case Opcode::kJal:
        WriteReg(in.rd, pc + 4);
        next = pc + imm;
        break;
      case Opcode::kJalr:
        next = (a + imm) & ~uint64_t{1};
        WriteReg(in.rd, pc + 4);
        break;
      case Opcode::kBeq: branch(a == b); break;
      case Opcode::kBne: branch(a != b); break;
      case Opcode::kBlt: branch(static_cast<int64_t>(a) < static_cast<int64_t>(b)); break;
      case Opcode::kBge: branch(static_cast<int64_t>(a) >= static_cast<int64_t>(b)); break;
      case Opcode::kBltu: branch(a < b); break;
      case Opcode::kBgeu: branch(a >= b); break;
      case Opcode::kLb: WriteReg(in.rd, sx(s.memory.Load(a + imm, 1), 8)); break;
      case Opcode::kLh: WriteReg(in.rd, sx(s.memory.Load(a + imm, 2), 16)); break;
      case Opcode::kLw: WriteReg(in.rd, sx(s.memory.Load(a + imm, 4), 32)); break;
      case Opcode::kLd: WriteReg(in.rd, s.memory.Load(a + imm, 8)); break;
      case Opcode::kLbu: WriteReg(in.rd, s.memory.Load(a + imm, 1)); break;
      case Opcode::kLhu: WriteReg(in.rd, s.memory.Load(a + imm, 2)); break;
      case Opcode::kLwu: WriteReg(in.rd, s.memory.Load(a + imm, 4)); break;
      case Opcode::kSb: return StoreChecked(a + imm, 1, b, pc);
      case Opcode::kSh: return StoreChecked(a + imm, 2, b, pc);
      case Opcode::kSw: return StoreChecked(a + imm, 4, b, pc);
      case Opcode::kSd: return StoreChecked(a + imm, 8, b, pc);
      case Opcode::kAddi: WriteReg(in.rd, a + imm); break;
      case Opcode::kAddiw: WriteReg(in.rd, sext32(a + imm)); break;
      case Opcode::kSlti: WriteReg(in.rd, static_cast<int64_t>(a) < in.imm); break;
      case Opcode::kSltiu: WriteReg(in.rd, a < imm); break;
      case Opcode::kXori: WriteReg(in.rd, a ^ imm); break;
      case Opcode::kOri: WriteReg(in.rd, a | imm); break;
      case Opcode::kAndi: WriteReg(in.rd, a & imm); break;
      case Opcode::kSlli: WriteReg(in.rd, a << (imm & 63)); break;
      case Opcode::kSrli: WriteReg(in.rd, a >> (imm & 63)); break;
      case Opcode::kSrai: WriteReg(in.rd, static_cast<uint64_t>(static_cast<int64_t>(a) >> (imm & 63))); break;
      case Opcode::kAdd: WriteReg(in.rd, a + b); break;
      case Opcode::kAddw: WriteReg(in.rd, sext32(a + b)); break;
      case Opcode::kSub: WriteReg(in.rd, a - b); break;
      case Opcode::kSubw: WriteReg(in.rd, sext32(a - b)); break;
      case Opcode::kSll: WriteReg(in.rd, a << (b & 63)); break;
      case Opcode::kSlt: WriteReg(in.rd, static_cast<int64_t>(a) < static_cast<int64_t>(b)); break;
      case Opcode::kSltu: WriteReg(in.rd, a < b); break;
      case Opcode::kXor: WriteReg(in.rd, a ^ b); break;
      case Opcode::kSrl: WriteReg(in.rd, a >> (b & 63)); break;
      case Opcode::kSra: WriteReg(in.rd, static_cast<uint64_t>(static_cast<int64_t>(a) >> (b & 63))); break;
      case Opcode::kOr: WriteReg(in.rd, a | b); break;
      case Opcode::kAnd: WriteReg(in.rd, a & b); break;
      case Opcode::kMul: WriteReg(in.rd, a * b); break;
      case Opcode::kEcall: {
        const uint64_t call = s.regs[17];
        if (call == 93 || call == 0) {
          s.exit_code = static_cast<int64_t>(s.regs[10]);
          s.halted = true;
          result_.stop = StopReason::kExit;
        } else if (call == 64) {
          result_.output.push_back(static_cast<char>(s.regs[10] & 0xFF));
        } else {
          return Stop(StopReason::kBadInstruction, fmt::format("pc 0x{:x}: unsupported ecall {}", pc, call));
        }
        break;
      }
      case Opcode::kEbreak:
        result_.stop = StopReason::kBreakpoint;
        s.halted = true;
        break;
    }
    return false;
  }

  const Image& image_;
  ExecMode mode_;
  RunLimits limits_;
  bool aware_ = false;
  bool coverage_ = false;
  std::vector<TagRegion> regions_;
  std::vector<uint32_t> window_;
  uint64_t window_start_ = ~uint64_t{0};
  RunResult result_;
};

}  // namespace

RunResult Run(const Image& image, ExecMode mode, const RunLimits& limits) {
  return Machine(image, mode, limits).Run();
}

// --- coverage export --------------------------------------------------------

namespace {

std::string Hex(uint64_t v) { return fmt::format("0x{:x}", v); }

}  // namespace

nlohmann::json CoverageJson(const Image& image, const RunResult& result) {
  nlohmann::json cl = nlohmann::json::array();
  const Memory& mem = result.state.memory;
  for (const TagRegion& r : image.tag_regions) {
    for (uint32_t g = 0; g < r.group_count; ++g) {
      const uint64_t slot = r.start + 4 * (uint64_t{r.coverage} + 1) * g;
      std::vector<uint32_t> group_tags;
      try {
        group_tags = UnpackTags(r.carrier, r.coverage, static_cast<InsnWord>(mem.Load(slot, 4))).tags;
      } catch (const Error&) {
        continue;
      }
      for (int i = 0; i < r.coverage; ++i) {
        const uint64_t addr = slot + 4 * (i + 1);
        if (addr >= image.text_end() || group_tags[i] != tags::kCl) continue;
        const auto word = static_cast<InsnWord>(mem.Load(addr, 4));
        if (auto value = LabelValue(word)) cl.push_back({{"addr", Hex(addr)}, {"count", *value}});
      }
    }
  }
  nlohmann::json ci = nlohmann::json::object();
  for (const auto& [pc, n] : result.policy.ci_counts) ci[Hex(pc)] = n;
  nlohmann::json bcf = nlohmann::json::object();
  for (const auto& [pc, targets] : result.policy.bcf) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [next, n] : targets) t[Hex(next)] = n;
    bcf[Hex(pc)] = t;
  }
  return {{"cl", cl}, {"ci", ci}, {"bcf", bcf}};
}

// --- reporting --------------------------------------------------------------

namespace {

double Pct(uint64_t base, uint64_t tagged) {
  if (base == 0) return 0;
  return 100.0 * (static_cast<double>(tagged) - static_cast<double>(base)) / static_cast<double>(base);
}

}  // namespace

Report MakeReport(const ExecCounters& baseline, const ExecCounters& tagged, const SizeInfo& baseline_size,
                  const SizeInfo& tagged_size) {
  Report r{baseline, tagged, baseline_size, tagged_size};
  r.dynamic_overhead_pct = Pct(baseline.total(), tagged.total());
  r.static_overhead_pct = Pct(baseline_size.fragment_bytes, tagged_size.fragment_bytes);
  r.image_growth_pct = Pct(baseline_size.image_text_bytes, tagged_size.image_text_bytes);
  return r;
}

std::string Report::Text() const {
  std::string out;
  out += fmt::format("{:<22}{:>14}{:>14}{:>10}\n", "", "baseline", "tagged", "overhead");
  out += fmt::format("{:<22}{:>14}{:>14}{:>9.1f}%\n", "dynamic instructions", baseline.total(), tagged.total(),
                     dynamic_overhead_pct);
  out += fmt::format("{:<22}{:>14}{:>14}{:>9.1f}%\n", "text bytes (unaligned)", baseline_size.fragment_bytes,
                     tagged_size.fragment_bytes, static_overhead_pct);
  out += fmt::format("{:<22}{:>14}{:>14}{:>9.1f}%\n", "image text bytes", baseline_size.image_text_bytes,
                     tagged_size.image_text_bytes, image_growth_pct);
  return out;
}

std::string Report::MachineLines() const {
  return fmt::format(
      "baseline_dynamic={}\ntagged_dynamic={}\ntagged_retired={}\ntagged_tag_fetches={}\n"
      "dynamic_overhead_pct={:.3f}\nbaseline_text_bytes={}\ntagged_text_bytes={}\n"
      "static_overhead_pct={:.3f}\nimage_growth_pct={:.3f}\n",
      baseline.total(), tagged.total(), tagged.retired, tagged.tag_fetches, dynamic_overhead_pct,
      baseline_size.fragment_bytes, tagged_size.fragment_bytes, static_overhead_pct, image_growth_pct);
}

nlohmann::json Report::Json() const {
  auto counters = [](const ExecCounters& c) {
    return nlohmann::json{{"retired", c.retired}, {"tag_fetches", c.tag_fetches}, {"labels_seen", c.labels_seen}};
  };
  auto sizes = [](const SizeInfo& s) {
    return nlohmann::json{{"image_text_bytes", s.image_text_bytes}, {"fragment_bytes", s.fragment_bytes}};
  };
  return {{"baseline", {{"counters", counters(baseline)}, {"size", sizes(baseline_size)}}},
          {"tagged", {{"counters", counters(tagged)}, {"size", sizes(tagged_size)}}},
          {"dynamic_overhead_pct", dynamic_overhead_pct},
          {"static_overhead_pct", static_overhead_pct},
          {"image_growth_pct", image_growth_pct}};
}

}  // namespace rvtag
