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

#include "rvtag/frontend.h"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <set>
#include <tuple>
#include <variant>

#include "rvtag/error.h"

namespace rvtag {

std::string_view RelocKindName(RelocKind kind) {
  switch (kind) {
    case RelocKind::kHi20: return "HI20";
    case RelocKind::kLo12I: return "LO12_I";
    case RelocKind::kBranch: return "BRANCH";
    case RelocKind::kJal: return "JAL";
  }
  return "?";
}

const Relocation* Fragment::RelocationAt(uint32_t offset) const {
  for (const Relocation& r : relocations) {
    if (r.offset == offset) return &r;
  }
  return nullptr;
}

std::map<std::string, SymbolInfo> Program::Globals() const {
  std::map<std::string, SymbolInfo> out;
  for (size_t i = 0; i < fragments.size(); ++i) {
    out[fragments[i].name] = {SymbolSection::kText, i, 0, fragments[i].attributes};
  }
  for (const auto& [name, offset] : data.symbols) {
    out[name] = {SymbolSection::kData, 0, offset, {}};
  }
  return out;
}

std::optional<size_t> Program::FindFragment(const std::string& name) const {
  for (size_t i = 0; i < fragments.size(); ++i) {
    if (fragments[i].name == name) return i;
  }
  return std::nullopt;
}

size_t Program::InsnCount() const {
  size_t n = 0;
  for (const Fragment& f : fragments) n += f.insns.size();
  return n;
}

namespace {

constexpr uint8_t kZero = 0;
constexpr uint8_t kRa = 1;

struct Token {
  std::string text;
  int column = 1;  // 1-based
};

bool IsLocalLabel(std::string_view name) { return name.size() > 2 && name.substr(0, 2) == ".L"; }

bool IsIdentStart(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$';
}
bool IsIdentChar(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$';
}

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<int64_t> ParseNumber(std::string_view s) {
  bool negative = false;
  if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
    negative = s[0] == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  if (s.empty()) return std::nullopt;
  uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value, base);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return negative ? -static_cast<int64_t>(value) : static_cast<int64_t>(value);
}

// The instruction-level statement after labels are peeled off.
struct Statement {
  Token mnemonic;
  std::vector<Token> operands;
  Annotations annotations;
  SourceLoc loc;
};

class LineError {
 public:
  LineError(SourceLoc loc) : loc_(std::move(loc)) {}
  [[noreturn]] void Fail(int column, const std::string& message,
                         ErrorKind kind = ErrorKind::ParseError) const {
    throw Error(kind, fmt::format("{}:{}:{}: {}", loc_.file, loc_.line, column, message));
  }

 private:
  SourceLoc loc_;
};

// Operand helpers bound to one statement.
class Operands {
 public:
  Operands(const Statement& st, const AssembleOptions& options)
      : st_(st), options_(options), err_(st.loc) {}

  void Expect(size_t n) const {
    if (st_.operands.size() != n) {
      err_.Fail(st_.mnemonic.column,
                fmt::format("'{}' expects {} operand(s), got {}", st_.mnemonic.text, n,
                            st_.operands.size()));
    }
  }

  size_t size() const { return st_.operands.size(); }
  const Token& at(size_t i) const { return st_.operands[i]; }

  uint8_t Reg(size_t i) const {
    const Token& t = st_.operands[i];
    auto r = ParseRegister(t.text);
    if (!r) err_.Fail(t.column, fmt::format("expected register, got '{}'", t.text));
    return *r;
  }

  int64_t Imm(size_t i) const { return ImmText(st_.operands[i]); }

  int64_t ImmText(const Token& t) const {
    if (auto v = ParseNumber(t.text)) return *v;
    if (auto it = options_.defsyms.find(t.text); it != options_.defsyms.end()) return it->second;
    err_.Fail(t.column, fmt::format("expected immediate, got '{}'", t.text));
  }

  // imm(reg) or (reg)
  std::pair<int64_t, uint8_t> Mem(size_t i) const {
    const Token& t = st_.operands[i];
    const auto open = t.text.find('(');
    const auto close = t.text.rfind(')');
    if (open == std::string::npos || close != t.text.size() - 1 || close < open) {
      err_.Fail(t.column, fmt::format("expected imm(reg), got '{}'", t.text));
    }
    const std::string imm_text(Trim(std::string_view(t.text).substr(0, open)));
    const std::string reg_text(Trim(std::string_view(t.text).substr(open + 1, close - open - 1)));
    auto reg = ParseRegister(reg_text);
    if (!reg) err_.Fail(t.column, fmt::format("expected register, got '{}'", reg_text));
    const int64_t imm = imm_text.empty() ? 0 : ImmText(Token{imm_text, t.column});
    return {imm, *reg};
  }

  bool IsMem(size_t i) const { return st_.operands[i].text.find('(') != std::string::npos; }

  // A branch/jump target: symbol name or numeric offset.
  std::variant<std::string, int64_t> Target(size_t i) const {
    const Token& t = st_.operands[i];
    if (auto v = ParseNumber(t.text)) return *v;
    if (t.text.empty() || !IsIdentStart(t.text[0]) ||
        !std::all_of(t.text.begin(), t.text.end(), IsIdentChar)) {
      err_.Fail(t.column, fmt::format("expected label, got '{}'", t.text));
    }
    return t.text;
  }

  std::string Symbol(size_t i) const {
    auto target = Target(i);
    if (auto* name = std::get_if<std::string>(&target)) return *name;
    err_.Fail(st_.operands[i].column, "expected symbol");
  }

  const LineError& err() const { return err_; }

 private:
  const Statement& st_;
  const AssembleOptions& options_;
  LineError err_;
};

Statement ParseStatement(std::string_view text, int base_column, SourceLoc loc) {
  Statement st;
  st.loc = loc;
  LineError err(loc);
  size_t pos = 0;
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  const size_t mstart = pos;
  while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  st.mnemonic = {std::string(text.substr(mstart, pos - mstart)), base_column + int(mstart)};

  // Peel trailing !annotations.
  std::string_view rest = text.substr(pos);
  while (true) {
    std::string_view trimmed = Trim(rest);
    const auto space = trimmed.find_last_of(" \t");
    const std::string_view last = space == std::string_view::npos ? trimmed : trimmed.substr(space + 1);
    if (last.empty() || last[0] != '!') break;
    const int col = base_column + int(last.data() - text.data());
    if (last == "!unsigned") st.annotations.is_unsigned = true;
    else if (last == "!optout") st.annotations.optout = true;
    else if (last == "!count") st.annotations.count = true;
    else err.Fail(col, fmt::format("unknown annotation '{}'", last));
    rest = trimmed.substr(0, space == std::string_view::npos ? 0 : space);
  }

  // Split on commas outside quotes.
  std::string_view ops = rest;
  size_t start = 0;
  bool quoted = false;
  auto flush = [&](size_t end) {
    std::string_view raw = ops.substr(start, end - start);
    std::string_view trimmed = Trim(raw);
    const int col = base_column + int(trimmed.data() - text.data());
    if (!trimmed.empty()) {
      st.operands.push_back({std::string(trimmed), col});
    } else if (!Trim(ops).empty()) {
      err.Fail(col, "empty operand");
    }
  };
  for (size_t i = 0; i < ops.size(); ++i) {
    if (ops[i] == '"') quoted = !quoted;
    if (ops[i] == ',' && !quoted) {
      flush(i);
      start = i + 1;
    }
  }
  if (quoted) err.Fail(base_column + int(mstart), "unterminated string");
  flush(ops.size());
  return st;
}

std::string Unquote(const Token& t, const LineError& err) {
  if (t.text.size() < 2 || t.text.front() != '"' || t.text.back() != '"') {
    err.Fail(t.column, fmt::format("expected quoted string, got '{}'", t.text));
  }
  return t.text.substr(1, t.text.size() - 2);
}

// One emitted instruction plus how its target should be fixed up.
struct PendingReloc {
  RelocKind kind;
  std::variant<std::string, int64_t> target;
  std::optional<uint32_t> pair_id;
};

struct Emission {
  TaggedInsn insn;
  std::optional<PendingReloc> reloc;
};

Instruction Make(Opcode op, uint8_t rd, uint8_t rs1, uint8_t rs2, int64_t imm) {
  return Instruction{op, rd, rs1, rs2, imm};
}

const std::set<std::string_view> kPseudos = {"call", "j",  "jr", "ret", "li",  "la",
                                             "mv",   "nop", "beqz", "bnez"};

std::vector<Emission> ExpandPseudoStatement(const Statement& st, const AssembleOptions& options,
                                            uint32_t pair_id) {
  Operands ops(st, options);
  const std::string& m = st.mnemonic.text;
  std::vector<Emission> out;
  auto add = [&](Instruction insn, std::optional<PendingReloc> reloc = std::nullopt) {
    TaggedInsn ti;
    ti.insn = insn;
    ti.annotations = st.annotations;
    ti.loc = st.loc;
    out.push_back({ti, std::move(reloc)});
  };

  if (m == "call") {
    ops.Expect(1);
    const std::string sym = ops.Symbol(0);
    add(Make(Opcode::kAuipc, kRa, 0, 0, 0), PendingReloc{RelocKind::kHi20, sym, pair_id});
    add(Make(Opcode::kJalr, kRa, kRa, 0, 0), PendingReloc{RelocKind::kLo12I, sym, pair_id});
  } else if (m == "la") {
    ops.Expect(2);
    const uint8_t rd = ops.Reg(0);
    const std::string sym = ops.Symbol(1);
    add(Make(Opcode::kAuipc, rd, 0, 0, 0), PendingReloc{RelocKind::kHi20, sym, pair_id});
    add(Make(Opcode::kAddi, rd, rd, 0, 0), PendingReloc{RelocKind::kLo12I, sym, pair_id});
  } else if (m == "j") {
    ops.Expect(1);
    add(Make(Opcode::kJal, kZero, 0, 0, 0), PendingReloc{RelocKind::kJal, ops.Target(0), {}});
  } else if (m == "jr") {
    ops.Expect(1);
    add(Make(Opcode::kJalr, kZero, ops.Reg(0), 0, 0));
  } else if (m == "ret") {
    ops.Expect(0);
    add(Make(Opcode::kJalr, kZero, kRa, 0, 0));
  } else if (m == "mv") {
    ops.Expect(2);
    add(Make(Opcode::kAddi, ops.Reg(0), ops.Reg(1), 0, 0));
  } else if (m == "nop") {
    ops.Expect(0);
    add(Make(Opcode::kAddi, kZero, kZero, 0, 0));
  } else if (m == "beqz" || m == "bnez") {
    ops.Expect(2);
    add(Make(m == "beqz" ? Opcode::kBeq : Opcode::kBne, 0, ops.Reg(0), kZero, 0),
        PendingReloc{RelocKind::kBranch, ops.Target(1), {}});
  } else if (m == "li") {
    ops.Expect(2);
    const uint8_t rd = ops.Reg(0);
    const int64_t v = ops.Imm(1);
    if (v >= -2048 && v <= 2047) {
      add(Make(Opcode::kAddi, rd, kZero, 0, v));
    } else if (v >= INT32_MIN && v <= INT32_MAX) {
      const int64_t lo = ((v & 0xFFF) ^ 0x800) - 0x800;
      const int64_t hi = ((v - lo) >> 12) & 0xFFFFF;
      const int64_t upper = static_cast<int32_t>(static_cast<uint32_t>(hi << 12));
      add(Make(Opcode::kLui, rd, 0, 0, hi));
      if (lo != 0) {
        // addi suffices unless the value only materializes with 32-bit wraparound.
        add(Make(upper + lo == v ? Opcode::kAddi : Opcode::kAddiw, rd, rd, 0, lo));
      }
    } else {
      ops.err().Fail(ops.at(1).column,
                     fmt::format("li immediate {} does not fit 32 signed bits", v),
                     ErrorKind::OperandRange);
    }
  } else {
    throw Error(ErrorKind::UnsupportedPseudo,
                fmt::format("{}:{}: '{}' is not a pseudo-instruction", st.loc.file, st.loc.line, m));
  }
  return out;
}

class Assembler {
 public:
  explicit Assembler(const AssembleOptions& options) : options_(options) {}

  void File(const SourceFile& src) {
    section_ = Section::kText;
    current_ = std::nullopt;
    size_t line_start = 0;
    int line_no = 0;
    while (line_start <= src.text.size()) {
      size_t end = src.text.find('\n', line_start);
      if (end == std::string::npos) end = src.text.size();
      ++line_no;
      Line(SourceLoc{src.path, line_no}, std::string_view(src.text).substr(line_start, end - line_start));
      line_start = end + 1;
    }
    CloseFragment();
  }

  Program Finish() {
    ResolveNumericTargets();
    for (Fragment& frag : program_.fragments) ResolveLocals(frag);
    ApplyAttributes();
    return std::move(program_);
  }

 private:
  enum class Section { kText, kData };

  struct NumericTarget {
    size_t fragment;
    size_t reloc_index;
    int64_t delta;
    SourceLoc loc;
  };

  void Line(const SourceLoc& loc, std::string_view raw) {
    // Strip comments outside strings.
    bool quoted = false;
    size_t cut = raw.size();
    for (size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '"') quoted = !quoted;
      if (raw[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    std::string_view text = raw.substr(0, cut);
    LineError err(loc);

    // Leading labels.
    while (true) {
      size_t p = 0;
      while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
      size_t q = p;
      if (q < text.size() && IsIdentStart(text[q])) {
        while (q < text.size() && IsIdentChar(text[q])) ++q;
        if (q < text.size() && text[q] == ':') {
          DefineLabel(std::string(text.substr(p, q - p)), loc, int(p) + 1);
          text = text.substr(q + 1);
          continue;
        }
      }
      break;
    }
    if (Trim(text).empty()) return;
    const int base_column = int(text.data() - raw.data()) + 1;
    Statement st = ParseStatement(text, base_column, loc);
    if (!st.mnemonic.text.empty() && st.mnemonic.text[0] == '.') {
      Directive(st);
    } else {
      InstructionStatement(st);
    }
  }

  void DefineLabel(const std::string& name, const SourceLoc& loc, int column) {
    LineError err(loc);
    if (section_ == Section::kData) {
      if (globals_.count(name)) err.Fail(column, fmt::format("duplicate symbol '{}'", name));
      globals_.insert(name);
      program_.data.symbols[name] = static_cast<uint32_t>(program_.data.bytes.size());
      return;
    }
    if (IsLocalLabel(name)) {
      if (!current_) err.Fail(column, fmt::format("local label '{}' outside a function", name));
      Fragment& frag = program_.fragments[*current_];
      if (frag.locals.count(name)) err.Fail(column, fmt::format("duplicate label '{}'", name));
      frag.locals[name] = frag.size_bytes();
      return;
    }
    if (globals_.count(name)) err.Fail(column, fmt::format("duplicate symbol '{}'", name));
    globals_.insert(name);
    CloseFragment();
    Fragment fragment;
    fragment.name = name;
    program_.fragments.push_back(std::move(fragment));
    current_ = program_.fragments.size() - 1;
  }

  void CloseFragment() {
    if (pending_calltype_) {
      LineError(pending_calltype_->second).Fail(1, ".calltype not followed by a jalr in the same function");
    }
  }

  void Directive(const Statement& st) {
    Operands ops(st, options_);
    const LineError& err = ops.err();
    const std::string& d = st.mnemonic.text;
    if (d == ".text") {
      ops.Expect(0);
      section_ = Section::kText;
    } else if (d == ".data") {
      ops.Expect(0);
      CloseFragment();
      section_ = Section::kData;
      current_ = std::nullopt;
    } else if (d == ".globl" || d == ".global" || d == ".internal") {
      for (size_t i = 0; i < ops.size(); ++i) {
        const std::string name = ops.Symbol(i);
        (d == ".internal" ? internal_ : exported_)[name] = st.loc;
      }
    } else if (d == ".entry") {
      ops.Expect(1);
      if (entry_) err.Fail(st.mnemonic.column, "multiple .entry directives");
      entry_ = {ops.Symbol(0), st.loc};
    } else if (d == ".signature") {
      ops.Expect(1);
      if (!current_ || section_ != Section::kText) {
        err.Fail(st.mnemonic.column, ".signature outside a function");
      }
      program_.fragments[*current_].attributes.signature = Unquote(ops.at(0), err);
    } else if (d == ".calltype") {
      ops.Expect(1);
      if (!current_ || section_ != Section::kText) {
        err.Fail(st.mnemonic.column, ".calltype outside a function");
      }
      if (pending_calltype_) err.Fail(st.mnemonic.column, "previous .calltype still pending");
      pending_calltype_ = {Unquote(ops.at(0), err), st.loc};
    } else if (d == ".byte" || d == ".word" || d == ".dword") {
      RequireData(st);
      const int width = d == ".byte" ? 1 : d == ".word" ? 4 : 8;
      if (ops.size() == 0) err.Fail(st.mnemonic.column, fmt::format("{} needs a value", d));
      for (size_t i = 0; i < ops.size(); ++i) {
        const uint64_t v = static_cast<uint64_t>(ops.Imm(i));
        for (int b = 0; b < width; ++b) program_.data.bytes.push_back(uint8_t(v >> (8 * b)));
      }
    } else if (d == ".zero") {
      RequireData(st);
      ops.Expect(1);
      const int64_t n = ops.Imm(0);
      if (n < 0 || n > (1 << 24)) err.Fail(ops.at(0).column, ".zero size out of range");
      program_.data.bytes.resize(program_.data.bytes.size() + n, 0);
    } else if (d == ".align") {
      RequireData(st);
      ops.Expect(1);
      const int64_t p = ops.Imm(0);
      if (p < 0 || p > 12) err.Fail(ops.at(0).column, ".align power out of range");
      const size_t a = size_t{1} << p;
      program_.data.bytes.resize((program_.data.bytes.size() + a - 1) / a * a, 0);
    } else {
      err.Fail(st.mnemonic.column, fmt::format("unknown directive '{}'", d));
    }
  }

  void RequireData(const Statement& st) {
    if (section_ != Section::kData) {
      LineError(st.loc).Fail(st.mnemonic.column,
                             fmt::format("{} is only allowed in .data", st.mnemonic.text));
    }
  }

  void InstructionStatement(const Statement& st) {
    LineError err(st.loc);
    if (section_ != Section::kText) err.Fail(st.mnemonic.column, "instruction in .data");
    if (!current_) err.Fail(st.mnemonic.column, "instruction before the first function label");

    std::vector<Emission> emitted;
    std::optional<uint32_t> lineage;
    if (kPseudos.count(st.mnemonic.text)) {
      const uint32_t pair = program_.next_pair;
      emitted = ExpandPseudoStatement(st, options_, pair);
      if (std::any_of(emitted.begin(), emitted.end(),
                      [](const Emission& e) { return e.reloc && e.reloc->pair_id; })) {
        ++program_.next_pair;
      }
      lineage = program_.next_lineage++;
      if (st.mnemonic.text == "la") la_targets_.insert(std::get<std::string>(emitted[0].reloc->target));
    } else {
      emitted.push_back(BaseInstruction(st));
    }

    Fragment& frag = program_.fragments[*current_];
    for (Emission& e : emitted) {
      e.insn.lineage = lineage;
      e.insn.origin = next_origin_++;
      if (e.insn.insn.op == Opcode::kJalr && pending_calltype_) {
        e.insn.calltype = pending_calltype_->first;
        pending_calltype_.reset();
      }
      // Check that immediates fit before anything else sees the instruction.
      try {
        Encode(e.insn.insn);
      } catch (const Error& ex) {
        err.Fail(st.mnemonic.column, ex.what(), ex.kind());
      }
      const uint32_t offset = frag.size_bytes();
      if (e.reloc) {
        Relocation r{e.reloc->kind, offset, "", e.reloc->pair_id};
        if (auto* name = std::get_if<std::string>(&e.reloc->target)) {
          r.target = *name;
        } else {
          numeric_.push_back({*current_, frag.relocations.size(), std::get<int64_t>(e.reloc->target), st.loc});
        }
        frag.relocations.push_back(r);
      }
      frag.insns.push_back(std::move(e.insn));
    }
  }

  Emission BaseInstruction(const Statement& st) {
    const auto op = OpcodeFromMnemonic(st.mnemonic.text);
    LineError err(st.loc);
    if (!op) err.Fail(st.mnemonic.column, fmt::format("unknown mnemonic '{}'", st.mnemonic.text));
    Operands ops(st, options_);
    Emission e;
    e.insn.annotations = st.annotations;
    e.insn.loc = st.loc;
    Instruction& insn = e.insn.insn;
    insn.op = *op;
    switch (Info(*op).format) {
      case Format::kR:
        ops.Expect(3);
        insn.rd = ops.Reg(0), insn.rs1 = ops.Reg(1), insn.rs2 = ops.Reg(2);
        break;
      case Format::kI:
        if (*op == Opcode::kJalr) {
          JalrOperands(ops, insn);
          break;
        }
        [[fallthrough]];
      case Format::kShift:
        ops.Expect(3);
        insn.rd = ops.Reg(0), insn.rs1 = ops.Reg(1), insn.imm = ops.Imm(2);
        break;
      case Format::kLoad: {
        ops.Expect(2);
        insn.rd = ops.Reg(0);
        std::tie(insn.imm, insn.rs1) = ops.Mem(1);
        break;
      }
      case Format::kS:
        ops.Expect(2);
        insn.rs2 = ops.Reg(0);
        std::tie(insn.imm, insn.rs1) = ops.Mem(1);
        break;
      case Format::kB:
        ops.Expect(3);
        insn.rs1 = ops.Reg(0), insn.rs2 = ops.Reg(1);
        e.reloc = PendingReloc{RelocKind::kBranch, ops.Target(2), {}};
        break;
      case Format::kU: {
        ops.Expect(2);
        insn.rd = ops.Reg(0);
        int64_t v = ops.Imm(1);
        if (v < 0 && v >= -(1 << 19)) v &= 0xFFFFF;
        insn.imm = v;
        break;
      }
      case Format::kJ:
        if (ops.size() == 1) {
          insn.rd = kRa;
          e.reloc = PendingReloc{RelocKind::kJal, ops.Target(0), {}};
        } else {
          ops.Expect(2);
          insn.rd = ops.Reg(0);
          e.reloc = PendingReloc{RelocKind::kJal, ops.Target(1), {}};
        }
        break;
      case Format::kSystem:
        ops.Expect(0);
        break;
    }
    return e;
  }

  void JalrOperands(const Operands& ops, Instruction& insn) {
    // jalr rs | jalr rd, rs | jalr rd, imm(rs) | jalr rd, rs, imm
    if (ops.size() == 1) {
      insn.rd = kRa, insn.rs1 = ops.Reg(0);
    } else if (ops.size() == 2 && ops.IsMem(1)) {
      insn.rd = ops.Reg(0);
      std::tie(insn.imm, insn.rs1) = ops.Mem(1);
    } else if (ops.size() == 2) {
      insn.rd = ops.Reg(0), insn.rs1 = ops.Reg(1);
    } else {
      ops.Expect(3);
      insn.rd = ops.Reg(0), insn.rs1 = ops.Reg(1), insn.imm = ops.Imm(2);
    }
  }

  void ResolveNumericTargets() {
    for (const NumericTarget& n : numeric_) {
      Fragment& frag = program_.fragments[n.fragment];
      Relocation& r = frag.relocations[n.reloc_index];
      const int64_t target = int64_t{r.offset} + n.delta;
      if (n.delta % 4 != 0 || target < 0 || target > int64_t{frag.size_bytes()}) {
        LineError(n.loc).Fail(1, fmt::format("branch offset {} leaves function '{}'", n.delta, frag.name));
      }
      std::string name;
      for (const auto& [label, offset] : frag.locals) {
        if (offset == target && label.rfind(".Lpc", 0) == 0) name = label;
      }
      if (name.empty()) {
        name = fmt::format(".Lpc{}", synth_++);
        frag.locals[name] = static_cast<uint32_t>(target);
      }
      r.target = name;
    }
  }

  void ResolveLocals(Fragment& frag) {
    for (const Relocation& r : frag.relocations) {
      if (!IsLocalLabel(r.target)) continue;
      auto it = frag.locals.find(r.target);
      const TaggedInsn& site = frag.insns[r.offset / 4];
      if (it == frag.locals.end()) {
        throw Error(ErrorKind::UndefinedSymbol,
                    fmt::format("{}:{}: undefined label '{}' in function '{}'", site.loc.file,
                                site.loc.line, r.target, frag.name));
      }
      if (r.kind == RelocKind::kBranch || r.kind == RelocKind::kJal) {
        Instruction resolved = site.insn;
        resolved.imm = int64_t{it->second} - int64_t{r.offset};
        try {
          Encode(resolved);
          frag.insns[r.offset / 4].insn = resolved;
        } catch (const Error&) {
          // Left for the linker, which reports RelocOutOfRange with addresses.
        }
      }
    }
  }

  void ApplyAttributes() {
    auto apply = [&](const std::map<std::string, SourceLoc>& names, auto setter) {
      for (const auto& [name, loc] : names) {
        auto idx = program_.FindFragment(name);
        if (!idx) {
          if (program_.data.symbols.count(name)) continue;
          throw Error(ErrorKind::UndefinedSymbol,
                      fmt::format("{}:{}: directive names unknown symbol '{}'", loc.file, loc.line, name));
        }
        setter(program_.fragments[*idx].attributes);
      }
    };
    apply(exported_, [](FragmentAttributes& a) { a.exported = true; });
    apply(internal_, [](FragmentAttributes& a) { a.internal = true; });
    for (const std::string& name : la_targets_) {
      if (auto idx = program_.FindFragment(name)) program_.fragments[*idx].attributes.address_taken = true;
    }
    if (program_.fragments.empty()) {
      throw Error(ErrorKind::ParseError, "program defines no functions");
    }
    if (entry_) {
      if (!program_.FindFragment(entry_->first)) {
        throw Error(ErrorKind::UndefinedSymbol,
                    fmt::format("{}:{}: entry '{}' is not a function", entry_->second.file,
                                entry_->second.line, entry_->first));
      }
      program_.entry = entry_->first;
    } else {
      program_.entry = program_.FindFragment("main") ? "main" : program_.fragments.front().name;
    }
  }

  const AssembleOptions& options_;
  Program program_;
  Section section_ = Section::kText;
  std::optional<size_t> current_;
  std::set<std::string> globals_;
  std::map<std::string, SourceLoc> exported_;
  std::map<std::string, SourceLoc> internal_;
  std::set<std::string> la_targets_;
  std::optional<std::pair<std::string, SourceLoc>> entry_;
  std::optional<std::pair<std::string, SourceLoc>> pending_calltype_;
  std::vector<NumericTarget> numeric_;
  uint32_t next_origin_ = 0;
  uint32_t synth_ = 0;
};

}  // namespace

bool IsPseudoMnemonic(std::string_view mnemonic) { return kPseudos.count(mnemonic) > 0; }

Program Assemble(const std::vector<SourceFile>& sources, const AssembleOptions& options) {
  Assembler assembler(options);
  for (const SourceFile& src : sources) assembler.File(src);
  return assembler.Finish();
}

Program Assemble(std::string_view source, const AssembleOptions& options, std::string_view file) {
  return Assemble(std::vector<SourceFile>{{std::string(file), std::string(source)}}, options);
}

PseudoExpansion ExpandPseudo(std::string_view line, uint32_t lineage, uint32_t pair_id,
                             const AssembleOptions& options) {
  const SourceLoc loc{"<pseudo>", 1};
  Statement st = ParseStatement(line, 1, loc);
  if (!kPseudos.count(st.mnemonic.text)) {
    throw Error(ErrorKind::UnsupportedPseudo,
                fmt::format("'{}' is not a pseudo-instruction", st.mnemonic.text));
  }
  PseudoExpansion out;
  uint32_t offset = 0;
  for (Emission& e : ExpandPseudoStatement(st, options, pair_id)) {
    e.insn.lineage = lineage;
    if (e.reloc) {
      Relocation r{e.reloc->kind, offset, "", e.reloc->pair_id};
      if (auto* name = std::get_if<std::string>(&e.reloc->target)) r.target = *name;
      else r.target = fmt::format("{}", std::get<int64_t>(e.reloc->target));
      out.relocations.push_back(r);
    }
    out.insns.push_back(std::move(e.insn));
    offset += 4;
  }
  return out;
}

std::string DisassembleFragment(const Fragment& fragment) {
  std::string out = fragment.name + ":\n";
  for (const TaggedInsn& ti : fragment.insns) {
    out += "    " + Disassemble(ti.insn) + "\n";
  }
  return out;
}

}  // namespace rvtag
