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

#include "rvtag/instrument.h"

#include <fmt/format.h>

#include <algorithm>
#include <bitset>
#include <functional>
#include <map>
#include <set>

#include "rvtag/error.h"

namespace rvtag {

namespace {

TaggedInsn& At(Program& program, InsnRef ref) {
  if (ref.fragment >= program.fragments.size() ||
      ref.index >= program.fragments[ref.fragment].insns.size()) {
    throw Error(ErrorKind::InvalidRef,
                fmt::format("no instruction {} in fragment {}", ref.index, ref.fragment));
  }
  return program.fragments[ref.fragment].insns[ref.index];
}

Tag Required(const TagConfig& config, std::string_view name) {
  auto value = config.TagValue(name);
  if (!value) {
    throw Error(ErrorKind::UnknownTag,
                fmt::format("policy {} needs tag '{}'", PolicyName(config.policy), name));
  }
  return *value;
}

bool IsLabelWith(const TaggedInsn& ti, uint32_t value) {
  return ti.is_label && ti.label_value == value;
}

}  // namespace

void SetTag(Program& program, const TagConfig& config, InsnRef ref, Tag tag) {
  TaggedInsn& ti = At(program, ref);
  if (!config.Declares(tag)) {
    throw Error(ErrorKind::UnknownTag, fmt::format("tag value {} is not declared", tag));
  }
  if (ti.tag == tag) return;  // keeps the original set order, so passes stay idempotent
  ti.tag = tag;
  ti.set_order = program.next_set_order++;
}

Tag GetTag(const Program& program, const TagConfig& config, InsnRef ref) {
  const TaggedInsn& ti = At(const_cast<Program&>(program), ref);
  return ti.tag.value_or(config.default_tag);
}

void PropagateLineage(Program& program) {
  for (Fragment& frag : program.fragments) {
    std::map<uint32_t, const TaggedInsn*> first;
    for (const TaggedInsn& ti : frag.insns) {
      if (!ti.lineage || !ti.tag) continue;
      auto [it, inserted] = first.try_emplace(*ti.lineage, &ti);
      if (!inserted && ti.set_order < it->second->set_order) it->second = &ti;
    }
    std::map<uint32_t, std::pair<Tag, uint64_t>> winner;
    for (const auto& [lineage, ti] : first) winner[lineage] = {*ti->tag, ti->set_order};
    for (TaggedInsn& ti : frag.insns) {
      if (!ti.lineage) continue;
      auto it = winner.find(*ti.lineage);
      if (it == winner.end()) continue;
      ti.tag = it->second.first;
      ti.set_order = it->second.second;
    }
  }
}

void InsertLabel(Program& program, size_t fragment, size_t position, uint32_t label_value, Tag tag) {
  if (fragment >= program.fragments.size() ||
      position > program.fragments[fragment].insns.size()) {
    throw Error(ErrorKind::InvalidRef,
                fmt::format("no insertion point {} in fragment {}", position, fragment));
  }
  TaggedInsn label;
  label.insn = Decode(LabelWord(label_value));  // throws LabelOverflow
  label.is_label = true;
  label.label_value = label_value;
  label.tag = tag;
  label.set_order = program.next_set_order++;

  Fragment& frag = program.fragments[fragment];
  const uint32_t at = static_cast<uint32_t>(position * 4);
  if (position < frag.insns.size()) label.loc = frag.insns[position].loc;
  frag.insns.insert(frag.insns.begin() + static_cast<std::ptrdiff_t>(position), std::move(label));
  for (Relocation& r : frag.relocations) {
    if (r.offset >= at) r.offset += 4;
  }
  for (auto& [name, offset] : frag.locals) {
    if (offset > at) offset += 4;
  }
}

uint32_t SignatureLabel(std::string_view signature) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : signature) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  const uint32_t folded = static_cast<uint32_t>((h ^ (h >> 20) ^ (h >> 40) ^ (h >> 60)) & 0xFFFFF);
  return folded == 0 ? 1 : folded;
}

bool IsComputedJalr(const Fragment& fragment, size_t index) {
  if (fragment.insns[index].insn.op != Opcode::kJalr) return false;
  const Relocation* r = fragment.RelocationAt(static_cast<uint32_t>(index * 4));
  return r == nullptr || r->kind != RelocKind::kLo12I;
}

bool IsReturn(const Instruction& insn) {
  return insn.op == Opcode::kJalr && insn.rd == 0 && insn.rs1 == 1 && insn.imm == 0;
}

namespace {

bool NeedsEntryLabel(const FragmentAttributes& a) {
  return !a.internal && (a.exported || a.address_taken);
}

// Inserts labels at the given positions, highest first so earlier positions
// stay valid.
void InsertAll(Program& program, size_t fragment, std::vector<std::pair<size_t, uint32_t>> sites,
               Tag tag) {
  std::sort(sites.begin(), sites.end(), std::greater<>());
  sites.erase(std::unique(sites.begin(), sites.end()), sites.end());
  for (const auto& [position, value] : sites) InsertLabel(program, fragment, position, value, tag);
}

}  // namespace

void PassCfi(Program& program, const TagConfig& config, const InstrumentOptions& options) {
  const Tag cfl = Required(config, "CFL");
  if (!config.labels_enabled) return;

  for (size_t f = 0; f < program.fragments.size(); ++f) {
    const Fragment& frag = program.fragments[f];
    const FragmentAttributes& attrs = frag.attributes;
    std::vector<std::pair<size_t, uint32_t>> sites;

    if (NeedsEntryLabel(attrs)) {
      if (attrs.signature.empty()) {
        throw Error(ErrorKind::MissingSignature,
                    fmt::format("function '{}' needs a .signature for its CFI entry label", frag.name));
      }
      const uint32_t value = SignatureLabel(attrs.signature);
      if (frag.insns.empty() || !IsLabelWith(frag.insns[0], value)) sites.emplace_back(0, value);
    }

    for (size_t i = 0; i < frag.insns.size(); ++i) {
      const TaggedInsn& ti = frag.insns[i];
      if (ti.insn.op != Opcode::kJalr || IsReturn(ti.insn)) continue;
      std::optional<uint32_t> value;
      if (IsComputedJalr(frag, i)) {
        if (!ti.calltype) {
          throw Error(ErrorKind::MissingSignature,
                      fmt::format("{}:{}: indirect callsite in '{}' has no .calltype", ti.loc.file,
                                  ti.loc.line, frag.name));
        }
        value = SignatureLabel(*ti.calltype);
      } else if (options.label_direct_calls) {
        const Relocation* lo = frag.RelocationAt(static_cast<uint32_t>(i * 4));
        auto callee = program.FindFragment(lo->target);
        if (callee && NeedsEntryLabel(program.fragments[*callee].attributes) &&
            !program.fragments[*callee].attributes.signature.empty()) {
          value = SignatureLabel(program.fragments[*callee].attributes.signature);
        }
      }
      if (value && (i == 0 || !IsLabelWith(frag.insns[i - 1], *value))) sites.emplace_back(i, *value);
    }
    InsertAll(program, f, std::move(sites), cfl);
  }
}

void PassUnarith(Program& program, const TagConfig& config) {
  const Tag un_arth = Required(config, "UN_ARTH");
  for (size_t f = 0; f < program.fragments.size(); ++f) {
    const Fragment& frag = program.fragments[f];
    std::set<uint32_t> block_starts;
    for (const auto& [name, offset] : frag.locals) block_starts.insert(offset / 4);

    // Registers holding values the pass can see are literals.
    std::bitset<32> constant;
    std::vector<size_t> checked;
    for (size_t i = 0; i < frag.insns.size(); ++i) {
      if (block_starts.count(static_cast<uint32_t>(i))) constant.reset();
      constant.set(0);
      const TaggedInsn& ti = frag.insns[i];
      const Instruction& in = ti.insn;
      const Opcode op = in.op;

      const bool arith = op == Opcode::kAdd || op == Opcode::kSub || op == Opcode::kAddw ||
                         op == Opcode::kSubw || op == Opcode::kAddi || op == Opcode::kAddiw;
      const bool two_reg = op == Opcode::kAdd || op == Opcode::kSub || op == Opcode::kAddw ||
                           op == Opcode::kSubw;
      const bool literal_only = constant[in.rs1] && (!two_reg || constant[in.rs2]);
      if (arith && ti.annotations.is_unsigned && !ti.annotations.optout && !literal_only) {
        checked.push_back(i);
      }

      // Track literal values through the block.
      const Format fmt_kind = Info(op).format;
      const bool writes_rd = fmt_kind == Format::kR || fmt_kind == Format::kI ||
                             fmt_kind == Format::kShift || fmt_kind == Format::kLoad ||
                             fmt_kind == Format::kU || fmt_kind == Format::kJ;
      if (writes_rd && in.rd != 0) {
        bool lit = false;
        if (op == Opcode::kLui) lit = true;
        else if (fmt_kind == Format::kI && op != Opcode::kJalr) lit = constant[in.rs1];
        else if (fmt_kind == Format::kShift) lit = constant[in.rs1];
        else if (fmt_kind == Format::kR) lit = constant[in.rs1] && constant[in.rs2];
        constant.set(in.rd, lit);
      }
      if (IsControlTransfer(op)) constant.reset();
    }
    for (size_t i : checked) SetTag(program, config, {f, i}, un_arth);
  }
}

void PassCoverage(Program& program, const TagConfig& config, CoverageMode mode) {
  if (config.coverage != 7) {
    throw Error(ErrorKind::ConfigMismatch,
                fmt::format("coverage tracking needs coverage 7, config has {}", config.coverage));
  }
  const Tag cl = Required(config, "CL");
  const Tag ci = Required(config, "CI");
  const Tag bcf = Required(config, "BCF");
  Required(config, "N");

  for (size_t f = 0; f < program.fragments.size(); ++f) {
    if (config.labels_enabled) {
      const Fragment& frag = program.fragments[f];
      std::set<size_t> leaders = {0};
      for (const Relocation& r : frag.relocations) {
        if (auto it = frag.locals.find(r.target); it != frag.locals.end()) leaders.insert(it->second / 4);
      }
      for (size_t i = 0; i < frag.insns.size(); ++i) {
        if (IsControlTransfer(frag.insns[i].insn.op)) leaders.insert(i + 1);
      }
      std::vector<std::pair<size_t, uint32_t>> sites;
      for (size_t leader : leaders) {
        if (leader >= frag.insns.size()) continue;
        const TaggedInsn& ti = frag.insns[leader];
        if (ti.is_label && ti.tag == cl) continue;
        sites.emplace_back(leader, 0);
      }
      InsertAll(program, f, std::move(sites), cl);
    }

    const Fragment& frag = program.fragments[f];
    std::map<size_t, Tag> sets;
    for (size_t i = 0; i < frag.insns.size(); ++i) {
      const TaggedInsn& ti = frag.insns[i];
      if (ti.is_label) continue;
      if (ti.annotations.count) sets[i] = ci;
      const bool branchy = mode == CoverageMode::kAllBranches ? IsControlTransfer(ti.insn.op)
                                                              : IsComputedJalr(frag, i);
      if (branchy) sets[i] = bcf;
    }
    for (const auto& [i, tag] : sets) SetTag(program, config, {f, i}, tag);
  }
}

void Instrument(Program& program, const TagConfig& config, const InstrumentOptions& options) {
  switch (config.policy) {
    case Policy::kNone: break;
    case Policy::kCfi: PassCfi(program, config, options); break;
    case Policy::kUnarith: PassUnarith(program, config); break;
    case Policy::kCoverage: PassCoverage(program, config, options.coverage_mode); break;
  }
  PropagateLineage(program);
}

}  // namespace rvtag
