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

#include "rvtag/emitlink.h"

#include <fmt/format.h>

#include <fstream>
#include <iterator>

#include "rvtag/error.h"

namespace rvtag {

namespace {

uint64_t AlignUp(uint64_t value, uint64_t alignment) {
  return (value + alignment - 1) / alignment * alignment;
}

int64_t SignExtend32(uint64_t v) { return static_cast<int32_t>(static_cast<uint32_t>(v)); }

}  // namespace

std::vector<TaggedWord> EmitTags(std::span<const InsnWord> words, std::span<const Tag> tags,
                                 const TagPlan& plan) {
  std::vector<TaggedWord> out;
  const size_t n = static_cast<size_t>(plan.coverage);
  out.reserve(words.size() + GroupCount(words.size(), plan.coverage));
  for (size_t start = 0; start < words.size(); start += n) {
    TagPack pack{plan.coverage, plan.bits_per_tag, std::vector<uint32_t>(n, plan.default_tag)};
    for (size_t i = start; i < std::min(words.size(), start + n); ++i) pack.tags[i - start] = tags[i];
    out.push_back({PackTags(plan.carrier, pack), true});
    for (size_t i = start; i < std::min(words.size(), start + n); ++i) out.push_back({words[i], false});
  }
  return out;
}

std::vector<TaggedWord> EmitTags(const Fragment& fragment, const TagPlan& plan) {
  std::vector<InsnWord> words;
  std::vector<Tag> tags;
  for (const TaggedInsn& ti : fragment.insns) {
    words.push_back(Encode(ti.insn));
    tags.push_back(ti.tag.value_or(plan.default_tag));
  }
  return EmitTags(words, tags, plan);
}

Layout AdjustSymbols(const Program& program, const std::optional<TagPlan>& plan,
                     uint64_t text_base, uint64_t data_base) {
  Layout layout;
  uint64_t cursor = text_base;
  for (const Fragment& frag : program.fragments) {
    Layout::FragmentPlacement p;
    p.base = AlignUp(cursor, kFunctionAlignment);
    p.bytes = plan ? TaggedBytes(frag.insns.size(), plan->coverage) : frag.size_bytes();
    for (const auto& [name, offset] : frag.locals) {
      p.locals[name] = p.base + (plan ? RemapOffset(offset, plan->coverage) : offset);
    }
    p.insn_addrs.reserve(frag.insns.size());
    for (size_t i = 0; i < frag.insns.size(); ++i) {
      const auto offset = static_cast<uint32_t>(4 * i);
      p.insn_addrs.push_back(p.base + (plan ? InsnOffset(offset, plan->coverage) : offset));
    }
    layout.symbols[frag.name] = p.base;
    cursor = p.base + p.bytes;
    layout.fragments.push_back(std::move(p));
  }
  layout.text_end = cursor;
  layout.data_base = std::max(data_base, AlignUp(cursor, 0x1000));
  for (const auto& [name, offset] : program.data.symbols) {
    layout.symbols[name] = layout.data_base + offset;
  }
  return layout;
}

namespace {

std::string Where(const TaggedInsn& ti) {
  return ti.loc.file.empty() ? std::string("<generated>") : fmt::format("{}:{}", ti.loc.file, ti.loc.line);
}

uint64_t ResolveTarget(const Layout& layout, size_t f, const Fragment& frag, const Relocation& r) {
  const auto& locals = layout.fragments[f].locals;
  if (auto it = locals.find(r.target); it != locals.end()) return it->second;
  if (auto it = layout.symbols.find(r.target); it != layout.symbols.end()) return it->second;
  throw Error(ErrorKind::UndefinedSymbol,
              fmt::format("{}: undefined symbol '{}' referenced from '{}'",
                          Where(frag.insns[r.offset / 4]), r.target, frag.name));
}

void Resolve(const Program& program, const Layout& layout, const LinkOptions& options,
             std::vector<std::vector<Instruction>>& out) {
  for (size_t f = 0; f < program.fragments.size(); ++f) {
    const Fragment& frag = program.fragments[f];
    const auto& addrs = layout.fragments[f].insn_addrs;
    std::vector<Instruction>& insns = out[f];
    for (const Relocation& r : frag.relocations) {
      const size_t index = r.offset / 4;
      const TaggedInsn& ti = frag.insns[index];
      const uint64_t site = addrs[index];
      const uint64_t target = ResolveTarget(layout, f, frag, r);
      const int64_t delta = static_cast<int64_t>(target - site);
      Instruction& insn = insns[index];
      switch (r.kind) {
        case RelocKind::kBranch:
        case RelocKind::kJal: {
          const int64_t limit = r.kind == RelocKind::kBranch ? 4096 : (1 << 20);
          if (delta < -limit || delta > limit - 2) {
            throw Error(ErrorKind::RelocOutOfRange,
                        fmt::format("{}: {} from 0x{:x} to '{}' at 0x{:x} spans {} bytes "
                                    "(limit +/-{}); use call for far targets",
                                    Where(ti), RelocKindName(r.kind), site, r.target, target,
                                    delta, limit));
          }
          insn.imm = delta;
          break;
        }
        case RelocKind::kHi20: {
          if (delta < INT32_MIN || delta > INT32_MAX - 0x800) {
            throw Error(ErrorKind::RelocOutOfRange,
                        fmt::format("{}: '{}' is out of auipc range", Where(ti), r.target));
          }
          insn.imm = ((delta + 0x800) >> 12) & 0xFFFFF;
          break;
        }
        case RelocKind::kLo12I: {
          const Relocation* hi = nullptr;
          for (const Relocation& cand : frag.relocations) {
            if (cand.kind == RelocKind::kHi20 && cand.pair_id == r.pair_id) hi = &cand;
          }
          if (!hi || hi->offset >= r.offset) {
            throw Error(ErrorKind::LinkError,
                        fmt::format("{}: LO12_I without a preceding HI20 partner", Where(ti)));
          }
          const uint64_t hi_site = addrs[hi->offset / 4];
          const uint64_t between = (site - hi_site) / 4 - 1;
          if (between > options.max_pair_gap) {
            throw Error(ErrorKind::PairTooFar,
                        fmt::format("{}: {} instructions between HI20 and LO12_I for '{}' (max {})",
                                    Where(ti), between, r.target, options.max_pair_gap));
          }
          const int64_t pair_delta = static_cast<int64_t>(target - hi_site);
          const int64_t hi20 = ((pair_delta + 0x800) >> 12) & 0xFFFFF;
          insn.imm = pair_delta - SignExtend32(static_cast<uint64_t>(hi20) << 12);
          break;
        }
      }
    }
  }
}

}  // namespace

LinkResult Link(const Program& program, const LinkOptions& options) {
  if (!program.FindFragment(program.entry)) {
    throw Error(ErrorKind::UndefinedSymbol, fmt::format("entry '{}' is not defined", program.entry));
  }
  const Layout layout = AdjustSymbols(program, options.plan, options.text_base, options.data_base);

  std::vector<std::vector<Instruction>> resolved(program.fragments.size());
  for (size_t f = 0; f < program.fragments.size(); ++f) {
    for (const TaggedInsn& ti : program.fragments[f].insns) resolved[f].push_back(ti.insn);
  }
  Resolve(program, layout, options, resolved);

  LinkResult result;
  Image& image = result.image;
  LinkMap& map = result.map;
  image.text_base = options.text_base;
  image.data_base = layout.data_base;
  image.data = program.data.bytes;
  image.entry = layout.symbols.at(program.entry);
  map.symbols = layout.symbols;

  const TagPlan default_plan{};
  const Tag default_tag = options.plan ? options.plan->default_tag : default_plan.default_tag;
  image.text.resize(layout.text_end - options.text_base, 0);
  for (size_t f = 0; f < program.fragments.size(); ++f) {
    const Fragment& frag = program.fragments[f];
    const auto& placement = layout.fragments[f];
    std::vector<InsnWord> words;
    std::vector<Tag> tags;
    for (size_t i = 0; i < frag.insns.size(); ++i) {
      try {
        words.push_back(Encode(resolved[f][i]));
      } catch (const Error& e) {
        throw Error(ErrorKind::RelocOutOfRange, fmt::format("{}: {}", Where(frag.insns[i]), e.what()));
      }
      tags.push_back(frag.insns[i].tag.value_or(default_tag));
    }

    std::vector<TaggedWord> emitted;
    if (options.plan) {
      emitted = EmitTags(words, tags, *options.plan);
      image.tag_regions.push_back({placement.base, GroupCount(words.size(), options.plan->coverage),
                                   static_cast<uint8_t>(options.plan->coverage), options.plan->carrier});
    } else {
      for (InsnWord w : words) emitted.push_back({w, false});
    }
    if (emitted.size() * 4 != placement.bytes) {
      throw Error(ErrorKind::LinkError, fmt::format("size law violated for '{}'", frag.name));
    }

    LinkMap::FragmentMap fm{frag.name, placement.base, placement.bytes, frag.insns.size(), {}};
    size_t next_insn = 0;
    for (size_t w = 0; w < emitted.size(); ++w) {
      const uint64_t addr = placement.base + 4 * w;
      const uint64_t at = addr - options.text_base;
      for (int b = 0; b < 4; ++b) image.text[at + b] = static_cast<uint8_t>(emitted[w].word >> (8 * b));
      LinkMap::Word word{addr, emitted[w].is_carrier, false, std::nullopt, 0};
      if (!emitted[w].is_carrier) {
        const TaggedInsn& ti = frag.insns[next_insn];
        // Placement: instruction at untagged offset o lands at base + InsnOffset(o).
        if (addr != placement.insn_addrs[next_insn]) {
          throw Error(ErrorKind::LinkError,
                      fmt::format("placement mismatch in '{}' at instruction {}", frag.name, next_insn));
        }
        word.is_label = ti.is_label;
        word.origin = ti.origin;
        word.tag = tags[next_insn];
        if (ti.is_label) map.labels.push_back({addr, word.tag, ti.label_value.value_or(0)});
        ++next_insn;
      }
      fm.words.push_back(word);
    }
    map.fragments.push_back(std::move(fm));
  }

  uint16_t flags = 0;
  if (options.plan) {
    flags |= 1;
    if (Carrier(options.plan->carrier).backward_compatible) flags |= 2;
  } else {
    flags |= 2;
  }
  flags |= static_cast<uint16_t>(static_cast<uint16_t>(options.policy) << 2);
  image.flags = flags;
  return result;
}

// --- RVTI serialization -----------------------------------------------------

namespace {

class Writer {
 public:
  template <typename T>
  void Put(T value) {
    for (size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<uint8_t>(uint64_t(value) >> (8 * i)));
  }
  void Bytes(const std::vector<uint8_t>& b) { bytes.insert(bytes.end(), b.begin(), b.end()); }
  std::vector<uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}
  template <typename T>
  T Get() {
    Need(sizeof(T));
    uint64_t v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  std::vector<uint8_t> Bytes(size_t n) {
    Need(n);
    std::vector<uint8_t> out(bytes_.begin() + pos_, bytes_.begin() + pos_ + n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw Error(ErrorKind::FormatError, fmt::format("image truncated at byte {}", pos_));
    }
  }
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> SerializeImage(const Image& image) {
  Writer w;
  w.Bytes({'R', 'V', 'T', 'I'});
  w.Put<uint16_t>(kImageVersion);
  w.Put<uint16_t>(image.flags);
  w.Put<uint64_t>(image.entry);
  w.Put<uint64_t>(image.text_base);
  w.Put<uint32_t>(static_cast<uint32_t>(image.text.size()));
  w.Bytes(image.text);
  w.Put<uint64_t>(image.data_base);
  w.Put<uint32_t>(static_cast<uint32_t>(image.data.size()));
  w.Bytes(image.data);
  w.Put<uint32_t>(static_cast<uint32_t>(image.tag_regions.size()));
  for (const TagRegion& r : image.tag_regions) {
    w.Put<uint64_t>(r.start);
    w.Put<uint32_t>(r.group_count);
    w.Put<uint8_t>(r.coverage);
    w.Put<uint8_t>(static_cast<uint8_t>(r.carrier));
    w.Put<uint16_t>(0);
  }
  return std::move(w.bytes);
}

Image DeserializeImage(std::span<const uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.Bytes(4);
  if (magic != std::vector<uint8_t>{'R', 'V', 'T', 'I'}) {
    throw Error(ErrorKind::FormatError, "bad magic, not an RVTI image");
  }
  const auto version = r.Get<uint16_t>();
  if (version != kImageVersion) {
    throw Error(ErrorKind::FormatError, fmt::format("unsupported RVTI version {}", version));
  }
  Image image;
  image.flags = r.Get<uint16_t>();
  image.entry = r.Get<uint64_t>();
  image.text_base = r.Get<uint64_t>();
  image.text = r.Bytes(r.Get<uint32_t>());
  image.data_base = r.Get<uint64_t>();
  image.data = r.Bytes(r.Get<uint32_t>());
  const auto regions = r.Get<uint32_t>();
  for (uint32_t i = 0; i < regions; ++i) {
    TagRegion region;
    region.start = r.Get<uint64_t>();
    region.group_count = r.Get<uint32_t>();
    region.coverage = r.Get<uint8_t>();
    const auto carrier = r.Get<uint8_t>();
    r.Get<uint16_t>();
    if (carrier > 2 || !BitsPerTag(static_cast<CarrierKind>(carrier), region.coverage)) {
      throw Error(ErrorKind::FormatError, fmt::format("region {} has an invalid carrier/coverage", i));
    }
    region.carrier = static_cast<CarrierKind>(carrier);
    image.tag_regions.push_back(region);
  }
  if (!r.done()) throw Error(ErrorKind::FormatError, "trailing bytes after image");
  if (image.text.size() % 4 != 0 || image.text_base % 4 != 0) {
    throw Error(ErrorKind::FormatError, "text is not word aligned");
  }
  if (image.entry < image.text_base || image.entry >= image.text_end()) {
    throw Error(ErrorKind::FormatError, "entry lies outside text");
  }
  return image;
}

void WriteImage(const Image& image, const std::filesystem::path& path) {
  const auto bytes = SerializeImage(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot write '{}'", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image ReadImage(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, fmt::format("cannot read '{}'", path.string()));
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DeserializeImage(bytes);
}

}  // namespace rvtag
