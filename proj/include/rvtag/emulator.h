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

// RV64I (+mul) interpreter over RVTI images.
//
// Compat mode executes every word architecturally, carriers included, the
// way a tag-unaware core would. Aware mode consumes the carrier at each tag
// slot into a tag window and enforces the image's policy.
//
// Environment calls: a7=93 or a7=0 exits with code a0, a7=64 appends the low
// byte of a0 to the captured output.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "rvtag/codec.h"
#include "rvtag/emitlink.h"
#include "rvtag/tagplan.h"

namespace rvtag {

inline constexpr uint64_t kStackTop = 0x7FFFF000;
inline constexpr uint64_t kDefaultMaxRetired = 100'000'000;

class Memory {
 public:
  static constexpr uint64_t kPageSize = 4096;

  uint8_t Load8(uint64_t addr) const;
  void Store8(uint64_t addr, uint8_t value);
  uint64_t Load(uint64_t addr, int size) const;
  void Store(uint64_t addr, int size, uint64_t value);
  std::vector<uint8_t> Read(uint64_t addr, size_t size) const;
  void Write(uint64_t addr, const std::vector<uint8_t>& bytes);

  bool operator==(const Memory& other) const;

 private:
  using Page = std::array<uint8_t, kPageSize>;
  std::unordered_map<uint64_t, Page> pages_;
};

struct MachineState {
  uint64_t pc = 0;
  std::array<uint64_t, 32> regs{};
  Memory memory;
  bool halted = false;
  int64_t exit_code = 0;
};

struct ExecCounters {
  uint64_t retired = 0;
  uint64_t tag_fetches = 0;
  uint64_t labels_seen = 0;

  uint64_t total() const { return retired + tag_fetches; }
  friend bool operator==(const ExecCounters&, const ExecCounters&) = default;
};

enum class ExecMode : uint8_t { kCompat, kAware };

std::string_view ExecModeName(ExecMode mode);
std::optional<ExecMode> ExecModeFromName(std::string_view name);

enum class ViolationKind : uint8_t {
  kCfiMismatch,
  kCfiMissingSiteLabel,
  kCfiMissingEntryLabel,
  kUnsignedOverflow,
};

std::string_view ViolationKindName(ViolationKind kind);

struct PolicyViolation {
  ViolationKind kind;
  uint64_t pc = 0;
  std::string detail;
};

struct PolicyState {
  Policy mode = Policy::kNone;
  std::optional<uint32_t> pending_cfl;
  // Label the next executed non-tag instruction must carry, after a
  // labelled computed jump.
  std::optional<uint32_t> expect_landing;
  // Registers whose current value came from auipc; a jalr through one of
  // them is a direct (pc-relative) transfer.
  std::array<bool, 32> pc_relative{};
  std::map<uint64_t, uint64_t> ci_counts;
  std::map<uint64_t, std::map<uint64_t, uint64_t>> bcf;
};

enum class StopReason : uint8_t { kExit, kBreakpoint, kPolicyViolation, kLimitExceeded, kBadInstruction, kMemFault };

std::string_view StopReasonName(StopReason reason);

struct RunLimits {
  uint64_t max_retired = kDefaultMaxRetired;
};

struct RunResult {
  MachineState state;
  ExecCounters counters;
  PolicyState policy;
  StopReason stop = StopReason::kExit;
  std::optional<PolicyViolation> violation;
  std::string fault;   // detail for BadInstruction / MemFault / LimitExceeded
  std::string output;  // bytes written through a7=64

  bool ok() const { return stop == StopReason::kExit; }
};

RunResult Run(const Image& image, ExecMode mode, const RunLimits& limits = {});

// Policy hooks, exposed for testing. They run before the instruction
// executes; a violation means the instruction does not commit.
std::optional<PolicyViolation> EnforceCfi(PolicyState& policy, const Instruction& insn, Tag tag,
                                          uint64_t pc, bool is_label);
std::optional<PolicyViolation> EnforceUnarith(const MachineState& state, const Instruction& insn,
                                              Tag tag);
// Runs after the instruction commits, once the next pc is known.
void TrackCoverage(MachineState& state, PolicyState& policy, const Instruction& insn, Tag tag,
                   uint64_t pc, uint64_t next_pc, bool is_label);

// {"cl": [{"addr", "count"}], "ci": {...}, "bcf": {pc: {next: count}}},
// addresses as lowercase hex strings. CL counts are read from the final
// text image.
nlohmann::json CoverageJson(const Image& image, const RunResult& result);

struct SizeInfo {
  uint64_t image_text_bytes = 0;
  uint64_t fragment_bytes = 0;  // sum of fragment sizes, no alignment padding
};

struct Report {
  ExecCounters baseline;
  ExecCounters tagged;
  SizeInfo baseline_size;
  SizeInfo tagged_size;
  double dynamic_overhead_pct = 0;
  double static_overhead_pct = 0;  // on fragment bytes, before alignment
  double image_growth_pct = 0;     // on whole-image text, with alignment

  std::string Text() const;
  std::string MachineLines() const;
  nlohmann::json Json() const;
};

Report MakeReport(const ExecCounters& baseline, const ExecCounters& tagged,
                  const SizeInfo& baseline_size, const SizeInfo& tagged_size);

}  // namespace rvtag
