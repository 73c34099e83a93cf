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

#include "rvtag/tagplan.h"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rvtag/error.h"

namespace rvtag {

std::string_view PolicyName(Policy policy) {
  switch (policy) {
    case Policy::kNone: return "none";
    case Policy::kCfi: return "cfi";
    case Policy::kUnarith: return "unarith";
    case Policy::kCoverage: return "coverage";
  }
  return "?";
}

std::optional<Policy> PolicyFromName(std::string_view name) {
  for (Policy p : {Policy::kNone, Policy::kCfi, Policy::kUnarith, Policy::kCoverage}) {
    if (PolicyName(p) == name) return p;
  }
  return std::nullopt;
}

std::optional<Tag> TagConfig::TagValue(std::string_view name) const {
  for (const auto& [n, v] : tag_names) {
    if (n == name) return v;
  }
  return std::nullopt;
}

bool TagConfig::Declares(Tag value) const {
  return std::any_of(tag_names.begin(), tag_names.end(),
                     [&](const auto& entry) { return entry.second == value; });
}

namespace {

std::string Trimmed(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::optional<int64_t> ToInt(std::string_view s) {
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

[[noreturn]] void Bad(std::string_view origin, int line, std::string_view key, const std::string& why) {
  throw Error(ErrorKind::ConfigError, fmt::format("{}:{}: key '{}': {}", origin, line, key, why));
}

// Tag values each policy's enforcement relies on.
std::vector<std::pair<std::string, Tag>> RequiredTags(Policy policy) {
  switch (policy) {
    case Policy::kNone: return {};
    case Policy::kCfi: return {{"N", 0}, {"CFL", 1}};
    case Policy::kUnarith: return {{"N", 0}, {"UN_ARTH", 1}};
    case Policy::kCoverage: return {{"CL", 0}, {"CI", 1}, {"BCF", 2}, {"N", 3}};
  }
  return {};
}

}  // namespace

TagConfig ParseConfig(std::string_view text, std::string_view origin) {
  std::map<std::string, std::pair<std::string, int>> values;
  static const std::set<std::string> kKeys = {"carrier", "coverage", "labels",
                                              "default_tag", "policy", "tags"};
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (Trimmed(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::ConfigError,
                  fmt::format("{}:{}: expected 'key = value'", origin, line_no));
    }
    const std::string key = Trimmed(std::string_view(line).substr(0, eq));
    const std::string value = Trimmed(std::string_view(line).substr(eq + 1));
    if (!kKeys.count(key)) Bad(origin, line_no, key, "unknown key");
    if (values.count(key)) Bad(origin, line_no, key, "given twice");
    values[key] = {value, line_no};
  }

  TagConfig cfg;
  auto get = [&](const std::string& key) -> const std::pair<std::string, int>* {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  };

  if (auto* v = get("carrier")) {
    auto c = CarrierFromName(v->first);
    if (!c) Bad(origin, v->second, "carrier", "expected lui, addi or custom");
    cfg.carrier = *c;
  }
  if (auto* v = get("coverage")) {
    auto n = ToInt(v->first);
    if (!n) Bad(origin, v->second, "coverage", "expected an integer");
    cfg.coverage = static_cast<int>(*n);
  }
  const auto bits = BitsPerTag(cfg.carrier, cfg.coverage);
  if (!bits) {
    throw Error(ErrorKind::TableNA,
                fmt::format("{}: carrier {} has no coverage-{} layout", origin,
                            CarrierName(cfg.carrier), cfg.coverage));
  }
  cfg.bits_per_tag = *bits;

  if (auto* v = get("labels")) {
    if (v->first == "true" || v->first == "1" || v->first == "yes") cfg.labels_enabled = true;
    else if (v->first == "false" || v->first == "0" || v->first == "no") cfg.labels_enabled = false;
    else Bad(origin, v->second, "labels", "expected true or false");
  }
  if (auto* v = get("policy")) {
    auto p = PolicyFromName(v->first);
    if (!p) Bad(origin, v->second, "policy", "expected none, cfi, unarith or coverage");
    cfg.policy = *p;
  }

  if (auto* v = get("tags")) {
    std::stringstream list(v->first);
    std::string item;
    while (std::getline(list, item, ',')) {
      const auto colon = item.find(':');
      const std::string name = Trimmed(std::string_view(item).substr(0, colon));
      if (colon == std::string::npos || name.empty()) {
        Bad(origin, v->second, "tags", fmt::format("entry '{}' is not name:value", Trimmed(item)));
      }
      auto value = ToInt(Trimmed(std::string_view(item).substr(colon + 1)));
      if (!value || *value < 0) Bad(origin, v->second, "tags", fmt::format("bad value for '{}'", name));
      if (*value >= (int64_t{1} << cfg.bits_per_tag)) {
        Bad(origin, v->second, "tags",
            fmt::format("'{}' = {} does not fit {} bits per tag", name, *value, cfg.bits_per_tag));
      }
      if (cfg.TagValue(name)) Bad(origin, v->second, "tags", fmt::format("'{}' declared twice", name));
      cfg.tag_names.emplace_back(name, static_cast<Tag>(*value));
    }
  } else {
    cfg.tag_names = RequiredTags(cfg.policy);
    if (cfg.tag_names.empty()) cfg.tag_names = {{"N", 0}};
  }
  if (cfg.tag_names.empty()) Bad(origin, 0, "tags", "no tags declared");

  for (const auto& [name, value] : RequiredTags(cfg.policy)) {
    auto declared = cfg.TagValue(name);
    if (!declared || *declared != value) {
      const int line = get("tags") ? get("tags")->second : 0;
      Bad(origin, line, "tags",
          fmt::format("policy {} needs {}:{}", PolicyName(cfg.policy), name, value));
    }
  }

  if (auto* v = get("default_tag")) {
    if (auto named = cfg.TagValue(v->first)) {
      cfg.default_tag = *named;
    } else if (auto n = ToInt(v->first); n && *n >= 0 && cfg.Declares(static_cast<Tag>(*n))) {
      cfg.default_tag = static_cast<Tag>(*n);
    } else {
      Bad(origin, v->second, "default_tag", fmt::format("'{}' is not a declared tag", v->first));
    }
  } else if (auto n = cfg.TagValue("N")) {
    cfg.default_tag = *n;
  } else {
    cfg.default_tag = cfg.tag_names.front().second;
  }
  return cfg;
}

TagConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::ConfigError, fmt::format("cannot open config '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return ParseConfig(ss.str(), path.string());
}

TagPlan TagPlan::FromConfig(const TagConfig& config) {
  return TagPlan{config.carrier, config.coverage, config.bits_per_tag, config.default_tag};
}

uint32_t RemapOffset(uint32_t offset, int coverage) {
  if (offset % 4 != 0) {
    throw Error(ErrorKind::Misaligned, fmt::format("offset {} is not a multiple of 4", offset));
  }
  const uint32_t index = offset / 4;
  const uint32_t n = static_cast<uint32_t>(coverage);
  return offset + 4 * ((index + n - 1) / n);
}

uint32_t InsnOffset(uint32_t offset, int coverage) {
  return RemapOffset(offset + 4, coverage) - 4;
}

uint32_t GroupCount(size_t insn_count, int coverage) {
  return static_cast<uint32_t>((insn_count + coverage - 1) / coverage);
}

uint32_t TaggedBytes(size_t insn_count, int coverage) {
  return static_cast<uint32_t>(4 * (insn_count + GroupCount(insn_count, coverage)));
}

std::vector<uint32_t> TagSlotAddresses(size_t insn_count, int coverage) {
  std::vector<uint32_t> slots;
  const uint32_t groups = GroupCount(insn_count, coverage);
  slots.reserve(groups);
  for (uint32_t g = 0; g < groups; ++g) slots.push_back(4 * (coverage + 1) * g);
  return slots;
}

bool ReachCheck(uint32_t site, uint32_t target, int coverage, ReachKind kind) {
  const int64_t from = InsnOffset(site, coverage);
  const int64_t to = RemapOffset(target, coverage);
  int64_t distance = to - from;
  // One spare instruction in the direction of travel.
  distance += distance >= 0 ? 4 : -4;
  const int64_t limit = kind == ReachKind::kBranch ? 4096 : (1 << 20);
  return distance >= -limit && distance <= limit - 2;
}

}  // namespace rvtag
