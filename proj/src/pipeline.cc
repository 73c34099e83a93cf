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

#include "rvtag/pipeline.h"

#include <fmt/format.h>

namespace rvtag {

int ExitCodeFor(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UsageError: return kExitUsage;
    case ErrorKind::EquivalenceFailure: return kExitEquivalence;
    default: return kExitBuild;
  }
}

BuildArtifacts BuildProgram(const Program& assembled, const BuildOptions& options) {
  BuildArtifacts out;
  out.baseline_program = assembled;
  LinkOptions base;
  base.max_pair_gap = options.max_pair_gap;
  out.baseline = Link(assembled, base);
  if (!options.config) return out;

  Program tagged = assembled;
  Instrument(tagged, *options.config, options.instrument);
  LinkOptions link;
  link.plan = TagPlan::FromConfig(*options.config);
  link.policy = options.config->policy;
  link.max_pair_gap = options.max_pair_gap;
  out.tagged = Link(tagged, link);
  out.tagged_program = std::move(tagged);
  return out;
}

BuildArtifacts BuildSources(const std::vector<SourceFile>& sources, const AssembleOptions& assemble,
                            const BuildOptions& options) {
  return BuildProgram(Assemble(sources, assemble), options);
}

SizeInfo Sizes(const LinkResult& link) {
  SizeInfo s;
  s.image_text_bytes = link.image.text.size();
  for (const auto& f : link.map.fragments) s.fragment_bytes += f.bytes;
  return s;
}

std::string SizeTable(const BuildArtifacts& build) {
  const SizeInfo base = Sizes(build.baseline);
  std::string out = fmt::format("{:<12}{:>12}{:>12}{:>10}\n", "image", "text bytes", "fragments", "growth");
  out += fmt::format("{:<12}{:>12}{:>12}{:>10}\n", "baseline", base.image_text_bytes, base.fragment_bytes, "-");
  if (build.tagged) {
    const SizeInfo tagged = Sizes(*build.tagged);
    const double growth = base.image_text_bytes == 0
                              ? 0.0
                              : 100.0 * (double(tagged.image_text_bytes) - double(base.image_text_bytes)) /
                                    double(base.image_text_bytes);
    out += fmt::format("{:<12}{:>12}{:>12}{:>9.1f}%\n", "tagged", tagged.image_text_bytes,
                       tagged.fragment_bytes, growth);
  }
  return out;
}

std::optional<std::string> ProgramPoint(const LinkMap& map, uint64_t value) {
  const LinkMap::FragmentMap* owner = nullptr;
  for (const auto& f : map.fragments) {
    if (f.base <= value) owner = &f;
  }
  if (!owner) return std::nullopt;
  if (value >= owner->base + owner->bytes) {
    if (owner == &map.fragments.back() && value > owner->base + owner->bytes) return std::nullopt;
    return fmt::format("{}:end", owner->name);
  }
  const uint64_t rel = value - owner->base;
  const std::string misalign = rel % 4 ? fmt::format("+{}", rel % 4) : "";
  for (size_t w = rel / 4; w < owner->words.size(); ++w) {
    if (owner->words[w].origin) return fmt::format("{}:{}{}", owner->name, *owner->words[w].origin, misalign);
  }
  return fmt::format("{}:end{}", owner->name, misalign);
}

std::string Divergence::Describe() const {
  return fmt::format("first divergence at {}: baseline {} vs tagged {}", location, baseline, tagged);
}

namespace {

bool SameValue(const LinkMap& a_map, uint64_t a, const LinkMap& b_map, uint64_t b) {
  if (a == b) return true;
  const auto pa = ProgramPoint(a_map, a);
  const auto pb = ProgramPoint(b_map, b);
  return pa && pb && *pa == *pb;
}

std::string Show(const LinkMap& map, uint64_t v) {
  const auto point = ProgramPoint(map, v);
  return point ? fmt::format("0x{:x} ({})", v, *point) : fmt::format("0x{:x}", v);
}

}  // namespace

std::optional<Divergence> CompareRuns(const LinkResult& baseline_link, const RunResult& baseline,
                                      const LinkResult& tagged_link, const RunResult& tagged) {
  if (baseline.stop != tagged.stop) {
    return Divergence{"stop", std::string(StopReasonName(baseline.stop)), std::string(StopReasonName(tagged.stop))};
  }
  if (baseline.state.exit_code != tagged.state.exit_code) {
    return Divergence{"exit_code", std::to_string(baseline.state.exit_code), std::to_string(tagged.state.exit_code)};
  }
  const LinkMap& am = baseline_link.map;
  const LinkMap& bm = tagged_link.map;
  for (int r = 1; r < 32; ++r) {
    const uint64_t a = baseline.state.regs[r];
    const uint64_t b = tagged.state.regs[r];
    if (!SameValue(am, a, bm, b)) return Divergence{fmt::format("x{}", r), Show(am, a), Show(bm, b)};
  }
  const Image& ai = baseline_link.image;
  const Image& bi = tagged_link.image;
  if (ai.data.size() != bi.data.size()) {
    return Divergence{"data size", std::to_string(ai.data.size()), std::to_string(bi.data.size())};
  }
  for (size_t off = 0; off < ai.data.size(); off += 8) {
    const int width = static_cast<int>(std::min<size_t>(8, ai.data.size() - off));
    const uint64_t a = baseline.state.memory.Load(ai.data_base + off, width);
    const uint64_t b = tagged.state.memory.Load(bi.data_base + off, width);
    if (!SameValue(am, a, bm, b)) return Divergence{fmt::format("data+0x{:x}", off), Show(am, a), Show(bm, b)};
  }
  if (baseline.output != tagged.output) return Divergence{"output", baseline.output, tagged.output};
  return std::nullopt;
}

DiffOutcome DiffRun(const BuildArtifacts& build, const RunLimits& limits) {
  if (!build.tagged) throw Error(ErrorKind::UsageError, "diff-run needs a tagged build");
  DiffOutcome out;
  out.baseline = Run(build.baseline.image, ExecMode::kCompat, limits);
  out.tagged = Run(build.tagged->image, ExecMode::kCompat, limits);
  out.divergence = CompareRuns(build.baseline, out.baseline, *build.tagged, out.tagged);
  out.report = MakeReport(out.baseline.counters, out.tagged.counters, Sizes(build.baseline), Sizes(*build.tagged));
  return out;
}

nlohmann::json ReportDocument(const std::vector<std::pair<std::string, Report>>& rows) {
  nlohmann::json programs = nlohmann::json::array();
  for (const auto& [name, report] : rows) {
    nlohmann::json row = report.Json();
    row["program"] = name;
    programs.push_back(std::move(row));
  }
  return {{"schema", kReportSchema}, {"programs", programs}};
}

std::vector<std::pair<std::string, Report>> ReportFromJson(const nlohmann::json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kReportSchema) {
      throw Error(ErrorKind::FormatError, fmt::format("unsupported report schema '{}'", doc.at("schema").dump()));
    }
    std::vector<std::pair<std::string, Report>> rows;
    for (const auto& row : doc.at("programs")) {
      auto counters = [](const nlohmann::json& j) {
        return ExecCounters{j.at("retired").get<uint64_t>(), j.at("tag_fetches").get<uint64_t>(),
                            j.at("labels_seen").get<uint64_t>()};
      };
      auto sizes = [](const nlohmann::json& j) {
        return SizeInfo{j.at("image_text_bytes").get<uint64_t>(), j.at("fragment_bytes").get<uint64_t>()};
      };
      const auto& b = row.at("baseline");
      const auto& t = row.at("tagged");
      Report r = MakeReport(counters(b.at("counters")), counters(t.at("counters")), sizes(b.at("size")),
                            sizes(t.at("size")));
      rows.emplace_back(row.at("program").get<std::string>(), r);
    }
    return rows;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, fmt::format("malformed report: {}", e.what()));
  }
}

}  // namespace rvtag
