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

#include <gtest/gtest.h>

#include "rvtag/corpus.h"
#include "test_util.h"

namespace rvtag {
namespace {

using testing::AssembleFile;
using testing::BuildWith;

TEST(Pipeline, CorpusIsEquivalentUnderTags) {
  const auto corpus = GenerateCorpus(2026, 40);
  for (const auto& c : corpus) {
    const Program p = Assemble(c.source);
    for (const TagConfig& cfg : {testing::CfiConfig(3), testing::CfiConfig(7, false), testing::CoverageConfig(),
                                 testing::Config("coverage = 15\n")}) {
      const DiffOutcome d = DiffRun(BuildWith(p, cfg));
      EXPECT_TRUE(d.baseline.ok()) << c.name << " " << d.baseline.fault;
      EXPECT_FALSE(d.divergence) << c.name << ": " << d.divergence->Describe();
    }
  }
}

TEST(Pipeline, TaggedCorpusPassesAwareEnforcement) {
  for (const auto& c : GenerateCorpus(77, 20)) {
    const auto build = BuildWith(Assemble(c.source), testing::CfiConfig());
    const RunResult aware = rvtag::Run(build.tagged->image, ExecMode::kAware);
    const RunResult base = rvtag::Run(build.baseline.image, ExecMode::kCompat);
    EXPECT_EQ(aware.stop, StopReason::kExit) << c.name;
    EXPECT_EQ(aware.state.exit_code, base.state.exit_code) << c.name;
  }
}

TEST(Pipeline, CorruptedCarrierIsCaught) {
  auto build = BuildWith(AssembleFile("sum10.s"), testing::Config("coverage = 3\n"));
  Image& image = build.tagged->image;
  // Turn the first carrier into `lui ra, 1`, which a compat core executes.
  const uint32_t lui_ra = 0x000010B7;
  for (int b = 0; b < 4; ++b) image.text[b] = static_cast<uint8_t>(lui_ra >> (8 * b));
  const DiffOutcome d = DiffRun(build);
  ASSERT_TRUE(d.divergence);
  EXPECT_EQ(d.divergence->location, "x1");
}

TEST(Pipeline, SingleInstructionDoublesDynamicCount) {
  const DiffOutcome d = DiffRun(BuildWith(AssembleFile("empty.s"), testing::Config("coverage = 3\n")));
  EXPECT_EQ(d.baseline.counters.total(), 1u);
  EXPECT_EQ(d.tagged.counters.total(), 2u);
  EXPECT_DOUBLE_EQ(d.report.dynamic_overhead_pct, 100.0);
}

TEST(Pipeline, ProgramPointsIgnoreLayout) {
  const auto build = BuildWith(AssembleFile("fib.s"), testing::CfiConfig());
  const LinkMap& a = build.baseline.map;
  const LinkMap& b = build.tagged->map;
  EXPECT_EQ(ProgramPoint(a, a.symbols.at("fib")), ProgramPoint(b, b.symbols.at("fib")));
  EXPECT_FALSE(ProgramPoint(a, 0x10));
  EXPECT_FALSE(ProgramPoint(a, build.baseline.image.text_end() + 64));
}

TEST(Pipeline, ReportJsonRoundTrip) {
  std::vector<std::pair<std::string, Report>> rows;
  for (const char* f : {"sum10.s", "fib.s"}) {
    rows.emplace_back(f, DiffRun(BuildWith(AssembleFile(f), testing::CfiConfig())).report);
  }
  const auto doc = ReportDocument(rows);
  EXPECT_EQ(doc.at("schema"), std::string(kReportSchema));
  const auto back = ReportFromJson(nlohmann::json::parse(doc.dump()));
  ASSERT_EQ(back.size(), rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].first, rows[i].first);
    EXPECT_EQ(back[i].second.tagged, rows[i].second.tagged);
    EXPECT_DOUBLE_EQ(back[i].second.dynamic_overhead_pct, rows[i].second.dynamic_overhead_pct);
  }
  auto wrong = doc;
  wrong["schema"] = "rvtag-report/0";
  EXPECT_THROW(ReportFromJson(wrong), Error);
  EXPECT_THROW(ReportFromJson(nlohmann::json{{"schema", std::string(kReportSchema)}}), Error);
}

TEST(Pipeline, BuildsAreDeterministic) {
  EXPECT_EQ(GenerateCorpus(9, 5)[3].source, GenerateCorpus(9, 5)[3].source);
  EXPECT_NE(GenerateProgram(1).source, GenerateProgram(2).source);
  for (const auto& c : GenerateCorpus(9, 5)) {
    const auto a = BuildWith(Assemble(c.source), testing::CoverageConfig());
    const auto b = BuildWith(Assemble(c.source), testing::CoverageConfig());
    EXPECT_EQ(SerializeImage(a.tagged->image), SerializeImage(b.tagged->image));
    EXPECT_EQ(DiffRun(a).report.Json(), DiffRun(b).report.Json());
  }
}

TEST(Pipeline, ExitCodes) {
  EXPECT_EQ(ExitCodeFor(ErrorKind::UsageError), kExitUsage);
  EXPECT_EQ(ExitCodeFor(ErrorKind::TableNA), kExitBuild);
  EXPECT_EQ(ExitCodeFor(ErrorKind::PairTooFar), kExitBuild);
  EXPECT_EQ(ExitCodeFor(ErrorKind::EquivalenceFailure), kExitEquivalence);
}

}  // namespace
}  // namespace rvtag
