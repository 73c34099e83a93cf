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

#include <random>

#include "test_util.h"

namespace rvtag {
namespace {

// Brute force: lay out the tagged stream word by word and record where each
// untagged program point lands. A point on a group boundary is the carrier.
std::vector<uint32_t> SimulateLayout(size_t insns, int coverage) {
  std::vector<uint32_t> point(insns + 1);
  uint32_t out = 0;
  for (size_t i = 0; i < insns; ++i) {
    point[i] = out;
    if (i % coverage == 0) out += 4;  // carrier
    out += 4;
  }
  point[insns] = out;
  return point;
}

TEST(TagPlan, ParsesConfig) {
  const TagConfig c = testing::Config("# sample\ncarrier = lui\ncoverage = 7\npolicy = cfi\nlabels = false\n");
  EXPECT_EQ(c.carrier, CarrierKind::kLuiNop);
  EXPECT_EQ(c.coverage, 7);
  EXPECT_EQ(c.bits_per_tag, 2);
  EXPECT_FALSE(c.labels_enabled);
  EXPECT_EQ(c.policy, Policy::kCfi);
  EXPECT_EQ(c.TagValue("CFL"), Tag{1});
  EXPECT_EQ(c.default_tag, 0u);

  const TagConfig custom = testing::Config("carrier = custom\ncoverage = 1\n");
  EXPECT_EQ(custom.bits_per_tag, 15);

  const TagConfig named = testing::Config("coverage = 3\ntags = A:0, B:5, C:63\ndefault_tag = B\n");
  EXPECT_EQ(named.default_tag, 5u);
  EXPECT_TRUE(named.Declares(63));
  EXPECT_FALSE(named.Declares(4));
}

TEST(TagPlan, ConfigErrors) {
  auto kind = [](std::string_view text) {
    try {
      testing::Config(text);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::IoError;
  };
  EXPECT_EQ(kind("coverage = 31\n"), ErrorKind::TableNA);
  EXPECT_EQ(kind("carrier = addi\ncoverage = 15\n"), ErrorKind::TableNA);
  EXPECT_EQ(kind("colour = red\n"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("carrier = sram\n"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("coverage = 3\ntags = A:64\n"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("policy = cfi\ntags = N:0, CFL:2\n"), ErrorKind::ConfigError);
  EXPECT_EQ(kind("coverage = 3\ncoverage = 7\n"), ErrorKind::ConfigError);
  try {
    testing::Config("carrier = lui\nflavour = x\n");
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("flavour"), std::string::npos);
  }
}

TEST(TagPlan, RemapExamples) {
  EXPECT_EQ(RemapOffset(12, 3), 16u);
  EXPECT_EQ(RemapOffset(40, 3), 56u);  // ceil(10/3) = 4 carriers precede instruction 10
  for (int n : {1, 3, 7, 15}) EXPECT_EQ(RemapOffset(0, n), 0u);
  EXPECT_EQ(InsnOffset(0, 3), 4u);
  EXPECT_EQ(InsnOffset(12, 3), 20u);
  EXPECT_EQ(InsnOffset(8, 3), 12u);
  EXPECT_THROW(RemapOffset(6, 3), Error);
}

TEST(TagPlan, RemapMatchesSimulation) {
  for (int n : {1, 3, 7, 15}) {
    const auto sim = SimulateLayout(200, n);
    for (size_t i = 0; i < 200; ++i) {
      ASSERT_EQ(RemapOffset(4 * i, n), sim[i]) << "n=" << n << " i=" << i;
      // The instruction word itself sits after the carrier when it opens a group.
      ASSERT_EQ(InsnOffset(4 * i, n), sim[i] + (i % n == 0 ? 4 : 0));
      if (i > 0) ASSERT_GT(RemapOffset(4 * i, n), RemapOffset(4 * (i - 1), n));
    }
    for (size_t k = 0; k <= 50; ++k) ASSERT_EQ(TaggedBytes(k, n), SimulateLayout(k, n)[k]);
  }
}

TEST(TagPlan, TagSlots) {
  EXPECT_EQ(TagSlotAddresses(4, 3), (std::vector<uint32_t>{0, 16}));
  EXPECT_TRUE(TagSlotAddresses(0, 3).empty());
  EXPECT_EQ(TagSlotAddresses(15, 15), (std::vector<uint32_t>{0}));
  EXPECT_EQ(TagSlotAddresses(16, 15), (std::vector<uint32_t>{0, 64}));
  EXPECT_EQ(GroupCount(9, 3), 3u);
  EXPECT_EQ(TaggedBytes(9, 3), 48u);
  EXPECT_EQ(TaggedBytes(4, 3), 24u);
}

TEST(TagPlan, ReachCheck) {
  EXPECT_TRUE(ReachCheck(0, 8, 3, ReachKind::kBranch));
  EXPECT_TRUE(ReachCheck(400, 0, 3, ReachKind::kBranch));
  // 3000 untagged bytes forward grows past the 4 KiB branch window at N=1.
  EXPECT_FALSE(ReachCheck(0, 3000, 1, ReachKind::kBranch));
  EXPECT_TRUE(ReachCheck(0, 3000, 15, ReachKind::kBranch));
  EXPECT_TRUE(ReachCheck(0, 3000, 1, ReachKind::kJal));
  EXPECT_FALSE(ReachCheck(0, 600000, 1, ReachKind::kJal));
}

TEST(TagPlan, PlanFromConfig) {
  const TagPlan plan = TagPlan::FromConfig(testing::CoverageConfig());
  EXPECT_EQ(plan.coverage, 7);
  EXPECT_EQ(plan.bits_per_tag, 2);
  EXPECT_EQ(plan.default_tag, tags::kCoverageNormal);
}

}  // namespace
}  // namespace rvtag
