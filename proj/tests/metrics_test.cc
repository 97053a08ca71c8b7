// Copyright 2026 The pianojudge Authors.
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

#include "pianojudge/metrics.h"

#include <gtest/gtest.h>

#include <random>

#include "test_support.h"

namespace pianojudge {
namespace {

using ::pianojudge::testing::OracleAccWithinN;
using ::pianojudge::testing::OracleAccuracy;
using ::pianojudge::testing::OracleMacroF1;

TEST(AccuracyWithinNTest, HandWorkedExample) {
  const std::vector<int> pred = {1, 2, 3, 3}, labels = {1, 1, 3, 2};
  EXPECT_DOUBLE_EQ(*AccuracyWithinN(pred, labels, 0), 0.5);
  EXPECT_DOUBLE_EQ(*AccuracyWithinN(pred, labels, 1), 1.0);
}

TEST(AccuracyWithinNTest, PerfectPredictionsScoreOne) {
  const std::vector<int> labels = {0, 4, 8, 2, 2};
  for (int n = 0; n < 4; ++n) EXPECT_DOUBLE_EQ(*AccuracyWithinN(labels, labels, n), 1.0);
}

TEST(AccuracyWithinNTest, EmptyBatchFails) {
  EXPECT_FALSE(AccuracyWithinN({}, {}, 0).ok());
}

TEST(AccuracyWithinNTest, ZeroSupportClassesSkippedWithWarning) {
  const std::vector<int> pred = {0, 1}, labels = {0, 0};
  const std::vector<int> classes = {0, 1, 2};
  MetricWarnings warnings;
  EXPECT_DOUBLE_EQ(*AccuracyWithinN(pred, labels, 0, &classes, &warnings), 0.5);
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(AccuracyWithinNTest, NonDecreasingInN) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto b = testing::RandomMulticlassBatch(rng);
    double previous = 0.0;
    for (int n = 0; n < 9; ++n) {
      const double v = *AccuracyWithinN(b.predicted, b.labels, n);
      EXPECT_GE(v, previous);
      previous = v;
    }
  }
}

TEST(AccuracyTest, OneClassPredictionsOnBalancedBatch) {
  const std::vector<int> pred = {0, 0, 0, 0}, labels = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(*Accuracy(pred, labels), 0.5);
  EXPECT_NEAR(*MacroF1(pred, labels), 1.0 / 3.0, 1e-15);
}

TEST(AccuracyTest, SingleCorrectItem) {
  EXPECT_DOUBLE_EQ(*Accuracy(std::vector<int>{3}, std::vector<int>{3}), 1.0);
  EXPECT_DOUBLE_EQ(*MacroF1(std::vector<int>{3}, std::vector<int>{3}), 1.0);
}

TEST(AccuracyTest, LengthMismatchFails) {
  EXPECT_FALSE(Accuracy(std::vector<int>{1, 2}, std::vector<int>{1}).ok());
  EXPECT_FALSE(MacroF1(std::vector<int>{}, std::vector<int>{}).ok());
}

TEST(AveragePrecisionTest, PositivesRankedFirstGiveOne) {
  MultilabelBatch b{{{0.9}, {0.8}, {0.2}, {0.1}}, {{1}, {1}, {0}, {0}}};
  EXPECT_DOUBLE_EQ(*(*AveragePrecisionPerClass(b))[0], 1.0);
}

TEST(AveragePrecisionTest, SinglePositiveRankedSecondOfFour) {
  MultilabelBatch b{{{0.9}, {0.8}, {0.2}, {0.1}}, {{0}, {1}, {0}, {0}}};
  EXPECT_DOUBLE_EQ(*(*AveragePrecisionPerClass(b))[0], 0.5);
}

TEST(AveragePrecisionTest, ClassesWithoutPositivesExcluded) {
  MultilabelBatch b{{{0.9, 0.1}, {0.2, 0.3}}, {{1, 0}, {0, 0}}};
  MetricWarnings warnings;
  EXPECT_DOUBLE_EQ(*MeanAveragePrecision(b, &warnings), 1.0);
  EXPECT_EQ(warnings.size(), 1u);
  MultilabelBatch none{{{0.9}}, {{0}}};
  EXPECT_FALSE(MeanAveragePrecision(none).ok());
}

TEST(AucTest, PerfectSeparationAndAllTies) {
  MultilabelBatch perfect{{{0.9}, {0.8}, {0.1}}, {{1}, {1}, {0}}};
  EXPECT_DOUBLE_EQ(*MacroAuc(perfect), 1.0);
  MultilabelBatch ties{{{0.5}, {0.5}, {0.5}}, {{1}, {0}, {0}}};
  EXPECT_DOUBLE_EQ(*MacroAuc(ties), 0.5);
}

TEST(AucTest, AllDegenerateFails) {
  MultilabelBatch b{{{0.9}, {0.8}}, {{1}, {1}}};
  EXPECT_FALSE(MacroAuc(b).ok());
}

TEST(MultilabelAccuracyTest, CellCounting) {
  MultilabelBatch b;
  b.scores = {{0.9, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, {0.1, 0.9, 0.1, 0.1, 0.1, 0.1, 0.9}};
  b.labels = {{1, 0, 0, 0, 0, 0, 0}, {0, 1, 0, 0, 0, 0, 0}};
  EXPECT_DOUBLE_EQ(*MultilabelAccuracy(b, 0.5), 13.0 / 14.0);
  b.scores = {{0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}, {0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1}};
  EXPECT_DOUBLE_EQ(*MultilabelAccuracy(b, 0.5), 12.0 / 14.0);
  EXPECT_FALSE(MultilabelAccuracy(b, 1.0).ok());
  EXPECT_FALSE(MultilabelAccuracy(MultilabelBatch{}, 0.5).ok());
}

TEST(SingleLabelAccuracyTest, AnyLabelHit) {
  MultilabelBatch b;
  b.scores = {{0.2, 0, 0, 0, 0, 0.7, 0}, {0, 0, 0, 0.8, 0, 0, 0.1}};
  b.labels = {{1, 0, 0, 0, 0, 1, 0}, {0, 0, 0, 0, 0, 0, 1}};
  EXPECT_DOUBLE_EQ(*SingleLabelAccuracy(b), 0.5);
}

TEST(MetricOracleTest, RandomBatchesMatchDefinitions) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    auto mc = testing::RandomMulticlassBatch(rng);
    for (int n = 0; n < 3; ++n) {
      EXPECT_NEAR(*AccuracyWithinN(mc.predicted, mc.labels, n),
                  OracleAccWithinN(mc.predicted, mc.labels, n), 1e-9);
    }
    EXPECT_NEAR(*Accuracy(mc.predicted, mc.labels), OracleAccuracy(mc.predicted, mc.labels), 1e-9);
    EXPECT_NEAR(*MacroF1(mc.predicted, mc.labels), OracleMacroF1(mc.predicted, mc.labels), 1e-9);

    const MultilabelBatch ml = testing::RandomMultilabelBatch(rng);
    const auto ap = AveragePrecisionPerClass(ml);
    for (int c = 0; c < ml.num_classes(); ++c) {
      const auto expected =
          testing::OracleAveragePrecision(testing::Column(ml.scores, c), testing::Column(ml.labels, c));
      ASSERT_EQ((*ap)[c].has_value(), expected.has_value());
      if (expected) EXPECT_NEAR(*(*ap)[c], *expected, 1e-9);
    }
    if (auto expected = testing::OracleMacroAuc(ml)) {
      EXPECT_NEAR(*MacroAuc(ml), *expected, 1e-9);
    } else {
      EXPECT_FALSE(MacroAuc(ml).ok());
    }
    EXPECT_NEAR(*MultilabelAccuracy(ml, 0.5), testing::OracleMultilabelAccuracy(ml, 0.5), 1e-9);
    EXPECT_NEAR(*SingleLabelAccuracy(ml), testing::OracleSingleLabelAccuracy(ml), 1e-9);
  }
}

TEST(MetricPropertyTest, PermutationInvariantAndBounded) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    MultilabelBatch ml = testing::RandomMultilabelBatch(rng);
    std::vector<size_t> order(ml.scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    MultilabelBatch shuffled;
    for (size_t i : order) {
      shuffled.scores.push_back(ml.scores[i]);
      shuffled.labels.push_back(ml.labels[i]);
    }
    const auto a = MeanAveragePrecision(ml), b = MeanAveragePrecision(shuffled);
    ASSERT_EQ(a.ok(), b.ok());
    if (a.ok()) {
      EXPECT_NEAR(*a, *b, 1e-12);
      EXPECT_GE(*a, 0.0);
      EXPECT_LE(*a, 1.0);
    }
    const auto u = MacroAuc(ml), v = MacroAuc(shuffled);
    ASSERT_EQ(u.ok(), v.ok());
    if (u.ok()) {
      EXPECT_NEAR(*u, *v, 1e-12);
      EXPECT_GE(*u, 0.0);
      EXPECT_LE(*u, 1.0);
    }
    EXPECT_NEAR(*MultilabelAccuracy(ml), *MultilabelAccuracy(shuffled), 1e-12);
  }
}

TEST(MetricReportTest, SerializesKeyValueAndCsv) {
  MetricReport r;
  r.task = "difficulty9";
  r.backend = "mert";
  r.split = "test";
  r.seed = 3;
  r.Add("acc_within_n", 0.25, 0);
  r.Add("macro_f1", 0.5);
  EXPECT_EQ(r.ToCsv(),
            "task,backend,metric,value,n,split,seed\n"
            "difficulty9,mert,acc_within_n,0.25,0,test,3\n"
            "difficulty9,mert,macro_f1,0.5,,test,3\n");
  EXPECT_NE(r.ToKeyValue().find("macro_f1=0.5\n"), std::string::npos);
  EXPECT_EQ(*r.Find("macro_f1"), 0.5);
  EXPECT_FALSE(r.Find("auc").has_value());
}

TEST(FormatMetricTest, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 0.93560000000000001, 1e-300}) {
    EXPECT_EQ(std::stod(FormatMetric(v)), v);
  }
}

}  // namespace
}  // namespace pianojudge
