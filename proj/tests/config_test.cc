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

#include "pianojudge/config.h"

#include <gtest/gtest.h>

#include "pianojudge/csv.h"

#ifndef PIANOJUDGE_SOURCE_DIR
#error "PIANOJUDGE_SOURCE_DIR must point at the source tree"
#endif

namespace pianojudge {
namespace {

TEST(RunConfigTest, DefaultsFileMatchesBuiltInDefaults) {
  const auto config = LoadRunConfig(PIANOJUDGE_SOURCE_DIR "/config/defaults.ini");
  ASSERT_TRUE(config.ok()) << config.status();
  EXPECT_EQ(*config, RunConfig{});
  EXPECT_TRUE(config->Validate().ok());
}

TEST(RunConfigTest, ParsesValuesAndLists) {
  const auto config = ParseRunConfig(
      "[run]\nseed = 42\ntask = difficulty3\n"
      "[train]\nlearning_rate = 0.003\n"
      "[grid]\nlearning_rate = 1e-4, 1e-3\nbatch_size = 8,16\n"
      "[pairing]\ninclude_inverse = true\n");
  ASSERT_TRUE(config.ok()) << config.status();
  EXPECT_EQ(config->seed, 42u);
  EXPECT_EQ(config->task, "difficulty3");
  EXPECT_EQ(config->learning_rate, 0.003);
  EXPECT_TRUE(config->include_inverse);
  const auto space = config->GridSpace();
  EXPECT_EQ(space.at("learning_rate"), (std::vector<double>{1e-4, 1e-3}));
  EXPECT_EQ(space.at("batch_size"), (std::vector<double>{8, 16}));
  EXPECT_FALSE(space.contains("epochs"));
  const TrainConfig tc = config->ToTrainConfig(LossKind::kCrossEntropy);
  EXPECT_EQ(tc.learning_rate, 0.003);
  EXPECT_EQ(tc.seed, 42u);
}

TEST(RunConfigTest, Errors) {
  EXPECT_FALSE(ParseRunConfig("[run]\nsead = 1\n").ok());
  EXPECT_FALSE(ParseRunConfig("[nope]\nx = 1\n").ok());
  EXPECT_FALSE(ParseRunConfig("[train]\nepochs = many\n").ok());
  EXPECT_FALSE(ParseRunConfig("[pairing]\ninclude_inverse = maybe\n").ok());
  EXPECT_FALSE(LoadRunConfig("/nonexistent/run.ini").ok());
  auto bad = ParseRunConfig("[train]\nepochs = 0\n");
  ASSERT_TRUE(bad.ok());
  const absl::Status status = bad->Validate();
  ASSERT_FALSE(status.ok());
  EXPECT_NE(status.message().find("train.epochs"), absl::string_view::npos);
  EXPECT_FALSE(ParseRunConfig("[data]\ntest_fraction = 1.5\n")->Validate().ok());
  EXPECT_FALSE(ParseRunConfig("[run]\ntask = tempo\n")->Validate().ok());
}

TEST(RunConfigTest, IniRoundTrip) {
  RunConfig config;
  config.seed = 7;
  config.out = "runs/x y";
  config.learning_rate = 1.0 / 3.0;
  config.grid_weight_decay = {0.0, 1e-4};
  config.fitting = true;
  config.downloader = "curl -sSfL -o {out} {uri}";
  const auto back = ParseRunConfig(config.ToIni());
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(*back, config);
}

}  // namespace
}  // namespace pianojudge
