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

#include "pianojudge/tasks.h"

#include <gtest/gtest.h>

namespace pianojudge {
namespace {

TEST(TasksTest, Difficulty3MergesByThirds) {
  for (int g = 1; g <= 9; ++g) {
    EXPECT_EQ(*DifficultyClass(g, Task::kDifficulty3), (g - 1) / 3) << g;
    EXPECT_EQ(*DifficultyClass(g, Task::kDifficulty9), g - 1) << g;
  }
  EXPECT_FALSE(DifficultyClass(0, Task::kDifficulty3).ok());
  EXPECT_FALSE(DifficultyClass(10, Task::kDifficulty9).ok());
}

TEST(TasksTest, SpecsMatchHeads) {
  for (const char* name : {"expertise2", "expertise4", "difficulty9", "difficulty3",
                           "technique_multi", "technique_single"}) {
    const auto task = ParseTask(name);
    ASSERT_TRUE(task.ok()) << name;
    const TaskSpec& spec = GetTaskSpec(*task);
    EXPECT_EQ(spec.name, name);
    const HeadConfig head = TaskHeadConfig(*task, 128);
    EXPECT_EQ(head.output_classes, spec.output_classes);
    EXPECT_TRUE(head.Validate().ok()) << name;
  }
  EXPECT_EQ(GetTaskSpec(Task::kExpertise4).output_classes, 4);
  EXPECT_EQ(GetTaskSpec(Task::kDifficulty9).output_classes, 9);
  EXPECT_EQ(GetTaskSpec(Task::kTechniqueMulti).loss, LossKind::kBinaryCrossEntropyPerClass);
  EXPECT_FALSE(ParseTask("tempo").ok());
}

TEST(TasksTest, TechniqueTargets) {
  Recording r;
  r.id = "r";
  r.dataset = Dataset::kTechniques;
  r.techniques = std::set<int>{0, 5};
  auto t = std::make_shared<EmbeddingTensor>();
  t->recording_id = "r";
  EmbeddingMap map = {{"r", t}};
  const auto multi = RecordingExamples(Task::kTechniqueMulti, {r}, map);
  ASSERT_TRUE(multi.ok());
  EXPECT_EQ((*multi)[0].target, (std::vector<double>{1, 0, 0, 0, 0, 1, 0}));
  const auto single = RecordingExamples(Task::kTechniqueSingle, {r}, map);
  ASSERT_TRUE(single.ok());
  EXPECT_EQ((*single)[0].target, (std::vector<double>{0.5, 0, 0, 0, 0, 0.5, 0}));
  EXPECT_FALSE(RecordingExamples(Task::kTechniqueMulti, {r}, {}).ok());
}

}  // namespace
}  // namespace pianojudge
