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

#ifndef PIANOJUDGE_TASKS_H_
#define PIANOJUDGE_TASKS_H_

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/embeddings.h"
#include "pianojudge/manifest.h"
#include "pianojudge/model.h"
#include "pianojudge/pairing.h"

namespace pianojudge {

enum class Task {
  kExpertise2,
  kExpertise4,
  kDifficulty9,
  kDifficulty3,
  kTechniqueMulti,
  kTechniqueSingle,
};

struct TaskSpec {
  Task task;
  std::string_view name;
  Dataset dataset;
  TaskKind kind;
  int output_classes;
  LossKind loss;
};

absl::StatusOr<Task> ParseTask(std::string_view name);
const TaskSpec& GetTaskSpec(Task task);
// Rank mode of an expertise task.
RankMode TaskRankMode(Task task);

// Class index of a Henle grade: grade - 1 for the 9-way task and
// floor((grade - 1) / 3) for the merged 3-way task.
absl::StatusOr<int> DifficultyClass(int grade, Task task);

using EmbeddingMap = std::map<std::string, std::shared_ptr<const EmbeddingTensor>>;

// One example per recording for difficulty and technique tasks. Technique
// targets are multi-hot for the multi-label task and uniform over the label
// set for the single-label task; their label index is -1.
absl::StatusOr<std::vector<Example>> RecordingExamples(Task task,
                                                       const std::vector<Recording>& recordings,
                                                       const EmbeddingMap& embeddings);

// One example per labeled pair, with a one-hot target.
absl::StatusOr<std::vector<Example>> PairExamples(const std::vector<RankPair>& pairs,
                                                  const EmbeddingMap& embeddings);

// HeadConfig defaults for a task on a backend of dimension `input_dim`.
HeadConfig TaskHeadConfig(Task task, int input_dim);

}  // namespace pianojudge

#endif  // PIANOJUDGE_TASKS_H_
