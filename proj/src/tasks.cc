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

#include <array>

#include "absl/strings/str_cat.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {
namespace {

constexpr std::array<TaskSpec, 6> kTasks = {{
    {Task::kExpertise2, "expertise2", Dataset::kExpertise, TaskKind::kRank, 2,
     LossKind::kCrossEntropy},
    {Task::kExpertise4, "expertise4", Dataset::kExpertise, TaskKind::kRank, 4,
     LossKind::kCrossEntropy},
    {Task::kDifficulty9, "difficulty9", Dataset::kDifficulty, TaskKind::kMulticlass, 9,
     LossKind::kCrossEntropy},
    {Task::kDifficulty3, "difficulty3", Dataset::kDifficulty, TaskKind::kMulticlass, 3,
     LossKind::kCrossEntropy},
    {Task::kTechniqueMulti, "technique_multi", Dataset::kTechniques, TaskKind::kMultilabel, 7,
     LossKind::kBinaryCrossEntropyPerClass},
    {Task::kTechniqueSingle, "technique_single", Dataset::kTechniques, TaskKind::kMulticlass, 7,
     LossKind::kCrossEntropy},
}};

absl::StatusOr<std::shared_ptr<const EmbeddingTensor>> Lookup(const EmbeddingMap& embeddings,
                                                             const std::string& id) {
  auto it = embeddings.find(id);
  if (it == embeddings.end() || it->second == nullptr) {
    return absl::NotFoundError(absl::StrCat("no embedding for recording '", id, "'"));
  }
  return it->second;
}

}  // namespace

absl::StatusOr<Task> ParseTask(std::string_view name) {
  for (const TaskSpec& spec : kTasks) {
    if (spec.name == name) return spec.task;
  }
  return absl::InvalidArgumentError(absl::StrCat(
      "unknown task '", AV(name),
      "'; expected expertise2, expertise4, difficulty9, difficulty3, technique_multi or "
      "technique_single"));
}

const TaskSpec& GetTaskSpec(Task task) { return kTasks[static_cast<int>(task)]; }

RankMode TaskRankMode(Task task) {
  return task == Task::kExpertise4 ? RankMode::kFourWay : RankMode::kTwoWay;
}

absl::StatusOr<int> DifficultyClass(int grade, Task task) {
  if (grade < 1 || grade > 9) {
    return absl::InvalidArgumentError(absl::StrCat("difficulty grade ", grade, " outside 1..9"));
  }
  if (task == Task::kDifficulty9) return grade - 1;
  if (task == Task::kDifficulty3) return (grade - 1) / 3;
  return absl::InvalidArgumentError("not a difficulty task");
}

absl::StatusOr<std::vector<Example>> RecordingExamples(Task task,
                                                       const std::vector<Recording>& recordings,
                                                       const EmbeddingMap& embeddings) {
  const TaskSpec& spec = GetTaskSpec(task);
  if (spec.kind == TaskKind::kRank) {
    return absl::InvalidArgumentError("ranking tasks are built from pairs");
  }
  std::vector<Example> examples;
  for (const Recording& r : recordings) {
    Example e;
    auto emb = Lookup(embeddings, r.id);
    if (!emb.ok()) return emb.status();
    e.first = *emb;
    e.target.assign(spec.output_classes, 0.0);
    if (spec.dataset == Dataset::kDifficulty) {
      if (!r.difficulty.has_value()) {
        return absl::InvalidArgumentError(absl::StrCat("recording '", r.id, "' has no difficulty"));
      }
      auto label = DifficultyClass(*r.difficulty, task);
      if (!label.ok()) return label.status();
      e.label = *label;
      e.target[e.label] = 1.0;
    } else {
      if (!r.techniques.has_value() || r.techniques->empty()) {
        return absl::InvalidArgumentError(absl::StrCat("recording '", r.id, "' has no techniques"));
      }
      const double weight =
          task == Task::kTechniqueSingle ? 1.0 / static_cast<double>(r.techniques->size()) : 1.0;
      for (int t : *r.techniques) e.target[t] = weight;
    }
    examples.push_back(std::move(e));
  }
  return examples;
}

absl::StatusOr<std::vector<Example>> PairExamples(const std::vector<RankPair>& pairs,
                                                  const EmbeddingMap& embeddings) {
  std::vector<Example> examples;
  for (const RankPair& p : pairs) {
    if (!p.label.has_value()) {
      return absl::InvalidArgumentError(
          absl::StrCat("pair (", p.first_id, ", ", p.second_id, ") has no label"));
    }
    Example e;
    auto a = Lookup(embeddings, p.first_id);
    if (!a.ok()) return a.status();
    auto b = Lookup(embeddings, p.second_id);
    if (!b.ok()) return b.status();
    e.first = *a;
    e.second = *b;
    e.label = *p.label;
    e.target.assign(NumRankClasses(p.mode), 0.0);
    e.target[e.label] = 1.0;
    examples.push_back(std::move(e));
  }
  return examples;
}

HeadConfig TaskHeadConfig(Task task, int input_dim) {
  const TaskSpec& spec = GetTaskSpec(task);
  HeadConfig config;
  config.input_dim = input_dim;
  config.output_classes = spec.output_classes;
  config.task_kind = spec.kind;
  return config;
}

}  // namespace pianojudge
