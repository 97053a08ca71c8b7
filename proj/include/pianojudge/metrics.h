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

#ifndef PIANOJUDGE_METRICS_H_
#define PIANOJUDGE_METRICS_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"

namespace pianojudge {

// Multi-class evaluation data: one score vector and one class index per item.
struct MulticlassBatch {
  std::vector<std::vector<double>> scores;
  std::vector<int> labels;

  // Argmax per item; the lowest index wins ties.
  std::vector<int> Predictions() const;
};

// Multi-label evaluation data: independent per-class scores (probabilities)
// and 0/1 relevance per item and class.
struct MultilabelBatch {
  std::vector<std::vector<double>> scores;
  std::vector<std::vector<int>> labels;

  int num_classes() const { return scores.empty() ? 0 : static_cast<int>(scores[0].size()); }
};

// Non-fatal notes (skipped classes, degenerate inputs) appended by metrics.
using MetricWarnings = std::vector<std::string>;

// Accuracy within n: macro average over classes c of the fraction of items
// of class c predicted within n steps of c. The class set is the observed
// labels unless `classes` is given, in which case classes without support are
// skipped with a warning.
absl::StatusOr<double> AccuracyWithinN(std::span<const int> predicted,
                                       std::span<const int> labels, int n,
                                       const std::vector<int>* classes = nullptr,
                                       MetricWarnings* warnings = nullptr);

absl::StatusOr<double> Accuracy(std::span<const int> predicted, std::span<const int> labels);

// Macro F1 over the classes present in `labels`.
absl::StatusOr<double> MacroF1(std::span<const int> predicted, std::span<const int> labels);

// Non-interpolated AP per class: mean over positives of precision at that
// positive's score threshold (tied scores enter together). Classes without
// positives yield nullopt.
absl::StatusOr<std::vector<std::optional<double>>> AveragePrecisionPerClass(
    const MultilabelBatch& batch);
// Mean AP over classes with at least one positive.
absl::StatusOr<double> MeanAveragePrecision(const MultilabelBatch& batch,
                                            MetricWarnings* warnings = nullptr);

// Macro ROC-AUC via the Mann-Whitney statistic, ties counting one half.
// Degenerate classes (all positive or all negative) are skipped.
absl::StatusOr<std::vector<std::optional<double>>> AucPerClass(const MultilabelBatch& batch);
absl::StatusOr<double> MacroAuc(const MultilabelBatch& batch, MetricWarnings* warnings = nullptr);

// Fraction of correct item x class decisions; a score >= threshold predicts
// the label.
absl::StatusOr<double> MultilabelAccuracy(const MultilabelBatch& batch, double threshold = 0.5);

// An item counts as correct when its top-scoring class is one of its labels.
absl::StatusOr<double> SingleLabelAccuracy(const MultilabelBatch& batch);

// A flat metric report. Serializes to "key=value" lines and to CSV rows
// (task, backend, metric, value, n, split, seed).
struct MetricReport {
  struct Entry {
    std::string metric;
    double value = 0.0;
    std::optional<int> n;  // e.g. the n of accuracy within n
  };
  std::string task;
  std::string backend;
  std::string split;
  uint64_t seed = 0;
  std::vector<Entry> entries;
  std::vector<std::string> notes;

  void Add(std::string metric, double value, std::optional<int> n = std::nullopt) {
    entries.push_back({std::move(metric), value, n});
  }
  std::optional<double> Find(std::string_view metric) const;

  std::string ToKeyValue() const;
  std::string ToCsv(bool with_header = true) const;
};

// Formats a metric value with 17 significant digits (round-trip exact).
std::string FormatMetric(double value);

}  // namespace pianojudge

#endif  // PIANOJUDGE_METRICS_H_
