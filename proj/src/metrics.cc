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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "absl/strings/str_cat.h"
#include "pianojudge/csv.h"

namespace pianojudge {
namespace {

absl::Status CheckPaired(std::span<const int> predicted, std::span<const int> labels) {
  if (labels.empty()) return absl::InvalidArgumentError("empty batch");
  if (predicted.size() != labels.size()) {
    return absl::InvalidArgumentError(absl::StrCat("predictions (", predicted.size(),
                                                   ") and labels (", labels.size(),
                                                   ") differ in length"));
  }
  return absl::OkStatus();
}

absl::Status CheckMultilabel(const MultilabelBatch& batch) {
  if (batch.scores.empty()) return absl::InvalidArgumentError("empty batch");
  if (batch.scores.size() != batch.labels.size()) {
    return absl::InvalidArgumentError("scores and labels differ in length");
  }
  const size_t k = batch.scores[0].size();
  if (k == 0) return absl::InvalidArgumentError("zero classes");
  for (size_t i = 0; i < batch.scores.size(); ++i) {
    if (batch.scores[i].size() != k || batch.labels[i].size() != k) {
      return absl::InvalidArgumentError(absl::StrCat("item ", i, " has a ragged class vector"));
    }
    for (double s : batch.scores[i]) {
      if (!std::isfinite(s)) return absl::InvalidArgumentError("non-finite score");
    }
  }
  return absl::OkStatus();
}

// (score, relevant) pairs of one class.
std::vector<std::pair<double, int>> ClassColumn(const MultilabelBatch& batch, int c) {
  std::vector<std::pair<double, int>> column;
  column.reserve(batch.scores.size());
  for (size_t i = 0; i < batch.scores.size(); ++i) {
    column.emplace_back(batch.scores[i][c], batch.labels[i][c] != 0 ? 1 : 0);
  }
  return column;
}

}  // namespace

std::vector<int> MulticlassBatch::Predictions() const {
  std::vector<int> predicted;
  predicted.reserve(scores.size());
  for (const auto& row : scores) {
    predicted.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return predicted;
}

absl::StatusOr<double> AccuracyWithinN(std::span<const int> predicted,
                                       std::span<const int> labels, int n,
                                       const std::vector<int>* classes,
                                       MetricWarnings* warnings) {
  if (auto s = CheckPaired(predicted, labels); !s.ok()) return s;
  if (n < 0) return absl::InvalidArgumentError("n must be non-negative");
  std::map<int, std::pair<int, int>> per_class;  // class -> (hits, support)
  if (classes != nullptr) {
    for (int c : *classes) per_class[c] = {0, 0};
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    auto& [hits, support] = per_class[labels[i]];
    ++support;
    if (std::abs(predicted[i] - labels[i]) <= n) ++hits;
  }
  double sum = 0.0;
  int counted = 0;
  for (const auto& [c, counts] : per_class) {
    if (counts.second == 0) {
      if (warnings) warnings->push_back(absl::StrCat("class ", c, " has no support; skipped"));
      continue;
    }
    sum += static_cast<double>(counts.first) / counts.second;
    ++counted;
  }
  return sum / counted;
}

absl::StatusOr<double> Accuracy(std::span<const int> predicted, std::span<const int> labels) {
  if (auto s = CheckPaired(predicted, labels); !s.ok()) return s;
  int correct = 0;
  for (size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i];
  return static_cast<double>(correct) / labels.size();
}

absl::StatusOr<double> MacroF1(std::span<const int> predicted, std::span<const int> labels) {
  if (auto s = CheckPaired(predicted, labels); !s.ok()) return s;
  const std::set<int> classes(labels.begin(), labels.end());
  double sum = 0.0;
  for (int c : classes) {
    int tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      const bool p = predicted[i] == c, y = labels[i] == c;
      tp += p && y;
      fp += p && !y;
      fn += !p && y;
    }
    const int denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * tp / denom;
  }
  return sum / static_cast<double>(classes.size());
}

absl::StatusOr<std::vector<std::optional<double>>> AveragePrecisionPerClass(
    const MultilabelBatch& batch) {
  if (auto s = CheckMultilabel(batch); !s.ok()) return s;
  std::vector<std::optional<double>> ap(batch.num_classes());
  for (int c = 0; c < batch.num_classes(); ++c) {
    auto column = ClassColumn(batch, c);
    std::sort(column.begin(), column.end(),
              [](const auto& a, const auto& b) { return a.first > b.first; });
    const int positives = std::accumulate(column.begin(), column.end(), 0,
                                          [](int acc, const auto& e) { return acc + e.second; });
    if (positives == 0) continue;
    // Walk tie groups: every positive in a group shares the precision at the
    // group's threshold.
    double sum = 0.0;
    int seen = 0, seen_pos = 0;
    for (size_t i = 0; i < column.size();) {
      size_t j = i;
      int group_pos = 0;
      while (j < column.size() && column[j].first == column[i].first) group_pos += column[j++].second;
      seen += static_cast<int>(j - i);
      seen_pos += group_pos;
      sum += group_pos * static_cast<double>(seen_pos) / seen;
      i = j;
    }
    ap[c] = sum / positives;
  }
  return ap;
}

absl::StatusOr<double> MeanAveragePrecision(const MultilabelBatch& batch,
                                            MetricWarnings* warnings) {
  auto ap = AveragePrecisionPerClass(batch);
  if (!ap.ok()) return ap.status();
  double sum = 0.0;
  int counted = 0;
  for (size_t c = 0; c < ap->size(); ++c) {
    if (!(*ap)[c].has_value()) {
      if (warnings) warnings->push_back(absl::StrCat("class ", c, " has no positives; excluded from mAP"));
      continue;
    }
    sum += *(*ap)[c];
    ++counted;
  }
  if (counted == 0) return absl::InvalidArgumentError("no positives in any class");
  return sum / counted;
}

absl::StatusOr<std::vector<std::optional<double>>> AucPerClass(const MultilabelBatch& batch) {
  if (auto s = CheckMultilabel(batch); !s.ok()) return s;
  std::vector<std::optional<double>> auc(batch.num_classes());
  for (int c = 0; c < batch.num_classes(); ++c) {
    auto column = ClassColumn(batch, c);
    std::sort(column.begin(), column.end());
    // Mid-ranks (1-based) of positives, tie groups sharing their average rank.
    double rank_sum = 0.0;
    int64_t positives = 0;
    for (size_t i = 0; i < column.size();) {
      size_t j = i;
      int group_pos = 0;
      while (j < column.size() && column[j].first == column[i].first) group_pos += column[j++].second;
      const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      rank_sum += group_pos * mid_rank;
      positives += group_pos;
      i = j;
    }
    const int64_t negatives = static_cast<int64_t>(column.size()) - positives;
    if (positives == 0 || negatives == 0) continue;
    const double u = rank_sum - static_cast<double>(positives) * (positives + 1) / 2.0;
    auc[c] = u / (static_cast<double>(positives) * negatives);
  }
  return auc;
}

absl::StatusOr<double> MacroAuc(const MultilabelBatch& batch, MetricWarnings* warnings) {
  auto auc = AucPerClass(batch);
  if (!auc.ok()) return auc.status();
  double sum = 0.0;
  int counted = 0;
  for (size_t c = 0; c < auc->size(); ++c) {
    if (!(*auc)[c].has_value()) {
      if (warnings) warnings->push_back(absl::StrCat("class ", c, " is degenerate; excluded from AUC"));
      continue;
    }
    sum += *(*auc)[c];
    ++counted;
  }
  if (counted == 0) return absl::InvalidArgumentError("every class is degenerate; AUC undefined");
  return sum / counted;
}

absl::StatusOr<double> MultilabelAccuracy(const MultilabelBatch& batch, double threshold) {
  if (auto s = CheckMultilabel(batch); !s.ok()) return s;
  if (!(threshold > 0.0 && threshold < 1.0)) {
    return absl::InvalidArgumentError("threshold must lie in (0,1)");
  }
  int64_t correct = 0, total = 0;
  for (size_t i = 0; i < batch.scores.size(); ++i) {
    for (int c = 0; c < batch.num_classes(); ++c) {
      const bool predicted = batch.scores[i][c] >= threshold;
      correct += predicted == (batch.labels[i][c] != 0);
      ++total;
    }
  }
  return static_cast<double>(correct) / total;
}

absl::StatusOr<double> SingleLabelAccuracy(const MultilabelBatch& batch) {
  if (auto s = CheckMultilabel(batch); !s.ok()) return s;
  int correct = 0;
  for (size_t i = 0; i < batch.scores.size(); ++i) {
    const auto& row = batch.scores[i];
    const auto top = std::max_element(row.begin(), row.end()) - row.begin();
    correct += batch.labels[i][top] != 0;
  }
  return static_cast<double>(correct) / batch.scores.size();
}

std::string FormatMetric(double value) {
  char buffer[64];
  auto result = std::to_chars(buffer, buffer + sizeof(buffer), value,
                              std::chars_format::general, 17);
  return std::string(buffer, result.ptr);
}

std::optional<double> MetricReport::Find(std::string_view metric) const {
  for (const Entry& e : entries) {
    if (e.metric == metric) return e.value;
  }
  return std::nullopt;
}

std::string MetricReport::ToKeyValue() const {
  std::string out;
  absl::StrAppend(&out, "task=", task, "\n", "backend=", backend, "\n", "split=", split, "\n",
                  "seed=", seed, "\n");
  for (const Entry& e : entries) absl::StrAppend(&out, e.metric, "=", FormatMetric(e.value), "\n");
  for (const std::string& note : notes) absl::StrAppend(&out, "note=", note, "\n");
  return out;
}

std::string MetricReport::ToCsv(bool with_header) const {
  std::string out = with_header ? "task,backend,metric,value,n,split,seed\n" : "";
  for (const Entry& e : entries) {
    out += CsvRow({task, backend, e.metric, FormatMetric(e.value),
                   e.n.has_value() ? absl::StrCat(*e.n) : std::string(), split,
                   absl::StrCat(seed)});
  }
  return out;
}

}  // namespace pianojudge
