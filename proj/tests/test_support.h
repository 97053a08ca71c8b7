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

#ifndef PIANOJUDGE_TESTS_TEST_SUPPORT_H_
#define PIANOJUDGE_TESTS_TEST_SUPPORT_H_

// Reference implementations and fixtures shared by the unit tests and the
// acceptance suite. The metric oracles follow the textbook definitions
// directly and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "pianojudge/embeddings.h"
#include "pianojudge/metrics.h"
#include "pianojudge/model.h"

namespace pianojudge::testing {

// ---- metric oracles ---------------------------------------------------------

inline double OracleAccWithinN(const std::vector<int>& pred, const std::vector<int>& labels, int n) {
  const std::set<int> classes(labels.begin(), labels.end());
  double total = 0.0;
  for (int c : classes) {
    int support = 0, hits = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != c) continue;
      ++support;
      if (pred[i] - c <= n && c - pred[i] <= n) ++hits;
    }
    total += static_cast<double>(hits) / support;
  }
  return total / classes.size();
}

inline double OracleAccuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  int hits = 0;
  for (size_t i = 0; i < labels.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / labels.size();
}

// F1 from precision and recall of a confusion matrix.
inline double OracleMacroF1(const std::vector<int>& pred, const std::vector<int>& labels) {
  const int k = 1 + std::max(*std::max_element(pred.begin(), pred.end()),
                             *std::max_element(labels.begin(), labels.end()));
  std::vector<std::vector<int>> confusion(k, std::vector<int>(k, 0));  // [true][pred]
  for (size_t i = 0; i < labels.size(); ++i) ++confusion[labels[i]][pred[i]];
  const std::set<int> classes(labels.begin(), labels.end());
  double total = 0.0;
  for (int c : classes) {
    int predicted = 0, actual = 0;
    for (int j = 0; j < k; ++j) {
      predicted += confusion[j][c];
      actual += confusion[c][j];
    }
    const double precision = predicted == 0 ? 0.0 : static_cast<double>(confusion[c][c]) / predicted;
    const double recall = static_cast<double>(confusion[c][c]) / actual;
    total += precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  }
  return total / classes.size();
}

// Mean over positives of the precision among items scoring at least as high.
inline std::optional<double> OracleAveragePrecision(const std::vector<double>& scores,
                                                    const std::vector<int>& relevant) {
  double total = 0.0;
  int positives = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!relevant[i]) continue;
    ++positives;
    int retrieved = 0, hits = 0;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (scores[j] >= scores[i]) {
        ++retrieved;
        hits += relevant[j] ? 1 : 0;
      }
    }
    total += static_cast<double>(hits) / retrieved;
  }
  if (positives == 0) return std::nullopt;
  return total / positives;
}

// Fraction of (positive, negative) pairs ordered correctly, ties one half.
inline std::optional<double> OracleAuc(const std::vector<double>& scores,
                                       const std::vector<int>& relevant) {
  double wins = 0.0;
  int pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!relevant[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (relevant[j]) continue;
      ++pairs;
      wins += scores[i] > scores[j] ? 1.0 : scores[i] == scores[j] ? 0.5 : 0.0;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / pairs;
}

inline std::vector<double> Column(const std::vector<std::vector<double>>& m, int c) {
  std::vector<double> out;
  for (const auto& row : m) out.push_back(row[c]);
  return out;
}
inline std::vector<int> Column(const std::vector<std::vector<int>>& m, int c) {
  std::vector<int> out;
  for (const auto& row : m) out.push_back(row[c]);
  return out;
}

inline std::optional<double> OracleMeanAp(const MultilabelBatch& b) {
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < b.num_classes(); ++c) {
    if (auto ap = OracleAveragePrecision(Column(b.scores, c), Column(b.labels, c))) {
      total += *ap;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  return total / counted;
}

inline std::optional<double> OracleMacroAuc(const MultilabelBatch& b) {
  double total = 0.0;
  int counted = 0;
  for (int c = 0; c < b.num_classes(); ++c) {
    if (auto auc = OracleAuc(Column(b.scores, c), Column(b.labels, c))) {
      total += *auc;
      ++counted;
    }
  }
  if (counted == 0) return std::nullopt;
  return total / counted;
}

inline double OracleMultilabelAccuracy(const MultilabelBatch& b, double threshold) {
  int correct = 0, cells = 0;
  for (size_t i = 0; i < b.scores.size(); ++i) {
    for (int c = 0; c < b.num_classes(); ++c) {
      ++cells;
      if ((b.scores[i][c] >= threshold) == (b.labels[i][c] == 1)) ++correct;
    }
  }
  return static_cast<double>(correct) / cells;
}

inline double OracleSingleLabelAccuracy(const MultilabelBatch& b) {
  int correct = 0;
  for (size_t i = 0; i < b.scores.size(); ++i) {
    int top = 0;
    for (int c = 1; c < b.num_classes(); ++c) {
      if (b.scores[i][c] > b.scores[i][top]) top = c;
    }
    correct += b.labels[i][top] == 1 ? 1 : 0;
  }
  return static_cast<double>(correct) / b.scores.size();
}

// Scores drawn from a coarse grid half of the time so that ties occur.
inline double RandomScore(std::mt19937_64& rng, bool coarse) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (coarse) return std::floor(u(rng) * 5.0) / 4.0 * 0.999 + 0.0005;
  return u(rng);
}

inline MultilabelBatch RandomMultilabelBatch(std::mt19937_64& rng, int max_items = 20,
                                             int max_classes = 9) {
  std::uniform_int_distribution<int> items(1, max_items), classes(1, max_classes);
  std::bernoulli_distribution coin(0.5), sparse(0.3);
  MultilabelBatch b;
  const int n = items(rng), k = classes(rng);
  const bool coarse = coin(rng);
  for (int i = 0; i < n; ++i) {
    std::vector<double> s(k);
    std::vector<int> l(k);
    for (int c = 0; c < k; ++c) {
      s[c] = RandomScore(rng, coarse);
      l[c] = sparse(rng) ? 1 : 0;
    }
    b.scores.push_back(s);
    b.labels.push_back(l);
  }
  return b;
}

struct RandomMulticlass {
  std::vector<int> predicted;
  std::vector<int> labels;
};

inline RandomMulticlass RandomMulticlassBatch(std::mt19937_64& rng, int max_items = 20,
                                              int max_classes = 9) {
  std::uniform_int_distribution<int> items(1, max_items), classes(1, max_classes);
  const int n = items(rng), k = classes(rng);
  std::uniform_int_distribution<int> cls(0, k - 1);
  RandomMulticlass b;
  for (int i = 0; i < n; ++i) {
    b.labels.push_back(cls(rng));
    b.predicted.push_back(cls(rng));
  }
  return b;
}

// ---- model fixtures -----------------------------------------------------------

// The tiny head used by gradient checks: 8-dim input, 10 frames per segment.
inline HeadConfig TinyHeadConfig(TaskKind kind, int classes) {
  HeadConfig c;
  c.conv_channels_1 = 3;
  c.conv_channels_2 = 4;
  c.attention_heads = 2;
  c.attention_dim = 8;
  c.input_dim = 8;
  c.output_classes = classes;
  c.task_kind = kind;
  c.max_segments = 2;
  return c;
}

inline std::shared_ptr<EmbeddingTensor> RandomTensor(std::mt19937_64& rng, int segments, int frames,
                                                     int dim, const std::string& id = "x",
                                                     const std::string& backend = "test-random") {
  auto t = std::make_shared<EmbeddingTensor>();
  t->recording_id = id;
  t->backend_id = backend;
  t->n_segments = segments;
  t->frames_per_segment = frames;
  t->dim = dim;
  t->frame_rate_hz = frames / 10.0;
  t->valid_mask.assign(segments, 1);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  t->data.resize(static_cast<size_t>(segments) * frames * dim);
  for (float& v : t->data) v = normal(rng);
  return t;
}

struct GradientCheckResult {
  int coordinates = 0;
  int failures = 0;
  double max_relative_error = 0.0;
};

// Compares backpropagated gradients with central differences on randomly
// chosen parameter coordinates. Relative error is |a - n| / max(|a|, |n|);
// coordinates where both magnitudes are below 1e-8 count as agreeing.
inline GradientCheckResult GradientCheck(PredictionHead head, std::span<const SegmentView> input,
                                         LossKind loss, const std::vector<double>& target,
                                         int coordinates, uint64_t seed, double tolerance = 1e-3) {
  auto loss_at = [&](const PredictionHead& h) {
    const std::vector<double> logits = h.Forward(input, nullptr);
    std::vector<double> dlogits(logits.size());
    return LossAndGradient(loss, logits, target, dlogits);
  };
  auto cache = head.NewCache();
  const std::vector<double> logits = head.Forward(input, cache.get());
  std::vector<double> dlogits(logits.size());
  LossAndGradient(loss, logits, target, dlogits);
  std::vector<double> grad(head.parameter_count(), 0.0);
  head.Backward(*cache, dlogits, grad);

  std::mt19937_64 rng(seed);
  std::vector<int64_t> indices(head.parameter_count());
  std::iota(indices.begin(), indices.end(), 0);
  std::shuffle(indices.begin(), indices.end(), rng);
  GradientCheckResult result;
  for (int i = 0; i < coordinates && i < static_cast<int>(indices.size()); ++i) {
    const int64_t p = indices[i];
    const double original = head.parameters()[p];
    const double eps = 1e-6 * std::max(1.0, std::abs(original));
    head.parameters()[p] = original + eps;
    const double up = loss_at(head);
    head.parameters()[p] = original - eps;
    const double down = loss_at(head);
    head.parameters()[p] = original;
    const double numeric = (up - down) / (2.0 * eps);
    const double scale = std::max(std::abs(numeric), std::abs(grad[p]));
    const double rel = scale < 1e-8 ? 0.0 : std::abs(numeric - grad[p]) / scale;
    result.max_relative_error = std::max(result.max_relative_error, rel);
    if (rel > tolerance) ++result.failures;
    ++result.coordinates;
  }
  return result;
}

}  // namespace pianojudge::testing

#endif  // PIANOJUDGE_TESTS_TEST_SUPPORT_H_
