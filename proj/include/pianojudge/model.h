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

#ifndef PIANOJUDGE_MODEL_H_
#define PIANOJUDGE_MODEL_H_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/embeddings.h"
#include "pianojudge/metrics.h"

namespace pianojudge {

enum class TaskKind { kRank, kMulticlass, kMultilabel };
enum class LossKind { kCrossEntropy, kBinaryCrossEntropyPerClass };

std::string_view TaskKindName(TaskKind kind);
absl::StatusOr<TaskKind> ParseTaskKind(std::string_view name);
std::string_view LossKindName(LossKind loss);
absl::StatusOr<LossKind> ParseLossKind(std::string_view name);

// Shape of the prediction head. Both convolutions use the same kernel and
// stride with kernel/2 zero padding on the (frames x dim) plane of each
// segment.
struct HeadConfig {
  int conv_kernel = 7;
  int conv_stride = 5;
  int conv_channels_1 = 16;
  int conv_channels_2 = 32;
  int attention_heads = 2;
  int attention_dim = 128;
  int input_dim = 0;
  int output_classes = 0;
  TaskKind task_kind = TaskKind::kMulticlass;
  // Segments per recording; a rank head sees twice as many slots.
  int max_segments = 30;
  // Fixed input normalization x' = (x - input_shift) * input_scale, set from
  // training data statistics before training starts.
  double input_shift = 0.0;
  double input_scale = 1.0;

  absl::Status Validate() const;
  int position_slots() const {
    return task_kind == TaskKind::kRank ? 2 * max_segments : max_segments;
  }
  // Output extent of one convolution along an axis of length n.
  int ConvOut(int n) const;
  // Width of a token after both convolutions: ConvOut(ConvOut(dim)) * channels.
  int token_features() const;

  bool operator==(const HeadConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 8;
  int epochs = 50;
  uint64_t seed = 0;
  LossKind loss = LossKind::kCrossEntropy;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  absl::Status Validate(TaskKind kind) const;
  bool operator==(const TrainConfig&) const = default;
};

// One named parameter tensor inside the flat parameter buffer.
struct ParamBlock {
  std::string name;
  int rows = 0;
  int cols = 0;
  int64_t offset = 0;
  int64_t size() const { return static_cast<int64_t>(rows) * cols; }
};

// A segment fed to the head together with its position slot.
struct SegmentView {
  std::span<const float> data;  // frames x dim, row-major
  int frames = 0;
  int slot = 0;
};

// Gradient scratch and activations kept by the forward pass for backward.
struct ForwardCache;
struct ForwardCacheDeleter {
  void operator()(ForwardCache* cache) const;
};
using ForwardCachePtr = std::unique_ptr<ForwardCache, ForwardCacheDeleter>;

// conv -> conv -> aligning linear map (+ segment position, ReLU) ->
// multi-head self-attention with residual -> mean over tokens -> linear.
// Masked segments never enter the computation.
class PredictionHead {
 public:
  static absl::StatusOr<PredictionHead> Build(const HeadConfig& config, uint64_t seed);

  PredictionHead(const PredictionHead&);
  PredictionHead& operator=(const PredictionHead&);
  PredictionHead(PredictionHead&&) noexcept;
  PredictionHead& operator=(PredictionHead&&) noexcept;
  ~PredictionHead();

  const HeadConfig& config() const { return config_; }
  int64_t parameter_count() const { return static_cast<int64_t>(params_.size()); }
  const std::vector<ParamBlock>& layout() const { return layout_; }
  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }
  void set_input_normalization(double shift, double scale);

  // Logits for one recording. Segments beyond max_segments are rejected;
  // masked segments are ignored.
  absl::StatusOr<std::vector<double>> ForwardClassify(const EmbeddingTensor& embedding) const;
  // Logits for an ordered pair; the second recording's segments follow the
  // first's along the segment axis (slots max_segments and up).
  absl::StatusOr<std::vector<double>> ForwardRank(const EmbeddingTensor& first,
                                                  const EmbeddingTensor& second) const;

  // Segment views for the inputs above, after shape checks.
  absl::StatusOr<std::vector<SegmentView>> ClassifyInput(const EmbeddingTensor& embedding) const;
  absl::StatusOr<std::vector<SegmentView>> RankInput(const EmbeddingTensor& first,
                                                     const EmbeddingTensor& second) const;

  // Low-level forward. When `cache` is non-null the activations needed by
  // Backward are kept.
  std::vector<double> Forward(std::span<const SegmentView> input, ForwardCache* cache) const;
  // Accumulates d(loss)/d(params) into `grad` (same layout as parameters()).
  void Backward(const ForwardCache& cache, std::span<const double> dlogits,
                std::span<double> grad) const;

  ForwardCachePtr NewCache() const;

 private:
  PredictionHead() = default;
  std::span<const double> Block(int index) const;

  HeadConfig config_;
  std::vector<ParamBlock> layout_;
  std::vector<double> params_;
};

// Softmax cross-entropy (target is a probability vector) or per-class
// sigmoid binary cross-entropy (target entries 0/1). Writes dloss/dlogits.
double LossAndGradient(LossKind loss, std::span<const double> logits,
                       std::span<const double> target, std::span<double> dlogits);
std::vector<double> Softmax(std::span<const double> logits);
std::vector<double> Sigmoid(std::span<const double> logits);

// A training or evaluation item: one recording (classification) or an
// ordered pair (ranking), its target distribution and its class index
// (-1 for multi-label items).
struct Example {
  std::shared_ptr<const EmbeddingTensor> first;
  std::shared_ptr<const EmbeddingTensor> second;  // rank tasks only
  std::vector<double> target;
  int label = -1;
};

// Per-item head outputs: probabilities (softmax or sigmoid) and targets.
struct Predictions {
  std::vector<std::vector<double>> probabilities;
  std::vector<std::vector<double>> targets;
  std::vector<int> labels;
};

absl::StatusOr<Predictions> Predict(const PredictionHead& head, LossKind loss,
                                    const std::vector<Example>& examples);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  // Primary metric on the validation set (or the training set when none).
  double primary_metric = 0.0;
  std::map<std::string, double> metrics;
  std::vector<std::optional<double>> per_class_ap;  // multi-label heads only
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  std::string primary_metric_name;

  // Tab-separated log, one line per epoch.
  std::string ToLog() const;
};

struct TrainResult {
  PredictionHead head;       // best checkpoint by primary metric
  PredictionHead last_head;  // parameters after the final epoch
  TrainHistory history;
};

// Called once per finished epoch, e.g. to stream the training log.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch AdamW with decoupled weight decay. Deterministic for a fixed
// seed: batch order comes from the "batching" stream of the seed.
absl::StatusOr<TrainResult> Train(const PredictionHead& initial, const std::vector<Example>& train,
                                  const std::vector<Example>* validation, const TrainConfig& config,
                                  const EpochCallback& on_epoch = nullptr);

// Computes input_shift/input_scale from the valid segments of the examples.
std::pair<double, double> InputStatistics(const std::vector<Example>& examples);

// Name and value of the metric used for model selection: accuracy for rank
// and multi-class heads, mAP for multi-label heads.
std::string_view PrimaryMetricName(TaskKind kind);
absl::StatusOr<std::map<std::string, double>> ScorePredictions(TaskKind kind,
                                                               const Predictions& predictions);

struct GridSearchRow {
  TrainConfig config;
  double metric = 0.0;
  int best_epoch = 0;
};

struct GridSearchResult {
  TrainConfig best;
  std::vector<GridSearchRow> rows;

  std::string ToCsv() const;
};

// Exhaustive search over the Cartesian product of `space`. Recognised keys:
// learning_rate, weight_decay, batch_size, epochs. Selection uses the
// validation primary metric; ties go to the lower learning rate, then to the
// earlier grid point.
absl::StatusOr<GridSearchResult> GridSearch(const std::map<std::string, std::vector<double>>& space,
                                            const HeadConfig& head_config, uint64_t init_seed,
                                            const std::vector<Example>& train,
                                            const std::vector<Example>& validation,
                                            const TrainConfig& base);

struct Checkpoint {
  PredictionHead head;
  TrainConfig train_config;
  int epoch = 0;
  std::map<std::string, double> metrics;
};

absl::Status SaveCheckpoint(const std::string& path, const PredictionHead& head,
                            const TrainConfig& train_config, int epoch,
                            const std::map<std::string, double>& metrics);
absl::StatusOr<Checkpoint> LoadCheckpoint(const std::string& path);

}  // namespace pianojudge

#endif  // PIANOJUDGE_MODEL_H_
