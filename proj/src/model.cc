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

#include "pianojudge/model.h"

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "json.hpp"
#include "pianojudge/csv.h"
#include "pianojudge/rng.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::RowVectorXd;
using ConstMap = Eigen::Map<const Mat>;
using MutMap = Eigen::Map<Mat>;

namespace {

enum Block : int {
  kConv1W,
  kConv1B,
  kConv2W,
  kConv2B,
  kAlignW,
  kAlignB,
  kPosition,
  kQueryW,
  kQueryB,
  kKeyW,
  kKeyB,
  kValueW,
  kValueB,
  kAttnOutW,
  kAttnOutB,
  kOutW,
  kOutB,
  kNumBlocks
};

}  // namespace

struct SegmentCache {
  int slot = 0;
  int h1 = 0, w1 = 0, h2 = 0, w2 = 0;
  Mat patches1;  // (h1*w1) x (k*k)
  Mat act1;      // (h1*w1) x c1, after ReLU
  Mat patches2;  // (h2*w2) x (c1*k*k)
  Mat act2;      // (h2*w2) x c2, after ReLU; row-major reshape is the token features
  Mat tokens;    // h2 x d, after position and ReLU
};

struct ForwardCache {
  std::vector<SegmentCache> segments;
  Mat z;  // L x d
  Mat q, k, v;
  std::vector<Mat> attention;  // per head, L x L
  Mat heads_out;               // L x d
  RowVec pooled;
};

std::string_view TaskKindName(TaskKind kind) {
  switch (kind) {
    case TaskKind::kRank: return "rank";
    case TaskKind::kMulticlass: return "multiclass";
    case TaskKind::kMultilabel: return "multilabel";
  }
  return "unknown";
}

absl::StatusOr<TaskKind> ParseTaskKind(std::string_view name) {
  if (name == "rank") return TaskKind::kRank;
  if (name == "multiclass") return TaskKind::kMulticlass;
  if (name == "multilabel") return TaskKind::kMultilabel;
  return absl::InvalidArgumentError(absl::StrCat("unknown task kind '", AV(name), "'"));
}

std::string_view LossKindName(LossKind loss) {
  return loss == LossKind::kCrossEntropy ? "cross_entropy" : "binary_cross_entropy_per_class";
}

absl::StatusOr<LossKind> ParseLossKind(std::string_view name) {
  if (name == "cross_entropy") return LossKind::kCrossEntropy;
  if (name == "binary_cross_entropy_per_class") return LossKind::kBinaryCrossEntropyPerClass;
  return absl::InvalidArgumentError(absl::StrCat("unknown loss '", AV(name), "'"));
}

int HeadConfig::ConvOut(int n) const {
  const int pad = conv_kernel / 2;
  return (n + 2 * pad - conv_kernel) / conv_stride + 1;
}

int HeadConfig::token_features() const {
  return ConvOut(ConvOut(input_dim)) * conv_channels_2;
}

absl::Status HeadConfig::Validate() const {
  if (conv_kernel <= 0 || conv_stride <= 0) {
    return absl::InvalidArgumentError("conv_kernel and conv_stride must be positive");
  }
  if (conv_channels_1 <= 0 || conv_channels_2 <= 0) {
    return absl::InvalidArgumentError("conv channel widths must be positive");
  }
  if (attention_heads <= 0 || attention_dim <= 0) {
    return absl::InvalidArgumentError("attention_heads and attention_dim must be positive");
  }
  if (attention_dim % attention_heads != 0) {
    return absl::InvalidArgumentError(absl::StrCat("attention_dim ", attention_dim,
                                                   " is not divisible by attention_heads ",
                                                   attention_heads));
  }
  if (input_dim <= 0) return absl::InvalidArgumentError("input_dim must be positive");
  if (max_segments <= 0) return absl::InvalidArgumentError("max_segments must be positive");
  if (ConvOut(input_dim) <= 0 || ConvOut(ConvOut(input_dim)) <= 0) {
    return absl::InvalidArgumentError("input_dim too small for the convolution geometry");
  }
  if (!(input_scale > 0.0) || !std::isfinite(input_scale) || !std::isfinite(input_shift)) {
    return absl::InvalidArgumentError("input normalization must be finite with positive scale");
  }
  switch (task_kind) {
    case TaskKind::kRank:
      if (output_classes != 2 && output_classes != 4) {
        return absl::InvalidArgumentError(absl::StrCat(
            "rank heads output 2 or 4 classes, got ", output_classes));
      }
      break;
    case TaskKind::kMultilabel:
      if (output_classes != 7) {
        return absl::InvalidArgumentError(absl::StrCat(
            "multilabel heads output 7 technique classes, got ", output_classes));
      }
      break;
    case TaskKind::kMulticlass:
      if (output_classes < 2) {
        return absl::InvalidArgumentError("multiclass heads need at least 2 classes");
      }
      break;
  }
  return absl::OkStatus();
}

absl::Status TrainConfig::Validate(TaskKind kind) const {
  if (!(learning_rate > 0.0)) return absl::InvalidArgumentError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) return absl::InvalidArgumentError("weight_decay must be non-negative");
  if (batch_size <= 0) return absl::InvalidArgumentError("batch_size must be positive");
  if (epochs <= 0) return absl::InvalidArgumentError("epochs must be positive");
  const bool multilabel = kind == TaskKind::kMultilabel;
  if ((loss == LossKind::kBinaryCrossEntropyPerClass) != multilabel) {
    return absl::InvalidArgumentError(
        "loss must be binary_cross_entropy_per_class exactly for multilabel heads");
  }
  return absl::OkStatus();
}

absl::StatusOr<PredictionHead> PredictionHead::Build(const HeadConfig& config, uint64_t seed) {
  PJ_RETURN_IF_ERROR(config.Validate());
  PredictionHead head;
  head.config_ = config;
  const int k2 = config.conv_kernel * config.conv_kernel;
  const int c1 = config.conv_channels_1, c2 = config.conv_channels_2;
  const int d = config.attention_dim, classes = config.output_classes;
  const std::pair<const char*, std::pair<int, int>> shapes[kNumBlocks] = {
      {"conv1.weight", {k2, c1}},
      {"conv1.bias", {1, c1}},
      {"conv2.weight", {c1 * k2, c2}},
      {"conv2.bias", {1, c2}},
      {"align.weight", {config.token_features(), d}},
      {"align.bias", {1, d}},
      {"position", {config.position_slots(), d}},
      {"attention.query.weight", {d, d}},
      {"attention.query.bias", {1, d}},
      {"attention.key.weight", {d, d}},
      {"attention.key.bias", {1, d}},
      {"attention.value.weight", {d, d}},
      {"attention.value.bias", {1, d}},
      {"attention.output.weight", {d, d}},
      {"attention.output.bias", {1, d}},
      {"output.weight", {d, classes}},
      {"output.bias", {1, classes}},
  };
  int64_t offset = 0;
  for (const auto& [name, shape] : shapes) {
    head.layout_.push_back({name, shape.first, shape.second, offset});
    offset += head.layout_.back().size();
  }
  head.params_.assign(static_cast<size_t>(offset), 0.0);

  std::mt19937_64 rng = MakeStream(seed, "init");
  auto uniform = [&rng](double bound) {
    return bound * (2.0 * std::generate_canonical<double, 53>(rng) - 1.0);
  };
  for (int b = 0; b < kNumBlocks; ++b) {
    const ParamBlock& block = head.layout_[b];
    double bound = 0.0;
    switch (b) {
      case kConv1W:
      case kConv2W:
      case kAlignW:
        bound = std::sqrt(6.0 / block.rows);  // He, ReLU follows
        break;
      case kQueryW:
      case kKeyW:
      case kValueW:
      case kAttnOutW:
      case kOutW:
        bound = std::sqrt(6.0 / (block.rows + block.cols));  // Glorot
        break;
      case kPosition:
        bound = 0.1;
        break;
      default:
        break;  // biases start at zero
    }
    if (bound == 0.0) continue;
    for (int64_t i = 0; i < block.size(); ++i) head.params_[block.offset + i] = uniform(bound);
  }
  return head;
}

PredictionHead::PredictionHead(const PredictionHead&) = default;
PredictionHead& PredictionHead::operator=(const PredictionHead&) = default;
PredictionHead::PredictionHead(PredictionHead&&) noexcept = default;
PredictionHead& PredictionHead::operator=(PredictionHead&&) noexcept = default;
PredictionHead::~PredictionHead() = default;

void ForwardCacheDeleter::operator()(ForwardCache* cache) const { delete cache; }

ForwardCachePtr PredictionHead::NewCache() const {
  return ForwardCachePtr(new ForwardCache());
}

void PredictionHead::set_input_normalization(double shift, double scale) {
  config_.input_shift = shift;
  config_.input_scale = scale;
}

std::span<const double> PredictionHead::Block(int index) const {
  const ParamBlock& b = layout_[index];
  return {params_.data() + b.offset, static_cast<size_t>(b.size())};
}

absl::StatusOr<std::vector<SegmentView>> PredictionHead::ClassifyInput(
    const EmbeddingTensor& embedding) const {
  PJ_RETURN_IF_ERROR(CheckTensor(embedding));
  if (embedding.dim != config_.input_dim) {
    return absl::InvalidArgumentError(absl::StrCat("embedding dim ", embedding.dim,
                                                   " does not match head input_dim ",
                                                   config_.input_dim));
  }
  std::vector<SegmentView> views;
  for (int s = 0; s < embedding.n_segments; ++s) {
    if (!embedding.valid_mask[s]) continue;
    if (s >= config_.max_segments) {
      return absl::InvalidArgumentError(absl::StrCat("valid segment ", s, " exceeds the ",
                                                     config_.max_segments, "-segment limit"));
    }
    views.push_back({embedding.segment(s), embedding.frames_per_segment, s});
  }
  if (views.empty()) return absl::InvalidArgumentError("embedding has no valid segment");
  return views;
}

absl::StatusOr<std::vector<SegmentView>> PredictionHead::RankInput(
    const EmbeddingTensor& first, const EmbeddingTensor& second) const {
  if (config_.task_kind != TaskKind::kRank) {
    return absl::FailedPreconditionError("ForwardRank needs a rank head");
  }
  if (first.backend_id != second.backend_id) {
    return absl::InvalidArgumentError(absl::StrCat("backend mismatch: '", first.backend_id,
                                                   "' vs '", second.backend_id, "'"));
  }
  if (first.dim != second.dim) {
    return absl::InvalidArgumentError(
        absl::StrCat("dimension mismatch: ", first.dim, " vs ", second.dim));
  }
  PJ_ASSIGN_OR_RETURN(std::vector<SegmentView> views, ClassifyInput(first));
  PJ_ASSIGN_OR_RETURN(std::vector<SegmentView> tail, ClassifyInput(second));
  for (SegmentView& view : tail) {
    view.slot += config_.max_segments;
    views.push_back(view);
  }
  return views;
}

absl::StatusOr<std::vector<double>> PredictionHead::ForwardClassify(
    const EmbeddingTensor& embedding) const {
  if (config_.task_kind == TaskKind::kRank) {
    return absl::FailedPreconditionError("rank heads take pairs; use ForwardRank");
  }
  PJ_ASSIGN_OR_RETURN(std::vector<SegmentView> views, ClassifyInput(embedding));
  return Forward(views, nullptr);
}

absl::StatusOr<std::vector<double>> PredictionHead::ForwardRank(
    const EmbeddingTensor& first, const EmbeddingTensor& second) const {
  PJ_ASSIGN_OR_RETURN(std::vector<SegmentView> views, RankInput(first, second));
  return Forward(views, nullptr);
}

namespace {

// Unfolds one (frames x dim) segment into conv patches, normalizing inputs.
void Im2ColInput(const SegmentView& view, int dim, const HeadConfig& cfg, int h1, int w1,
                 Mat* patches) {
  const int k = cfg.conv_kernel, stride = cfg.conv_stride, pad = k / 2;
  patches->setZero(static_cast<Eigen::Index>(h1) * w1, k * k);
  const double shift = cfg.input_shift, scale = cfg.input_scale;
  for (int i = 0; i < h1; ++i) {
    for (int j = 0; j < w1; ++j) {
      double* row = patches->data() + (static_cast<int64_t>(i) * w1 + j) * k * k;
      for (int a = 0; a < k; ++a) {
        const int x = i * stride + a - pad;
        if (x < 0 || x >= view.frames) continue;
        const float* src = view.data.data() + static_cast<int64_t>(x) * dim;
        for (int b = 0; b < k; ++b) {
          const int y = j * stride + b - pad;
          if (y < 0 || y >= dim) continue;
          row[a * k + b] = (src[y] - shift) * scale;
        }
      }
    }
  }
}

// Unfolds a (h x w) map with `channels` channels (rows = positions).
void Im2ColMap(const Mat& input, int h, int w, int channels, const HeadConfig& cfg, int out_h,
               int out_w, Mat* patches) {
  const int k = cfg.conv_kernel, stride = cfg.conv_stride, pad = k / 2;
  const int k2 = k * k;
  patches->setZero(static_cast<Eigen::Index>(out_h) * out_w, channels * k2);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      double* row = patches->data() + (static_cast<int64_t>(i) * out_w + j) * channels * k2;
      for (int a = 0; a < k; ++a) {
        const int x = i * stride + a - pad;
        if (x < 0 || x >= h) continue;
        for (int b = 0; b < k; ++b) {
          const int y = j * stride + b - pad;
          if (y < 0 || y >= w) continue;
          const double* src = input.data() + (static_cast<int64_t>(x) * w + y) * channels;
          for (int c = 0; c < channels; ++c) row[c * k2 + a * k + b] = src[c];
        }
      }
    }
  }
}

// Adjoint of Im2ColMap: scatters patch gradients back onto the map.
void Col2ImMap(const Mat& dpatches, int h, int w, int channels, const HeadConfig& cfg, int out_h,
               int out_w, Mat* dinput) {
  const int k = cfg.conv_kernel, stride = cfg.conv_stride, pad = k / 2;
  const int k2 = k * k;
  dinput->setZero(static_cast<Eigen::Index>(h) * w, channels);
  for (int i = 0; i < out_h; ++i) {
    for (int j = 0; j < out_w; ++j) {
      const double* row = dpatches.data() + (static_cast<int64_t>(i) * out_w + j) * channels * k2;
      for (int a = 0; a < k; ++a) {
        const int x = i * stride + a - pad;
        if (x < 0 || x >= h) continue;
        for (int b = 0; b < k; ++b) {
          const int y = j * stride + b - pad;
          if (y < 0 || y >= w) continue;
          double* dst = dinput->data() + (static_cast<int64_t>(x) * w + y) * channels;
          for (int c = 0; c < channels; ++c) dst[c] += row[c * k2 + a * k + b];
        }
      }
    }
  }
}

ConstMap AsMat(std::span<const double> block, const ParamBlock& shape) {
  return ConstMap(block.data(), shape.rows, shape.cols);
}

}  // namespace

std::vector<double> PredictionHead::Forward(std::span<const SegmentView> input,
                                            ForwardCache* cache) const {
  const HeadConfig& cfg = config_;
  auto param = [this](int b) { return AsMat(Block(b), layout_[b]); };
  const int dim = cfg.input_dim;
  const int d = cfg.attention_dim;
  const int c1 = cfg.conv_channels_1, c2 = cfg.conv_channels_2;

  // Per-segment convolutions and token projection.
  std::vector<Mat> token_blocks;
  int64_t total_tokens = 0;
  if (cache != nullptr) cache->segments.clear();
  for (const SegmentView& view : input) {
    SegmentCache local;
    SegmentCache& seg = cache != nullptr ? cache->segments.emplace_back() : local;
    seg.slot = view.slot;
    seg.h1 = cfg.ConvOut(view.frames);
    seg.w1 = cfg.ConvOut(dim);
    seg.h2 = cfg.ConvOut(seg.h1);
    seg.w2 = cfg.ConvOut(seg.w1);
    Im2ColInput(view, dim, cfg, seg.h1, seg.w1, &seg.patches1);
    seg.act1 = ((seg.patches1 * param(kConv1W)).rowwise() + RowVec(param(kConv1B))).cwiseMax(0.0);
    Im2ColMap(seg.act1, seg.h1, seg.w1, c1, cfg, seg.h2, seg.w2, &seg.patches2);
    seg.act2 = ((seg.patches2 * param(kConv2W)).rowwise() + RowVec(param(kConv2B))).cwiseMax(0.0);
    ConstMap features(seg.act2.data(), seg.h2, static_cast<Eigen::Index>(seg.w2) * c2);
    const RowVec bias = RowVec(param(kAlignB)) + param(kPosition).row(view.slot);
    seg.tokens = ((features * param(kAlignW)).rowwise() + bias).cwiseMax(0.0);
    total_tokens += seg.h2;
    if (cache == nullptr) token_blocks.push_back(std::move(seg.tokens));
  }

  Mat z(total_tokens, d);
  {
    int64_t row = 0;
    const size_t n = cache != nullptr ? cache->segments.size() : token_blocks.size();
    for (size_t i = 0; i < n; ++i) {
      const Mat& t = cache != nullptr ? cache->segments[i].tokens : token_blocks[i];
      z.middleRows(row, t.rows()) = t;
      row += t.rows();
    }
  }

  const int heads = cfg.attention_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Mat q = (z * param(kQueryW)).rowwise() + RowVec(param(kQueryB));
  Mat k = (z * param(kKeyW)).rowwise() + RowVec(param(kKeyB));
  Mat v = (z * param(kValueW)).rowwise() + RowVec(param(kValueB));
  Mat heads_out(total_tokens, d);
  std::vector<Mat> attention(heads);
  for (int h = 0; h < heads; ++h) {
    Mat scores = (q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose()) * scale;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      auto row = scores.row(r);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
    heads_out.middleCols(h * dh, dh) = scores * v.middleCols(h * dh, dh);
    attention[h] = std::move(scores);
  }
  Mat u = z + ((heads_out * param(kAttnOutW)).rowwise() + RowVec(param(kAttnOutB)));
  RowVec pooled = u.colwise().mean();
  RowVec logits = pooled * param(kOutW) + RowVec(param(kOutB));

  if (cache != nullptr) {
    cache->z = std::move(z);
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->attention = std::move(attention);
    cache->heads_out = std::move(heads_out);
    cache->pooled = std::move(pooled);
  }
  return std::vector<double>(logits.data(), logits.data() + logits.size());
}

void PredictionHead::Backward(const ForwardCache& cache, std::span<const double> dlogits,
                              std::span<double> grad) const {
  const HeadConfig& cfg = config_;
  auto param = [this](int b) { return AsMat(Block(b), layout_[b]); };
  auto dparam = [this, &grad](int b) {
    const ParamBlock& block = layout_[b];
    return MutMap(grad.data() + block.offset, block.rows, block.cols);
  };
  const int d = cfg.attention_dim;
  const int heads = cfg.attention_heads;
  const int dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int c1 = cfg.conv_channels_1, c2 = cfg.conv_channels_2;
  const Eigen::Index n_tokens = cache.z.rows();

  const Eigen::Map<const RowVec> dout(dlogits.data(), static_cast<Eigen::Index>(dlogits.size()));
  dparam(kOutW) += cache.pooled.transpose() * dout;
  dparam(kOutB) += dout;
  const RowVec dpooled = dout * param(kOutW).transpose();
  // The mean pool spreads dpooled / L onto every token of the residual sum.
  const RowVec drow = dpooled / static_cast<double>(n_tokens);
  const Mat dy = drow.replicate(n_tokens, 1);
  dparam(kAttnOutW) += cache.heads_out.transpose() * dy;
  dparam(kAttnOutB) += dpooled;
  const Mat dheads = dy * param(kAttnOutW).transpose();

  Mat dq(n_tokens, d), dk(n_tokens, d), dv(n_tokens, d);
  for (int h = 0; h < heads; ++h) {
    const Mat& attn = cache.attention[h];
    const auto dh_out = dheads.middleCols(h * dh, dh);
    Mat dattn = dh_out * cache.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh) = attn.transpose() * dh_out;
    const Eigen::VectorXd row_dot = (dattn.array() * attn.array()).rowwise().sum();
    Mat dscores = (attn.array() * (dattn.colwise() - row_dot).array()).matrix() * scale;
    dq.middleCols(h * dh, dh) = dscores * cache.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh) = dscores.transpose() * cache.q.middleCols(h * dh, dh);
  }
  dparam(kQueryW) += cache.z.transpose() * dq;
  dparam(kQueryB) += dq.colwise().sum();
  dparam(kKeyW) += cache.z.transpose() * dk;
  dparam(kKeyB) += dk.colwise().sum();
  dparam(kValueW) += cache.z.transpose() * dv;
  dparam(kValueB) += dv.colwise().sum();
  Mat dz = dy;  // residual path
  dz.noalias() += dq * param(kQueryW).transpose();
  dz.noalias() += dk * param(kKeyW).transpose();
  dz.noalias() += dv * param(kValueW).transpose();

  Eigen::Index row = 0;
  Mat dact1, dpatches2;
  for (const SegmentCache& seg : cache.segments) {
    const Mat dtokens =
        (dz.middleRows(row, seg.h2).array() * (seg.tokens.array() > 0.0).cast<double>()).matrix();
    row += seg.h2;
    const RowVec dbias = dtokens.colwise().sum();
    dparam(kAlignB) += dbias;
    dparam(kPosition).row(seg.slot) += dbias;
    ConstMap features(seg.act2.data(), seg.h2, static_cast<Eigen::Index>(seg.w2) * c2);
    dparam(kAlignW) += features.transpose() * dtokens;
    Mat dfeatures = dtokens * param(kAlignW).transpose();
    MutMap dact2(dfeatures.data(), static_cast<Eigen::Index>(seg.h2) * seg.w2, c2);
    dact2.array() *= (seg.act2.array() > 0.0).cast<double>();
    dparam(kConv2W) += seg.patches2.transpose() * dact2;
    dparam(kConv2B) += dact2.colwise().sum();
    dpatches2 = dact2 * param(kConv2W).transpose();
    Col2ImMap(dpatches2, seg.h1, seg.w1, c1, cfg, seg.h2, seg.w2, &dact1);
    dact1.array() *= (seg.act1.array() > 0.0).cast<double>();
    dparam(kConv1W) += seg.patches1.transpose() * dact1;
    dparam(kConv1B) += dact1.colwise().sum();
  }
}

std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double max = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& x : p) sum += (x = std::exp(x - max));
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> Sigmoid(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits[i]));
  return p;
}

double LossAndGradient(LossKind loss, std::span<const double> logits,
                       std::span<const double> target, std::span<double> dlogits) {
  const size_t n = logits.size();
  double value = 0.0;
  if (loss == LossKind::kCrossEntropy) {
    const double max = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - max);
    const double log_norm = max + std::log(sum);
    double target_mass = 0.0;
    for (size_t i = 0; i < n; ++i) {
      value -= target[i] * (logits[i] - log_norm);
      target_mass += target[i];
    }
    for (size_t i = 0; i < n; ++i) {
      dlogits[i] = target_mass * std::exp(logits[i] - log_norm) - target[i];
    }
    return value;
  }
  // Mean over classes of softplus(z) - t * z.
  for (size_t i = 0; i < n; ++i) {
    const double z = logits[i];
    const double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
    value += softplus - target[i] * z;
    dlogits[i] = (1.0 / (1.0 + std::exp(-z)) - target[i]) / static_cast<double>(n);
  }
  return value / static_cast<double>(n);
}

namespace {

absl::StatusOr<std::vector<SegmentView>> ExampleInput(const PredictionHead& head,
                                                      const Example& example) {
  if (example.first == nullptr) return absl::InvalidArgumentError("example has no embedding");
  if (head.config().task_kind == TaskKind::kRank) {
    if (example.second == nullptr) {
      return absl::InvalidArgumentError("rank example needs two embeddings");
    }
    return head.RankInput(*example.first, *example.second);
  }
  return head.ClassifyInput(*example.first);
}

absl::Status CheckExamples(const PredictionHead& head, const std::vector<Example>& examples,
                           std::string_view what) {
  for (size_t i = 0; i < examples.size(); ++i) {
    if (static_cast<int>(examples[i].target.size()) != head.config().output_classes) {
      return absl::InvalidArgumentError(absl::StrCat(AV(what), " example ", i, " has a target of size ",
                                                     examples[i].target.size(), ", expected ",
                                                     head.config().output_classes));
    }
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<Predictions> Predict(const PredictionHead& head, LossKind loss,
                                    const std::vector<Example>& examples) {
  PJ_RETURN_IF_ERROR(CheckExamples(head, examples, "evaluation"));
  Predictions out;
  for (const Example& example : examples) {
    PJ_ASSIGN_OR_RETURN(std::vector<SegmentView> input, ExampleInput(head, example));
    const std::vector<double> logits = head.Forward(input, nullptr);
    out.probabilities.push_back(loss == LossKind::kCrossEntropy ? Softmax(logits)
                                                                : Sigmoid(logits));
    out.targets.push_back(example.target);
    out.labels.push_back(example.label);
  }
  return out;
}

std::string_view PrimaryMetricName(TaskKind kind) {
  return kind == TaskKind::kMultilabel ? "map" : "accuracy";
}

absl::StatusOr<std::map<std::string, double>> ScorePredictions(TaskKind kind,
                                                               const Predictions& predictions) {
  std::map<std::string, double> metrics;
  if (predictions.probabilities.empty()) return absl::InvalidArgumentError("no predictions");
  if (kind == TaskKind::kMultilabel) {
    MultilabelBatch batch;
    batch.scores = predictions.probabilities;
    for (const auto& t : predictions.targets) {
      std::vector<int> relevant(t.size());
      for (size_t c = 0; c < t.size(); ++c) relevant[c] = t[c] > 0.5;
      batch.labels.push_back(std::move(relevant));
    }
    PJ_ASSIGN_OR_RETURN(metrics["map"], MeanAveragePrecision(batch));
    if (auto auc = MacroAuc(batch); auc.ok()) metrics["auc"] = *auc;
    PJ_ASSIGN_OR_RETURN(metrics["multilabel_accuracy"], MultilabelAccuracy(batch, 0.5));
    PJ_ASSIGN_OR_RETURN(metrics["single_label_accuracy"], SingleLabelAccuracy(batch));
    return metrics;
  }
  MulticlassBatch batch{predictions.probabilities, predictions.labels};
  const std::vector<int> predicted = batch.Predictions();
  const bool set_valued = std::any_of(predictions.labels.begin(), predictions.labels.end(),
                                      [](int l) { return l < 0; });
  if (set_valued) {
    // Soft multi-hot targets: a prediction is right when it hits any label.
    MultilabelBatch ml;
    ml.scores = predictions.probabilities;
    for (const auto& t : predictions.targets) {
      std::vector<int> relevant(t.size());
      for (size_t c = 0; c < t.size(); ++c) relevant[c] = t[c] > 0.0;
      ml.labels.push_back(std::move(relevant));
    }
    PJ_ASSIGN_OR_RETURN(metrics["accuracy"], SingleLabelAccuracy(ml));
    return metrics;
  }
  PJ_ASSIGN_OR_RETURN(metrics["accuracy"], Accuracy(predicted, batch.labels));
  PJ_ASSIGN_OR_RETURN(metrics["macro_f1"], MacroF1(predicted, batch.labels));
  if (kind == TaskKind::kMulticlass) {
    PJ_ASSIGN_OR_RETURN(metrics["acc_within_0"], AccuracyWithinN(predicted, batch.labels, 0));
    PJ_ASSIGN_OR_RETURN(metrics["acc_within_1"], AccuracyWithinN(predicted, batch.labels, 1));
  }
  return metrics;
}

std::pair<double, double> InputStatistics(const std::vector<Example>& examples) {
  // Streaming mean/variance over every value of every valid segment.
  double mean = 0.0, m2 = 0.0;
  int64_t count = 0;
  auto visit = [&](const EmbeddingTensor* t) {
    if (t == nullptr) return;
    for (int s = 0; s < t->n_segments; ++s) {
      if (!t->valid_mask[s]) continue;
      for (float x : t->segment(s)) {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
      }
    }
  };
  for (const Example& e : examples) {
    visit(e.first.get());
    visit(e.second.get());
  }
  if (count < 2) return {0.0, 1.0};
  const double stddev = std::sqrt(m2 / static_cast<double>(count - 1));
  return {mean, stddev > 1e-12 ? 1.0 / stddev : 1.0};
}

std::string TrainHistory::ToLog() const {
  std::string out;
  for (const EpochRecord& r : epochs) {
    absl::StrAppend(&out, "epoch=", r.epoch, "\tloss=", FormatMetric(r.train_loss));
    for (const auto& [name, value] : r.metrics) absl::StrAppend(&out, "\t", name, "=", FormatMetric(value));
    for (size_t c = 0; c < r.per_class_ap.size(); ++c) {
      absl::StrAppend(&out, "\tap_", c, "=",
                      r.per_class_ap[c].has_value() ? FormatMetric(*r.per_class_ap[c]) : "nan");
    }
    out += "\n";
  }
  return out;
}

absl::StatusOr<TrainResult> Train(const PredictionHead& initial, const std::vector<Example>& train,
                                  const std::vector<Example>* validation, const TrainConfig& config,
                                  const EpochCallback& on_epoch) {
  const TaskKind kind = initial.config().task_kind;
  PJ_RETURN_IF_ERROR(config.Validate(kind));
  if (train.empty()) return absl::InvalidArgumentError("empty training set");
  PJ_RETURN_IF_ERROR(CheckExamples(initial, train, "training"));
  const std::vector<Example>& selection =
      validation != nullptr && !validation->empty() ? *validation : train;
  PJ_RETURN_IF_ERROR(CheckExamples(initial, selection, "validation"));

  // Resolve inputs up front so malformed examples fail before any update.
  std::vector<std::vector<SegmentView>> inputs;
  inputs.reserve(train.size());
  for (const Example& e : train) {
    PJ_ASSIGN_OR_RETURN(std::vector<SegmentView> input, ExampleInput(initial, e));
    inputs.push_back(std::move(input));
  }

  TrainResult result{initial, initial, {}};
  PredictionHead& head = result.last_head;
  result.history.primary_metric_name = std::string(PrimaryMetricName(kind));
  const size_t n_params = static_cast<size_t>(head.parameter_count());
  std::vector<double> grad(n_params), m(n_params, 0.0), v(n_params, 0.0);
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 batch_rng = MakeStream(config.seed, "batching");
  ForwardCachePtr cache = head.NewCache();
  std::vector<double> dlogits(head.config().output_classes);
  int64_t step = 0;
  double best_metric = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), batch_rng);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t end = std::min(order.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (size_t i = start; i < end; ++i) {
        const size_t idx = order[i];
        const std::vector<double> logits = head.Forward(inputs[idx], cache.get());
        const double loss = LossAndGradient(config.loss, logits, train[idx].target, dlogits);
        if (!std::isfinite(loss)) {
          return absl::InternalError(absl::StrCat(
              "non-finite loss at epoch ", epoch, ", batch starting at ", start,
              ", example ", idx, "; logits: ", absl::StrJoin(logits, ", ")));
        }
        loss_sum += loss;
        head.Backward(*cache, dlogits, grad);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      ++step;
      const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      std::span<double> params = head.parameters();
      for (size_t p = 0; p < n_params; ++p) {
        const double g = grad[p] * inv;
        m[p] = config.beta1 * m[p] + (1.0 - config.beta1) * g;
        v[p] = config.beta2 * v[p] + (1.0 - config.beta2) * g * g;
        const double m_hat = m[p] / correction1;
        const double v_hat = v[p] / correction2;
        params[p] -= config.learning_rate *
                     (m_hat / (std::sqrt(v_hat) + config.epsilon) + config.weight_decay * params[p]);
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(train.size());
    PJ_ASSIGN_OR_RETURN(Predictions predictions, Predict(head, config.loss, selection));
    PJ_ASSIGN_OR_RETURN(record.metrics, ScorePredictions(kind, predictions));
    record.primary_metric = record.metrics.at(result.history.primary_metric_name);
    if (kind == TaskKind::kMultilabel) {
      MultilabelBatch batch;
      batch.scores = predictions.probabilities;
      for (const auto& t : predictions.targets) {
        std::vector<int> relevant(t.size());
        for (size_t c = 0; c < t.size(); ++c) relevant[c] = t[c] > 0.5;
        batch.labels.push_back(std::move(relevant));
      }
      PJ_ASSIGN_OR_RETURN(record.per_class_ap, AveragePrecisionPerClass(batch));
    }
    if (record.primary_metric > best_metric) {
      best_metric = record.primary_metric;
      result.history.best_epoch = epoch;
      result.head = head;
    }
    result.history.epochs.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  return result;
}

std::string GridSearchResult::ToCsv() const {
  std::string out = "learning_rate,weight_decay,batch_size,epochs,metric,best_epoch\n";
  for (const GridSearchRow& row : rows) {
    out += CsvRow({FormatMetric(row.config.learning_rate), FormatMetric(row.config.weight_decay),
                   absl::StrCat(row.config.batch_size), absl::StrCat(row.config.epochs),
                   FormatMetric(row.metric), absl::StrCat(row.best_epoch)});
  }
  return out;
}

absl::StatusOr<GridSearchResult> GridSearch(const std::map<std::string, std::vector<double>>& space,
                                            const HeadConfig& head_config, uint64_t init_seed,
                                            const std::vector<Example>& train,
                                            const std::vector<Example>& validation,
                                            const TrainConfig& base) {
  if (space.empty()) return absl::InvalidArgumentError("empty search space");
  std::vector<std::pair<std::string, std::vector<double>>> axes(space.begin(), space.end());
  for (const auto& [name, values] : axes) {
    if (name != "learning_rate" && name != "weight_decay" && name != "batch_size" &&
        name != "epochs") {
      return absl::InvalidArgumentError(absl::StrCat("unknown grid-search key '", name, "'"));
    }
    if (values.empty()) {
      return absl::InvalidArgumentError(absl::StrCat("grid-search key '", name, "' has no values"));
    }
  }
  PJ_ASSIGN_OR_RETURN(PredictionHead initial, PredictionHead::Build(head_config, init_seed));
  GridSearchResult result;
  std::vector<size_t> index(axes.size(), 0);
  std::optional<size_t> best;
  for (;;) {
    TrainConfig config = base;
    for (size_t a = 0; a < axes.size(); ++a) {
      const double value = axes[a].second[index[a]];
      if (axes[a].first == "learning_rate") config.learning_rate = value;
      if (axes[a].first == "weight_decay") config.weight_decay = value;
      if (axes[a].first == "batch_size") config.batch_size = static_cast<int>(value);
      if (axes[a].first == "epochs") config.epochs = static_cast<int>(value);
    }
    PJ_ASSIGN_OR_RETURN(TrainResult trained, Train(initial, train, &validation, config));
    const EpochRecord& best_record = trained.history.epochs[trained.history.best_epoch - 1];
    result.rows.push_back({config, best_record.primary_metric, trained.history.best_epoch});
    const GridSearchRow& row = result.rows.back();
    if (!best.has_value() || row.metric > result.rows[*best].metric ||
        (row.metric == result.rows[*best].metric &&
         row.config.learning_rate < result.rows[*best].config.learning_rate)) {
      best = result.rows.size() - 1;
    }
    // Odometer increment, last axis fastest.
    size_t a = axes.size();
    while (a > 0) {
      --a;
      if (++index[a] < axes[a].second.size()) break;
      index[a] = 0;
      if (a == 0) {
        a = axes.size() + 1;
        break;
      }
    }
    if (a == axes.size() + 1) break;
  }
  result.best = result.rows[*best].config;
  return result;
}

namespace {

constexpr char kCheckpointMagic[4] = {'P', 'L', 'D', 'C'};
constexpr uint32_t kCheckpointVersion = 1;

nlohmann::json HeadConfigJson(const HeadConfig& c) {
  return {{"conv_kernel", c.conv_kernel},       {"conv_stride", c.conv_stride},
          {"conv_channels_1", c.conv_channels_1}, {"conv_channels_2", c.conv_channels_2},
          {"attention_heads", c.attention_heads}, {"attention_dim", c.attention_dim},
          {"input_dim", c.input_dim},           {"output_classes", c.output_classes},
          {"task_kind", TaskKindName(c.task_kind)}, {"max_segments", c.max_segments},
          {"input_shift", c.input_shift},       {"input_scale", c.input_scale}};
}

nlohmann::json TrainConfigJson(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},       {"epochs", c.epochs},
          {"seed", c.seed},                   {"loss", LossKindName(c.loss)},
          {"beta1", c.beta1},                 {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

}  // namespace

absl::Status SaveCheckpoint(const std::string& path, const PredictionHead& head,
                            const TrainConfig& train_config, int epoch,
                            const std::map<std::string, double>& metrics) {
  nlohmann::json header;
  header["head_config"] = HeadConfigJson(head.config());
  header["train_config"] = TrainConfigJson(train_config);
  header["epoch"] = epoch;
  header["metrics"] = metrics;
  nlohmann::json blocks = nlohmann::json::array();
  for (const ParamBlock& b : head.layout()) blocks.push_back({b.name, b.rows, b.cols});
  header["parameters"] = blocks;
  const std::string json = header.dump();

  std::string bytes(kCheckpointMagic, 4);
  auto put_u32 = [&bytes](uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_u32(kCheckpointVersion);
  put_u32(static_cast<uint32_t>(json.size()));
  bytes += json;
  for (double p : head.parameters()) put_u32(std::bit_cast<uint32_t>(static_cast<float>(p)));
  return WriteFile(path, bytes);
}

absl::StatusOr<Checkpoint> LoadCheckpoint(const std::string& path) {
  PJ_ASSIGN_OR_RETURN(std::string bytes, ReadFile(path));
  size_t pos = 0;
  auto get_u32 = [&]() -> absl::StatusOr<uint32_t> {
    if (bytes.size() - pos < 4) return absl::DataLossError("unexpected end of checkpoint");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + i])) << (8 * i);
    pos += 4;
    return v;
  };
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    return absl::DataLossError(absl::StrCat(path, ": not a checkpoint file"));
  }
  pos = 4;
  PJ_ASSIGN_OR_RETURN(uint32_t version, get_u32());
  if (version != kCheckpointVersion) {
    return absl::DataLossError(absl::StrCat("unsupported checkpoint version ", version));
  }
  PJ_ASSIGN_OR_RETURN(uint32_t json_size, get_u32());
  if (bytes.size() - pos < json_size) return absl::DataLossError("unexpected end of checkpoint");
  nlohmann::json header = nlohmann::json::parse(bytes.substr(pos, json_size), nullptr, false);
  pos += json_size;
  if (header.is_discarded()) return absl::DataLossError("corrupt checkpoint header");

  HeadConfig hc;
  TrainConfig tc;
  Checkpoint checkpoint{PredictionHead::Build(HeadConfig{.input_dim = 8, .output_classes = 2}, 0).value(),
                        tc, 0, {}};
  try {
    const auto& h = header.at("head_config");
    hc.conv_kernel = h.at("conv_kernel");
    hc.conv_stride = h.at("conv_stride");
    hc.conv_channels_1 = h.at("conv_channels_1");
    hc.conv_channels_2 = h.at("conv_channels_2");
    hc.attention_heads = h.at("attention_heads");
    hc.attention_dim = h.at("attention_dim");
    hc.input_dim = h.at("input_dim");
    hc.output_classes = h.at("output_classes");
    PJ_ASSIGN_OR_RETURN(hc.task_kind, ParseTaskKind(h.at("task_kind").get<std::string>()));
    hc.max_segments = h.at("max_segments");
    hc.input_shift = h.at("input_shift");
    hc.input_scale = h.at("input_scale");
    const auto& t = header.at("train_config");
    tc.learning_rate = t.at("learning_rate");
    tc.weight_decay = t.at("weight_decay");
    tc.batch_size = t.at("batch_size");
    tc.epochs = t.at("epochs");
    tc.seed = t.at("seed");
    PJ_ASSIGN_OR_RETURN(tc.loss, ParseLossKind(t.at("loss").get<std::string>()));
    tc.beta1 = t.at("beta1");
    tc.beta2 = t.at("beta2");
    tc.epsilon = t.at("epsilon");
    checkpoint.epoch = header.at("epoch");
    checkpoint.metrics = header.at("metrics").get<std::map<std::string, double>>();
  } catch (const nlohmann::json::exception& e) {
    return absl::DataLossError(absl::StrCat("checkpoint header: ", e.what()));
  }
  PJ_ASSIGN_OR_RETURN(PredictionHead head, PredictionHead::Build(hc, 0));
  // The stored layout must match the one implied by the stored config.
  const auto& blocks = header.at("parameters");
  if (!blocks.is_array() || blocks.size() != head.layout().size()) {
    return absl::FailedPreconditionError("checkpoint parameter layout does not match its config");
  }
  for (size_t i = 0; i < blocks.size(); ++i) {
    const ParamBlock& b = head.layout()[i];
    if (blocks[i].at(0) != b.name || blocks[i].at(1) != b.rows || blocks[i].at(2) != b.cols) {
      return absl::FailedPreconditionError(
          absl::StrCat("checkpoint block ", i, " (", blocks[i].dump(), ") does not match ", b.name));
    }
  }
  if (bytes.size() - pos != static_cast<size_t>(head.parameter_count()) * 4) {
    return absl::DataLossError("checkpoint parameter data has the wrong size");
  }
  for (double& p : head.parameters()) {
    PJ_ASSIGN_OR_RETURN(uint32_t bits, get_u32());
    p = std::bit_cast<float>(bits);
  }
  checkpoint.head = std::move(head);
  checkpoint.train_config = tc;
  return checkpoint;
}

}  // namespace pianojudge
