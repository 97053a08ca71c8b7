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

#ifndef PIANOJUDGE_CONFIG_H_
#define PIANOJUDGE_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/model.h"

namespace pianojudge {

// Everything a CLI run needs. Read from an INI-style file of key=value lines
// grouped in [sections]; config/defaults.ini lists every key with its default.
struct RunConfig {
  // [run]
  uint64_t seed = 0;
  std::string out = "runs/default";
  std::string backend = "spectrogram";
  std::string task = "expertise2";

  // [data]
  std::string expertise_manifest;
  std::string difficulty_manifest;
  std::string techniques_manifest;
  std::string icpc_manifest;
  double test_fraction = 0.2;
  double validation_fraction = 0.1;

  // [embeddings]
  std::string cache_dir = "cache";  // PIANOJUDGE_CACHE overrides

  // [pairing]
  bool include_inverse = false;

  // [head]
  int conv_kernel = 7;
  int conv_stride = 5;
  int conv_channels_1 = 16;
  int conv_channels_2 = 32;
  int attention_heads = 2;
  int attention_dim = 128;

  // [train]
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  int batch_size = 8;
  int epochs = 50;

  // [grid]; empty lists disable the search.
  std::vector<double> grid_learning_rate;
  std::vector<double> grid_weight_decay;
  std::vector<double> grid_batch_size;
  std::vector<double> grid_epochs;

  // [case_study]
  std::string checkpoint;  // defaults to <out>/train/model.ckpt
  bool fitting = false;
  int fit_epochs = 5;
  std::string fit_split = "candidate";  // or "pair"
  double fit_learning_rate = 1e-4;

  // [fetch]
  std::string downloader;  // command template with {uri} and {out}

  bool operator==(const RunConfig&) const = default;

  // Field-level checks, e.g. "train.learning_rate: must be positive".
  absl::Status Validate() const;
  // Canonical INI text of every field; parsing it gives back this config.
  std::string ToIni() const;
  TrainConfig ToTrainConfig(LossKind loss) const;
  std::map<std::string, std::vector<double>> GridSpace() const;
};

// Parses INI text over the defaults. Unknown sections or keys are errors.
absl::StatusOr<RunConfig> ParseRunConfig(std::string_view text);
absl::StatusOr<RunConfig> LoadRunConfig(const std::string& path);

}  // namespace pianojudge

#endif  // PIANOJUDGE_CONFIG_H_
