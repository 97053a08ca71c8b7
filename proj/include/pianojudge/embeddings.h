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

#ifndef PIANOJUDGE_EMBEDDINGS_H_
#define PIANOJUDGE_EMBEDDINGS_H_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "pianojudge/audio.h"

namespace pianojudge {

// Describes one source of per-segment feature tensors: frame rate F (Hz) and
// hidden dimension D. `codebook` is informational only.
struct BackendSpec {
  std::string backend_id;
  double frame_rate_hz = 0.0;
  int dim = 0;
  std::string codebook;
  // Only natively computable backends can encode audio; the rest are imported.
  bool native = false;

  // round(F * 10): frames in one 10-second segment.
  int frames_per_segment() const;
};

inline constexpr std::string_view kSpectrogramBackend = "spectrogram";
inline constexpr std::string_view kTestRandomBackend = "test-random";

// Stack of segment embeddings for one recording (or one 5-minute chunk of
// it), row-major (segment, frame, dim).
struct EmbeddingTensor {
  std::string recording_id;
  std::string backend_id;
  int n_segments = 0;
  int frames_per_segment = 0;
  int dim = 0;
  double frame_rate_hz = 0.0;
  std::vector<uint8_t> valid_mask;  // one 0/1 entry per segment
  std::vector<float> data;

  int64_t segment_size() const {
    return static_cast<int64_t>(frames_per_segment) * dim;
  }
  std::span<const float> segment(int s) const {
    return {data.data() + s * segment_size(), static_cast<size_t>(segment_size())};
  }
  std::span<float> segment(int s) {
    return {data.data() + s * segment_size(), static_cast<size_t>(segment_size())};
  }
  float at(int s, int f, int d) const {
    return data[static_cast<size_t>(s * segment_size() + static_cast<int64_t>(f) * dim + d)];
  }
  int num_valid() const;

  bool operator==(const EmbeddingTensor&) const = default;
};

// Checks shape consistency, mask length and finiteness.
absl::Status CheckTensor(const EmbeddingTensor& tensor);

// Returns a copy padded with masked all-zero segments up to `n_segments`.
EmbeddingTensor PadSegments(const EmbeddingTensor& tensor, int n_segments);

class BackendRegistry {
 public:
  // Registry holding the built-in backends: jukebox, mert, audiomae, dac,
  // spectrogram and test-random.
  static BackendRegistry WithBuiltins();

  absl::Status Register(BackendSpec spec);
  const BackendSpec* Find(std::string_view backend_id) const;
  std::vector<std::string> Ids() const;

 private:
  std::map<std::string, BackendSpec, std::less<>> specs_;
};

// Computes embeddings natively. Only `spectrogram` and `test-random` are
// computable; imported backends fail with "external backend: import required".
absl::StatusOr<EmbeddingTensor> Encode(const BackendRegistry& registry,
                                       std::string_view backend_id,
                                       const SegmentedAudio& segmented);

// Deterministic pseudo-embedding for tests: values depend only on the
// recording id and segment count.
EmbeddingTensor TestRandomEmbedding(const BackendSpec& spec, const std::string& recording_id,
                                    int n_segments);

// Binary embedding format ("PLDE", version 1, little-endian).
absl::StatusOr<std::string> SerializeEmbedding(const EmbeddingTensor& tensor);
absl::StatusOr<EmbeddingTensor> DeserializeEmbedding(std::string_view bytes);

absl::Status WriteEmbedding(const EmbeddingTensor& tensor, const std::string& path);
absl::StatusOr<EmbeddingTensor> ReadEmbedding(const std::string& path);

// Compares a tensor's declared shape against its registered backend. Returns
// one message per mismatch; mismatches are not errors because fine-tuned
// variants may legitimately differ.
std::vector<std::string> ShapeWarnings(const BackendRegistry& registry,
                                       const EmbeddingTensor& tensor);

}  // namespace pianojudge

#endif  // PIANOJUDGE_EMBEDDINGS_H_
