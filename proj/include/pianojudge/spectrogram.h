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

#ifndef PIANOJUDGE_SPECTROGRAM_H_
#define PIANOJUDGE_SPECTROGRAM_H_

#include <span>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/audio.h"
#include "pianojudge/embeddings.h"

namespace pianojudge {

// Log-mel spectrogram baseline: 128 mel bins, 400-sample FFT, hop 160 at
// 24 kHz, giving 150 frames per second.
struct MelSpectrogramParams {
  static constexpr int kSampleRate = kWorkingSampleRate;
  static constexpr int kFftSize = 400;
  static constexpr int kHop = 160;
  static constexpr int kMelBins = 128;
  static constexpr double kMinHz = 20.0;
  static constexpr double kMaxHz = 12000.0;
  static constexpr double kLogFloor = 1e-6;
  // Frames per 10-second segment: samples / hop.
  static constexpr int kFramesPerSegment = kSegmentSeconds * kSampleRate / kHop;
};

// Triangular HTK-scale filterbank, row-major (mel bin, FFT bin), with
// kFftSize / 2 + 1 FFT bins per row.
const std::vector<double>& MelFilterbank();

// Log-mel frames for one segment, row-major (frame, mel bin). Frame t covers
// samples [t * hop, t * hop + fft) of the segment; the window past the
// segment end is zero.
std::vector<float> SegmentLogMel(std::span<const float> segment);

// Spectrogram embedding of every segment. Requires 24 kHz input.
absl::StatusOr<EmbeddingTensor> MelSpectrogram(const SegmentedAudio& segmented);

}  // namespace pianojudge

#endif  // PIANOJUDGE_SPECTROGRAM_H_
