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

#ifndef PIANOJUDGE_AUDIO_H_
#define PIANOJUDGE_AUDIO_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/statusor.h"

namespace pianojudge {

inline constexpr int kWorkingSampleRate = 24000;
inline constexpr int kSegmentSeconds = 10;
inline constexpr int kMaxSegments = 30;  // 5 minutes.
// Long recordings (ICPC) are cut into 5-minute chunks, at most this many.
inline constexpr int kMaxChunks = 30;

// Interleaved PCM in [-1, 1].
struct AudioBuffer {
  int sample_rate = 0;
  int channels = 1;
  std::vector<float> samples;

  int64_t num_frames() const {
    return channels > 0 ? static_cast<int64_t>(samples.size()) / channels : 0;
  }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(num_frames()) / sample_rate : 0.0;
  }
};

struct SegmentedAudio {
  std::string recording_id;
  int sample_rate = 0;
  std::vector<std::vector<float>> segments;  // each exactly 10 s of samples
  std::vector<bool> valid_mask;
  int64_t last_segment_pad_samples = 0;

  int64_t samples_per_segment() const {
    return static_cast<int64_t>(kSegmentSeconds) * sample_rate;
  }
};

// Decodes a WAV (PCM 16/24-bit, float32) or FLAC file. Channels and sample
// rate are kept as stored.
absl::StatusOr<AudioBuffer> DecodeAudioFile(const std::string& path);

// Writes 32-bit float WAV.
absl::Status WriteWavFile(const std::string& path, const AudioBuffer& audio);

// Channel average.
std::vector<float> MixToMono(const AudioBuffer& audio);

// Band-limited resampling of every channel to `target_rate`. The output has
// round(frames * target / source) frames.
absl::StatusOr<AudioBuffer> Resample(const AudioBuffer& audio, int target_rate);

// Cuts audio into 10-second segments, at most 30 (5 minutes). Multi-channel
// input is mixed to mono first, the trailing partial segment is zero padded
// and audio past 5 minutes is dropped.
absl::StatusOr<SegmentedAudio> SegmentAudio(std::string recording_id,
                                            const AudioBuffer& waveform);

// Cuts long audio into consecutive 5-minute chunks (at most kMaxChunks) and
// segments each one. `truncated` reports whether audio past the last chunk
// was dropped.
struct ChunkedAudio {
  std::vector<SegmentedAudio> chunks;
  bool truncated = false;
};
absl::StatusOr<ChunkedAudio> ChunkAudio(std::string recording_id,
                                        const AudioBuffer& waveform);

// Decode, mix to mono and resample to the working rate.
absl::StatusOr<AudioBuffer> LoadWorkingAudio(const std::string& path);

// LoadWorkingAudio followed by SegmentAudio.
absl::StatusOr<SegmentedAudio> LoadSegmentedAudio(const std::string& recording_id,
                                                  const std::string& path);

}  // namespace pianojudge

#endif  // PIANOJUDGE_AUDIO_H_
