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

#include "pianojudge/audio.h"

#include <algorithm>
#include <cmath>
#include <memory>

#include "absl/strings/str_cat.h"
#include "miniaudio.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {
namespace {

struct DecoderCloser {
  void operator()(ma_decoder* decoder) const {
    ma_decoder_uninit(decoder);
    delete decoder;
  }
};

absl::Status MaError(std::string_view what, ma_result result) {
  return absl::InternalError(
      absl::StrCat(AV(what), ": ", ma_result_description(result)));
}

}  // namespace

absl::StatusOr<AudioBuffer> DecodeAudioFile(const std::string& path) {
  ma_decoder_config config = ma_decoder_config_init(ma_format_f32, 0, 0);
  auto decoder = std::unique_ptr<ma_decoder, DecoderCloser>(new ma_decoder);
  ma_result result = ma_decoder_init_file(path.c_str(), &config, decoder.get());
  if (result != MA_SUCCESS) {
    delete decoder.release();
    if (result == MA_DOES_NOT_EXIST) return absl::NotFoundError(absl::StrCat("no such file: ", path));
    return absl::InvalidArgumentError(
        absl::StrCat("cannot decode ", path, " (WAV and FLAC are supported): ",
                     ma_result_description(result)));
  }
  AudioBuffer audio;
  audio.sample_rate = static_cast<int>(decoder->outputSampleRate);
  audio.channels = static_cast<int>(decoder->outputChannels);
  if (audio.sample_rate <= 0 || audio.channels <= 0) {
    return absl::InvalidArgumentError(absl::StrCat(path, ": invalid stream parameters"));
  }
  constexpr ma_uint64 kBlock = 65536;
  std::vector<float> block(kBlock * audio.channels);
  for (;;) {
    ma_uint64 read = 0;
    result = ma_decoder_read_pcm_frames(decoder.get(), block.data(), kBlock, &read);
    audio.samples.insert(audio.samples.end(), block.begin(),
                         block.begin() + static_cast<std::ptrdiff_t>(read * audio.channels));
    if (result == MA_AT_END || read < kBlock) break;
    if (result != MA_SUCCESS) return MaError(absl::StrCat("decoding ", path), result);
  }
  return audio;
}

absl::Status WriteWavFile(const std::string& path, const AudioBuffer& audio) {
  if (audio.sample_rate <= 0 || audio.channels <= 0) {
    return absl::InvalidArgumentError("invalid sample rate or channel count");
  }
  ma_encoder_config config =
      ma_encoder_config_init(ma_encoding_format_wav, ma_format_f32,
                             static_cast<ma_uint32>(audio.channels),
                             static_cast<ma_uint32>(audio.sample_rate));
  ma_encoder encoder;
  ma_result result = ma_encoder_init_file(path.c_str(), &config, &encoder);
  if (result != MA_SUCCESS) return MaError(absl::StrCat("opening ", path), result);
  ma_uint64 written = 0;
  result = ma_encoder_write_pcm_frames(&encoder, audio.samples.data(),
                                       static_cast<ma_uint64>(audio.num_frames()), &written);
  ma_encoder_uninit(&encoder);
  if (result != MA_SUCCESS) return MaError(absl::StrCat("writing ", path), result);
  return absl::OkStatus();
}

std::vector<float> MixToMono(const AudioBuffer& audio) {
  if (audio.channels == 1) return audio.samples;
  const int64_t frames = audio.num_frames();
  std::vector<float> mono(static_cast<size_t>(frames));
  for (int64_t i = 0; i < frames; ++i) {
    double sum = 0.0;
    for (int c = 0; c < audio.channels; ++c) sum += audio.samples[i * audio.channels + c];
    mono[i] = static_cast<float>(sum / audio.channels);
  }
  return mono;
}

absl::StatusOr<AudioBuffer> Resample(const AudioBuffer& audio, int target_rate) {
  if (audio.sample_rate <= 0 || target_rate <= 0) {
    return absl::InvalidArgumentError("sample rates must be positive");
  }
  if (audio.sample_rate == target_rate) return audio;
  const auto channels = static_cast<ma_uint32>(audio.channels);
  ma_resampler_config config = ma_resampler_config_init(
      ma_format_f32, channels, static_cast<ma_uint32>(audio.sample_rate),
      static_cast<ma_uint32>(target_rate), ma_resample_algorithm_linear);
  config.linear.lpfOrder = MA_MAX_FILTER_ORDER;
  ma_resampler resampler;
  ma_result result = ma_resampler_init(&config, nullptr, &resampler);
  if (result != MA_SUCCESS) return MaError("resampler init", result);

  const int64_t in_frames = audio.num_frames();
  const auto out_frames = static_cast<int64_t>(std::llround(
      static_cast<double>(in_frames) * target_rate / audio.sample_rate));
  AudioBuffer out;
  out.sample_rate = target_rate;
  out.channels = audio.channels;
  out.samples.assign(static_cast<size_t>(out_frames) * channels, 0.0f);

  // Skip the filter's output latency so output sample 0 aligns with input 0.
  const auto latency = static_cast<int64_t>(ma_resampler_get_output_latency(&resampler));
  std::vector<float> scratch(static_cast<size_t>(out_frames + latency + 16) * channels);
  ma_uint64 consumed = static_cast<ma_uint64>(in_frames);
  ma_uint64 produced = scratch.size() / channels;
  result = ma_resampler_process_pcm_frames(&resampler, audio.samples.data(), &consumed,
                                           scratch.data(), &produced);
  int64_t total = static_cast<int64_t>(produced);
  // Flush the tail with silence.
  while (result == MA_SUCCESS && total < out_frames + latency) {
    ma_uint64 zeros_in = 1024;
    ma_uint64 more = static_cast<ma_uint64>(out_frames + latency - total);
    result = ma_resampler_process_pcm_frames(&resampler, nullptr, &zeros_in,
                                             scratch.data() + total * channels, &more);
    if (more == 0) break;
    total += static_cast<int64_t>(more);
  }
  ma_resampler_uninit(&resampler, nullptr);
  if (result != MA_SUCCESS) return MaError("resampling", result);
  const int64_t usable = std::clamp<int64_t>(total - latency, 0, out_frames);
  std::copy_n(scratch.begin() + latency * channels, usable * channels, out.samples.begin());
  return out;
}

absl::StatusOr<SegmentedAudio> SegmentAudio(std::string recording_id,
                                            const AudioBuffer& waveform) {
  if (waveform.sample_rate <= 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("sample rate must be positive, got ", waveform.sample_rate));
  }
  if (waveform.channels <= 0) return absl::InvalidArgumentError("channel count must be positive");
  if (waveform.num_frames() == 0) return absl::InvalidArgumentError("empty waveform");
  const std::vector<float> mono = MixToMono(waveform);

  SegmentedAudio out;
  out.recording_id = std::move(recording_id);
  out.sample_rate = waveform.sample_rate;
  const int64_t per_segment = out.samples_per_segment();
  const int64_t total = static_cast<int64_t>(mono.size());
  const int64_t needed = (total + per_segment - 1) / per_segment;
  const int64_t n_segments = std::min<int64_t>(needed, kMaxSegments);
  for (int64_t s = 0; s < n_segments; ++s) {
    std::vector<float> segment(static_cast<size_t>(per_segment), 0.0f);
    const int64_t begin = s * per_segment;
    const int64_t end = std::min(total, begin + per_segment);
    std::copy(mono.begin() + begin, mono.begin() + end, segment.begin());
    if (s == n_segments - 1) out.last_segment_pad_samples = per_segment - (end - begin);
    out.segments.push_back(std::move(segment));
    out.valid_mask.push_back(true);
  }
  return out;
}

absl::StatusOr<ChunkedAudio> ChunkAudio(std::string recording_id,
                                        const AudioBuffer& waveform) {
  if (waveform.sample_rate <= 0) return absl::InvalidArgumentError("sample rate must be positive");
  if (waveform.channels <= 0) return absl::InvalidArgumentError("channel count must be positive");
  if (waveform.num_frames() == 0) return absl::InvalidArgumentError("empty waveform");
  const std::vector<float> mono = MixToMono(waveform);
  const int64_t per_chunk =
      static_cast<int64_t>(kMaxSegments) * kSegmentSeconds * waveform.sample_rate;
  const int64_t total = static_cast<int64_t>(mono.size());
  const int64_t needed = (total + per_chunk - 1) / per_chunk;
  ChunkedAudio out;
  out.truncated = needed > kMaxChunks;
  for (int64_t c = 0; c < std::min<int64_t>(needed, kMaxChunks); ++c) {
    AudioBuffer chunk;
    chunk.sample_rate = waveform.sample_rate;
    chunk.channels = 1;
    const int64_t begin = c * per_chunk;
    const int64_t end = std::min(total, begin + per_chunk);
    chunk.samples.assign(mono.begin() + begin, mono.begin() + end);
    PJ_ASSIGN_OR_RETURN(SegmentedAudio segmented, SegmentAudio(recording_id, chunk));
    out.chunks.push_back(std::move(segmented));
  }
  return out;
}

absl::StatusOr<AudioBuffer> LoadWorkingAudio(const std::string& path) {
  PJ_ASSIGN_OR_RETURN(AudioBuffer audio, DecodeAudioFile(path));
  if (audio.num_frames() == 0) return absl::InvalidArgumentError(absl::StrCat(path, ": no audio"));
  AudioBuffer mono;
  mono.sample_rate = audio.sample_rate;
  mono.channels = 1;
  mono.samples = MixToMono(audio);
  return Resample(mono, kWorkingSampleRate);
}

absl::StatusOr<SegmentedAudio> LoadSegmentedAudio(const std::string& recording_id,
                                                  const std::string& path) {
  PJ_ASSIGN_OR_RETURN(AudioBuffer audio, LoadWorkingAudio(path));
  return SegmentAudio(recording_id, audio);
}

}  // namespace pianojudge
