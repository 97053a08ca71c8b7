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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

namespace pianojudge {
namespace {

namespace fs = std::filesystem;

AudioBuffer Tone(double seconds, int rate, int channels = 1) {
  AudioBuffer a;
  a.sample_rate = rate;
  a.channels = channels;
  const auto frames = static_cast<int64_t>(std::llround(seconds * rate));
  a.samples.resize(static_cast<size_t>(frames) * channels);
  for (int64_t i = 0; i < frames; ++i) {
    for (int c = 0; c < channels; ++c) {
      a.samples[i * channels + c] =
          static_cast<float>(0.5 * std::sin(2.0 * std::numbers::pi * 220.0 * i / rate));
    }
  }
  return a;
}

std::string TempPath(const std::string& name) {
  return (fs::path(::testing::TempDir()) / name).string();
}

void PutU32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

TEST(SegmentAudioTest, SevenMinutesCapsAtThirty) {
  const auto seg = SegmentAudio("r", Tone(420.0, 100));
  ASSERT_TRUE(seg.ok());
  EXPECT_EQ(seg->segments.size(), 30u);
  EXPECT_EQ(seg->last_segment_pad_samples, 0);
  for (bool v : seg->valid_mask) EXPECT_TRUE(v);
}

TEST(SegmentAudioTest, TwentyFiveSecondsPadsThird) {
  const AudioBuffer audio = Tone(25.0, 24000);
  const auto seg = SegmentAudio("r", audio);
  ASSERT_TRUE(seg.ok());
  ASSERT_EQ(seg->segments.size(), 3u);
  EXPECT_EQ(seg->last_segment_pad_samples, 120000);
  for (const auto& s : seg->segments) EXPECT_EQ(s.size(), 240000u);
  EXPECT_EQ(seg->segments[2][120000 - 1], audio.samples[600000 - 1]);
  for (size_t i = 120000; i < 240000; ++i) ASSERT_EQ(seg->segments[2][i], 0.0f);
}

TEST(SegmentAudioTest, ExactlyTenSeconds) {
  const auto seg = SegmentAudio("r", Tone(10.0, 1000));
  ASSERT_TRUE(seg.ok());
  EXPECT_EQ(seg->segments.size(), 1u);
  EXPECT_EQ(seg->last_segment_pad_samples, 0);
}

TEST(SegmentAudioTest, StereoAveraged) {
  AudioBuffer a;
  a.sample_rate = 10;
  a.channels = 2;
  a.samples = {1.0f, 0.0f, 0.5f, 0.5f};
  const auto seg = SegmentAudio("r", a);
  ASSERT_TRUE(seg.ok());
  EXPECT_FLOAT_EQ(seg->segments[0][0], 0.5f);
  EXPECT_FLOAT_EQ(seg->segments[0][1], 0.5f);
}

TEST(SegmentAudioTest, Errors) {
  AudioBuffer empty;
  empty.sample_rate = 24000;
  EXPECT_FALSE(SegmentAudio("r", empty).ok());
  AudioBuffer bad = Tone(1.0, 100);
  bad.sample_rate = 0;
  EXPECT_FALSE(SegmentAudio("r", bad).ok());
}

TEST(SegmentAudioTest, ResegmentingIsIdempotentAndLocal) {
  for (double seconds : {3.0, 10.0, 17.5, 61.0, 299.9}) {
    const AudioBuffer audio = Tone(seconds, 200);
    const auto seg = SegmentAudio("r", audio);
    AudioBuffer joined;
    joined.sample_rate = 200;
    for (const auto& s : seg->segments) joined.samples.insert(joined.samples.end(), s.begin(), s.end());
    joined.samples.resize(joined.samples.size() - seg->last_segment_pad_samples);
    const auto again = SegmentAudio("r", joined);
    EXPECT_EQ(again->segments.size(), seg->segments.size());
    EXPECT_EQ(again->segments, seg->segments);
  }
}

TEST(ChunkAudioTest, LongRecordingChunks) {
  const auto chunks = ChunkAudio("r", Tone(650.0, 10));
  ASSERT_TRUE(chunks.ok());
  ASSERT_EQ(chunks->chunks.size(), 3u);
  EXPECT_EQ(chunks->chunks[0].segments.size(), 30u);
  EXPECT_EQ(chunks->chunks[2].segments.size(), 5u);
  EXPECT_FALSE(chunks->truncated);
}

TEST(WavTest, FloatRoundTrip) {
  const AudioBuffer a = Tone(0.5, 8000, 2);
  const std::string path = TempPath("round_trip.wav");
  ASSERT_TRUE(WriteWavFile(path, a).ok());
  const auto b = DecodeAudioFile(path);
  ASSERT_TRUE(b.ok()) << b.status();
  EXPECT_EQ(b->sample_rate, 8000);
  EXPECT_EQ(b->channels, 2);
  EXPECT_EQ(b->samples, a.samples);
}

TEST(WavTest, DecodesCraftedPcm16) {
  const std::vector<int16_t> pcm = {0, 16384, -16384, 32767, -32768};
  std::string data;
  for (int16_t v : pcm) PutU16(data, static_cast<uint16_t>(v));
  std::string wav = "RIFF";
  PutU32(wav, 36 + static_cast<uint32_t>(data.size()));
  wav += "WAVEfmt ";
  PutU32(wav, 16);
  PutU16(wav, 1);      // PCM
  PutU16(wav, 1);      // mono
  PutU32(wav, 16000);  // rate
  PutU32(wav, 32000);  // byte rate
  PutU16(wav, 2);
  PutU16(wav, 16);
  wav += "data";
  PutU32(wav, static_cast<uint32_t>(data.size()));
  wav += data;
  const std::string path = TempPath("pcm16.wav");
  std::ofstream(path, std::ios::binary) << wav;
  const auto a = DecodeAudioFile(path);
  ASSERT_TRUE(a.ok()) << a.status();
  EXPECT_EQ(a->sample_rate, 16000);
  ASSERT_EQ(a->samples.size(), pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i) EXPECT_NEAR(a->samples[i], pcm[i] / 32768.0, 1e-4);
}

TEST(WavTest, MissingAndGarbageFilesFail) {
  EXPECT_EQ(DecodeAudioFile(TempPath("does_not_exist.wav")).status().code(),
            absl::StatusCode::kNotFound);
  const std::string path = TempPath("garbage.wav");
  std::ofstream(path, std::ios::binary) << "this is not audio at all";
  EXPECT_FALSE(DecodeAudioFile(path).ok());
}

TEST(ResampleTest, LengthAndToneAmplitude) {
  const AudioBuffer a = Tone(2.0, 44100);
  const auto b = Resample(a, kWorkingSampleRate);
  ASSERT_TRUE(b.ok());
  EXPECT_EQ(b->num_frames(), 48000);
  double peak = 0.0;
  for (size_t i = 4000; i < 44000; ++i) peak = std::max(peak, std::abs(double{b->samples[i]}));
  EXPECT_NEAR(peak, 0.5, 0.02);
  EXPECT_EQ(Resample(a, 44100)->samples, a.samples);
  EXPECT_FALSE(Resample(a, 0).ok());
}

}  // namespace
}  // namespace pianojudge
