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

#include "pianojudge/embeddings.h"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "pianojudge/audio.h"

namespace pianojudge {
namespace {

EmbeddingTensor RandomEmbedding(std::mt19937_64& rng, const BackendSpec& spec, int segments) {
  EmbeddingTensor t;
  t.recording_id = "rec-" + std::to_string(rng() % 1000);
  t.backend_id = spec.backend_id;
  t.n_segments = segments;
  t.frames_per_segment = spec.frames_per_segment();
  t.dim = spec.dim;
  t.frame_rate_hz = spec.frame_rate_hz;
  std::bernoulli_distribution coin(0.8);
  std::normal_distribution<float> normal(0.0f, 3.0f);
  for (int s = 0; s < segments; ++s) t.valid_mask.push_back(coin(rng) ? 1 : 0);
  t.data.resize(static_cast<size_t>(segments) * t.segment_size());
  for (float& v : t.data) v = normal(rng);
  return t;
}

TEST(BackendRegistryTest, TableValues) {
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  struct Row {
    const char* id;
    double rate;
    int dim;
    int frames;
  };
  for (const Row& row : {Row{"jukebox", 345, 64, 3450}, Row{"mert", 75, 1024, 750},
                         Row{"audiomae", 51.2, 768, 512}, Row{"dac", 87, 1024, 870},
                         Row{"spectrogram", 150, 128, 1500}}) {
    const BackendSpec* spec = registry.Find(row.id);
    ASSERT_NE(spec, nullptr) << row.id;
    EXPECT_DOUBLE_EQ(spec->frame_rate_hz, row.rate);
    EXPECT_EQ(spec->dim, row.dim);
    EXPECT_EQ(spec->frames_per_segment(), row.frames);
    EXPECT_LE(std::abs(spec->frames_per_segment() / 10.0 - spec->frame_rate_hz), 0.1);
  }
}

TEST(BackendRegistryTest, RegisterRules) {
  BackendRegistry registry = BackendRegistry::WithBuiltins();
  EXPECT_TRUE(registry.Register({"audiomae-ft", 51.2, 768, "", false}).ok());
  EXPECT_EQ(registry.Find("audiomae-ft")->frames_per_segment(), 512);
  EXPECT_FALSE(registry.Register({"spectrogram", 150, 128, "", true}).ok());
  EXPECT_FALSE(registry.Register({"zero-rate", 0.0, 8, "", false}).ok());
  EXPECT_FALSE(registry.Register({"neg-rate", -1.0, 8, "", false}).ok());
  EXPECT_FALSE(registry.Register({"no-dim", 10.0, 0, "", false}).ok());
}

TEST(EncodeTest, ExternalBackendNeedsImport) {
  AudioBuffer a;
  a.sample_rate = kWorkingSampleRate;
  a.samples.assign(1000, 0.0f);
  const auto seg = SegmentAudio("r", a);
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  const auto mert = Encode(registry, "mert", *seg);
  ASSERT_FALSE(mert.ok());
  EXPECT_NE(mert.status().message().find("external backend: import required"),
            absl::string_view::npos);
  EXPECT_EQ(Encode(registry, "nope", *seg).status().code(), absl::StatusCode::kNotFound);
}

TEST(EncodeTest, TestRandomIsDeterministicPerRecording) {
  AudioBuffer a;
  a.sample_rate = kWorkingSampleRate;
  a.samples.assign(25 * kWorkingSampleRate, 0.0f);
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  const auto t1 = Encode(registry, "test-random", *SegmentAudio("same", a));
  const auto t2 = Encode(registry, "test-random", *SegmentAudio("same", a));
  const auto t3 = Encode(registry, "test-random", *SegmentAudio("other", a));
  ASSERT_TRUE(t1.ok());
  EXPECT_EQ(*t1, *t2);
  EXPECT_NE(t1->data, t3->data);
  EXPECT_EQ(t1->n_segments, 3);
  EXPECT_EQ(t1->valid_mask, (std::vector<uint8_t>{1, 1, 1}));
}

TEST(EmbeddingFormatTest, RoundTripIsBitExact) {
  std::mt19937_64 rng(99);
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  const auto path = (std::filesystem::path(::testing::TempDir()) / "t.plde").string();
  int i = 0;
  for (const std::string& id : registry.Ids()) {
    const EmbeddingTensor t = RandomEmbedding(rng, *registry.Find(id), 1 + i++ % 3);
    ASSERT_TRUE(WriteEmbedding(t, path).ok());
    const auto back = ReadEmbedding(path);
    ASSERT_TRUE(back.ok()) << back.status();
    EXPECT_EQ(*back, t);
    EXPECT_TRUE(ShapeWarnings(registry, *back).empty());
  }
}

TEST(EmbeddingFormatTest, LayoutIsLittleEndianWithHeader) {
  EmbeddingTensor t;
  t.recording_id = "r";
  t.backend_id = "b";
  t.n_segments = 1;
  t.frames_per_segment = 1;
  t.dim = 2;
  t.frame_rate_hz = 1.0;
  t.valid_mask = {1};
  t.data = {1.0f, -2.0f};
  const auto bytes = SerializeEmbedding(t);
  ASSERT_TRUE(bytes.ok());
  ASSERT_EQ(bytes->size(), 4u + 4 * 4 + 8 + 4 + 1 + 4 + 1 + 1 + 8);
  EXPECT_EQ(bytes->substr(0, 4), "PLDE");
  EXPECT_EQ((*bytes)[4], 1);
  EXPECT_EQ(bytes->substr(bytes->size() - 4), std::string("\x00\x00\x00\xc0", 4));
}

TEST(EmbeddingFormatTest, CorruptInputs) {
  std::mt19937_64 rng(1);
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  const EmbeddingTensor t = RandomEmbedding(rng, *registry.Find("test-random"), 2);
  const std::string bytes = *SerializeEmbedding(t);
  const auto truncated = DeserializeEmbedding(std::string_view(bytes).substr(0, bytes.size() - 3));
  ASSERT_FALSE(truncated.ok());
  EXPECT_NE(truncated.status().message().find("unexpected end of data"), absl::string_view::npos);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_FALSE(DeserializeEmbedding(bad_magic).ok());
  EXPECT_FALSE(DeserializeEmbedding(bytes + "x").ok());

  EmbeddingTensor nan = t;
  nan.data[3] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_FALSE(SerializeEmbedding(nan).ok());
}

TEST(EmbeddingFormatTest, ShapeMismatchIsAWarning) {
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  EmbeddingTensor t;
  t.backend_id = "mert";
  t.n_segments = 1;
  t.frames_per_segment = 750;
  t.dim = 64;
  t.frame_rate_hz = 75.0;
  t.valid_mask = {1};
  t.data.assign(750 * 64, 0.0f);
  const auto path = (std::filesystem::path(::testing::TempDir()) / "mert64.plde").string();
  ASSERT_TRUE(WriteEmbedding(t, path).ok());
  const auto back = ReadEmbedding(path);
  ASSERT_TRUE(back.ok());
  const auto warnings = ShapeWarnings(registry, *back);
  ASSERT_EQ(warnings.size(), 1u);
  EXPECT_NE(warnings[0].find("shape mismatch"), std::string::npos);
}

TEST(PadSegmentsTest, AppendsMaskedZeros) {
  std::mt19937_64 rng(3);
  const BackendRegistry registry = BackendRegistry::WithBuiltins();
  EmbeddingTensor t = RandomEmbedding(rng, *registry.Find("test-random"), 2);
  t.valid_mask = {1, 1};
  const EmbeddingTensor p = PadSegments(t, 5);
  EXPECT_EQ(p.n_segments, 5);
  EXPECT_EQ(p.valid_mask, (std::vector<uint8_t>{1, 1, 0, 0, 0}));
  EXPECT_EQ(p.num_valid(), 2);
  EXPECT_TRUE(CheckTensor(p).ok());
}

}  // namespace
}  // namespace pianojudge
