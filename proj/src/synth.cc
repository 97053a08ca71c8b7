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

#include "pianojudge/synth.h"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "pianojudge/rng.h"
#include "pianojudge/status_macros.h"

namespace pianojudge {

SynthLevel SynthLevelParams(int level) {
  static constexpr SynthLevel kLevels[] = {{0.30, 2.0}, {0.12, 5.0}, {0.03, 10.0}};
  return kLevels[std::clamp(level, 0, 2)];
}

AudioBuffer SynthesizePerformance(int level, double seconds, int sample_rate, uint64_t seed,
                                  const std::string& name) {
  const SynthLevel params = SynthLevelParams(level);
  std::mt19937_64 rng = MakeStream(seed, absl::StrCat("synth/", name));
  AudioBuffer audio;
  audio.sample_rate = sample_rate;
  audio.channels = 1;
  const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate));
  audio.samples.assign(static_cast<size_t>(n), 0.0f);

  std::normal_distribution<double> noise(0.0, params.noise_amplitude);
  for (float& s : audio.samples) s = static_cast<float>(noise(rng));

  std::exponential_distribution<double> gap(params.notes_per_second);
  std::uniform_int_distribution<int> pitch(48, 84);
  std::uniform_real_distribution<double> velocity(0.15, 0.3);
  const double decay_s = 0.4;
  for (double onset = gap(rng); onset < seconds; onset += gap(rng)) {
    const double freq = 440.0 * std::pow(2.0, (pitch(rng) - 69) / 12.0);
    const double amp = velocity(rng);
    const int64_t start = static_cast<int64_t>(onset * sample_rate);
    const int64_t length = std::min<int64_t>(n - start, static_cast<int64_t>(4 * decay_s * sample_rate));
    for (int64_t i = 0; i < length; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double envelope = amp * std::exp(-t / decay_s);
      double v = 0.0;
      for (int h = 1; h <= 4; ++h) {
        if (h * freq >= sample_rate / 2.0) break;
        v += std::sin(2.0 * std::numbers::pi * h * freq * t) / h;
      }
      audio.samples[start + i] += static_cast<float>(envelope * v);
    }
  }
  return audio;
}

absl::StatusOr<std::vector<Recording>> WriteSyntheticCorpus(const std::string& dir,
                                                            const SyntheticCorpusOptions& options) {
  if (options.recordings_per_level <= 0 || !(options.seconds > 0.0)) {
    return absl::InvalidArgumentError("synthetic corpus needs positive counts and duration");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return absl::InternalError(absl::StrCat("cannot create ", dir, ": ", ec.message()));
  std::vector<Recording> recordings;
  for (int level = 0; level < 3; ++level) {
    for (int i = 0; i < options.recordings_per_level; ++i) {
      const std::string id = absl::StrFormat("synth_L%d_%03d", level, i);
      const std::string path = absl::StrCat(dir, "/", id, ".wav");
      const AudioBuffer audio =
          SynthesizePerformance(level, options.seconds, options.sample_rate, options.seed, id);
      PJ_RETURN_IF_ERROR(WriteWavFile(path, audio));
      Recording r;
      r.id = id;
      r.dataset = Dataset::kExpertise;
      r.audio_uri = path;
      r.duration_s = options.seconds;
      r.expertise = level;
      recordings.push_back(std::move(r));
    }
  }
  return recordings;
}

}  // namespace pianojudge
