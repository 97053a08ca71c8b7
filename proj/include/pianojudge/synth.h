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

#ifndef PIANOJUDGE_SYNTH_H_
#define PIANOJUDGE_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/audio.h"
#include "pianojudge/manifest.h"

namespace pianojudge {

// Synthetic "performances" for pipeline tests. Higher expertise levels play
// more notes per second over a quieter noise floor.
struct SynthLevel {
  double noise_amplitude;
  double notes_per_second;
};
SynthLevel SynthLevelParams(int level);

// Mono waveform at `sample_rate` of decaying harmonic tones with random
// pitches plus white noise, deterministic in (seed, name).
AudioBuffer SynthesizePerformance(int level, double seconds, int sample_rate, uint64_t seed,
                                  const std::string& name);

struct SyntheticCorpusOptions {
  int recordings_per_level = 10;
  double seconds = 10.0;
  int sample_rate = kWorkingSampleRate;
  uint64_t seed = 0;
};

// Writes synth_L<level>_<index>.wav files into `dir` and returns their
// expertise manifest rows (split unassigned).
absl::StatusOr<std::vector<Recording>> WriteSyntheticCorpus(const std::string& dir,
                                                            const SyntheticCorpusOptions& options);

}  // namespace pianojudge

#endif  // PIANOJUDGE_SYNTH_H_
