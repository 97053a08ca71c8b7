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

#include "pianojudge/spectrogram.h"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>

#include "absl/strings/str_cat.h"

namespace pianojudge {
namespace {

using Params = MelSpectrogramParams;
constexpr int kFftBins = Params::kFftSize / 2 + 1;

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

// Shared r2c plan. Plan creation is not thread-safe in FFTW; execution with
// the new-array interface is.
class FftPlan {
 public:
  static const FftPlan& Get() {
    static const FftPlan* plan = new FftPlan();
    return *plan;
  }
  void Execute(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(plan_, in, out); }

 private:
  FftPlan() {
    std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(Params::kFftSize));
    std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kFftBins));
    plan_ = fftw_plan_dft_r2c_1d(Params::kFftSize, in.get(), out.get(), FFTW_ESTIMATE);
  }
  fftw_plan plan_;
};

const std::vector<double>& HannWindow() {
  static const std::vector<double>* window = [] {
    auto* w = new std::vector<double>(Params::kFftSize);
    for (int i = 0; i < Params::kFftSize; ++i) {
      (*w)[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / Params::kFftSize);
    }
    return w;
  }();
  return *window;
}

}  // namespace

const std::vector<double>& MelFilterbank() {
  static const std::vector<double>* bank = [] {
    auto* fb = new std::vector<double>(static_cast<size_t>(Params::kMelBins) * kFftBins, 0.0);
    const double mel_lo = HzToMel(Params::kMinHz);
    const double mel_hi = HzToMel(Params::kMaxHz);
    std::vector<double> edges(Params::kMelBins + 2);
    for (int i = 0; i < Params::kMelBins + 2; ++i) {
      edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (Params::kMelBins + 1));
    }
    for (int m = 0; m < Params::kMelBins; ++m) {
      const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
      for (int k = 0; k < kFftBins; ++k) {
        const double hz = static_cast<double>(k) * Params::kSampleRate / Params::kFftSize;
        const double rise = (hz - left) / (center - left);
        const double fall = (right - hz) / (right - center);
        (*fb)[static_cast<size_t>(m) * kFftBins + k] = std::max(0.0, std::min(rise, fall));
      }
    }
    return fb;
  }();
  return *bank;
}

std::vector<float> SegmentLogMel(std::span<const float> segment) {
  const FftPlan& plan = FftPlan::Get();
  const std::vector<double>& window = HannWindow();
  const std::vector<double>& bank = MelFilterbank();
  const int64_t n = static_cast<int64_t>(segment.size());
  const int64_t frames = n / Params::kHop;

  std::unique_ptr<double, FftwDeleter> in(fftw_alloc_real(Params::kFftSize));
  std::unique_ptr<fftw_complex, FftwDeleter> out(fftw_alloc_complex(kFftBins));
  std::vector<double> power(kFftBins);
  std::vector<float> result(static_cast<size_t>(frames) * Params::kMelBins);
  for (int64_t t = 0; t < frames; ++t) {
    const int64_t start = t * Params::kHop;
    for (int i = 0; i < Params::kFftSize; ++i) {
      const int64_t idx = start + i;
      in.get()[i] = idx < n ? window[i] * segment[idx] : 0.0;
    }
    plan.Execute(in.get(), out.get());
    for (int k = 0; k < kFftBins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      power[k] = re * re + im * im;
    }
    for (int m = 0; m < Params::kMelBins; ++m) {
      const double* row = bank.data() + static_cast<size_t>(m) * kFftBins;
      double energy = 0.0;
      for (int k = 0; k < kFftBins; ++k) energy += row[k] * power[k];
      result[t * Params::kMelBins + m] = static_cast<float>(std::log(energy + Params::kLogFloor));
    }
  }
  return result;
}

absl::StatusOr<EmbeddingTensor> MelSpectrogram(const SegmentedAudio& segmented) {
  if (segmented.sample_rate != Params::kSampleRate) {
    return absl::InvalidArgumentError(
        absl::StrCat("spectrogram backend requires ", Params::kSampleRate,
                     " Hz input, got ", segmented.sample_rate, " Hz; resample first"));
  }
  if (segmented.segments.empty()) return absl::InvalidArgumentError("no segments");
  EmbeddingTensor tensor;
  tensor.recording_id = segmented.recording_id;
  tensor.backend_id = std::string(kSpectrogramBackend);
  tensor.n_segments = static_cast<int>(segmented.segments.size());
  tensor.frames_per_segment = Params::kFramesPerSegment;
  tensor.dim = Params::kMelBins;
  tensor.frame_rate_hz = static_cast<double>(Params::kSampleRate) / Params::kHop;
  tensor.data.reserve(static_cast<size_t>(tensor.n_segments) * tensor.segment_size());
  for (size_t s = 0; s < segmented.segments.size(); ++s) {
    const std::vector<float>& segment = segmented.segments[s];
    if (static_cast<int64_t>(segment.size()) != segmented.samples_per_segment()) {
      return absl::InvalidArgumentError(absl::StrCat("segment ", s, " has ", segment.size(),
                                                     " samples, expected ",
                                                     segmented.samples_per_segment()));
    }
    std::vector<float> frames = SegmentLogMel(segment);
    tensor.data.insert(tensor.data.end(), frames.begin(), frames.end());
    tensor.valid_mask.push_back(s < segmented.valid_mask.size() && segmented.valid_mask[s] ? 1 : 0);
  }
  return tensor;
}

}  // namespace pianojudge
