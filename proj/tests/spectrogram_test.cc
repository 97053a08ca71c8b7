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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "pianojudge/audio.h"
#include "pianojudge/embeddings.h"

namespace pianojudge {
namespace {

constexpr int kRate = 24000;
constexpr int kWindow = 400;
constexpr int kHop = 160;
constexpr int kMels = 128;

// Reference log-mel frame: direct O(N^2) DFT of a periodic-Hann windowed
// frame and HTK-scale triangles between 20 Hz and 12 kHz.
std::vector<double> ReferenceLogMelFrame(const std::vector<float>& x, int64_t start) {
  const double pi = std::numbers::pi;
  std::vector<double> power(kWindow / 2 + 1);
  for (int k = 0; k <= kWindow / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (int n = 0; n < kWindow; ++n) {
      const int64_t idx = start + n;
      const double v = idx < static_cast<int64_t>(x.size()) ? x[idx] : 0.0;
      const double w = std::pow(std::sin(pi * n / kWindow), 2.0);
      acc += w * v * std::polar(1.0, -2.0 * pi * k * n / kWindow);
    }
    power[k] = std::norm(acc);
  }
  auto mel = [](double f) { return 1127.0 * std::log(1.0 + f / 700.0); };
  auto hz = [](double m) { return 700.0 * (std::exp(m / 1127.0) - 1.0); };
  const double step = (mel(12000.0) - mel(20.0)) / (kMels + 1);
  std::vector<double> out(kMels);
  for (int m = 0; m < kMels; ++m) {
    const double lo = hz(mel(20.0) + m * step), mid = hz(mel(20.0) + (m + 1) * step),
                 hi = hz(mel(20.0) + (m + 2) * step);
    double e = 0.0;
    for (int k = 0; k <= kWindow / 2; ++k) {
      const double f = k * static_cast<double>(kRate) / kWindow;
      double weight = 0.0;
      if (f > lo && f <= mid) weight = (f - lo) / (mid - lo);
      if (f > mid && f < hi) weight = (hi - f) / (hi - mid);
      e += weight * power[k];
    }
    out[m] = std::log(e + 1e-6);
  }
  return out;
}

std::vector<float> SineSegment(double freq, double noise, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, noise);
  std::vector<float> x(kSegmentSeconds * kRate);
  for (size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * freq * i / kRate) +
                              normal(rng));
  }
  return x;
}

TEST(SpectrogramTest, MatchesReferenceImplementation) {
  const std::vector<float> x = SineSegment(440.0, 0.05, 1);
  const std::vector<float> logmel = SegmentLogMel(x);
  ASSERT_EQ(logmel.size(), 1500u * kMels);
  for (int frame : {0, 1, 737, 1497, 1498, 1499}) {
    const std::vector<double> ref = ReferenceLogMelFrame(x, static_cast<int64_t>(frame) * kHop);
    for (int m = 0; m < kMels; ++m) {
      EXPECT_NEAR(logmel[frame * kMels + m], ref[m], 1e-4 * std::max(1.0, std::abs(ref[m])))
          << "frame " << frame << " mel " << m;
    }
  }
}

TEST(SpectrogramTest, SineEnergyInItsMelBand) {
  const std::vector<float> x = SineSegment(440.0, 0.0, 0);
  const std::vector<float> logmel = SegmentLogMel(x);
  const std::vector<double>& bank = MelFilterbank();
  // The band whose triangle weights 440 Hz the most (440 Hz = FFT bin 7.33).
  const int bins = kWindow / 2 + 1;
  int expected = 0;
  double best_weight = -1.0;
  for (int m = 0; m < kMels; ++m) {
    const double w = bank[m * bins + 7] + bank[m * bins + 8];
    if (w > best_weight) {
      best_weight = w;
      expected = m;
    }
  }
  for (int frame : {10, 700, 1400}) {
    int argmax = 0;
    for (int m = 1; m < kMels; ++m) {
      if (logmel[frame * kMels + m] > logmel[frame * kMels + argmax]) argmax = m;
    }
    EXPECT_LE(std::abs(argmax - expected), 1) << frame;
    // Far-away bands carry orders of magnitude less energy.
    EXPECT_LT(logmel[frame * kMels + 100], logmel[frame * kMels + argmax] - 10.0);
  }
}

TEST(SpectrogramTest, SilenceGivesConstantRows) {
  const std::vector<float> zeros(kSegmentSeconds * kRate, 0.0f);
  const std::vector<float> logmel = SegmentLogMel(zeros);
  for (float v : logmel) ASSERT_FLOAT_EQ(v, static_cast<float>(std::log(1e-6)));
}

TEST(SpectrogramTest, ShapeForFiveMinutesAtAnyRate) {
  for (int rate : {8000, 44100}) {
    AudioBuffer a;
    a.sample_rate = rate;
    a.samples.assign(static_cast<size_t>(rate) * 301, 0.1f);
    const auto resampled = Resample(a, kWorkingSampleRate);
    ASSERT_TRUE(resampled.ok());
    const auto seg = SegmentAudio("r", *resampled);
    ASSERT_TRUE(seg.ok());
    const auto t = MelSpectrogram(*seg);
    ASSERT_TRUE(t.ok()) << t.status();
    EXPECT_EQ(t->n_segments, 30);
    EXPECT_EQ(t->frames_per_segment, 1500);
    EXPECT_EQ(t->dim, 128);
    EXPECT_DOUBLE_EQ(t->frame_rate_hz, 150.0);
    EXPECT_EQ(t->data.size(), 30u * 1500u * 128u);
  }
}

TEST(SpectrogramTest, WrongRateRejected) {
  AudioBuffer a;
  a.sample_rate = 16000;
  a.samples.assign(16000, 0.0f);
  const auto seg = SegmentAudio("r", a);
  EXPECT_FALSE(MelSpectrogram(*seg).ok());
}

TEST(SpectrogramTest, PaddingLeavesEarlierSegmentsUnchanged) {
  AudioBuffer a;
  a.sample_rate = kRate;
  a.samples = SineSegment(300.0, 0.1, 2);
  AudioBuffer longer = a;
  const std::vector<float> more = SineSegment(500.0, 0.1, 3);
  longer.samples.insert(longer.samples.end(), more.begin(), more.begin() + 5000);
  const auto t1 = MelSpectrogram(*SegmentAudio("r", a));
  const auto t2 = MelSpectrogram(*SegmentAudio("r", longer));
  ASSERT_EQ(t2->n_segments, 2);
  const auto s1 = t1->segment(0), s2 = t2->segment(0);
  EXPECT_TRUE(std::equal(s1.begin(), s1.end(), s2.begin()));
}

}  // namespace
}  // namespace pianojudge
