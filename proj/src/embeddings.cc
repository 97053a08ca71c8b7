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

#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "absl/strings/str_cat.h"
#include "pianojudge/csv.h"
#include "pianojudge/rng.h"
#include "pianojudge/spectrogram.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {
namespace {

constexpr char kMagic[4] = {'P', 'L', 'D', 'E'};
constexpr uint32_t kFormatVersion = 1;

class ByteWriter {
 public:
  void Bytes(const void* data, size_t n) {
    const auto* p = static_cast<const char*>(data);
    out_.append(p, n);
  }
  void U32(uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void U64(uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void F64(double v) { U64(std::bit_cast<uint64_t>(v)); }
  void F32(float v) { U32(std::bit_cast<uint32_t>(v)); }
  void String(std::string_view s) {
    U32(static_cast<uint32_t>(s.size()));
    Bytes(s.data(), s.size());
  }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  absl::Status Need(size_t n) const {
    if (in_.size() - pos_ < n) return absl::DataLossError("unexpected end of data");
    return absl::OkStatus();
  }
  absl::StatusOr<uint32_t> U32() {
    PJ_RETURN_IF_ERROR(Need(4));
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(in_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  absl::StatusOr<uint64_t> U64() {
    PJ_RETURN_IF_ERROR(Need(8));
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  absl::StatusOr<double> F64() {
    PJ_ASSIGN_OR_RETURN(uint64_t bits, U64());
    return std::bit_cast<double>(bits);
  }
  absl::StatusOr<std::string_view> Bytes(size_t n) {
    PJ_RETURN_IF_ERROR(Need(n));
    std::string_view out = in_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  absl::StatusOr<std::string> String() {
    PJ_ASSIGN_OR_RETURN(uint32_t n, U32());
    PJ_ASSIGN_OR_RETURN(std::string_view bytes, Bytes(n));
    return std::string(bytes);
  }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  std::string_view in_;
  size_t pos_ = 0;
};

}  // namespace

int BackendSpec::frames_per_segment() const {
  return static_cast<int>(std::lround(frame_rate_hz * kSegmentSeconds));
}

int EmbeddingTensor::num_valid() const {
  int n = 0;
  for (uint8_t m : valid_mask) n += m != 0;
  return n;
}

absl::Status CheckTensor(const EmbeddingTensor& tensor) {
  if (tensor.n_segments <= 0 || tensor.frames_per_segment <= 0 || tensor.dim <= 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("invalid tensor shape (", tensor.n_segments, ", ",
                     tensor.frames_per_segment, ", ", tensor.dim, ")"));
  }
  if (static_cast<int>(tensor.valid_mask.size()) != tensor.n_segments) {
    return absl::InvalidArgumentError("valid_mask length differs from segment count");
  }
  for (uint8_t m : tensor.valid_mask) {
    if (m > 1) return absl::InvalidArgumentError("valid_mask entries must be 0 or 1");
  }
  if (tensor.data.size() != static_cast<size_t>(tensor.n_segments) * tensor.segment_size()) {
    return absl::InvalidArgumentError("data size does not match declared shape");
  }
  if (!(tensor.frame_rate_hz > 0.0) || !std::isfinite(tensor.frame_rate_hz)) {
    return absl::InvalidArgumentError("frame rate must be positive and finite");
  }
  for (float v : tensor.data) {
    if (!std::isfinite(v)) return absl::InvalidArgumentError("tensor contains NaN or Inf");
  }
  return absl::OkStatus();
}

EmbeddingTensor PadSegments(const EmbeddingTensor& tensor, int n_segments) {
  EmbeddingTensor out = tensor;
  if (n_segments <= tensor.n_segments) return out;
  out.data.resize(static_cast<size_t>(n_segments) * tensor.segment_size(), 0.0f);
  out.valid_mask.resize(n_segments, 0);
  out.n_segments = n_segments;
  return out;
}

BackendRegistry BackendRegistry::WithBuiltins() {
  BackendRegistry registry;
  const BackendSpec builtins[] = {
      {"jukebox", 345.0, 64, "2048", false},
      {"mert", 75.0, 1024, "", false},
      {"audiomae", 51.2, 768, "", false},
      {"dac", 87.0, 1024, "9x1024", false},
      {std::string(kSpectrogramBackend), 150.0, 128, "", true},
      {std::string(kTestRandomBackend), 1.0, 8, "", true},
  };
  for (const BackendSpec& spec : builtins) registry.Register(spec).IgnoreError();
  return registry;
}

absl::Status BackendRegistry::Register(BackendSpec spec) {
  if (spec.backend_id.empty()) return absl::InvalidArgumentError("backend_id is empty");
  if (!(spec.frame_rate_hz > 0.0) || !std::isfinite(spec.frame_rate_hz)) {
    return absl::InvalidArgumentError(
        absl::StrCat("backend ", spec.backend_id, ": frame rate must be positive"));
  }
  if (spec.dim <= 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("backend ", spec.backend_id, ": dim must be positive"));
  }
  if (spec.frames_per_segment() <= 0) {
    return absl::InvalidArgumentError(
        absl::StrCat("backend ", spec.backend_id, ": fewer than one frame per segment"));
  }
  if (specs_.contains(spec.backend_id)) {
    return absl::AlreadyExistsError(
        absl::StrCat("backend '", spec.backend_id, "' already registered"));
  }
  std::string id = spec.backend_id;
  specs_.emplace(std::move(id), std::move(spec));
  return absl::OkStatus();
}

const BackendSpec* BackendRegistry::Find(std::string_view backend_id) const {
  auto it = specs_.find(backend_id);
  return it == specs_.end() ? nullptr : &it->second;
}

std::vector<std::string> BackendRegistry::Ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, spec] : specs_) ids.push_back(id);
  return ids;
}

EmbeddingTensor TestRandomEmbedding(const BackendSpec& spec, const std::string& recording_id,
                                    int n_segments) {
  EmbeddingTensor tensor;
  tensor.recording_id = recording_id;
  tensor.backend_id = spec.backend_id;
  tensor.n_segments = n_segments;
  tensor.frames_per_segment = spec.frames_per_segment();
  tensor.dim = spec.dim;
  tensor.frame_rate_hz = spec.frame_rate_hz;
  tensor.valid_mask.assign(n_segments, 1);
  std::mt19937_64 rng = MakeStream(Fnv1a64(recording_id), spec.backend_id);
  tensor.data.resize(static_cast<size_t>(n_segments) * tensor.segment_size());
  for (float& v : tensor.data) {
    // Uniform in [-1, 1) from the top 24 bits.
    v = static_cast<float>(static_cast<double>(rng() >> 40) / (1 << 23) - 1.0);
  }
  return tensor;
}

absl::StatusOr<EmbeddingTensor> Encode(const BackendRegistry& registry,
                                       std::string_view backend_id,
                                       const SegmentedAudio& segmented) {
  const BackendSpec* spec = registry.Find(backend_id);
  if (spec == nullptr) {
    return absl::NotFoundError(absl::StrCat("unknown backend '", AV(backend_id), "'"));
  }
  if (!spec->native) {
    return absl::FailedPreconditionError(
        absl::StrCat("external backend: import required (", AV(backend_id), ")"));
  }
  if (segmented.segments.empty()) return absl::InvalidArgumentError("no segments to encode");
  EmbeddingTensor tensor;
  if (backend_id == kSpectrogramBackend) {
    PJ_ASSIGN_OR_RETURN(tensor, MelSpectrogram(segmented));
  } else if (backend_id == kTestRandomBackend) {
    tensor = TestRandomEmbedding(*spec, segmented.recording_id,
                                 static_cast<int>(segmented.segments.size()));
  } else {
    return absl::UnimplementedError(
        absl::StrCat("no native encoder for backend '", AV(backend_id), "'"));
  }
  tensor.valid_mask.assign(segmented.segments.size(), 0);
  for (size_t s = 0; s < segmented.segments.size(); ++s) {
    tensor.valid_mask[s] = s < segmented.valid_mask.size() && segmented.valid_mask[s];
  }
  return tensor;
}

absl::StatusOr<std::string> SerializeEmbedding(const EmbeddingTensor& tensor) {
  PJ_RETURN_IF_ERROR(CheckTensor(tensor));
  ByteWriter w;
  w.Bytes(kMagic, 4);
  w.U32(kFormatVersion);
  w.U32(static_cast<uint32_t>(tensor.n_segments));
  w.U32(static_cast<uint32_t>(tensor.frames_per_segment));
  w.U32(static_cast<uint32_t>(tensor.dim));
  w.F64(tensor.frame_rate_hz);
  w.String(tensor.backend_id);
  w.String(tensor.recording_id);
  w.Bytes(tensor.valid_mask.data(), tensor.valid_mask.size());
  for (float v : tensor.data) w.F32(v);
  return w.Take();
}

absl::StatusOr<EmbeddingTensor> DeserializeEmbedding(std::string_view bytes) {
  ByteReader r(bytes);
  PJ_ASSIGN_OR_RETURN(std::string_view magic, r.Bytes(4));
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    return absl::DataLossError("bad magic: not a PLDE embedding file");
  }
  PJ_ASSIGN_OR_RETURN(uint32_t version, r.U32());
  if (version != kFormatVersion) {
    return absl::DataLossError(absl::StrCat("unsupported embedding format version ", version));
  }
  EmbeddingTensor t;
  PJ_ASSIGN_OR_RETURN(uint32_t n_segments, r.U32());
  PJ_ASSIGN_OR_RETURN(uint32_t frames, r.U32());
  PJ_ASSIGN_OR_RETURN(uint32_t dim, r.U32());
  PJ_ASSIGN_OR_RETURN(t.frame_rate_hz, r.F64());
  PJ_ASSIGN_OR_RETURN(t.backend_id, r.String());
  PJ_ASSIGN_OR_RETURN(t.recording_id, r.String());
  if (n_segments == 0 || frames == 0 || dim == 0 || n_segments > (1u << 16)) {
    return absl::DataLossError("corrupt header: invalid shape");
  }
  t.n_segments = static_cast<int>(n_segments);
  t.frames_per_segment = static_cast<int>(frames);
  t.dim = static_cast<int>(dim);
  PJ_ASSIGN_OR_RETURN(std::string_view mask, r.Bytes(n_segments));
  t.valid_mask.assign(mask.begin(), mask.end());
  const uint64_t count = static_cast<uint64_t>(n_segments) * frames * dim;
  if (count > r.remaining() / 4) return absl::DataLossError("unexpected end of data");
  t.data.resize(count);
  for (float& v : t.data) {
    PJ_ASSIGN_OR_RETURN(uint32_t bits, r.U32());
    v = std::bit_cast<float>(bits);
  }
  if (r.remaining() != 0) return absl::DataLossError("trailing bytes after tensor data");
  absl::Status check = CheckTensor(t);
  if (!check.ok()) return absl::DataLossError(absl::StrCat("corrupt tensor: ", check.message()));
  return t;
}

absl::Status WriteEmbedding(const EmbeddingTensor& tensor, const std::string& path) {
  PJ_ASSIGN_OR_RETURN(std::string bytes, SerializeEmbedding(tensor));
  return WriteFile(path, bytes);
}

absl::StatusOr<EmbeddingTensor> ReadEmbedding(const std::string& path) {
  PJ_ASSIGN_OR_RETURN(std::string bytes, ReadFile(path));
  auto tensor = DeserializeEmbedding(bytes);
  if (!tensor.ok()) {
    return absl::Status(tensor.status().code(), absl::StrCat(path, ": ", tensor.status().message()));
  }
  return tensor;
}

std::vector<std::string> ShapeWarnings(const BackendRegistry& registry,
                                       const EmbeddingTensor& tensor) {
  std::vector<std::string> warnings;
  const BackendSpec* spec = registry.Find(tensor.backend_id);
  if (spec == nullptr) {
    warnings.push_back(absl::StrCat("backend '", tensor.backend_id, "' is not registered"));
    return warnings;
  }
  if (tensor.dim != spec->dim) {
    warnings.push_back(absl::StrCat("shape mismatch: dim ", tensor.dim, " but backend ",
                                    spec->backend_id, " declares ", spec->dim));
  }
  if (tensor.frames_per_segment != spec->frames_per_segment()) {
    warnings.push_back(absl::StrCat("shape mismatch: ", tensor.frames_per_segment,
                                    " frames per segment but backend ", spec->backend_id,
                                    " declares ", spec->frames_per_segment()));
  }
  if (tensor.frame_rate_hz != spec->frame_rate_hz) {
    warnings.push_back(absl::StrCat("metadata mismatch: frame rate ", tensor.frame_rate_hz,
                                    " Hz but backend ", spec->backend_id, " declares ",
                                    spec->frame_rate_hz, " Hz"));
  }
  return warnings;
}

}  // namespace pianojudge
