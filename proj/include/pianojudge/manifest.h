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

#ifndef PIANOJUDGE_MANIFEST_H_
#define PIANOJUDGE_MANIFEST_H_

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"

namespace pianojudge {

enum class Dataset { kExpertise, kIcpc2015, kDifficulty, kTechniques };
enum class Split { kTrain, kTest, kUnassigned };

// The seven piano technique classes, in the fixed label-index order used by
// every multi-label head and metric.
inline constexpr int kNumTechniques = 7;
inline constexpr std::array<std::string_view, kNumTechniques> kTechniqueNames = {
    "scales",       "arpeggios", "ornaments", "repeated_notes",
    "double_notes", "octave",    "staccato"};

// Exact header of the manifest CSV. Column order is fixed.
inline constexpr std::string_view kManifestHeader =
    "id,dataset,audio_uri,duration_s,expertise,difficulty,techniques,split,"
    "candidate_id,rounds_reached";

std::string_view DatasetName(Dataset dataset);
absl::StatusOr<Dataset> ParseDataset(std::string_view name);
std::string_view SplitName(Split split);
absl::StatusOr<Split> ParseSplit(std::string_view name);
// Returns the label index of a technique name, or an error for unknown names.
absl::StatusOr<int> TechniqueIndex(std::string_view name);

struct Recording {
  std::string id;
  Dataset dataset = Dataset::kExpertise;
  std::string audio_uri;
  double duration_s = 0.0;
  std::optional<int> expertise;   // 0 beginner, 1 advanced, 2 virtuoso.
  std::optional<int> difficulty;  // Henle grade 1..9.
  std::optional<std::set<int>> techniques;  // Indices into kTechniqueNames.
  Split split = Split::kUnassigned;
  // ICPC-2015 rows only.
  std::optional<std::string> candidate_id;
  std::optional<int> rounds_reached;

  bool operator==(const Recording&) const = default;
};

struct IcpcCandidate {
  std::string candidate_id;
  std::string recording_id;  // Preliminary-round recording.
  int rounds_reached = 0;
  int score = 0;
};

struct ValidationIssue {
  std::string recording_id;
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
  std::string ToString() const;
};

// Parses manifest CSV text. Every row must belong to `dataset`. Parse and
// validation errors name the 1-based data row and the offending field.
absl::StatusOr<std::vector<Recording>> ParseManifest(std::string_view text,
                                                     Dataset dataset);
absl::StatusOr<std::vector<Recording>> LoadManifest(const std::string& path,
                                                    Dataset dataset);

std::string FormatManifest(const std::vector<Recording>& recordings);
absl::Status SaveManifest(const std::vector<Recording>& recordings,
                          const std::string& path);

// Lists every invariant violation. Never fails.
ValidationReport ValidateManifest(const std::vector<Recording>& recordings,
                                  Dataset dataset);

struct SplitResult {
  std::vector<Recording> train;
  std::vector<Recording> test;
};

// Number of test items drawn from a stratum of size n:
// floor(n * fraction), raised to 1 when n >= 2.
int StratumTestSize(int n, double test_fraction);

// Seeded split. Expertise recordings are stratified by level, difficulty
// recordings by grade; other datasets form a single stratum. Output order
// follows input order and the split field is set on every recording.
absl::StatusOr<SplitResult> SplitRecordings(
    const std::vector<Recording>& recordings, double test_fraction,
    uint64_t seed);

// True for http:// and https:// audio URIs, which need the fetch hook.
bool IsRemoteUri(std::string_view uri);

// Builds ICPC candidates from icpc2015 rows. The score is the number of
// rounds reached beyond the preliminary.
absl::StatusOr<std::vector<IcpcCandidate>> CandidatesFromManifest(
    const std::vector<Recording>& recordings);

}  // namespace pianojudge

#endif  // PIANOJUDGE_MANIFEST_H_
