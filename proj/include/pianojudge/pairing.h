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

#ifndef PIANOJUDGE_PAIRING_H_
#define PIANOJUDGE_PAIRING_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/manifest.h"

namespace pianojudge {

enum class RankMode { kTwoWay, kFourWay };

std::string_view RankModeName(RankMode mode);
absl::StatusOr<RankMode> ParseRankMode(std::string_view name);
inline int NumRankClasses(RankMode mode) { return mode == RankMode::kTwoWay ? 2 : 4; }

// Ranking label of the ordered pair (p1, p2) from their levels q1 = Q(p1),
// q2 = Q(p2):
//   two-way:  0 if q1 < q2, 1 if q1 > q2.
//   four-way: 0 if q2 - q1 = 2, 1 if q2 - q1 = 1,
//             2 if q1 - q2 = 1, 3 if q1 - q2 = 2.
// Equal levels are undefined and rejected.
absl::StatusOr<int> RankLabel(int q1, int q2, RankMode mode);

// Whether a label says the first member ranks higher.
inline bool FirstWins(int label, RankMode mode) {
  return mode == RankMode::kTwoWay ? label == 1 : label >= 2;
}

struct RankPair {
  std::string first_id;
  std::string second_id;
  RankMode mode = RankMode::kTwoWay;
  std::optional<int> label;  // empty for unlabeled tournament pairs

  bool operator==(const RankPair&) const = default;
};

struct ExpertisePairing {
  std::vector<RankPair> pairs;
  std::vector<std::string> warnings;
};

// Random cross-level pairs. Within each level-pair category (0-1, 0-2, 1-2)
// the two levels are shuffled and zipped, so a recording appears at most once
// per category; which member is first is a seeded coin flip. All recordings
// must come from one split.
absl::StatusOr<ExpertisePairing> MakeExpertisePairs(const std::vector<Recording>& recordings,
                                                    uint64_t seed, RankMode mode);

// Appends (b, a) with the swapped label for every labeled pair (a, b).
std::vector<RankPair> WithInversePairs(const std::vector<RankPair>& pairs);

// S(c): one point for every round entered after the preliminary.
std::map<std::string, int> IcpcScores(const std::vector<IcpcCandidate>& candidates);

struct IcpcPairing {
  std::vector<RankPair> pairs;
  int ties_skipped = 0;
};

// One labeled pair per unordered candidate pair with different scores,
// ordered as the candidates appear in the input. Pairs reference the
// candidates' preliminary recording ids. In four-way mode only score gaps of
// one or two are labelable; larger gaps are skipped too.
absl::StatusOr<IcpcPairing> MakeIcpcPairs(const std::vector<IcpcCandidate>& candidates,
                                          const std::map<std::string, int>& scores,
                                          RankMode mode = RankMode::kTwoWay);

// Every ordered pair (a, b), a != b, of candidate ids, unlabeled.
absl::StatusOr<std::vector<RankPair>> MakeTournamentPairs(
    const std::vector<std::string>& candidate_ids);

// CSV "first_id,second_id,mode,label".
std::string FormatPairs(const std::vector<RankPair>& pairs);
absl::StatusOr<std::vector<RankPair>> ParsePairs(std::string_view text);

}  // namespace pianojudge

#endif  // PIANOJUDGE_PAIRING_H_
