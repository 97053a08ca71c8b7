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

#include "pianojudge/pairing.h"

#include <algorithm>
#include <cstdlib>
#include <random>
#include <set>
#include <string>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "pianojudge/csv.h"
#include "pianojudge/rng.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {

std::string_view RankModeName(RankMode mode) {
  return mode == RankMode::kTwoWay ? "two_way" : "four_way";
}

absl::StatusOr<RankMode> ParseRankMode(std::string_view name) {
  if (name == "two_way") return RankMode::kTwoWay;
  if (name == "four_way") return RankMode::kFourWay;
  return absl::InvalidArgumentError(absl::StrCat("unknown rank mode '", AV(name), "'"));
}

absl::StatusOr<int> RankLabel(int q1, int q2, RankMode mode) {
  if (q1 == q2) return absl::InvalidArgumentError("tied levels: ranking label undefined");
  if (mode == RankMode::kTwoWay) return q1 > q2 ? 1 : 0;
  switch (q1 - q2) {
    case -2: return 0;
    case -1: return 1;
    case 1: return 2;
    case 2: return 3;
  }
  return absl::InvalidArgumentError(
      absl::StrCat("four-way label needs a level gap of 1 or 2, got ", std::abs(q1 - q2)));
}

absl::StatusOr<ExpertisePairing> MakeExpertisePairs(const std::vector<Recording>& recordings,
                                                    uint64_t seed, RankMode mode) {
  ExpertisePairing out;
  std::vector<const Recording*> by_level[3];
  std::optional<Split> split;
  for (const Recording& rec : recordings) {
    if (!rec.expertise.has_value() || *rec.expertise < 0 || *rec.expertise > 2) {
      return absl::InvalidArgumentError(
          absl::StrCat("recording ", rec.id, " has no valid expertise level"));
    }
    if (split.has_value() && *split != rec.split) {
      return absl::InvalidArgumentError("cross-split pairing: recordings span several splits");
    }
    split = rec.split;
    by_level[*rec.expertise].push_back(&rec);
  }
  for (int level = 0; level < 3; ++level) {
    if (by_level[level].empty()) {
      out.warnings.push_back(absl::StrCat("no recordings at expertise level ", level,
                                          "; its pair categories are empty"));
    }
  }
  std::mt19937_64 rng = MakeStream(seed, "pairing");
  constexpr std::pair<int, int> kCategories[] = {{0, 1}, {0, 2}, {1, 2}};
  for (auto [lo, hi] : kCategories) {
    std::vector<const Recording*> low = by_level[lo];
    std::vector<const Recording*> high = by_level[hi];
    std::shuffle(low.begin(), low.end(), rng);
    std::shuffle(high.begin(), high.end(), rng);
    const size_t n = std::min(low.size(), high.size());
    for (size_t i = 0; i < n; ++i) {
      const Recording* a = low[i];
      const Recording* b = high[i];
      if (rng() & 1) std::swap(a, b);
      PJ_ASSIGN_OR_RETURN(int label, RankLabel(*a->expertise, *b->expertise, mode));
      out.pairs.push_back({a->id, b->id, mode, label});
    }
  }
  return out;
}

std::vector<RankPair> WithInversePairs(const std::vector<RankPair>& pairs) {
  std::vector<RankPair> out = pairs;
  for (const RankPair& p : pairs) {
    std::optional<int> label;
    if (p.label.has_value()) label = NumRankClasses(p.mode) - 1 - *p.label;
    out.push_back({p.second_id, p.first_id, p.mode, label});
  }
  return out;
}

std::map<std::string, int> IcpcScores(const std::vector<IcpcCandidate>& candidates) {
  std::map<std::string, int> scores;
  for (const IcpcCandidate& c : candidates) scores[c.candidate_id] = c.rounds_reached;
  return scores;
}

absl::StatusOr<IcpcPairing> MakeIcpcPairs(const std::vector<IcpcCandidate>& candidates,
                                          const std::map<std::string, int>& scores,
                                          RankMode mode) {
  IcpcPairing out;
  std::vector<int> s(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i) {
    auto it = scores.find(candidates[i].candidate_id);
    if (it == scores.end()) {
      return absl::InvalidArgumentError(
          absl::StrCat("no score for candidate ", candidates[i].candidate_id));
    }
    s[i] = it->second;
  }
  for (size_t i = 0; i < candidates.size(); ++i) {
    for (size_t j = i + 1; j < candidates.size(); ++j) {
      if (s[i] == s[j]) {
        ++out.ties_skipped;
        continue;
      }
      auto label = RankLabel(s[i], s[j], mode);
      if (!label.ok()) continue;  // four-way gap > 2
      out.pairs.push_back({candidates[i].recording_id, candidates[j].recording_id, mode, *label});
    }
  }
  return out;
}

absl::StatusOr<std::vector<RankPair>> MakeTournamentPairs(
    const std::vector<std::string>& candidate_ids) {
  if (candidate_ids.size() < 2) {
    return absl::InvalidArgumentError("a tournament needs at least 2 candidates");
  }
  if (std::set<std::string>(candidate_ids.begin(), candidate_ids.end()).size() !=
      candidate_ids.size()) {
    return absl::InvalidArgumentError("duplicate candidate id in tournament");
  }
  std::vector<RankPair> pairs;
  pairs.reserve(candidate_ids.size() * (candidate_ids.size() - 1));
  for (size_t i = 0; i < candidate_ids.size(); ++i) {
    for (size_t j = 0; j < candidate_ids.size(); ++j) {
      if (i != j) pairs.push_back({candidate_ids[i], candidate_ids[j], RankMode::kTwoWay, {}});
    }
  }
  return pairs;
}

std::string FormatPairs(const std::vector<RankPair>& pairs) {
  std::string out = "first_id,second_id,mode,label\n";
  for (const RankPair& p : pairs) {
    out += CsvRow({p.first_id, p.second_id, std::string(RankModeName(p.mode)),
                   p.label.has_value() ? absl::StrCat(*p.label) : std::string()});
  }
  return out;
}

absl::StatusOr<std::vector<RankPair>> ParsePairs(std::string_view text) {
  PJ_ASSIGN_OR_RETURN(auto rows, ParseCsv(text));
  if (rows.empty() || rows[0] != std::vector<std::string>{"first_id", "second_id", "mode", "label"}) {
    return absl::InvalidArgumentError("pair CSV header must be first_id,second_id,mode,label");
  }
  std::vector<RankPair> pairs;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    if (cells.size() == 1 && cells[0].empty()) continue;
    if (cells.size() != 4) {
      return absl::InvalidArgumentError(absl::StrCat("pair row ", r, ": expected 4 columns"));
    }
    RankPair pair{cells[0], cells[1], RankMode::kTwoWay, {}};
    PJ_ASSIGN_OR_RETURN(pair.mode, ParseRankMode(cells[2]));
    if (!cells[3].empty()) {
      int label = 0;
      if (!absl::SimpleAtoi(cells[3], &label) || label < 0 || label >= NumRankClasses(pair.mode)) {
        return absl::InvalidArgumentError(
            absl::StrCat("pair row ", r, ": invalid label '", cells[3], "'"));
      }
      pair.label = label;
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace pianojudge
