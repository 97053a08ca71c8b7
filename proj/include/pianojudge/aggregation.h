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

#ifndef PIANOJUDGE_AGGREGATION_H_
#define PIANOJUDGE_AGGREGATION_H_

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "pianojudge/embeddings.h"
#include "pianojudge/manifest.h"
#include "pianojudge/metrics.h"
#include "pianojudge/model.h"
#include "pianojudge/pairing.h"

namespace pianojudge {

// Most frequent label. Ties go to the label with the larger summed
// confidence, then to the smallest label.
absl::StatusOr<int> MajorityVote(std::span<const int> labels, std::span<const double> confidences);

struct TournamentResult {
  std::map<std::string, int> win_counts;
  // Wins where each win counts 1 if the inverse match agrees, else 0.5.
  std::map<std::string, double> weighted_wins;
  // Candidates by win count, then weighted wins (both descending), then id.
  std::vector<std::string> ordering;
  // Fraction of unordered pairs whose two orientations name the same winner.
  double inverse_consistency = 0.0;
  int pairs_evaluated = 0;
};

// Ordered pair (first, second) -> winning candidate id.
using PairWinners = std::map<std::pair<std::string, std::string>, std::string>;

// Every ordered pair of distinct candidates must have a winner that is one of
// its two members.
absl::StatusOr<TournamentResult> TournamentWinCounts(const std::vector<std::string>& candidates,
                                                     const PairWinners& winners);

// Plays every ordered pair through `first_wins` and counts wins.
absl::StatusOr<TournamentResult> RunTournament(
    const std::vector<std::string>& candidates,
    const std::function<absl::StatusOr<bool>(const std::string&, const std::string&)>& first_wins);

struct HitRateCandidate {
  std::string candidate_id;
  int rank = 0;  // 1-based position in the ordering
  int win_count = 0;
  int tier = 0;
  bool passed = false;
};

struct HitRateCurve {
  std::vector<std::pair<int, double>> points;  // (k, hit rate among top k)
  std::vector<HitRateCandidate> candidates;    // in ranking order

  double at(int k) const { return points.at(static_cast<size_t>(k - 1)).second; }
  // candidate_id,win_count,rank,tier,passed
  std::string CandidatesCsv() const;
  // k,hit_rate
  std::string PointsCsv() const;
  // Line plot of hit rate against k with one tier-coloured marker per rank.
  std::string ToSvg(const std::string& title) const;
};

absl::StatusOr<HitRateCurve> ComputeHitRateCurve(const TournamentResult& result,
                                                 const std::map<std::string, bool>& passed,
                                                 const std::map<std::string, int>& tiers);

// Chunk embeddings of one recording, in time order.
using ChunkEmbeddings = std::vector<std::shared_ptr<const EmbeddingTensor>>;

struct PairDecision {
  bool first_wins = false;
  double confidence = 0.0;
  int chunks_used = 0;
  int chunks_dropped = 0;  // chunks of the longer recording without a partner
};

// Pairs chunk i of `first` with chunk i of `second` and majority-votes the
// per-chunk decisions. Four-way heads vote with the summed probability of
// the labels that put the first recording ahead.
absl::StatusOr<PairDecision> DecidePair(const PredictionHead& head, const ChunkEmbeddings& first,
                                        const ChunkEmbeddings& second);

struct CaseStudyOptions {
  bool fitting = false;
  int fit_epochs = 5;
  // Split the fitting half by candidate (default) or by labeled pair.
  bool split_by_candidate = true;
  TrainConfig fit_config;  // learning rate etc. for fitting; epochs ignored
  uint64_t seed = 0;
};

struct CaseStudyReport {
  MetricReport metrics;
  TournamentResult tournament;
  HitRateCurve curve;
  std::string top_candidate;
  std::optional<TrainHistory> fit_history;
  std::vector<std::string> fit_candidates;
  std::vector<std::string> log;  // one line per decided pair

  std::string Summary() const;
};

// Evaluates a trained rank head on ICPC candidates: paired accuracy and
// macro-F1 on labeled pairs (the held-out half when fitting), a tournament
// over every ordered candidate pair and its hit-rate curve. `chunks` maps
// each candidate's recording id to its chunk embeddings.
absl::StatusOr<CaseStudyReport> RunCaseStudy(const PredictionHead& head,
                                             const std::vector<IcpcCandidate>& candidates,
                                             const std::map<std::string, ChunkEmbeddings>& chunks,
                                             const CaseStudyOptions& options);

// Writes candidates.csv, hitrate.csv, hitrate.svg, pairs.log and summary.txt.
absl::Status WriteCaseStudy(const CaseStudyReport& report, const std::string& dir);

}  // namespace pianojudge

#endif  // PIANOJUDGE_AGGREGATION_H_
