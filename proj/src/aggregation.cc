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

#include "pianojudge/aggregation.h"

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "pianojudge/csv.h"
#include "pianojudge/rng.h"
#include "pianojudge/status_macros.h"

namespace pianojudge {

absl::StatusOr<int> MajorityVote(std::span<const int> labels, std::span<const double> confidences) {
  if (labels.empty()) return absl::InvalidArgumentError("majority vote over zero votes");
  if (labels.size() != confidences.size()) {
    return absl::InvalidArgumentError("votes and confidences differ in length");
  }
  std::map<int, std::pair<int, double>> tally;  // label -> (votes, summed confidence)
  for (size_t i = 0; i < labels.size(); ++i) {
    auto& [votes, confidence] = tally[labels[i]];
    ++votes;
    confidence += confidences[i];
  }
  int best = tally.begin()->first;
  for (const auto& [label, t] : tally) {
    const auto& b = tally[best];
    if (t.first > b.first || (t.first == b.first && t.second > b.second)) best = label;
  }
  return best;
}

absl::StatusOr<TournamentResult> TournamentWinCounts(const std::vector<std::string>& candidates,
                                                     const PairWinners& winners) {
  const std::set<std::string> unique(candidates.begin(), candidates.end());
  if (unique.size() != candidates.size()) {
    return absl::InvalidArgumentError("duplicate candidate id in tournament");
  }
  if (candidates.size() < 2) return absl::InvalidArgumentError("a tournament needs 2 candidates");
  TournamentResult result;
  for (const std::string& c : candidates) {
    result.win_counts[c] = 0;
    result.weighted_wins[c] = 0.0;
  }
  int agreeing = 0, unordered = 0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    for (size_t j = 0; j < candidates.size(); ++j) {
      if (i == j) continue;
      const std::string& a = candidates[i];
      const std::string& b = candidates[j];
      auto it = winners.find({a, b});
      if (it == winners.end()) {
        return absl::InvalidArgumentError(absl::StrCat("missing prediction for pair (", a, ", ", b, ")"));
      }
      if (it->second != a && it->second != b) {
        return absl::InvalidArgumentError(absl::StrCat("winner '", it->second,
                                                       "' is not a member of pair (", a, ", ", b, ")"));
      }
      auto inverse = winners.find({b, a});
      if (inverse == winners.end()) {
        return absl::InvalidArgumentError(absl::StrCat("missing prediction for pair (", b, ", ", a, ")"));
      }
      const bool consistent = inverse->second == it->second;
      ++result.win_counts[it->second];
      result.weighted_wins[it->second] += consistent ? 1.0 : 0.5;
      ++result.pairs_evaluated;
      if (i < j) {
        ++unordered;
        agreeing += consistent;
      }
    }
  }
  result.inverse_consistency = static_cast<double>(agreeing) / unordered;
  result.ordering = candidates;
  std::sort(result.ordering.begin(), result.ordering.end(),
            [&result](const std::string& a, const std::string& b) {
              const int wa = result.win_counts.at(a), wb = result.win_counts.at(b);
              if (wa != wb) return wa > wb;
              const double va = result.weighted_wins.at(a), vb = result.weighted_wins.at(b);
              if (va != vb) return va > vb;
              return a < b;
            });
  return result;
}

absl::StatusOr<TournamentResult> RunTournament(
    const std::vector<std::string>& candidates,
    const std::function<absl::StatusOr<bool>(const std::string&, const std::string&)>& first_wins) {
  PairWinners winners;
  for (const std::string& a : candidates) {
    for (const std::string& b : candidates) {
      if (a == b) continue;
      PJ_ASSIGN_OR_RETURN(bool first, first_wins(a, b));
      winners[{a, b}] = first ? a : b;
    }
  }
  return TournamentWinCounts(candidates, winners);
}

absl::StatusOr<HitRateCurve> ComputeHitRateCurve(const TournamentResult& result,
                                                 const std::map<std::string, bool>& passed,
                                                 const std::map<std::string, int>& tiers) {
  HitRateCurve curve;
  int hits = 0;
  for (size_t i = 0; i < result.ordering.size(); ++i) {
    const std::string& id = result.ordering[i];
    auto p = passed.find(id);
    if (p == passed.end()) {
      return absl::InvalidArgumentError(absl::StrCat("no pass/fail ground truth for ", id));
    }
    auto t = tiers.find(id);
    const int k = static_cast<int>(i) + 1;
    hits += p->second;
    curve.points.emplace_back(k, static_cast<double>(hits) / k);
    curve.candidates.push_back(
        {id, k, result.win_counts.at(id), t == tiers.end() ? 0 : t->second, p->second});
  }
  return curve;
}

std::string HitRateCurve::CandidatesCsv() const {
  std::string out = "candidate_id,win_count,rank,tier,passed\n";
  for (const HitRateCandidate& c : candidates) {
    out += CsvRow({c.candidate_id, absl::StrCat(c.win_count), absl::StrCat(c.rank),
                   absl::StrCat(c.tier), c.passed ? "1" : "0"});
  }
  return out;
}

std::string HitRateCurve::PointsCsv() const {
  std::string out = "k,hit_rate\n";
  for (const auto& [k, rate] : points) out += CsvRow({absl::StrCat(k), FormatMetric(rate)});
  return out;
}

namespace {

std::string XmlEscape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string HitRateCurve::ToSvg(const std::string& title) const {
  constexpr double kWidth = 720, kHeight = 420;
  constexpr double kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
  const double plot_w = kWidth - kLeft - kRight, plot_h = kHeight - kTop - kBottom;
  const int n = std::max<int>(1, static_cast<int>(points.size()));
  auto x = [&](double k) { return kLeft + (n == 1 ? 0.5 : (k - 1) / (n - 1)) * plot_w; };
  auto y = [&](double rate) { return kTop + (1.0 - rate) * plot_h; };
  static constexpr const char* kTierColours[] = {"#9e9e9e", "#1f77b4", "#2ca02c", "#ff7f0e",
                                                 "#d62728"};
  std::string svg = absl::StrFormat(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"100%%\" height=\"100%%\" fill=\"white\"/>\n"
      "<text x=\"%g\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">%s</text>\n",
      static_cast<int>(kWidth), static_cast<int>(kHeight), kWidth / 2, XmlEscape(title));
  absl::StrAppendFormat(&svg,
                        "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n"
                        "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n",
                        kLeft, kTop, kLeft, kTop + plot_h, kLeft, kTop + plot_h, kLeft + plot_w,
                        kTop + plot_h);
  for (int i = 0; i <= 4; ++i) {
    const double rate = i / 4.0;
    absl::StrAppendFormat(&svg,
                          "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#e0e0e0\"/>\n"
                          "<text x=\"%g\" y=\"%g\" text-anchor=\"end\">%.2f</text>\n",
                          kLeft, y(rate), kLeft + plot_w, y(rate), kLeft - 6, y(rate) + 4, rate);
  }
  absl::StrAppendFormat(&svg,
                        "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">win-count rank threshold k</text>\n"
                        "<text x=\"16\" y=\"%g\" text-anchor=\"middle\" "
                        "transform=\"rotate(-90 16 %g)\">hit rate</text>\n",
                        kLeft + plot_w / 2, kHeight - 12, kTop + plot_h / 2, kTop + plot_h / 2);
  for (int k : {1, n / 2, n}) {
    if (k < 1) continue;
    absl::StrAppendFormat(&svg, "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\">%d</text>\n", x(k),
                          kTop + plot_h + 18, k);
  }
  if (!points.empty()) {
    svg += "<polyline fill=\"none\" stroke=\"#333\" stroke-width=\"1.5\" points=\"";
    for (const auto& [k, rate] : points) absl::StrAppendFormat(&svg, "%.2f,%.2f ", x(k), y(rate));
    svg += "\"/>\n";
  }
  for (size_t i = 0; i < candidates.size() && i < points.size(); ++i) {
    const HitRateCandidate& c = candidates[i];
    const char* colour = kTierColours[std::clamp(c.tier, 0, 4)];
    absl::StrAppendFormat(&svg,
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\">"
                          "<title>%s (wins %d, tier %d)</title></circle>\n",
                          x(points[i].first), y(points[i].second), colour,
                          XmlEscape(c.candidate_id), c.win_count, c.tier);
  }
  for (int tier = 0; tier <= 4; ++tier) {
    absl::StrAppendFormat(&svg,
                          "<circle cx=\"%g\" cy=\"%g\" r=\"4\" fill=\"%s\"/>"
                          "<text x=\"%g\" y=\"%g\">tier %d</text>\n",
                          kLeft + plot_w - 60, kTop + 12 + 16 * tier, kTierColours[tier],
                          kLeft + plot_w - 50, kTop + 16 + 16 * tier, tier);
  }
  svg += "</svg>\n";
  return svg;
}

absl::StatusOr<PairDecision> DecidePair(const PredictionHead& head, const ChunkEmbeddings& first,
                                        const ChunkEmbeddings& second) {
  if (first.empty() || second.empty()) {
    return absl::InvalidArgumentError("pair decision needs at least one chunk per recording");
  }
  const bool four_way = head.config().output_classes == 4;
  const size_t n = std::min(first.size(), second.size());
  std::vector<int> votes;
  std::vector<double> confidences;
  for (size_t i = 0; i < n; ++i) {
    PJ_ASSIGN_OR_RETURN(std::vector<double> logits, head.ForwardRank(*first[i], *second[i]));
    const std::vector<double> p = Softmax(logits);
    const double p_first = four_way ? p[2] + p[3] : p[1];
    const int vote = p_first > 0.5 ? 1 : 0;
    votes.push_back(vote);
    confidences.push_back(vote == 1 ? p_first : 1.0 - p_first);
  }
  PJ_ASSIGN_OR_RETURN(int winner, MajorityVote(votes, confidences));
  PairDecision decision;
  decision.first_wins = winner == 1;
  decision.chunks_used = static_cast<int>(n);
  decision.chunks_dropped = static_cast<int>(std::max(first.size(), second.size()) - n);
  double sum = 0.0;
  int count = 0;
  for (size_t i = 0; i < votes.size(); ++i) {
    if (votes[i] == winner) {
      sum += confidences[i];
      ++count;
    }
  }
  decision.confidence = sum / count;
  return decision;
}

absl::StatusOr<CaseStudyReport> RunCaseStudy(const PredictionHead& trained,
                                             const std::vector<IcpcCandidate>& candidates,
                                             const std::map<std::string, ChunkEmbeddings>& chunks,
                                             const CaseStudyOptions& options) {
  if (trained.config().task_kind != TaskKind::kRank) {
    return absl::InvalidArgumentError("the case study needs a rank head");
  }
  if (candidates.size() < 2) return absl::InvalidArgumentError("need at least 2 candidates");
  for (const IcpcCandidate& c : candidates) {
    auto it = chunks.find(c.recording_id);
    if (it == chunks.end() || it->second.empty()) {
      return absl::NotFoundError(absl::StrCat("missing embeddings for candidate ", c.candidate_id,
                                              " (recording ", c.recording_id, ")"));
    }
  }
  const std::map<std::string, int> scores = IcpcScores(candidates);
  const RankMode head_mode =
      trained.config().output_classes == 4 ? RankMode::kFourWay : RankMode::kTwoWay;

  CaseStudyReport report;
  PredictionHead head = trained;
  std::vector<IcpcCandidate> test_candidates = candidates;
  std::set<std::pair<std::string, std::string>> test_pair_filter;
  bool filter_pairs = false;

  if (options.fitting) {
    if (options.fit_epochs <= 0) return absl::InvalidArgumentError("fit_epochs must be positive");
    std::vector<IcpcCandidate> fit_candidates;
    std::vector<RankPair> fit_pairs;
    std::mt19937_64 rng = MakeStream(options.seed, "split");
    if (options.split_by_candidate) {
      std::vector<IcpcCandidate> shuffled = candidates;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      const size_t half = shuffled.size() / 2;
      fit_candidates.assign(shuffled.begin(), shuffled.begin() + half);
      std::set<std::string> fit_ids;
      for (const auto& c : fit_candidates) fit_ids.insert(c.candidate_id);
      test_candidates.clear();
      for (const auto& c : candidates) {
        if (!fit_ids.contains(c.candidate_id)) test_candidates.push_back(c);
      }
      std::vector<IcpcCandidate> ordered_fit;
      for (const auto& c : candidates) {
        if (fit_ids.contains(c.candidate_id)) ordered_fit.push_back(c);
      }
      PJ_ASSIGN_OR_RETURN(IcpcPairing pairing, MakeIcpcPairs(ordered_fit, scores, head_mode));
      fit_pairs = std::move(pairing.pairs);
      for (const auto& c : ordered_fit) report.fit_candidates.push_back(c.candidate_id);
    } else {
      PJ_ASSIGN_OR_RETURN(IcpcPairing pairing, MakeIcpcPairs(candidates, scores, head_mode));
      std::vector<RankPair> all = std::move(pairing.pairs);
      std::shuffle(all.begin(), all.end(), rng);
      const size_t half = all.size() / 2;
      fit_pairs.assign(all.begin(), all.begin() + half);
      filter_pairs = true;
      for (size_t i = half; i < all.size(); ++i) {
        test_pair_filter.insert({all[i].first_id, all[i].second_id});
      }
    }
    fit_pairs = WithInversePairs(fit_pairs);
    std::vector<Example> examples;
    for (const RankPair& p : fit_pairs) {
      const ChunkEmbeddings& a = chunks.at(p.first_id);
      const ChunkEmbeddings& b = chunks.at(p.second_id);
      for (size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        Example e;
        e.first = a[i];
        e.second = b[i];
        e.label = *p.label;
        e.target.assign(NumRankClasses(head_mode), 0.0);
        e.target[e.label] = 1.0;
        examples.push_back(std::move(e));
      }
    }
    if (examples.empty()) return absl::FailedPreconditionError("fitting half has no labeled pairs");
    TrainConfig fit = options.fit_config;
    fit.epochs = options.fit_epochs;
    fit.loss = LossKind::kCrossEntropy;
    PJ_ASSIGN_OR_RETURN(TrainResult fitted, Train(head, examples, nullptr, fit));
    head = std::move(fitted.last_head);
    report.fit_history = std::move(fitted.history);
  }

  // Every ordered candidate pair, decided once; paired metrics reuse them.
  std::map<std::string, const IcpcCandidate*> by_id;
  std::vector<std::string> ids;
  for (const IcpcCandidate& c : candidates) {
    by_id[c.candidate_id] = &c;
    ids.push_back(c.candidate_id);
  }
  std::map<std::pair<std::string, std::string>, PairDecision> decisions;
  auto first_wins = [&](const std::string& a, const std::string& b) -> absl::StatusOr<bool> {
    const IcpcCandidate& ca = *by_id.at(a);
    const IcpcCandidate& cb = *by_id.at(b);
    PJ_ASSIGN_OR_RETURN(PairDecision d,
                        DecidePair(head, chunks.at(ca.recording_id), chunks.at(cb.recording_id)));
    decisions[{ca.recording_id, cb.recording_id}] = d;
    report.log.push_back(absl::StrFormat(
        "%s vs %s: winner=%s confidence=%.6f chunks_used=%d chunks_dropped=%d", a, b,
        d.first_wins ? a : b, d.confidence, d.chunks_used, d.chunks_dropped));
    return d.first_wins;
  };
  PJ_ASSIGN_OR_RETURN(report.tournament, RunTournament(ids, first_wins));

  std::map<std::string, bool> passed;
  for (const auto& [id, score] : scores) passed[id] = score >= 1;
  PJ_ASSIGN_OR_RETURN(report.curve, ComputeHitRateCurve(report.tournament, passed, scores));
  report.top_candidate = report.tournament.ordering.front();

  // Paired accuracy over the labeled test pairs in both orientations.
  PJ_ASSIGN_OR_RETURN(IcpcPairing test, MakeIcpcPairs(test_candidates, scores, RankMode::kTwoWay));
  std::vector<int> predicted, labels;
  for (const RankPair& p : WithInversePairs(test.pairs)) {
    if (filter_pairs && !test_pair_filter.contains({p.first_id, p.second_id}) &&
        !test_pair_filter.contains({p.second_id, p.first_id})) {
      continue;
    }
    predicted.push_back(decisions.at({p.first_id, p.second_id}).first_wins ? 1 : 0);
    labels.push_back(*p.label);
  }
  report.metrics.task = "icpc_case_study";
  report.metrics.split = options.fitting ? "fit_test_half" : "all";
  report.metrics.seed = options.seed;
  if (!labels.empty()) {
    PJ_ASSIGN_OR_RETURN(double acc, Accuracy(predicted, labels));
    PJ_ASSIGN_OR_RETURN(double f1, MacroF1(predicted, labels));
    report.metrics.Add("paired_accuracy", acc);
    report.metrics.Add("paired_macro_f1", f1);
  } else {
    report.metrics.notes.push_back("no labeled test pairs");
  }
  report.metrics.Add("labeled_pairs", static_cast<double>(labels.size()));
  report.metrics.Add("inverse_consistency", report.tournament.inverse_consistency);
  report.metrics.Add("ordered_pairs", report.tournament.pairs_evaluated);
  const int n = static_cast<int>(ids.size());
  report.metrics.Add("hit_rate_at_half", report.curve.at(std::max(1, n / 2)));
  report.metrics.Add("base_pass_rate", report.curve.at(n));
  if (options.fitting) report.metrics.Add("fit_epochs", options.fit_epochs);
  return report;
}

std::string CaseStudyReport::Summary() const {
  std::string out = metrics.ToKeyValue();
  absl::StrAppend(&out, "top_candidate=", top_candidate, "\n");
  if (fit_history.has_value()) {
    absl::StrAppend(&out, "fit_candidates=", fit_candidates.size(), "\n");
    out += fit_history->ToLog();
  }
  return out;
}

absl::Status WriteCaseStudy(const CaseStudyReport& report, const std::string& dir) {
  PJ_RETURN_IF_ERROR(WriteFile(dir + "/candidates.csv", report.curve.CandidatesCsv()));
  PJ_RETURN_IF_ERROR(WriteFile(dir + "/hitrate.csv", report.curve.PointsCsv()));
  PJ_RETURN_IF_ERROR(WriteFile(dir + "/hitrate.svg",
                               report.curve.ToSvg("Win-count threshold vs. pass hit rate")));
  std::string log;
  for (const std::string& line : report.log) absl::StrAppend(&log, line, "\n");
  PJ_RETURN_IF_ERROR(WriteFile(dir + "/pairs.log", log));
  return WriteFile(dir + "/summary.txt", report.Summary());
}

}  // namespace pianojudge
