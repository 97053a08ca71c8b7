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

#include "pianojudge/manifest.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "pianojudge/csv.h"
#include "pianojudge/rng.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {
namespace {

constexpr int kNumColumns = 10;
constexpr int kMaxTechniquesPerRecording = 3;

absl::Status RowError(int row, std::string_view field, std::string_view message) {
  return absl::InvalidArgumentError(
      absl::StrCat("row ", row, ": field '", AV(field), "': ", AV(message)));
}

absl::StatusOr<std::optional<int>> ParseOptionalInt(const std::string& cell, int row,
                                                    std::string_view field) {
  if (cell.empty()) return std::optional<int>();
  int value = 0;
  if (!absl::SimpleAtoi(cell, &value)) {
    return RowError(row, field, absl::StrCat("not an integer: '", cell, "'"));
  }
  return std::optional<int>(value);
}

std::string FormatDouble(double value) {
  // Shortest round-trip representation.
  char buffer[64];
  auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

}  // namespace

bool IsRemoteUri(std::string_view uri) {
  return uri.starts_with("http://") || uri.starts_with("https://");
}

std::string_view DatasetName(Dataset dataset) {
  switch (dataset) {
    case Dataset::kExpertise: return "expertise";
    case Dataset::kIcpc2015: return "icpc2015";
    case Dataset::kDifficulty: return "difficulty";
    case Dataset::kTechniques: return "techniques";
  }
  return "unknown";
}

absl::StatusOr<Dataset> ParseDataset(std::string_view name) {
  for (Dataset d : {Dataset::kExpertise, Dataset::kIcpc2015, Dataset::kDifficulty,
                    Dataset::kTechniques}) {
    if (DatasetName(d) == name) return d;
  }
  return absl::InvalidArgumentError(absl::StrCat("unknown dataset '", AV(name), "'"));
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "unassigned";
  }
  return "unknown";
}

absl::StatusOr<Split> ParseSplit(std::string_view name) {
  if (name.empty() || name == "unassigned") return Split::kUnassigned;
  if (name == "train") return Split::kTrain;
  if (name == "test") return Split::kTest;
  return absl::InvalidArgumentError(absl::StrCat("unknown split '", AV(name), "'"));
}

absl::StatusOr<int> TechniqueIndex(std::string_view name) {
  for (int i = 0; i < kNumTechniques; ++i) {
    if (kTechniqueNames[i] == name) return i;
  }
  return absl::InvalidArgumentError(absl::StrCat("unknown technique '", AV(name), "'"));
}

std::string ValidationReport::ToString() const {
  std::string out;
  for (const ValidationIssue& issue : issues) {
    absl::StrAppend(&out, issue.recording_id, "\t", issue.field, "\t", issue.message, "\n");
  }
  return out;
}

absl::StatusOr<std::vector<Recording>> ParseManifest(std::string_view text,
                                                     Dataset dataset) {
  PJ_ASSIGN_OR_RETURN(auto rows, ParseCsv(text));
  if (rows.empty()) return absl::InvalidArgumentError("manifest is empty (no header)");
  const std::string header = absl::StrJoin(rows.front(), ",");
  if (header != kManifestHeader) {
    return absl::InvalidArgumentError(
        absl::StrCat("manifest header mismatch: expected '", AV(kManifestHeader), "', got '",
                     header, "'"));
  }
  std::vector<Recording> recordings;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& cells = rows[r];
    const int row = static_cast<int>(r);
    if (cells.size() == 1 && cells[0].empty()) continue;  // blank line
    if (cells.size() != kNumColumns) {
      return absl::InvalidArgumentError(absl::StrCat(
          "row ", row, ": expected ", kNumColumns, " columns, got ", cells.size()));
    }
    Recording rec;
    rec.id = cells[0];
    if (rec.id.empty()) return RowError(row, "id", "empty");
    PJ_ASSIGN_OR_RETURN(rec.dataset, ParseDataset(cells[1]));
    if (rec.dataset != dataset) {
      return RowError(row, "dataset",
                      absl::StrCat("'", cells[1], "' does not match requested dataset '",
                                   AV(DatasetName(dataset)), "'"));
    }
    rec.audio_uri = cells[2];
    if (!cells[3].empty()) {
      if (!absl::SimpleAtod(cells[3], &rec.duration_s) || !std::isfinite(rec.duration_s)) {
        return RowError(row, "duration_s", absl::StrCat("not a number: '", cells[3], "'"));
      }
    }
    PJ_ASSIGN_OR_RETURN(rec.expertise, ParseOptionalInt(cells[4], row, "expertise"));
    PJ_ASSIGN_OR_RETURN(rec.difficulty, ParseOptionalInt(cells[5], row, "difficulty"));
    if (!cells[6].empty()) {
      std::set<int> techniques;
      for (absl::string_view name : absl::StrSplit(cells[6], '|')) {
        auto index = TechniqueIndex(SV(name));
        if (!index.ok()) return RowError(row, "techniques", SV(index.status().message()));
        techniques.insert(*index);
      }
      rec.techniques = std::move(techniques);
    }
    auto split = ParseSplit(cells[7]);
    if (!split.ok()) return RowError(row, "split", SV(split.status().message()));
    rec.split = *split;
    if (!cells[8].empty()) rec.candidate_id = cells[8];
    PJ_ASSIGN_OR_RETURN(rec.rounds_reached,
                        ParseOptionalInt(cells[9], row, "rounds_reached"));
    recordings.push_back(std::move(rec));
  }

  // Load-time validation aborts on the first violation, naming the row.
  ValidationReport report = ValidateManifest(recordings, dataset);
  if (!report.ok()) {
    const ValidationIssue& first = report.issues.front();
    int row = 0;
    for (size_t i = 0; i < recordings.size(); ++i) {
      if (recordings[i].id == first.recording_id) {
        row = static_cast<int>(i) + 1;
        if (first.field != "id") break;  // duplicates: report the later row
      }
    }
    return RowError(row, first.field, first.message);
  }
  return recordings;
}

absl::StatusOr<std::vector<Recording>> LoadManifest(const std::string& path,
                                                    Dataset dataset) {
  PJ_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
  return ParseManifest(text, dataset);
}

std::string FormatManifest(const std::vector<Recording>& recordings) {
  std::string out = absl::StrCat(AV(kManifestHeader), "\n");
  auto opt_int = [](const std::optional<int>& v) {
    return v.has_value() ? absl::StrCat(*v) : std::string();
  };
  for (const Recording& rec : recordings) {
    std::string techniques;
    if (rec.techniques.has_value()) {
      std::vector<std::string> names;
      for (int t : *rec.techniques) names.emplace_back(kTechniqueNames[t]);
      techniques = absl::StrJoin(names, "|");
    }
    out += CsvRow({rec.id, std::string(DatasetName(rec.dataset)), rec.audio_uri,
                   FormatDouble(rec.duration_s), opt_int(rec.expertise),
                   opt_int(rec.difficulty), techniques, std::string(SplitName(rec.split)),
                   rec.candidate_id.value_or(""), opt_int(rec.rounds_reached)});
  }
  return out;
}

absl::Status SaveManifest(const std::vector<Recording>& recordings,
                          const std::string& path) {
  return WriteFile(path, FormatManifest(recordings));
}

ValidationReport ValidateManifest(const std::vector<Recording>& recordings,
                                  Dataset dataset) {
  ValidationReport report;
  auto add = [&report](const Recording& rec, std::string field, std::string message) {
    report.issues.push_back({rec.id, std::move(field), std::move(message)});
  };
  std::map<std::string, int> seen;
  std::map<std::string, int> candidates;
  for (const Recording& rec : recordings) {
    if (++seen[rec.id] > 1) add(rec, "id", "duplicate id");
    if (rec.dataset != dataset) {
      add(rec, "dataset", absl::StrCat("expected '", AV(DatasetName(dataset)), "'"));
    }
    if (!(rec.duration_s >= 0.0)) add(rec, "duration_s", "negative duration");
    if (rec.expertise.has_value() && (*rec.expertise < 0 || *rec.expertise > 2)) {
      add(rec, "expertise", "expertise out of 0..2");
    }
    if (rec.difficulty.has_value() && (*rec.difficulty < 1 || *rec.difficulty > 9)) {
      add(rec, "difficulty", "difficulty out of 1..9");
    }
    if (rec.techniques.has_value()) {
      if (rec.techniques->empty()) add(rec, "techniques", "empty technique set");
      if (rec.techniques->size() > kMaxTechniquesPerRecording) {
        add(rec, "techniques",
            absl::StrCat("more than ", kMaxTechniquesPerRecording, " techniques"));
      }
      for (int t : *rec.techniques) {
        if (t < 0 || t >= kNumTechniques) add(rec, "techniques", "unknown technique index");
      }
    }
    if (rec.rounds_reached.has_value() && *rec.rounds_reached < 0) {
      add(rec, "rounds_reached", "negative rounds_reached");
    }
    switch (dataset) {
      case Dataset::kExpertise:
        if (!rec.expertise.has_value()) add(rec, "expertise", "missing expertise level");
        break;
      case Dataset::kDifficulty:
        if (!rec.difficulty.has_value()) {
          add(rec, "difficulty", "missing difficulty grade (must be in 1..9)");
        }
        break;
      case Dataset::kTechniques:
        if (!rec.techniques.has_value()) add(rec, "techniques", "missing technique labels");
        break;
      case Dataset::kIcpc2015:
        if (!rec.candidate_id.has_value()) {
          add(rec, "candidate_id", "missing candidate_id");
        } else if (++candidates[*rec.candidate_id] > 1) {
          add(rec, "candidate_id", "candidate has more than one preliminary recording");
        }
        if (!rec.rounds_reached.has_value()) {
          add(rec, "rounds_reached", "missing rounds_reached");
        }
        break;
    }
  }
  return report;
}

int StratumTestSize(int n, double test_fraction) {
  if (n <= 0) return 0;
  int size = static_cast<int>(std::floor(n * test_fraction));
  if (n >= 2) size = std::max(size, 1);
  return std::min(size, n);
}

absl::StatusOr<SplitResult> SplitRecordings(const std::vector<Recording>& recordings,
                                            double test_fraction, uint64_t seed) {
  if (recordings.empty()) return absl::InvalidArgumentError("cannot split an empty manifest");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    return absl::InvalidArgumentError(
        absl::StrCat("test_fraction must lie in (0,1), got ", test_fraction));
  }
  std::map<int, std::vector<size_t>> strata;
  for (size_t i = 0; i < recordings.size(); ++i) {
    const Recording& rec = recordings[i];
    int key = -1;
    if (rec.dataset == Dataset::kExpertise && rec.expertise) key = *rec.expertise;
    if (rec.dataset == Dataset::kDifficulty && rec.difficulty) key = *rec.difficulty;
    strata[key].push_back(i);
  }
  std::mt19937_64 rng = MakeStream(seed, "split");
  std::vector<bool> is_test(recordings.size(), false);
  for (auto& [key, members] : strata) {
    std::shuffle(members.begin(), members.end(), rng);
    const int n_test = StratumTestSize(static_cast<int>(members.size()), test_fraction);
    for (int i = 0; i < n_test; ++i) is_test[members[i]] = true;
  }
  SplitResult result;
  for (size_t i = 0; i < recordings.size(); ++i) {
    Recording rec = recordings[i];
    rec.split = is_test[i] ? Split::kTest : Split::kTrain;
    (is_test[i] ? result.test : result.train).push_back(std::move(rec));
  }
  return result;
}

absl::StatusOr<std::vector<IcpcCandidate>> CandidatesFromManifest(
    const std::vector<Recording>& recordings) {
  std::vector<IcpcCandidate> candidates;
  for (const Recording& rec : recordings) {
    if (rec.dataset != Dataset::kIcpc2015) continue;
    if (!rec.candidate_id || !rec.rounds_reached) {
      return absl::InvalidArgumentError(
          absl::StrCat("recording ", rec.id, " lacks candidate_id/rounds_reached"));
    }
    if (*rec.rounds_reached < 0) {
      return absl::InvalidArgumentError(
          absl::StrCat("recording ", rec.id, ": negative rounds_reached"));
    }
    candidates.push_back({*rec.candidate_id, rec.id, *rec.rounds_reached,
                          *rec.rounds_reached});
  }
  return candidates;
}

}  // namespace pianojudge
