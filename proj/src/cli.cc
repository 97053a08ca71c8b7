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

#include "pianojudge/cli.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_replace.h"
#include "pianojudge/aggregation.h"
#include "pianojudge/audio.h"
#include "pianojudge/config.h"
#include "pianojudge/csv.h"
#include "pianojudge/embeddings.h"
#include "pianojudge/manifest.h"
#include "pianojudge/metrics.h"
#include "pianojudge/model.h"
#include "pianojudge/pairing.h"
#include "pianojudge/spectrogram.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"
#include "pianojudge/synth.h"
#include "pianojudge/tasks.h"

namespace pianojudge {
namespace {

namespace fs = std::filesystem;

constexpr std::string_view kVersion = "0.1.0";

struct Context {
  std::string command;
  RunConfig config;
  Task task = Task::kExpertise2;
  BackendRegistry registry = BackendRegistry::WithBuiltins();
  std::string cache_dir;
  std::ostream* out = nullptr;

  std::string CommandDir() const { return absl::StrCat(config.out, "/", command); }
  std::string IngestPath(Dataset d) const {
    return absl::StrCat(config.out, "/ingest/", AV(DatasetName(d)), ".csv");
  }
  std::string CheckpointPath() const {
    return config.checkpoint.empty() ? absl::StrCat(config.out, "/train/model.ckpt")
                                     : config.checkpoint;
  }
};

std::string SanitizeId(std::string_view id) {
  std::string out(id);
  for (char& c : out) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    if (!ok) c = '_';
  }
  return out;
}

std::string EmbeddingPath(const Context& ctx, std::string_view id) {
  return absl::StrCat(ctx.cache_dir, "/", ctx.config.backend, "/", SanitizeId(id), ".plde");
}

std::string ChunkPath(const Context& ctx, std::string_view id, int chunk) {
  return absl::StrFormat("%s/%s/%s.chunk%02d.plde", ctx.cache_dir, ctx.config.backend,
                         SanitizeId(id), chunk);
}

const std::string& ManifestSetting(const RunConfig& c, Dataset d) {
  switch (d) {
    case Dataset::kExpertise: return c.expertise_manifest;
    case Dataset::kDifficulty: return c.difficulty_manifest;
    case Dataset::kTechniques: return c.techniques_manifest;
    case Dataset::kIcpc2015: return c.icpc_manifest;
  }
  return c.expertise_manifest;
}

std::string_view ManifestKey(Dataset d) {
  switch (d) {
    case Dataset::kExpertise: return "data.expertise_manifest";
    case Dataset::kDifficulty: return "data.difficulty_manifest";
    case Dataset::kTechniques: return "data.techniques_manifest";
    case Dataset::kIcpc2015: return "data.icpc_manifest";
  }
  return "";
}

constexpr Dataset kAllDatasets[] = {Dataset::kExpertise, Dataset::kDifficulty,
                                    Dataset::kTechniques, Dataset::kIcpc2015};

// Relative local audio paths are taken relative to the manifest file.
void ResolveAudioPaths(const std::string& manifest_path, std::vector<Recording>& recordings) {
  const fs::path base = fs::path(manifest_path).parent_path();
  for (Recording& r : recordings) {
    if (r.audio_uri.empty() || IsRemoteUri(r.audio_uri)) continue;
    const fs::path p(r.audio_uri);
    if (p.is_relative()) r.audio_uri = (base / p).lexically_normal().string();
  }
}

absl::StatusOr<std::vector<Recording>> AssignSplits(std::vector<Recording> recordings,
                                                    const RunConfig& config) {
  const auto unassigned = std::count_if(recordings.begin(), recordings.end(), [](const auto& r) {
    return r.split == Split::kUnassigned;
  });
  if (unassigned == 0) return recordings;
  if (unassigned != static_cast<long>(recordings.size())) {
    return absl::InvalidArgumentError(
        "manifest mixes assigned and unassigned splits; assign all or none");
  }
  PJ_ASSIGN_OR_RETURN(SplitResult split,
                      SplitRecordings(recordings, config.test_fraction, config.seed));
  std::vector<Recording> all = std::move(split.train);
  all.insert(all.end(), split.test.begin(), split.test.end());
  return all;
}

// Rows of a dataset, preferring the ingested copy (which carries splits).
absl::StatusOr<std::vector<Recording>> LoadDataset(const Context& ctx, Dataset dataset,
                                                   bool with_splits) {
  std::vector<Recording> recordings;
  const std::string ingested = ctx.IngestPath(dataset);
  if (fs::exists(ingested)) {
    PJ_ASSIGN_OR_RETURN(recordings, LoadManifest(ingested, dataset));
  } else {
    const std::string& path = ManifestSetting(ctx.config, dataset);
    PJ_ASSIGN_OR_RETURN(recordings, LoadManifest(path, dataset));
    ResolveAudioPaths(path, recordings);
  }
  if (with_splits && dataset != Dataset::kIcpc2015) return AssignSplits(std::move(recordings), ctx.config);
  return recordings;
}

std::vector<Recording> InSplit(const std::vector<Recording>& recordings, Split split) {
  std::vector<Recording> out;
  for (const Recording& r : recordings) {
    if (r.split == split) out.push_back(r);
  }
  return out;
}

absl::Status WriteRunManifest(const Context& ctx) {
  std::string text = absl::StrCat("command = ", ctx.command, "\n", "seed = ", ctx.config.seed, "\n",
                                  "version = ", AV(kVersion), "\n", "compiler = ", __VERSION__, "\n",
                                  "eigen = ", EIGEN_WORLD_VERSION, ".", EIGEN_MAJOR_VERSION, ".",
                                  EIGEN_MINOR_VERSION, "\n", "cache_dir = ", ctx.cache_dir, "\n\n");
  text += ctx.config.ToIni();
  return WriteFile(absl::StrCat(ctx.CommandDir(), "/run-manifest.ini"), text);
}

std::string ShellQuote(std::string_view s) {
  return absl::StrCat("'", absl::StrReplaceAll(AV(s), {{"'", "'\\''"}}), "'");
}

std::string FetchedAudioPath(const Context& ctx, const Recording& r) {
  std::string uri = r.audio_uri.substr(0, r.audio_uri.find_first_of("?#"));
  std::string ext = fs::path(uri).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext != ".wav" && ext != ".flac") ext = ".audio";
  return absl::StrCat(ctx.cache_dir, "/audio/", SanitizeId(r.id), ext);
}

absl::StatusOr<std::string> LocalAudio(const Context& ctx, const Recording& r) {
  if (!IsRemoteUri(r.audio_uri)) return r.audio_uri;
  const std::string path = FetchedAudioPath(ctx, r);
  if (!fs::exists(path)) {
    return absl::NotFoundError(
        absl::StrCat("recording '", r.id, "' is remote and not fetched yet; run `fetch`"));
  }
  return path;
}

absl::StatusOr<std::shared_ptr<const EmbeddingTensor>> ReadCached(const std::string& path) {
  PJ_ASSIGN_OR_RETURN(EmbeddingTensor tensor, ReadEmbedding(path));
  return std::make_shared<const EmbeddingTensor>(std::move(tensor));
}

absl::StatusOr<EmbeddingMap> LoadEmbeddings(const Context& ctx,
                                            const std::vector<Recording>& recordings) {
  EmbeddingMap map;
  for (const Recording& r : recordings) {
    const std::string path = EmbeddingPath(ctx, r.id);
    if (!fs::exists(path)) {
      return absl::NotFoundError(absl::StrCat("no cached ", ctx.config.backend, " embedding for '",
                                              r.id, "' (", path, "); run `embed` first"));
    }
    PJ_ASSIGN_OR_RETURN(map[r.id], ReadCached(path));
  }
  return map;
}

absl::StatusOr<std::map<std::string, ChunkEmbeddings>> LoadChunks(
    const Context& ctx, const std::vector<Recording>& recordings) {
  std::map<std::string, ChunkEmbeddings> chunks;
  for (const Recording& r : recordings) {
    ChunkEmbeddings list;
    for (int k = 0; k < kMaxChunks; ++k) {
      const std::string path = ChunkPath(ctx, r.id, k);
      if (!fs::exists(path)) break;
      PJ_ASSIGN_OR_RETURN(auto tensor, ReadCached(path));
      list.push_back(std::move(tensor));
    }
    if (list.empty()) {
      return absl::NotFoundError(absl::StrCat("no cached chunk embeddings for '", r.id,
                                              "'; run `embed` first"));
    }
    chunks[r.id] = std::move(list);
  }
  return chunks;
}

HeadConfig MakeHeadConfig(const Context& ctx, int input_dim) {
  HeadConfig hc = TaskHeadConfig(ctx.task, input_dim);
  hc.conv_kernel = ctx.config.conv_kernel;
  hc.conv_stride = ctx.config.conv_stride;
  hc.conv_channels_1 = ctx.config.conv_channels_1;
  hc.conv_channels_2 = ctx.config.conv_channels_2;
  hc.attention_heads = ctx.config.attention_heads;
  hc.attention_dim = ctx.config.attention_dim;
  hc.max_segments = kMaxSegments;
  return hc;
}

// Examples of the task for one split of recordings.
absl::StatusOr<std::vector<Example>> TaskExamples(const Context& ctx,
                                                  const std::vector<Recording>& recordings,
                                                  const EmbeddingMap& embeddings,
                                                  uint64_t pairing_seed) {
  const TaskSpec& spec = GetTaskSpec(ctx.task);
  if (spec.kind != TaskKind::kRank) return RecordingExamples(ctx.task, recordings, embeddings);
  PJ_ASSIGN_OR_RETURN(ExpertisePairing pairing,
                      MakeExpertisePairs(recordings, pairing_seed, TaskRankMode(ctx.task)));
  for (const std::string& w : pairing.warnings) *ctx.out << "warning: " << w << "\n";
  std::vector<RankPair> pairs = pairing.pairs;
  if (ctx.config.include_inverse) pairs = WithInversePairs(pairs);
  return PairExamples(pairs, embeddings);
}

// ---- commands -------------------------------------------------------------

absl::Status RunIngest(Context& ctx) {
  std::string summary;
  int datasets = 0;
  for (Dataset d : kAllDatasets) {
    const std::string& path = ManifestSetting(ctx.config, d);
    if (path.empty()) continue;
    ++datasets;
    PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings, LoadManifest(path, d));
    ResolveAudioPaths(path, recordings);
    const ValidationReport report = ValidateManifest(recordings, d);
    if (!report.ok()) {
      PJ_RETURN_IF_ERROR(WriteFile(
          absl::StrCat(ctx.CommandDir(), "/", AV(DatasetName(d)), ".issues.txt"), report.ToString()));
      return absl::InvalidArgumentError(
          absl::StrCat(path, ": ", report.issues.size(), " validation issue(s)\n", report.ToString()));
    }
    if (d != Dataset::kIcpc2015) {
      PJ_ASSIGN_OR_RETURN(recordings, AssignSplits(std::move(recordings), ctx.config));
    }
    PJ_RETURN_IF_ERROR(SaveManifest(recordings, ctx.IngestPath(d)));
    const auto train = InSplit(recordings, Split::kTrain).size();
    const auto test = InSplit(recordings, Split::kTest).size();
    absl::StrAppend(&summary, AV(DatasetName(d)), ": recordings=", recordings.size(), " train=", train, " test=", test, "\n");
  }
  if (datasets == 0) return absl::FailedPreconditionError("no manifest configured in [data]");
  *ctx.out << summary;
  return WriteFile(absl::StrCat(ctx.CommandDir(), "/summary.txt"), summary);
}

absl::Status RunFetch(Context& ctx) {
  std::string log;
  int fetched = 0, present = 0;
  for (Dataset d : kAllDatasets) {
    if (ManifestSetting(ctx.config, d).empty()) continue;
    PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings, LoadDataset(ctx, d, false));
    for (const Recording& r : recordings) {
      if (!IsRemoteUri(r.audio_uri)) continue;
      const std::string target = FetchedAudioPath(ctx, r);
      if (fs::exists(target)) {
        ++present;
        absl::StrAppend(&log, r.id, "\tcached\t", target, "\n");
        continue;
      }
      std::error_code ec;
      fs::create_directories(fs::path(target).parent_path(), ec);
      const std::string command = absl::StrReplaceAll(
          ctx.config.downloader, {{"{uri}", ShellQuote(r.audio_uri)}, {"{out}", ShellQuote(target)}});
      const int status = std::system(command.c_str());
      if (status != 0 || !fs::exists(target)) {
        return absl::UnavailableError(absl::StrCat("download of '", r.id, "' failed (status ",
                                                   status, "): ", command));
      }
      ++fetched;
      absl::StrAppend(&log, r.id, "\tfetched\t", target, "\n");
    }
  }
  *ctx.out << "fetched=" << fetched << " cached=" << present << "\n";
  return WriteFile(absl::StrCat(ctx.CommandDir(), "/fetch.log"), log);
}

absl::StatusOr<EmbeddingTensor> EncodeSegments(const Context& ctx, const BackendSpec& spec,
                                               const std::string& id,
                                               const SegmentedAudio* segmented, int n_segments) {
  EmbeddingTensor tensor;
  if (spec.backend_id == kTestRandomBackend) {
    tensor = TestRandomEmbedding(spec, id, n_segments);
  } else {
    PJ_ASSIGN_OR_RETURN(tensor, Encode(ctx.registry, spec.backend_id, *segmented));
  }
  return PadSegments(tensor, kMaxSegments);
}

absl::Status RunEmbed(Context& ctx) {
  const BackendSpec* spec = ctx.registry.Find(ctx.config.backend);
  std::string log;
  int computed = 0, cached = 0;
  std::vector<std::string> missing;
  for (Dataset d : kAllDatasets) {
    if (ManifestSetting(ctx.config, d).empty()) continue;
    PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings, LoadDataset(ctx, d, false));
    const bool chunked = d == Dataset::kIcpc2015;
    for (const Recording& r : recordings) {
      const std::string first_path = chunked ? ChunkPath(ctx, r.id, 0) : EmbeddingPath(ctx, r.id);
      if (fs::exists(first_path)) {
        PJ_ASSIGN_OR_RETURN(auto tensor, ReadCached(first_path));
        for (const std::string& w : ShapeWarnings(ctx.registry, *tensor)) {
          absl::StrAppend(&log, r.id, "\twarning\t", w, "\n");
        }
        ++cached;
        absl::StrAppend(&log, r.id, "\tcached\t", first_path, "\n");
        continue;
      }
      if (!spec->native) {
        missing.push_back(r.id);
        continue;
      }
      if (spec->backend_id == kTestRandomBackend) {
        const int total_segments = std::max(1, static_cast<int>(std::ceil(r.duration_s / kSegmentSeconds)));
        if (!chunked) {
          PJ_ASSIGN_OR_RETURN(EmbeddingTensor t,
                              EncodeSegments(ctx, *spec, r.id, nullptr,
                                             std::min(total_segments, kMaxSegments)));
          PJ_RETURN_IF_ERROR(WriteEmbedding(t, first_path));
        } else {
          const int n_chunks = std::min(kMaxChunks, (total_segments + kMaxSegments - 1) / kMaxSegments);
          for (int k = 0; k < n_chunks; ++k) {
            const int segs = std::min(kMaxSegments, total_segments - k * kMaxSegments);
            PJ_ASSIGN_OR_RETURN(EmbeddingTensor t,
                                EncodeSegments(ctx, *spec, absl::StrCat(r.id, "#", k), nullptr, segs));
            t.recording_id = r.id;
            PJ_RETURN_IF_ERROR(WriteEmbedding(t, ChunkPath(ctx, r.id, k)));
          }
        }
      } else {
        PJ_ASSIGN_OR_RETURN(std::string audio_path, LocalAudio(ctx, r));
        PJ_ASSIGN_OR_RETURN(AudioBuffer audio, LoadWorkingAudio(audio_path));
        if (!chunked) {
          PJ_ASSIGN_OR_RETURN(SegmentedAudio segmented, SegmentAudio(r.id, audio));
          PJ_ASSIGN_OR_RETURN(EmbeddingTensor t, EncodeSegments(ctx, *spec, r.id, &segmented, 0));
          PJ_RETURN_IF_ERROR(WriteEmbedding(t, first_path));
        } else {
          PJ_ASSIGN_OR_RETURN(ChunkedAudio chunks, ChunkAudio(r.id, audio));
          if (chunks.truncated) {
            absl::StrAppend(&log, r.id, "\ttruncated\taudio beyond ", kMaxChunks, " chunks dropped\n");
          }
          for (size_t k = 0; k < chunks.chunks.size(); ++k) {
            PJ_ASSIGN_OR_RETURN(EmbeddingTensor t,
                                EncodeSegments(ctx, *spec, r.id, &chunks.chunks[k], 0));
            PJ_RETURN_IF_ERROR(WriteEmbedding(t, ChunkPath(ctx, r.id, static_cast<int>(k))));
          }
        }
      }
      ++computed;
      absl::StrAppend(&log, r.id, "\tcomputed\t", first_path, "\n");
    }
  }
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/embed.log"), log));
  *ctx.out << "computed=" << computed << " cached=" << cached << "\n";
  if (!missing.empty()) {
    return absl::FailedPreconditionError(absl::StrCat(
        "external backend: import required; ", missing.size(), " recording(s) lack ",
        ctx.config.backend, " embeddings under ", ctx.cache_dir, "/", ctx.config.backend,
        "/ (first: ", missing.front(), ")"));
  }
  return absl::OkStatus();
}

absl::Status RunPair(Context& ctx) {
  const RankMode mode = TaskRankMode(ctx.task);
  PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings, LoadDataset(ctx, Dataset::kExpertise, true));
  std::string notes;
  for (Split split : {Split::kTrain, Split::kTest}) {
    const std::vector<Recording> subset = InSplit(recordings, split);
    if (subset.empty()) continue;
    const uint64_t seed = ctx.config.seed + (split == Split::kTest ? 1 : 0);
    PJ_ASSIGN_OR_RETURN(ExpertisePairing pairing, MakeExpertisePairs(subset, seed, mode));
    std::vector<RankPair> pairs = pairing.pairs;
    if (ctx.config.include_inverse) pairs = WithInversePairs(pairs);
    PJ_RETURN_IF_ERROR(WriteFile(
        absl::StrCat(ctx.CommandDir(), "/", AV(SplitName(split)), "_pairs.csv"), FormatPairs(pairs)));
    absl::StrAppend(&notes, AV(SplitName(split)), "_pairs=", pairs.size(), "\n");
    for (const std::string& w : pairing.warnings) absl::StrAppend(&notes, "warning=", w, "\n");
  }
  if (!ctx.config.icpc_manifest.empty()) {
    PJ_ASSIGN_OR_RETURN(std::vector<Recording> icpc, LoadDataset(ctx, Dataset::kIcpc2015, false));
    PJ_ASSIGN_OR_RETURN(std::vector<IcpcCandidate> candidates, CandidatesFromManifest(icpc));
    PJ_ASSIGN_OR_RETURN(IcpcPairing pairing, MakeIcpcPairs(candidates, IcpcScores(candidates), mode));
    PJ_RETURN_IF_ERROR(
        WriteFile(absl::StrCat(ctx.CommandDir(), "/icpc_pairs.csv"), FormatPairs(pairing.pairs)));
    absl::StrAppend(&notes, "icpc_pairs=", pairing.pairs.size(), "\nicpc_ties_skipped=",
                    pairing.ties_skipped, "\n");
  }
  *ctx.out << notes;
  return WriteFile(absl::StrCat(ctx.CommandDir(), "/summary.txt"), notes);
}

MetricReport ReportFrom(const Context& ctx, std::string split,
                        const std::map<std::string, double>& metrics) {
  MetricReport report;
  report.task = std::string(GetTaskSpec(ctx.task).name);
  report.backend = ctx.config.backend;
  report.split = std::move(split);
  report.seed = ctx.config.seed;
  for (const auto& [name, value] : metrics) {
    if (name == "acc_within_0") {
      report.Add("acc_within_n", value, 0);
    } else if (name == "acc_within_1") {
      report.Add("acc_within_n", value, 1);
    } else {
      report.Add(name, value);
    }
  }
  return report;
}

absl::Status RunTrain(Context& ctx) {
  const TaskSpec& spec = GetTaskSpec(ctx.task);
  PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings, LoadDataset(ctx, spec.dataset, true));
  std::vector<Recording> fit = InSplit(recordings, Split::kTrain);
  if (fit.empty()) return absl::FailedPreconditionError("training split is empty");
  std::vector<Recording> validation;
  if (ctx.config.validation_fraction > 0.0 && fit.size() >= 2) {
    PJ_ASSIGN_OR_RETURN(SplitResult inner,
                        SplitRecordings(fit, ctx.config.validation_fraction, ctx.config.seed));
    fit = std::move(inner.train);
    validation = std::move(inner.test);
  }
  PJ_ASSIGN_OR_RETURN(EmbeddingMap embeddings, LoadEmbeddings(ctx, recordings));
  PJ_ASSIGN_OR_RETURN(std::vector<Example> train_set,
                      TaskExamples(ctx, fit, embeddings, ctx.config.seed));
  std::vector<Example> validation_set;
  if (!validation.empty()) {
    PJ_ASSIGN_OR_RETURN(validation_set,
                        TaskExamples(ctx, validation, embeddings, ctx.config.seed + 1));
  }
  if (train_set.empty()) return absl::FailedPreconditionError("no training examples");

  HeadConfig hc = MakeHeadConfig(ctx, train_set.front().first->dim);
  const auto [shift, scale] = InputStatistics(train_set);
  hc.input_shift = shift;
  hc.input_scale = scale;
  TrainConfig tc = ctx.config.ToTrainConfig(spec.loss);

  const auto space = ctx.config.GridSpace();
  if (!space.empty()) {
    if (validation_set.empty()) {
      return absl::FailedPreconditionError("grid search needs a non-empty validation split");
    }
    PJ_ASSIGN_OR_RETURN(GridSearchResult grid,
                        GridSearch(space, hc, ctx.config.seed, train_set, validation_set, tc));
    PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/grid.csv"), grid.ToCsv()));
    tc = grid.best;
  }

  PJ_ASSIGN_OR_RETURN(PredictionHead initial, PredictionHead::Build(hc, ctx.config.seed));
  *ctx.out << "task=" << spec.name << " train_examples=" << train_set.size()
           << " validation_examples=" << validation_set.size()
           << " parameters=" << initial.parameter_count() << "\n";
  std::string log;
  auto on_epoch = [&](const EpochRecord& r) {
    TrainHistory single;
    single.epochs.push_back(r);
    const std::string line = single.ToLog();
    log += line;
    *ctx.out << line << std::flush;
  };
  PJ_ASSIGN_OR_RETURN(TrainResult result,
                      Train(initial, train_set, validation_set.empty() ? nullptr : &validation_set,
                            tc, on_epoch));
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/train.log"), log));
  const EpochRecord& best = result.history.epochs[result.history.best_epoch - 1];
  PJ_RETURN_IF_ERROR(SaveCheckpoint(absl::StrCat(ctx.CommandDir(), "/model.ckpt"), result.head, tc,
                                    best.epoch, best.metrics));
  MetricReport report =
      ReportFrom(ctx, validation_set.empty() ? "train" : "validation", best.metrics);
  report.Add("best_epoch", best.epoch);
  report.Add("train_loss", best.train_loss);
  for (size_t c = 0; c < best.per_class_ap.size(); ++c) {
    if (best.per_class_ap[c].has_value()) {
      report.Add(absl::StrCat("ap_", AV(kTechniqueNames[c])), *best.per_class_ap[c]);
    }
  }
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/metrics.txt"), report.ToKeyValue()));
  return WriteFile(absl::StrCat(ctx.CommandDir(), "/metrics.csv"), report.ToCsv());
}

absl::StatusOr<Checkpoint> LoadTaskCheckpoint(const Context& ctx) {
  PJ_ASSIGN_OR_RETURN(Checkpoint checkpoint, LoadCheckpoint(ctx.CheckpointPath()));
  const TaskSpec& spec = GetTaskSpec(ctx.task);
  const HeadConfig& hc = checkpoint.head.config();
  if (hc.task_kind != spec.kind || hc.output_classes != spec.output_classes) {
    return absl::FailedPreconditionError(absl::StrCat(
        "checkpoint ", ctx.CheckpointPath(), " holds a ", AV(TaskKindName(hc.task_kind)), " head with ",
        hc.output_classes, " outputs; task ", AV(spec.name), " needs ", AV(TaskKindName(spec.kind)),
        " with ", spec.output_classes));
  }
  return checkpoint;
}

absl::Status RunEvaluate(Context& ctx) {
  const TaskSpec& spec = GetTaskSpec(ctx.task);
  PJ_ASSIGN_OR_RETURN(Checkpoint checkpoint, LoadTaskCheckpoint(ctx));
  PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings, LoadDataset(ctx, spec.dataset, true));
  const std::vector<Recording> test = InSplit(recordings, Split::kTest);
  if (test.empty()) return absl::FailedPreconditionError("test split is empty");
  PJ_ASSIGN_OR_RETURN(EmbeddingMap embeddings, LoadEmbeddings(ctx, test));
  PJ_ASSIGN_OR_RETURN(std::vector<Example> examples,
                      TaskExamples(ctx, test, embeddings, ctx.config.seed + 2));
  if (!examples.empty() && examples.front().first->dim != checkpoint.head.config().input_dim) {
    return absl::FailedPreconditionError("checkpoint input_dim does not match the backend");
  }
  PJ_ASSIGN_OR_RETURN(Predictions predictions, Predict(checkpoint.head, spec.loss, examples));
  PJ_ASSIGN_OR_RETURN(auto metrics, ScorePredictions(spec.kind, predictions));
  MetricReport report = ReportFrom(ctx, "test", metrics);
  if (spec.kind == TaskKind::kMultilabel) {
    MultilabelBatch batch;
    batch.scores = predictions.probabilities;
    for (const auto& t : predictions.targets) {
      std::vector<int> relevant(t.size());
      for (size_t c = 0; c < t.size(); ++c) relevant[c] = t[c] > 0.5;
      batch.labels.push_back(std::move(relevant));
    }
    PJ_ASSIGN_OR_RETURN(auto ap, AveragePrecisionPerClass(batch));
    for (size_t c = 0; c < ap.size(); ++c) {
      if (ap[c].has_value()) {
        report.Add(absl::StrCat("ap_", AV(kTechniqueNames[c])), *ap[c]);
      } else {
        report.notes.push_back(absl::StrCat(AV(kTechniqueNames[c]), " has no positives; excluded from mAP"));
      }
    }
    if (!report.Find("auc").has_value()) report.notes.push_back("AUC undefined: every class degenerate");
  }
  if (spec.dataset == Dataset::kDifficulty) {
    MetricWarnings warnings;
    MulticlassBatch batch{predictions.probabilities, predictions.labels};
    std::vector<int> all_classes(spec.output_classes);
    for (int c = 0; c < spec.output_classes; ++c) all_classes[c] = c;
    PJ_RETURN_IF_ERROR(AccuracyWithinN(batch.Predictions(), batch.labels, 0, &all_classes, &warnings).status());
    for (const std::string& w : warnings) report.notes.push_back(w);
  }
  report.Add("items", static_cast<double>(examples.size()));

  std::string predictions_csv = "item,label,probabilities\n";
  for (size_t i = 0; i < examples.size(); ++i) {
    std::string id = examples[i].first->recording_id;
    if (examples[i].second) absl::StrAppend(&id, "|", examples[i].second->recording_id);
    std::vector<std::string> probs;
    for (double p : predictions.probabilities[i]) probs.push_back(FormatMetric(p));
    predictions_csv += CsvRow({id, absl::StrCat(examples[i].label), absl::StrJoin(probs, " ")});
  }
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/predictions.csv"), predictions_csv));
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/report.txt"), report.ToKeyValue()));
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/report.csv"), report.ToCsv()));
  *ctx.out << report.ToKeyValue();
  return absl::OkStatus();
}

absl::Status RunCaseStudyCommand(Context& ctx, bool allow_fitting) {
  PJ_ASSIGN_OR_RETURN(Checkpoint checkpoint, LoadTaskCheckpoint(ctx));
  PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings,
                      LoadDataset(ctx, Dataset::kIcpc2015, false));
  PJ_ASSIGN_OR_RETURN(std::vector<IcpcCandidate> candidates, CandidatesFromManifest(recordings));
  PJ_ASSIGN_OR_RETURN(auto chunks, LoadChunks(ctx, recordings));
  CaseStudyOptions options;
  options.fitting = allow_fitting && ctx.config.fitting;
  options.fit_epochs = ctx.config.fit_epochs;
  options.split_by_candidate = ctx.config.fit_split == "candidate";
  options.seed = ctx.config.seed;
  options.fit_config = checkpoint.train_config;
  options.fit_config.learning_rate = ctx.config.fit_learning_rate;
  options.fit_config.seed = ctx.config.seed;
  PJ_ASSIGN_OR_RETURN(CaseStudyReport report,
                      RunCaseStudy(checkpoint.head, candidates, chunks, options));
  report.metrics.backend = ctx.config.backend;
  PJ_RETURN_IF_ERROR(WriteCaseStudy(report, ctx.CommandDir()));
  PJ_RETURN_IF_ERROR(WriteFile(absl::StrCat(ctx.CommandDir(), "/report.csv"), report.metrics.ToCsv()));
  *ctx.out << report.Summary();
  return absl::OkStatus();
}

absl::Status RunSynth(Context& ctx, int per_level, double seconds) {
  SyntheticCorpusOptions options;
  options.recordings_per_level = per_level;
  options.seconds = seconds;
  options.seed = ctx.config.seed;
  const std::string dir = ctx.CommandDir();
  PJ_ASSIGN_OR_RETURN(std::vector<Recording> recordings,
                      WriteSyntheticCorpus(absl::StrCat(dir, "/audio"), options));
  for (Recording& r : recordings) {
    r.audio_uri = fs::path(r.audio_uri).lexically_relative(dir).string();
  }
  PJ_RETURN_IF_ERROR(SaveManifest(recordings, absl::StrCat(dir, "/expertise.csv")));
  *ctx.out << "wrote " << recordings.size() << " recordings and " << dir << "/expertise.csv\n";
  return absl::OkStatus();
}

// Config requirements of a command that can be checked before any work.
absl::Status CheckCommandConfig(const Context& ctx) {
  const std::string& c = ctx.command;
  const TaskSpec& spec = GetTaskSpec(ctx.task);
  if (ctx.registry.Find(ctx.config.backend) == nullptr) {
    std::string known;
    for (const std::string& id : ctx.registry.Ids()) absl::StrAppend(&known, known.empty() ? "" : ", ", id);
    return absl::InvalidArgumentError(
        absl::StrCat("run.backend: unknown backend '", ctx.config.backend, "' (known: ", known, ")"));
  }
  auto require = [&](Dataset d) -> absl::Status {
    if (ManifestSetting(ctx.config, d).empty() && !fs::exists(ctx.IngestPath(d))) {
      return absl::InvalidArgumentError(absl::StrCat(AV(ManifestKey(d)), ": required by `", c, "`"));
    }
    return absl::OkStatus();
  };
  if (c == "train" || c == "evaluate") PJ_RETURN_IF_ERROR(require(spec.dataset));
  if (c == "pair") {
    if (spec.dataset != Dataset::kExpertise) {
      return absl::InvalidArgumentError("run.task: `pair` needs expertise2 or expertise4");
    }
    PJ_RETURN_IF_ERROR(require(Dataset::kExpertise));
  }
  if (c == "tournament" || c == "case-study") {
    if (spec.kind != TaskKind::kRank) {
      return absl::InvalidArgumentError(absl::StrCat("run.task: `", c, "` needs a ranking task"));
    }
    PJ_RETURN_IF_ERROR(require(Dataset::kIcpc2015));
  }
  if (c == "fetch" && ctx.config.downloader.empty()) {
    return absl::InvalidArgumentError("fetch.downloader: required by `fetch`");
  }
  return absl::OkStatus();
}

}  // namespace

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"pianojudge: performance-assessment probing toolkit", "pianojudge"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir, backend, task;
  app.add_option("--config", config_path, "Run config file (INI)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "Run seed");
  auto* out_opt = app.add_option("--out", out_dir, "Output directory");
  auto* backend_opt = app.add_option("--backend", backend, "Embedding backend id");
  auto* task_opt = app.add_option("--task", task, "Task name");
  app.set_version_flag("--version", std::string(kVersion));

  std::map<std::string, CLI::App*> commands;
  for (const char* name : {"ingest", "fetch", "pair", "train", "evaluate", "tournament"}) {
    commands[name] = app.add_subcommand(name);
  }
  commands["ingest"]->description("Validate manifests and assign seeded splits");
  commands["fetch"]->description("Download remote audio with the configured downloader");
  commands["pair"]->description("Build ranking pairs");
  commands["train"]->description("Train a prediction head");
  commands["evaluate"]->description("Evaluate a checkpoint on the test split");
  commands["tournament"]->description("Rank ICPC candidates by paired win counts");
  CLI::App* embed = app.add_subcommand("embed", "Compute or verify cached embeddings");
  commands["embed"] = embed;
  int sample_rate = 0;
  auto* sample_rate_opt =
      embed->add_option("--sample-rate", sample_rate, "Input sample rate (not for spectrogram)");
  commands["case-study"] =
      app.add_subcommand("case-study", "ICPC case study with optional fitting");
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic expertise corpus");
  commands["synth"] = synth;
  int per_level = 20;
  double seconds = 10.0;
  synth->add_option("--per-level", per_level, "Recordings per expertise level");
  synth->add_option("--seconds", seconds, "Duration of each recording");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsageError;
  }

  Context ctx;
  ctx.out = &out;
  for (const auto& [name, sub] : commands) {
    if (sub->parsed()) ctx.command = name;
  }
  auto config = LoadRunConfig(config_path);
  if (!config.ok()) {
    err << "error: " << config.status().message() << "\n";
    return kExitUsageError;
  }
  ctx.config = *std::move(config);
  if (*seed_opt) ctx.config.seed = seed;
  if (*out_opt) ctx.config.out = out_dir;
  if (*backend_opt) ctx.config.backend = backend;
  if (*task_opt) ctx.config.task = task;
  if (absl::Status s = ctx.config.Validate(); !s.ok()) {
    err << "error: " << s.message() << "\n";
    return kExitUsageError;
  }
  ctx.task = *ParseTask(ctx.config.task);
  const char* cache = std::getenv("PIANOJUDGE_CACHE");
  ctx.cache_dir = cache != nullptr && *cache != '\0' ? cache : ctx.config.cache_dir;
  if (*sample_rate_opt) {
    if (ctx.config.backend == kSpectrogramBackend) {
      err << "error: --sample-rate: the spectrogram backend always runs at " << kWorkingSampleRate
          << " Hz\n";
      return kExitUsageError;
    }
    err << "warning: --sample-rate ignored; audio is resampled to " << kWorkingSampleRate << " Hz\n";
  }
  if (absl::Status s = CheckCommandConfig(ctx); !s.ok()) {
    err << "error: " << s.message() << "\n";
    return kExitUsageError;
  }

  absl::Status status;
  if (ctx.command == "ingest") {
    status = RunIngest(ctx);
  } else if (ctx.command == "fetch") {
    status = RunFetch(ctx);
  } else if (ctx.command == "embed") {
    status = RunEmbed(ctx);
  } else if (ctx.command == "pair") {
    status = RunPair(ctx);
  } else if (ctx.command == "train") {
    status = RunTrain(ctx);
  } else if (ctx.command == "evaluate") {
    status = RunEvaluate(ctx);
  } else if (ctx.command == "tournament") {
    status = RunCaseStudyCommand(ctx, false);
  } else if (ctx.command == "case-study") {
    status = RunCaseStudyCommand(ctx, true);
  } else if (ctx.command == "synth") {
    status = RunSynth(ctx, per_level, seconds);
  }
  if (status.ok()) status = WriteRunManifest(ctx);
  if (!status.ok()) {
    err << "error: " << status.message() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}

}  // namespace pianojudge
