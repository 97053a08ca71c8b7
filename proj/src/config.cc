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

#include "pianojudge/config.h"

#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "pianojudge/csv.h"
#include "pianojudge/metrics.h"
#include "pianojudge/status_macros.h"
#include "pianojudge/string_view_compat.h"

namespace pianojudge {
namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<absl::Status(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

absl::Status BadValue(std::string_view value, std::string_view expected) {
  return absl::InvalidArgumentError(absl::StrCat("'", AV(value), "' is not ", AV(expected)));
}

Field MakeField(std::string section, std::string key, std::string RunConfig::*member) {
  return {std::move(section), std::move(key),
          [member](RunConfig& c, std::string_view v) {
            c.*member = std::string(v);
            return absl::OkStatus();
          },
          [member](const RunConfig& c) { return c.*member; }};
}

Field MakeField(std::string section, std::string key, double RunConfig::*member) {
  return {std::move(section), std::move(key),
          [member](RunConfig& c, std::string_view v) {
            return absl::SimpleAtod(AV(v), &(c.*member)) ? absl::OkStatus() : BadValue(v, "a number");
          },
          [member](const RunConfig& c) { return FormatMetric(c.*member); }};
}

Field MakeField(std::string section, std::string key, int RunConfig::*member) {
  return {std::move(section), std::move(key),
          [member](RunConfig& c, std::string_view v) {
            return absl::SimpleAtoi(AV(v), &(c.*member)) ? absl::OkStatus() : BadValue(v, "an integer");
          },
          [member](const RunConfig& c) { return absl::StrCat(c.*member); }};
}

Field MakeField(std::string section, std::string key, uint64_t RunConfig::*member) {
  return {std::move(section), std::move(key),
          [member](RunConfig& c, std::string_view v) {
            return absl::SimpleAtoi(AV(v), &(c.*member)) ? absl::OkStatus()
                                                     : BadValue(v, "a non-negative integer");
          },
          [member](const RunConfig& c) { return absl::StrCat(c.*member); }};
}

Field MakeField(std::string section, std::string key, bool RunConfig::*member) {
  return {std::move(section), std::move(key),
          [member](RunConfig& c, std::string_view v) {
            if (v == "true" || v == "1") {
              c.*member = true;
            } else if (v == "false" || v == "0") {
              c.*member = false;
            } else {
              return BadValue(v, "true or false");
            }
            return absl::OkStatus();
          },
          [member](const RunConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field MakeField(std::string section, std::string key, std::vector<double> RunConfig::*member) {
  return {std::move(section), std::move(key),
          [member](RunConfig& c, std::string_view v) {
            std::vector<double> values;
            for (absl::string_view part : absl::StrSplit(AV(v), ',', absl::SkipWhitespace())) {
              double x;
              if (!absl::SimpleAtod(part, &x)) return BadValue(SV(part), "a number");
              values.push_back(x);
            }
            c.*member = std::move(values);
            return absl::OkStatus();
          },
          [member](const RunConfig& c) {
            std::vector<std::string> parts;
            for (double x : c.*member) parts.push_back(FormatMetric(x));
            return absl::StrJoin(parts, ",");
          }};
}

const std::vector<Field>& Fields() {
  static const std::vector<Field>* fields = new std::vector<Field>{
      MakeField("run", "seed", &RunConfig::seed),
      MakeField("run", "out", &RunConfig::out),
      MakeField("run", "backend", &RunConfig::backend),
      MakeField("run", "task", &RunConfig::task),
      MakeField("data", "expertise_manifest", &RunConfig::expertise_manifest),
      MakeField("data", "difficulty_manifest", &RunConfig::difficulty_manifest),
      MakeField("data", "techniques_manifest", &RunConfig::techniques_manifest),
      MakeField("data", "icpc_manifest", &RunConfig::icpc_manifest),
      MakeField("data", "test_fraction", &RunConfig::test_fraction),
      MakeField("data", "validation_fraction", &RunConfig::validation_fraction),
      MakeField("embeddings", "cache_dir", &RunConfig::cache_dir),
      MakeField("pairing", "include_inverse", &RunConfig::include_inverse),
      MakeField("head", "conv_kernel", &RunConfig::conv_kernel),
      MakeField("head", "conv_stride", &RunConfig::conv_stride),
      MakeField("head", "conv_channels_1", &RunConfig::conv_channels_1),
      MakeField("head", "conv_channels_2", &RunConfig::conv_channels_2),
      MakeField("head", "attention_heads", &RunConfig::attention_heads),
      MakeField("head", "attention_dim", &RunConfig::attention_dim),
      MakeField("train", "learning_rate", &RunConfig::learning_rate),
      MakeField("train", "weight_decay", &RunConfig::weight_decay),
      MakeField("train", "batch_size", &RunConfig::batch_size),
      MakeField("train", "epochs", &RunConfig::epochs),
      MakeField("grid", "learning_rate", &RunConfig::grid_learning_rate),
      MakeField("grid", "weight_decay", &RunConfig::grid_weight_decay),
      MakeField("grid", "batch_size", &RunConfig::grid_batch_size),
      MakeField("grid", "epochs", &RunConfig::grid_epochs),
      MakeField("case_study", "checkpoint", &RunConfig::checkpoint),
      MakeField("case_study", "fitting", &RunConfig::fitting),
      MakeField("case_study", "fit_epochs", &RunConfig::fit_epochs),
      MakeField("case_study", "fit_split", &RunConfig::fit_split),
      MakeField("case_study", "fit_learning_rate", &RunConfig::fit_learning_rate),
      MakeField("fetch", "downloader", &RunConfig::downloader),
  };
  return *fields;
}

absl::Status FieldError(std::string_view section, std::string_view key, std::string_view message) {
  return absl::InvalidArgumentError(absl::StrCat(AV(section), ".", AV(key), ": ", AV(message)));
}

}  // namespace

absl::Status RunConfig::Validate() const {
  if (out.empty()) return FieldError("run", "out", "must not be empty");
  if (backend.empty()) return FieldError("run", "backend", "must not be empty");
  static constexpr std::string_view kTasks[] = {"expertise2",  "expertise4",      "difficulty9",
                                                "difficulty3", "technique_multi", "technique_single"};
  if (std::find(std::begin(kTasks), std::end(kTasks), task) == std::end(kTasks)) {
    return FieldError("run", "task", absl::StrCat("unknown task '", task, "'"));
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    return FieldError("data", "test_fraction", "must lie in (0,1)");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    return FieldError("data", "validation_fraction", "must lie in [0,1)");
  }
  const std::pair<const char*, int> positive_ints[] = {
      {"conv_kernel", conv_kernel},         {"conv_stride", conv_stride},
      {"conv_channels_1", conv_channels_1}, {"conv_channels_2", conv_channels_2},
      {"attention_heads", attention_heads}, {"attention_dim", attention_dim}};
  for (const auto& [key, value] : positive_ints) {
    if (value <= 0) return FieldError("head", key, "must be positive");
  }
  if (attention_dim % attention_heads != 0) {
    return FieldError("head", "attention_dim", "must be divisible by head.attention_heads");
  }
  if (!(learning_rate > 0.0)) return FieldError("train", "learning_rate", "must be positive");
  if (!(weight_decay >= 0.0)) return FieldError("train", "weight_decay", "must be non-negative");
  if (batch_size <= 0) return FieldError("train", "batch_size", "must be positive");
  if (epochs <= 0) return FieldError("train", "epochs", "must be positive");
  for (double x : grid_learning_rate) {
    if (!(x > 0.0)) return FieldError("grid", "learning_rate", "values must be positive");
  }
  for (double x : grid_weight_decay) {
    if (!(x >= 0.0)) return FieldError("grid", "weight_decay", "values must be non-negative");
  }
  for (double x : grid_batch_size) {
    if (!(x >= 1.0) || x != std::floor(x)) {
      return FieldError("grid", "batch_size", "values must be positive integers");
    }
  }
  for (double x : grid_epochs) {
    if (!(x >= 1.0) || x != std::floor(x)) {
      return FieldError("grid", "epochs", "values must be positive integers");
    }
  }
  if (fit_epochs <= 0) return FieldError("case_study", "fit_epochs", "must be positive");
  if (fit_split != "candidate" && fit_split != "pair") {
    return FieldError("case_study", "fit_split", "must be 'candidate' or 'pair'");
  }
  if (!(fit_learning_rate > 0.0)) {
    return FieldError("case_study", "fit_learning_rate", "must be positive");
  }
  if (!downloader.empty() && (downloader.find("{uri}") == std::string::npos ||
                              downloader.find("{out}") == std::string::npos)) {
    return FieldError("fetch", "downloader", "template must contain {uri} and {out}");
  }
  return absl::OkStatus();
}

std::string RunConfig::ToIni() const {
  std::string out;
  std::string section;
  for (const Field& f : Fields()) {
    if (f.section != section) {
      absl::StrAppend(&out, section.empty() ? "" : "\n", "[", f.section, "]\n");
      section = f.section;
    }
    absl::StrAppend(&out, f.key, " = ", f.get(*this), "\n");
  }
  return out;
}

TrainConfig RunConfig::ToTrainConfig(LossKind loss) const {
  TrainConfig config;
  config.learning_rate = learning_rate;
  config.weight_decay = weight_decay;
  config.batch_size = batch_size;
  config.epochs = epochs;
  config.seed = seed;
  config.loss = loss;
  return config;
}

std::map<std::string, std::vector<double>> RunConfig::GridSpace() const {
  std::map<std::string, std::vector<double>> space;
  if (!grid_learning_rate.empty()) space["learning_rate"] = grid_learning_rate;
  if (!grid_weight_decay.empty()) space["weight_decay"] = grid_weight_decay;
  if (!grid_batch_size.empty()) space["batch_size"] = grid_batch_size;
  if (!grid_epochs.empty()) space["epochs"] = grid_epochs;
  return space;
}

absl::StatusOr<RunConfig> ParseRunConfig(std::string_view text) {
  boost::property_tree::ptree tree;
  try {
    std::istringstream in{std::string(text)};
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    return absl::InvalidArgumentError(absl::StrCat("config line ", e.line(), ": ", e.message()));
  }
  RunConfig config;
  for (const auto& [section, keys] : tree) {
    if (keys.empty() && !keys.data().empty()) {
      return absl::InvalidArgumentError(absl::StrCat("key '", section, "' outside a [section]"));
    }
    for (const auto& [key, value] : keys) {
      auto it = std::find_if(Fields().begin(), Fields().end(), [&](const Field& f) {
        return f.section == section && f.key == key;
      });
      if (it == Fields().end()) {
        return FieldError(section, key, "unknown key");
      }
      const std::string raw = value.get_value<std::string>();
      std::string_view v = SV(absl::StripAsciiWhitespace(raw));
      if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
      if (absl::Status s = it->set(config, v); !s.ok()) {
        return FieldError(section, key, SV(s.message()));
      }
    }
  }
  return config;
}

absl::StatusOr<RunConfig> LoadRunConfig(const std::string& path) {
  PJ_ASSIGN_OR_RETURN(std::string text, ReadFile(path));
  auto config = ParseRunConfig(text);
  if (!config.ok()) {
    return absl::Status(config.status().code(), absl::StrCat(path, ": ", config.status().message()));
  }
  return config;
}

}  // namespace pianojudge
