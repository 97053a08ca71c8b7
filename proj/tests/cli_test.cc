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

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "pianojudge/csv.h"
#include "pianojudge/pairing.h"

namespace pianojudge {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult Invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "pianojudge");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = RunCli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    unsetenv("PIANOJUDGE_CACHE");
    root_ = (fs::path(::testing::TempDir()) / "cli_test").string();
    fs::remove_all(root_);
    fs::create_directories(root_);
    config_ = WriteConfig("run.ini", "");
    const CliResult synth = Invoke({"--config", config_, "synth", "--per-level", "4", "--seconds", "10"});
    ASSERT_EQ(synth.code, kExitOk) << synth.err;
  }

  static std::string WriteConfig(const std::string& name, const std::string& extra) {
    const std::string path = root_ + "/" + name;
    const std::string text = "[run]\nout = " + root_ + "\nbackend = test-random\n" +
                             "[data]\nexpertise_manifest = " + root_ + "/synth/expertise.csv\n" +
                             "test_fraction = 0.25\nvalidation_fraction = 0.25\n" +
                             "[embeddings]\ncache_dir = " + root_ + "/cache\n" +
                             "[train]\nepochs = 2\nlearning_rate = 0.001\n" + extra;
    EXPECT_TRUE(WriteFile(path, text).ok());
    return path;
  }

  static std::string root_;
  static std::string config_;
};

std::string CliTest::root_;
std::string CliTest::config_;

TEST_F(CliTest, UsageErrorsExitTwo) {
  EXPECT_EQ(Invoke({}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_, "dance"}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"ingest"}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", root_ + "/missing.ini", "ingest"}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", WriteConfig("bad_key.ini", "[head]\nlayers = 3\n"), "ingest"}).code,
            kExitUsageError);
  EXPECT_EQ(Invoke({"--config", WriteConfig("bad_value.ini", "[head]\nattention_dim = 127\n"), "train"}).code,
            kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_, "--backend", "wav2vec", "embed"}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_, "--task", "juggling", "train"}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_, "--backend", "spectrogram", "embed", "--sample-rate", "44100"}).code,
            kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_, "case-study"}).code, kExitUsageError);
  EXPECT_EQ(Invoke({"--config", config_, "fetch"}).code, kExitUsageError);
}

TEST_F(CliTest, PipelineRunsEndToEnd) {
  ASSERT_EQ(Invoke({"--config", config_, "ingest"}).code, kExitOk);
  EXPECT_TRUE(fs::exists(root_ + "/ingest/expertise.csv"));
  const CliResult embed = Invoke({"--config", config_, "embed"});
  ASSERT_EQ(embed.code, kExitOk) << embed.err;
  EXPECT_TRUE(fs::exists(root_ + "/cache/test-random/synth_L0_000.plde"));

  const CliResult pair = Invoke({"--config", config_, "--task", "expertise4", "pair"});
  ASSERT_EQ(pair.code, kExitOk) << pair.err;
  const auto pairs = ParsePairs(*ReadFile(root_ + "/pair/train_pairs.csv"));
  ASSERT_TRUE(pairs.ok());
  ASSERT_FALSE(pairs->empty());
  for (const RankPair& p : *pairs) {
    EXPECT_EQ(p.mode, RankMode::kFourWay);
    EXPECT_GE(*p.label, 0);
    EXPECT_LE(*p.label, 3);
  }

  const CliResult train = Invoke({"--config", config_, "train"});
  ASSERT_EQ(train.code, kExitOk) << train.err;
  for (const char* name : {"train.log", "model.ckpt", "metrics.txt", "metrics.csv", "run-manifest.ini"}) {
    EXPECT_TRUE(fs::exists(root_ + "/train/" + name)) << name;
  }
  const std::string manifest = *ReadFile(root_ + "/train/run-manifest.ini");
  EXPECT_NE(manifest.find("seed = 0"), std::string::npos) << manifest;

  const CliResult evaluate = Invoke({"--config", config_, "evaluate"});
  ASSERT_EQ(evaluate.code, kExitOk) << evaluate.err;
  EXPECT_NE(ReadFile(root_ + "/evaluate/report.txt")->find("accuracy="), std::string::npos);

  // A head trained for one task cannot evaluate another.
  EXPECT_NE(Invoke({"--config", config_, "--task", "expertise4", "evaluate"}).code, kExitOk);
}

TEST_F(CliTest, CacheEnvironmentVariableOverridesConfig) {
  const std::string cache = root_ + "/env_cache";
  setenv("PIANOJUDGE_CACHE", cache.c_str(), 1);
  const CliResult embed = Invoke({"--config", config_, "--out", root_ + "/env_out", "embed"});
  unsetenv("PIANOJUDGE_CACHE");
  ASSERT_EQ(embed.code, kExitOk) << embed.err;
  EXPECT_TRUE(fs::exists(cache + "/test-random/synth_L1_002.plde"));
}

TEST_F(CliTest, MissingEmbeddingsIsARuntimeError) {
  const CliResult train =
      Invoke({"--config", config_, "--out", root_ + "/no_cache", "--backend", "mert", "train"});
  EXPECT_EQ(train.code, kExitRuntimeError) << train.err;
  EXPECT_FALSE(train.err.empty());
}

TEST_F(CliTest, TrainingIsReproducible) {
  ASSERT_EQ(Invoke({"--config", config_, "embed"}).code, kExitOk);
  const std::string a = root_ + "/repro_a", b = root_ + "/repro_b";
  ASSERT_EQ(Invoke({"--config", config_, "--out", a, "--seed", "5", "train"}).code, kExitOk);
  ASSERT_EQ(Invoke({"--config", config_, "--out", b, "--seed", "5", "train"}).code, kExitOk);
  for (const char* name : {"metrics.txt", "metrics.csv", "train.log", "model.ckpt"}) {
    EXPECT_EQ(*ReadFile(a + "/train/" + name), *ReadFile(b + "/train/" + name)) << name;
  }
}

}  // namespace
}  // namespace pianojudge
