// Copyright 2026 The PPSLU Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Drives the ppslu binary end to end in scratch directories.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "gtest/gtest.h"
#include "ppslu/binary_io.hpp"
#include "ppslu/config.hpp"
#include "ppslu/eval.hpp"

namespace ppslu {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) { return fs::exists(p) ? io::read_file(p) : std::string(); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("ppslu_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    io::write_file(dir_ / "tiny.json", R"({
  "generator": {"num_speakers": 6, "num_intents": 4, "utterances_per_intent_per_speaker": 2,
                "split": [0.5, 0.25, 0.25], "attack_speakers": 4, "attack_utterances_per_intent_per_speaker": 2},
  "encoder": {"hidden_dim": 16, "num_layers": 1, "num_heads": 2, "ffn_dim": 32,
              "decoder_dim": 16, "ir_hidden": 16, "embedding_dim": 8},
  "train": {"batch_size": 8, "epochs_pretrain": 1, "epochs_main": 1, "epochs_adv": 1, "epochs_attack": 1},
  "eval": {"num_pairs": 20},
  "seed": 3
})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result run(const std::string& args, const std::string& env = "") const {
    const fs::path out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && " + env + " '" PPSLU_CLI "' -q " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
  }

  // gen-data + pretrain-asr on the tiny config.
  void prepare(const std::string& run = "run") const {
    ASSERT_EQ(run_ok("gen-data --config tiny.json --out " + run), 0);
    ASSERT_EQ(run_ok("pretrain-asr --run " + run), 0);
  }
  int run_ok(const std::string& args) const {
    const Result r = run(args);
    EXPECT_EQ(r.code, 0) << args << "\n" << r.err;
    return r.code;
  }

  fs::path dir_;
};

TEST_F(Cli, GenDataDefaultsSummary) {
  const Result r = run("gen-data --out d");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("640 utterances / 20 speakers"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("attack corpus: 320 utterances / 10 speakers"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "d" / "config.json"));
  EXPECT_EQ(parse_run_config(slurp(dir_ / "d" / "config.json")).seed, 42u);
}

TEST_F(Cli, SameSeedGivesIdenticalFiles) {
  ASSERT_EQ(run("gen-data --seed 9 --out a").code, 0);
  ASSERT_EQ(run("gen-data --seed 9 --out b").code, 0);
  for (const char* f : {"corpus.ppsc", "attack.ppsc", "config.json"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  ASSERT_EQ(run("gen-data --seed 10 --out c").code, 0);
  EXPECT_NE(slurp(dir_ / "a" / "corpus.ppsc"), slurp(dir_ / "c" / "corpus.ppsc"));
}

TEST_F(Cli, UnknownConfigKeyIsNamed) {
  io::write_file(dir_ / "bad.json", R"({"train": {"epochs_mian": 3}})");
  const Result r = run("gen-data --config bad.json --out d");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[config_error]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("train.epochs_mian"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir_ / "d" / "corpus.ppsc"));
}

TEST_F(Cli, RefusesOverwriteWithoutForce) {
  ASSERT_EQ(run("gen-data --seed 1 --out d").code, 0);
  const Result again = run("gen-data --seed 1 --out d");
  EXPECT_NE(again.code, 0);
  EXPECT_NE(again.err.find("error[output_exists]"), std::string::npos) << again.err;
  EXPECT_EQ(run("--force gen-data --seed 1 --out d").code, 0);
}

TEST_F(Cli, EnvironmentSeedOverridesConfig) {
  ASSERT_EQ(run("gen-data --config tiny.json --out d", "PPSLU_SEED=77").code, 0);
  EXPECT_EQ(parse_run_config(slurp(dir_ / "d" / "config.json")).seed, 77u);
  const Result bad = run("gen-data --out e", "PPSLU_SEED=x1");
  EXPECT_NE(bad.err.find("PPSLU_SEED"), std::string::npos);
  // A later command under a different seed would silently mix runs.
  const Result mixed = run("pretrain-asr --run d", "PPSLU_SEED=78");
  EXPECT_NE(mixed.code, 0);
  EXPECT_NE(mixed.err.find("error[config_error]"), std::string::npos) << mixed.err;
}

TEST_F(Cli, UsageErrorsAreCoded) {
  const Result r = run("train --preset ml-sai");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[usage]"), std::string::npos) << r.err;
  const Result p = run("train --run nowhere --preset h-ppslu-x");
  EXPECT_NE(p.code, 0);
  EXPECT_EQ(p.err.rfind("error[", 0), 0u) << p.err;
}

TEST_F(Cli, AdversarialPresetNeedsBase) {
  prepare();
  const Result r = run("train --run run --preset ha-ppslu");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[preset_dependency]"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("h-ppslu"), std::string::npos) << r.err;
}

TEST_F(Cli, DependencyChainAndDeterministicCheckpoints) {
  prepare("a");
  prepare("b");
  for (const char* run_dir : {"a", "b"}) {
    const std::string d = run_dir;
    ASSERT_EQ(run_ok("train --run " + d + " --preset ml-sai"), 0);
    ASSERT_EQ(run_ok("train --run " + d + " --preset at-sai --base " + d + "/ckpt/ml-sai.ppsl"), 0);
  }
  for (const char* f : {"ckpt/pretrain.ppsl", "ckpt/ml-sai.ppsl", "ckpt/at-sai.ppsl", "metrics.csv"}) {
    EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
  }
  // Wrong base preset is refused.
  const Result wrong = run("train --run a --preset ha-ppslu --base a/ckpt/ml-sai.ppsl");
  EXPECT_NE(wrong.err.find("error[preset_dependency]"), std::string::npos) << wrong.err;
  const Result again = run("train --run a --preset ml-sai");
  EXPECT_NE(again.err.find("error[output_exists]"), std::string::npos) << again.err;
}

TEST_F(Cli, AttackScenariosAppendRows) {
  prepare();
  ASSERT_EQ(run_ok("train --run run --preset ml-sai"), 0);
  ASSERT_EQ(run_ok("attack --run run --scenario 1"), 0);
  auto rows = parse_csv(slurp(dir_ / "run" / "metrics.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].scenario, Scenario::kS1);
  const std::string before = slurp(dir_ / "run" / "metrics.csv");

  const Result again = run("attack --run run --scenario 1");
  EXPECT_NE(again.err.find("error[output_exists]"), std::string::npos) << again.err;
  ASSERT_EQ(run_ok("--force attack --run run --scenario s1"), 0);
  EXPECT_EQ(slurp(dir_ / "run" / "metrics.csv"), before);

  ASSERT_EQ(run_ok("attack --run run --scenario 2"), 0);
  rows = parse_csv(slurp(dir_ / "run" / "metrics.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].scenario, Scenario::kS2);
  const std::string log = slurp(dir_ / "run" / "log");
  EXPECT_NE(log.find("after attacker training (unchanged)"), std::string::npos) << log;
  EXPECT_TRUE(fs::exists(dir_ / "run" / "ckpt" / "ml-sai.attackers.ppsa"));
}

TEST_F(Cli, AttackCorpusSharingSpeakersIsAProtocolError) {
  prepare();
  ASSERT_EQ(run_ok("train --run run --preset ml-sai"), 0);
  fs::copy_file(dir_ / "run" / "corpus.ppsc", dir_ / "run" / "attack.ppsc", fs::copy_options::overwrite_existing);
  const Result r = run("attack --run run --scenario 2");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[protocol_violation]"), std::string::npos) << r.err;
}

TEST_F(Cli, SweepValidatesAndAggregates) {
  prepare();
  const Result bad = run("sweep --run run --param shared_dim --values 4 5");
  EXPECT_NE(bad.code, 0);
  EXPECT_NE(bad.err.find("admissible"), std::string::npos) << bad.err;
  EXPECT_FALSE(fs::exists(dir_ / "run" / "sweep" / "c4"));

  ASSERT_EQ(run_ok("sweep --run run --param shared_dim --values 7 4"), 0);
  const auto rows = parse_csv(slurp(dir_ / "run" / "sweep" / "metrics.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].run_id, "c4-seed3");
  EXPECT_EQ(rows[1].run_id, "c7-seed3");
  for (const auto& r : rows) EXPECT_EQ(r.scenario, Scenario::kS1);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "sweep" / "c7" / "ckpt" / "h-ppslu.ppsl"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "sweep" / "report.txt"));
  const auto c7 = parse_run_config(slurp(dir_ / "run" / "sweep" / "c7" / "config.json"));
  EXPECT_EQ(c7.shared_dim, 7u);
}

TEST_F(Cli, ReportIsByteStable) {
  prepare();
  ASSERT_EQ(run_ok("train --run run --preset ml-sai"), 0);
  ASSERT_EQ(run_ok("report --run run --svg"), 0);
  const std::string first = slurp(dir_ / "run" / "report.txt");
  EXPECT_NE(first.find("ACC-SLU↑"), std::string::npos);
  ASSERT_EQ(run_ok("report --run run --svg"), 0);
  EXPECT_EQ(slurp(dir_ / "run" / "report.txt"), first);
  EXPECT_EQ(slurp(dir_ / "run" / "report.svg").rfind("<?xml", 0), 0u);

  const Result agg = run("report --runs run run");
  EXPECT_EQ(agg.code, 0);
  EXPECT_NE(agg.out.find("ml-sai"), std::string::npos);

  io::write_file(dir_ / "run" / "metrics.csv", metrics_csv_header() + "\n");
  const Result empty = run("report --run run");
  EXPECT_NE(empty.code, 0);
  EXPECT_NE(empty.err.find("no rows"), std::string::npos) << empty.err;
}

TEST_F(Cli, LockedRunIsRefused) {
  prepare();
  io::write_file(dir_ / "run" / ".lock", "1\n");
  const Result r = run("train --run run --preset ml-sai");
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("error[run_locked]"), std::string::npos) << r.err;
  fs::remove(dir_ / "run" / ".lock");
  EXPECT_EQ(run_ok("train --run run --preset ml-sai"), 0);
  EXPECT_FALSE(fs::exists(dir_ / "run" / ".lock"));
}

}  // namespace
}  // namespace ppslu
