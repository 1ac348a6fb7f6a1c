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

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ppslu/config.hpp"
#include "ppslu/eval.hpp"

namespace ppslu {

namespace fs = std::filesystem;

// File layout of a run directory.
//
//   config.json          resolved configuration
//   corpus.ppsc          training corpus (split by seed on load)
//   attack.ppsc          disjoint-speaker attack corpus
//   ckpt/pretrain.ppsl   pretrained encoder and ASR head
//   ckpt/<preset>.ppsl   trained bundles
//   ckpt/<preset>.attackers.ppsa
//   losses/<phase>.csv   per-epoch loss reports
//   metrics.csv          evaluation rows
//   report.txt, report.svg
//   log
struct RunPaths {
  fs::path root;

  fs::path config() const { return root / "config.json"; }
  fs::path corpus() const { return root / "corpus.ppsc"; }
  fs::path attack_corpus() const { return root / "attack.ppsc"; }
  fs::path pretrain() const { return root / "ckpt" / "pretrain.ppsl"; }
  fs::path model(Preset p) const;
  fs::path attackers(Preset p) const;
  fs::path losses(const std::string& phase) const { return root / "losses" / (phase + ".csv"); }
  fs::path metrics() const { return root / "metrics.csv"; }
  fs::path report() const { return root / "report.txt"; }
  fs::path svg() const { return root / "report.svg"; }
  fs::path log() const { return root / "log"; }
  fs::path lock() const { return root / ".lock"; }
};

// Exclusive ownership of a run directory for one command.
class RunLock {
 public:
  explicit RunLock(const fs::path& root);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

struct CommandOptions {
  bool force = false;
  bool echo = false;  // mirror log lines on stdout
};

// Writes the resolved config and both corpora. Returns the summary lines.
std::string gen_data(const RunConfig& cfg, const fs::path& dir, const CommandOptions& opt = {});

// The run's own config; an explicit config must match it exactly.
RunConfig run_config(const fs::path& dir, const std::optional<fs::path>& explicit_config = std::nullopt);

void pretrain_command(const fs::path& dir, const CommandOptions& opt = {});

// Non-adversarial presets start from `base` or the run's pretrained
// checkpoint; adversarial presets require `base` trained with the matching
// preset. Appends the plain evaluation row.
EvalRow train_command(const fs::path& dir, Preset preset, const std::optional<fs::path>& base,
                      const CommandOptions& opt = {});

// Every trained preset when `preset` is empty, in table order.
std::vector<EvalRow> attack_command(const fs::path& dir, Scenario scenario, std::optional<Preset> preset,
                                    const CommandOptions& opt = {});

// One run per shared dimension under <dir>/sweep/c<value>, aggregated into
// <dir>/sweep/metrics.csv. Returns the scenario-1 row per value.
std::vector<EvalRow> sweep_command(const fs::path& dir, const std::vector<std::size_t>& values,
                                   std::optional<Preset> preset, const CommandOptions& opt = {});

// Regenerates report.txt (and report.svg when asked) from metrics.csv.
std::string report_command(const fs::path& dir, bool svg, const CommandOptions& opt = {});
// Table over the metrics of several runs.
std::string aggregate_report(const std::vector<fs::path>& dirs);

// gen-data, pretrain-asr, train ml-sai / h-ppslu / ha-ppslu, attack 1 and 2, report.
void run_pipeline(const RunConfig& cfg, const fs::path& dir, const CommandOptions& opt = {});

std::vector<EvalRow> read_metrics(const fs::path& dir);
std::string run_id(const RunConfig& cfg);

}  // namespace ppslu
