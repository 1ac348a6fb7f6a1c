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

// ppslu: privacy-preserving SLU experiments on a synthetic speech corpus.
//
// Errors go to stderr as "error[<code>]: <message>" with a nonzero exit.

#include <omp.h>

#include <cstdio>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "ppslu/binary_io.hpp"
#include "ppslu/error.hpp"
#include "ppslu/experiment.hpp"

namespace {

using namespace ppslu;

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;

RunConfig resolve(const std::string& config_path, std::optional<std::uint64_t> seed) {
  RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (seed) cfg.seed = *seed;
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

std::optional<fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return fs::path(s);
}

int run(int argc, char** argv) {
  CLI::App app{"Privacy-preserving spoken language understanding experiments"};
  app.require_subcommand(1);
  int threads = 0;
  bool force = false, quiet = false;
  app.add_option("--threads", threads, "OpenMP threads (0 keeps the runtime default)")->check(CLI::NonNegativeNumber);
  app.add_flag("--force", force, "replace existing outputs");
  app.add_flag("-q,--quiet", quiet, "only write the run log");

  std::string config_path, out, run_dir, base, preset_text, scenario_text, param = "shared_dim", report_out;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> values;
  std::vector<std::string> runs;
  bool svg = false;

  auto* gen = app.add_subcommand("gen-data", "generate the training and attack corpora into a run directory");
  gen->add_option("--config", config_path, "JSON config overlaid on the defaults");
  gen->add_option("--seed", seed, "experiment seed");
  gen->add_option("--out", out, "run directory (default: config out_dir)");

  auto* pre = app.add_subcommand("pretrain-asr", "pretrain the encoder and ASR head");
  pre->add_option("--run", run_dir, "run directory")->required();
  pre->add_option("--config", config_path, "must match the run's config");

  auto* train = app.add_subcommand("train", "train one preset");
  train->add_option("--run", run_dir, "run directory")->required();
  train->add_option("--preset", preset_text, "ml-sai, at-sai, sh-ppslu, sha-ppslu, h-ppslu-nocos, h-ppslu, ha-ppslu")
      ->required();
  train->add_option("--base", base, "base checkpoint (required for at-sai, sha-ppslu, ha-ppslu)");
  train->add_option("--config", config_path, "must match the run's config");

  auto* attack = app.add_subcommand("attack", "evaluate attackers against trained presets");
  attack->add_option("--run", run_dir, "run directory")->required();
  attack->add_option("--scenario", scenario_text, "1: jointly trained heads on the SLU view; 2: retrained attackers")
      ->required();
  attack->add_option("--preset", preset_text, "one preset (default: every trained preset)");

  auto* sweep = app.add_subcommand("sweep", "train one run per shared dimension");
  sweep->add_option("--run", run_dir, "run directory with data and a pretrained checkpoint")->required();
  sweep->add_option("--param", param, "swept parameter")->check(CLI::IsMember({"shared_dim"}));
  sweep->add_option("--values", values, "shared dimensions c; (d - c) must be divisible by 3")->required();
  sweep->add_option("--preset", preset_text, "h-ppslu family preset (default: config preset)");

  auto* report = app.add_subcommand("report", "render the results table");
  auto* report_run = report->add_option("--run", run_dir, "run directory");
  auto* report_runs = report->add_option("--runs", runs, "several run directories, aggregated");
  report_run->excludes(report_runs);
  report->add_flag("--svg", svg, "also write report.svg (single run)");
  report->add_option("--out", report_out, "write the aggregated table here instead of stdout");

  auto* pipe = app.add_subcommand("pipeline", "gen-data, pretrain, ml-sai, h-ppslu, ha-ppslu, both attacks, report");
  pipe->add_option("--config", config_path, "JSON config overlaid on the defaults");
  pipe->add_option("--seed", seed, "experiment seed");
  pipe->add_option("--out", out, "run directory (default: config out_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kExitUsage;
  }

  if (threads > 0) omp_set_num_threads(threads);
  CommandOptions opt{force, !quiet};

  if (gen->parsed() || pipe->parsed()) {
    const RunConfig cfg = resolve(config_path, seed);
    const fs::path dir = out.empty() ? fs::path(cfg.out_dir) : fs::path(out);
    if (gen->parsed()) {
      opt.echo = false;
      std::cout << gen_data(cfg, dir, opt) << std::flush;
    } else {
      run_pipeline(cfg, dir, opt);
      std::cout << io::read_file(RunPaths{dir}.report());
    }
    return 0;
  }
  auto check_config = [&] {
    if (!config_path.empty()) run_config(run_dir, fs::path(config_path));
  };
  if (pre->parsed()) {
    check_config();
    pretrain_command(run_dir, opt);
  } else if (train->parsed()) {
    check_config();
    train_command(run_dir, parse_preset(preset_text), opt_path(base), opt);
  } else if (attack->parsed()) {
    const std::optional<Preset> p = preset_text.empty() ? std::nullopt : std::optional(parse_preset(preset_text));
    attack_command(run_dir, parse_scenario(scenario_text), p, opt);
  } else if (sweep->parsed()) {
    const std::optional<Preset> p = preset_text.empty() ? std::nullopt : std::optional(parse_preset(preset_text));
    sweep_command(run_dir, values, p, opt);
    if (!quiet) std::cout << io::read_file(fs::path(run_dir) / "sweep" / "report.txt");
  } else if (report->parsed()) {
    if (!runs.empty()) {
      const std::vector<fs::path> dirs(runs.begin(), runs.end());
      const std::string text = aggregate_report(dirs);
      if (report_out.empty()) {
        std::cout << text;
      } else {
        if (fs::exists(report_out) && !force && io::read_file(report_out) != text) {
          fail(errc::kExists, report_out + " already exists; pass --force to replace it");
        }
        io::write_file(report_out, text);
      }
    } else {
      if (run_dir.empty()) fail(errc::kInvalidArgument, "report needs --run DIR or --runs DIR...");
      const std::string text = report_command(run_dir, svg, opt);
      if (!quiet) std::cout << text;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ppslu::Error& e) {
    std::cerr << "error[" << e.code() << "]: " << e.what() << "\n";
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error[" << ppslu::errc::kIo << "]: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
  }
  return kExitError;
}
