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

#include "ppslu/experiment.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <memory>

#include "ppslu/binary_io.hpp"
#include "ppslu/error.hpp"
#include "spdlog/sinks/basic_file_sink.h"
#include "spdlog/sinks/stdout_sinks.h"
#include "spdlog/spdlog.h"

namespace ppslu {
namespace {

class RunLog {
 public:
  RunLog(const RunPaths& paths, const std::string& command, bool echo) {
    auto file = std::make_shared<spdlog::sinks::basic_file_sink_mt>(paths.log().string(), false);
    file->set_pattern("%Y-%m-%d %H:%M:%S [%n] %v");
    std::vector<spdlog::sink_ptr> sinks{file};
    if (echo) {
      auto out = std::make_shared<spdlog::sinks::stdout_sink_mt>();
      out->set_pattern("%v");
      sinks.push_back(out);
    }
    logger_ = std::make_shared<spdlog::logger>(command, sinks.begin(), sinks.end());
    logger_->flush_on(spdlog::level::info);
  }

  template <class... Args>
  void info(fmt::format_string<Args...> fmt, Args&&... args) {
    logger_->info(fmt, std::forward<Args>(args)...);
  }

  TrainHooks epoch_hooks(const std::string& phase) {
    TrainHooks h;
    h.epoch_end = [this, phase](std::size_t epoch, const LossReport& r) {
      info("{} epoch {:>2}  total {:.5f}  slu {:.4f}  asr {:.4f}  ir {:.4f}  sim {:.4f}", phase, epoch + 1, r.total,
           r.l_slu, r.l_asr, r.l_ir, r.sim_total);
    };
    return h;
  }

 private:
  std::shared_ptr<spdlog::logger> logger_;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string losses_csv(const std::vector<LossReport>& reports) {
  std::string out = "epoch,l_slu,l_att,l_ctc,l_asr,l_ir,sim_si,sim_sa,sim_ia,sim_total,total\n";
  for (std::size_t e = 0; e < reports.size(); ++e) {
    const auto& r = reports[e];
    out += std::to_string(e + 1);
    for (double v : {r.l_slu, r.l_att, r.l_ctc, r.l_asr, r.l_ir, r.sim_si, r.sim_sa, r.sim_ia, r.sim_total, r.total}) {
      out += "," + fmt_double(v);
    }
    out += "\n";
  }
  return out;
}

const fs::path& with_parent(const fs::path& path) {
  fs::create_directories(path.parent_path());
  return path;
}

void write_with_dirs(const fs::path& path, std::string_view contents) { io::write_file(with_parent(path), contents); }

std::string preset_tag(Preset p) { return "preset=" + std::string(preset_name(p)) + "\n"; }

std::optional<Preset> checkpoint_preset(const std::string& extra) {
  const auto at = extra.find("preset=");
  if (at == std::string::npos) return std::nullopt;
  const auto end = extra.find('\n', at);
  return parse_preset(extra.substr(at + 7, end == std::string::npos ? std::string::npos : end - at - 7));
}

void require(const fs::path& path, std::string_view code, const std::string& what) {
  if (!fs::exists(path)) fail(code, what);
}

void refuse_overwrite(const fs::path& path, bool force) {
  if (fs::exists(path) && !force) {
    fail(errc::kExists, path.string() + " already exists; pass --force to replace it");
  }
}

struct Data {
  Corpus corpus;
  CorpusSplit split;
};

Data load_data(const RunPaths& p, const RunConfig& cfg) {
  require(p.corpus(), errc::kProtocol, "no corpus in " + p.root.string() + "; run gen-data first");
  Data d;
  d.corpus = load_corpus(p.corpus());
  if (d.corpus.config_text != cfg.generator_config().to_text()) {
    fail(errc::kProtocol, p.corpus().string() + " was generated with a different generator config");
  }
  d.split = split_corpus(d.corpus, cfg.split, cfg.seed);
  return d;
}

EvalRow label(EvalRow row, const RunConfig& cfg, Preset p) {
  row.run_id = run_id(cfg);
  row.preset = p;
  row.seed = cfg.seed;
  return row;
}

bool same_key(const EvalRow& a, const EvalRow& b) {
  return a.run_id == b.run_id && a.preset == b.preset && a.scenario == b.scenario;
}

void check_no_rows(const RunPaths& p, const std::vector<EvalRow>& planned, bool force) {
  if (force || !fs::exists(p.metrics())) return;
  for (const auto& old : read_metrics(p.root)) {
    for (const auto& r : planned) {
      if (same_key(old, r)) {
        fail(errc::kExists, "metrics.csv already has a " + std::string(preset_name(r.preset)) + " " +
                                std::string(scenario_name(r.scenario)) + " row for " + r.run_id +
                                "; pass --force to replace it");
      }
    }
  }
}

void upsert_rows(const RunPaths& p, const std::vector<EvalRow>& rows) {
  std::vector<EvalRow> all = fs::exists(p.metrics()) ? read_metrics(p.root) : std::vector<EvalRow>{};
  for (const auto& r : rows) {
    auto it = std::find_if(all.begin(), all.end(), [&](const EvalRow& o) { return same_key(o, r); });
    if (it != all.end()) {
      *it = r;
    } else {
      all.push_back(r);
    }
  }
  sort_rows(all);
  io::write_file(p.metrics(), to_csv(all));
}

void write_report_file(const fs::path& path, const std::string& text, bool force) {
  if (fs::exists(path) && io::read_file(path) != text && !force) {
    fail(errc::kExists, path.string() + " differs from the regenerated report; pass --force to replace it");
  }
  io::write_file(path, text);
}

bool h_family(Preset p) { return p == Preset::kHPpslu || p == Preset::kHPpsluNocos || p == Preset::kHaPpslu; }

std::string row_summary(const EvalRow& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s %s: ACC-SLU %.4f  WER-ASR %.4f  ACC-IR %.4f", std::string(preset_name(r.preset)).c_str(),
                std::string(scenario_name(r.scenario)).c_str(), r.acc_slu, r.wer_asr, r.acc_ir);
  return buf;
}

}  // namespace

fs::path RunPaths::model(Preset p) const { return root / "ckpt" / (std::string(preset_name(p)) + ".ppsl"); }

fs::path RunPaths::attackers(Preset p) const {
  return root / "ckpt" / (std::string(preset_name(p)) + ".attackers.ppsa");
}

RunLock::RunLock(const fs::path& root) : path_(RunPaths{root}.lock()) {
  if (!fs::is_directory(root)) fail(errc::kIo, root.string() + " is not a directory");
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    if (fs::exists(path_)) {
      fail(errc::kLocked, root.string() + " is in use by another command (remove " + path_.string() +
                              " if that command is gone)");
    }
    fail(errc::kIo, "cannot create " + path_.string());
  }
  std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::string run_id(const RunConfig& cfg) {
  std::string id = "seed" + std::to_string(cfg.seed);
  if (cfg.shared_dim != 0) id = "c" + std::to_string(cfg.shared_dim) + "-" + id;
  return id;
}

std::vector<EvalRow> read_metrics(const fs::path& dir) {
  const RunPaths p{dir};
  require(p.metrics(), errc::kInvalidArgument, "no metrics.csv in " + dir.string());
  return parse_csv(io::read_file(p.metrics()));
}

std::string gen_data(const RunConfig& cfg, const fs::path& dir, const CommandOptions& opt) {
  cfg.validate();
  fs::create_directories(dir);
  RunLock lock(dir);
  const RunPaths p{dir};
  refuse_overwrite(p.corpus(), opt.force);
  if (opt.force) {
    // Results derived from the old data would no longer match it.
    for (const fs::path& stale : {p.root / "ckpt", p.root / "losses", p.root / "sweep", p.metrics(), p.report(), p.svg()}) {
      fs::remove_all(stale);
    }
  }
  RunLog log(p, "gen-data", opt.echo);
  const GeneratorConfig g = cfg.generator_config();
  const Corpus corpus = generate_corpus(g);
  const Corpus attack = make_attack_corpus(cfg.attack_config(), g, cfg.seed);
  io::write_file(p.config(), to_json(cfg));
  save_corpus(corpus, p.corpus());
  save_corpus(attack, p.attack_corpus());
  const std::string summary = "corpus: " + std::to_string(corpus.size()) + " utterances / " +
                              std::to_string(corpus.speakers().size()) + " speakers / " +
                              std::to_string(corpus.num_intents()) + " intents\n" +
                              "attack corpus: " + std::to_string(attack.size()) + " utterances / " +
                              std::to_string(attack.speakers().size()) + " speakers\n";
  log.info("seed {}: {}", cfg.seed, summary.substr(0, summary.find('\n')));
  log.info("{}", summary.substr(summary.find('\n') + 1, summary.size() - summary.find('\n') - 2));
  return summary;
}

RunConfig run_config(const fs::path& dir, const std::optional<fs::path>& explicit_config) {
  const RunPaths p{dir};
  require(p.config(), errc::kProtocol, "no config.json in " + dir.string() + "; run gen-data first");
  RunConfig cfg = load_run_config(p.config());
  RunConfig wanted = explicit_config ? load_run_config(*explicit_config) : cfg;
  apply_env_overrides(wanted);
  wanted.out_dir = cfg.out_dir;
  if (to_json(wanted) != to_json(cfg)) {
    fail(errc::kConfig, "requested config differs from " + p.config().string() +
                            " (seed " + std::to_string(wanted.seed) + " vs " + std::to_string(cfg.seed) +
                            "); generate a new run directory instead");
  }
  return cfg;
}

void pretrain_command(const fs::path& dir, const CommandOptions& opt) {
  RunLock lock(dir);
  const RunPaths p{dir};
  const RunConfig cfg = run_config(dir);
  refuse_overwrite(p.pretrain(), opt.force);
  RunLog log(p, "pretrain-asr", opt.echo);
  const Data d = load_data(p, cfg);
  ModelBundle model(cfg.pretrain_model_config());
  const auto reports = pretrain_asr(model, d.split.train, cfg.train_config(cfg.preset), log.epoch_hooks("pretrain"));
  save_checkpoint(model, with_parent(p.pretrain()), "phase=pretrain\n");
  write_with_dirs(p.losses("pretrain"), losses_csv(reports));
  EvalOptions eo = cfg.eval;
  const EvalRow dev = evaluate_plain(model, d.split.dev, d.split.dev, eo);
  log.info("pretrained ASR: dev WER {:.4f}; wrote {}", dev.wer_asr, p.pretrain().string());
}

EvalRow train_command(const fs::path& dir, Preset preset, const std::optional<fs::path>& base,
                      const CommandOptions& opt) {
  RunLock lock(dir);
  const RunPaths p{dir};
  const RunConfig cfg = run_config(dir);
  const std::string name(preset_name(preset));
  refuse_overwrite(p.model(preset), opt.force);

  ModelBundle model;
  const ModelConfig mc = cfg.model_config(preset);
  if (is_adversarial(preset)) {
    const std::string need(preset_name(*base_preset(preset)));
    if (!base) {
      fail(errc::kPreset, "preset " + name + " fine-tunes a trained " + need + " bundle; pass --base " +
                              (p.root / "ckpt" / (need + ".ppsl")).string());
    }
    require(*base, errc::kPreset, "base checkpoint " + base->string() + " does not exist");
    std::string extra;
    model = load_checkpoint(*base, &extra);
    const auto got = checkpoint_preset(extra);
    if (got != base_preset(preset)) {
      fail(errc::kPreset, "preset " + name + " needs a " + need + " base checkpoint, but " + base->string() +
                              " holds " + (got ? std::string(preset_name(*got)) : std::string("a pretrained model")));
    }
    if (model.config() != mc) {
      fail(errc::kPreset, base->string() + " was trained with a different model config than this run");
    }
  } else {
    const fs::path init = base.value_or(p.pretrain());
    require(init, errc::kPreset,
            "preset " + name + " starts from the pretrained ASR checkpoint " + init.string() +
                "; run pretrain-asr first or pass --base");
    model = ModelBundle(mc);
    init_from_pretrained(model, load_checkpoint(init));
  }

  RunLog log(p, "train " + name, opt.echo);
  const Data d = load_data(p, cfg);
  const TrainConfig tc = cfg.train_config(preset);
  const auto reports = is_adversarial(preset) ? adversarial_finetune(model, d.split.train, tc, log.epoch_hooks(name))
                                              : train_multitask(model, d.split.train, tc, log.epoch_hooks(name));
  save_checkpoint(model, with_parent(p.model(preset)), preset_tag(preset));
  write_with_dirs(p.losses(name), losses_csv(reports));
  const EvalRow row = label(evaluate_plain(model, d.split.test, d.split.dev, cfg.eval), cfg, preset);
  upsert_rows(p, {row});
  log.info("{}", row_summary(row));
  return row;
}

std::vector<EvalRow> attack_command(const fs::path& dir, Scenario scenario, std::optional<Preset> preset,
                                    const CommandOptions& opt) {
  if (scenario == Scenario::kNone) fail(errc::kConfig, "attack scenario must be 1 or 2");
  RunLock lock(dir);
  const RunPaths p{dir};
  const RunConfig cfg = run_config(dir);

  std::vector<Preset> targets;
  if (preset) {
    require(p.model(*preset), errc::kProtocol,
            "no trained " + std::string(preset_name(*preset)) + " checkpoint in " + dir.string());
    targets.push_back(*preset);
  } else {
    for (Preset q : all_presets()) {
      if (fs::exists(p.model(q))) targets.push_back(q);
    }
    if (targets.empty()) fail(errc::kProtocol, "no trained checkpoints in " + dir.string() + "; run train first");
  }
  std::vector<EvalRow> planned;
  for (Preset q : targets) {
    EvalRow r = label({}, cfg, q);
    r.scenario = scenario;
    planned.push_back(r);
  }
  check_no_rows(p, planned, opt.force);

  RunLog log(p, std::string("attack ") + std::string(scenario_name(scenario)), opt.echo);
  const Data d = load_data(p, cfg);
  std::vector<EvalRow> rows;
  if (scenario == Scenario::kS1) {
    for (Preset q : targets) {
      const ModelBundle model = load_checkpoint(p.model(q));
      rows.push_back(label(scenario1(model, d.split.test, d.split.dev, cfg.eval), cfg, q));
      log.info("{}", row_summary(rows.back()));
    }
  } else {
    require(p.attack_corpus(), errc::kProtocol, "no attack corpus in " + dir.string() + "; run gen-data first");
    const Corpus attack = load_corpus(p.attack_corpus());
    const CorpusSplit parts = split_corpus(attack, cfg.attack_split, cfg.seed);
    for (Preset q : targets) {
      const ModelBundle frozen = load_checkpoint(p.model(q));
      const std::uint64_t before = frozen.encoder_checksum();
      std::vector<LossReport> reports;
      const AttackerHeads heads =
          train_attackers_frozen(frozen, parts.train, d.corpus, cfg.train_config(q), cfg.attacker_config(), &reports);
      const std::uint64_t after = frozen.encoder_checksum();
      log.info("{} encoder checksum {:016x} before, {:016x} after attacker training ({})", preset_name(q), before,
               after, before == after ? "unchanged" : "CHANGED");
      save_attackers(heads, with_parent(p.attackers(q)));
      write_with_dirs(p.losses("attack-" + std::string(preset_name(q))), losses_csv(reports));
      rows.push_back(label(scenario2(frozen, heads, parts.test, parts.dev, cfg.eval), cfg, q));
      log.info("{}", row_summary(rows.back()));
    }
  }
  upsert_rows(p, rows);
  return rows;
}

std::vector<EvalRow> sweep_command(const fs::path& dir, const std::vector<std::size_t>& values,
                                   std::optional<Preset> preset, const CommandOptions& opt) {
  if (values.empty()) fail(errc::kConfig, "sweep needs at least one value");
  RunLock lock(dir);
  const RunPaths p{dir};
  const RunConfig cfg = run_config(dir);
  const Preset target = preset.value_or(cfg.preset);
  if (!h_family(target)) {
    fail(errc::kConfig, "the shared-dimension sweep needs an h-ppslu family preset, got " +
                            std::string(preset_name(target)));
  }
  for (std::size_t c : values) {
    if (c == 0) fail(errc::kConfig, "shared_dim values must be positive");
    preset_partition(target, cfg.encoder.hidden_dim, 0, c);  // throws with the admissible values
  }
  require(p.pretrain(), errc::kPreset, "sweep starts from the pretrained ASR checkpoint; run pretrain-asr first");
  load_data(p, cfg);

  const fs::path sweep_dir = dir / "sweep";
  for (std::size_t c : values) {
    refuse_overwrite(sweep_dir / ("c" + std::to_string(c)), opt.force);
  }
  fs::create_directories(sweep_dir);

  RunLog log(p, "sweep", opt.echo);
  std::vector<EvalRow> rows;
  CommandOptions inner = opt;
  inner.force = false;
  for (std::size_t c : values) {
    const fs::path sub = sweep_dir / ("c" + std::to_string(c));
    fs::remove_all(sub);
    fs::create_directories(sub / "ckpt");
    RunConfig sc = cfg;
    sc.shared_dim = c;
    sc.preset = target;
    const RunPaths sp{sub};
    io::write_file(sp.config(), to_json(sc));
    fs::copy_file(p.corpus(), sp.corpus());
    fs::copy_file(p.attack_corpus(), sp.attack_corpus());
    fs::copy_file(p.pretrain(), sp.pretrain());
    log.info("shared_dim {}: {}", c, preset_partition(target, cfg.encoder.hidden_dim, 0, c).to_text());
    if (is_adversarial(target)) {
      const Preset b = *base_preset(target);
      train_command(sub, b, std::nullopt, inner);
      train_command(sub, target, sp.model(b), inner);
    } else {
      train_command(sub, target, std::nullopt, inner);
    }
    rows.push_back(attack_command(sub, Scenario::kS1, target, inner).front());
    log.info("{} ({})", row_summary(rows.back()), rows.back().run_id);
  }
  std::vector<EvalRow> sorted = rows;
  sort_rows(sorted);
  io::write_file(RunPaths{sweep_dir}.metrics(), to_csv(sorted));
  CommandOptions rep = opt;
  rep.force = true;
  rep.echo = false;
  report_command(sweep_dir, true, rep);
  return rows;
}

std::string report_command(const fs::path& dir, bool svg, const CommandOptions& opt) {
  RunLock lock(dir);
  const RunPaths p{dir};
  const auto rows = read_metrics(dir);
  if (rows.empty()) fail(errc::kInvalidArgument, "metrics.csv in " + dir.string() + " has no rows");
  const std::string text = build_table(rows);
  write_report_file(p.report(), text, opt.force);
  if (svg) write_report_file(p.svg(), build_svg(rows), opt.force);
  return text;
}

std::string aggregate_report(const std::vector<fs::path>& dirs) {
  std::vector<EvalRow> rows;
  for (const auto& d : dirs) {
    auto more = read_metrics(d);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  if (rows.empty()) fail(errc::kInvalidArgument, "the given runs have no metrics rows");
  return build_table(rows);
}

void run_pipeline(const RunConfig& cfg, const fs::path& dir, const CommandOptions& opt) {
  gen_data(cfg, dir, opt);
  CommandOptions step = opt;
  pretrain_command(dir, step);
  train_command(dir, Preset::kMlSai, std::nullopt, step);
  train_command(dir, Preset::kHPpslu, std::nullopt, step);
  train_command(dir, Preset::kHaPpslu, RunPaths{dir}.model(Preset::kHPpslu), step);
  attack_command(dir, Scenario::kS1, std::nullopt, step);
  attack_command(dir, Scenario::kS2, std::nullopt, step);
  report_command(dir, true, step);
}

}  // namespace ppslu
