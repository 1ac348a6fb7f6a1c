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

#include "ppslu/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "ppslu/binary_io.hpp"
#include "ppslu/error.hpp"
#include "ppslu/rng.hpp"

namespace ppslu {
namespace {

constexpr std::array<Preset, 7> kPresets = {Preset::kMlSai,       Preset::kAtSai,  Preset::kShPpslu,
                                            Preset::kShaPpslu,    Preset::kHPpsluNocos,
                                            Preset::kHPpslu,      Preset::kHaPpslu};
constexpr std::array<std::string_view, 7> kPresetNames = {"ml-sai",        "at-sai",  "sh-ppslu", "sha-ppslu",
                                                          "h-ppslu-nocos", "h-ppslu", "ha-ppslu"};

// Seed streams.
enum : std::uint64_t { kPretrainTag = 101, kMainTag = 102, kAdvTag = 103, kAttackTag = 104 };

// ---- step engine ------------------------------------------------------------
//
// A step runs in three phases so that per-utterance work parallelizes while
// the result stays independent of the thread count:
//  1. every item records its own tape against a private binding of the model
//     and produces its local loss plus exported tensors;
//  2. batch-coupled terms (triplets, pooled similarity) run serially on
//     detached copies of the exports and yield their upstream gradients;
//  3. every item tape is walked backward from its loss and export seeds, and
//     parameter gradients are summed in item order.

// Which loss terms an item contributes to. kAll is the shared-corpus mode.
enum class Role { kAll, kSlu, kAsr, kIr };

struct StepItem {
  std::size_t index = 0;  // into the corpus
  Role role = Role::kAll;
};

struct Acc {
  double sum = 0;
  std::size_t n = 0;
  void add(double x) {
    sum += x;
    ++n;
  }
  double mean() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

struct ItemStats {
  std::optional<double> l_slu, l_att, l_ctc, l_asr;
  std::optional<std::array<double, 4>> sim;  // si, sa, ia, total
};

struct ItemResult {
  Tensor loss;       // already weighted and averaged; may be undefined
  Tensor embedding;  // IR embedding for the triplet term
  Tensor pooled;     // time-pooled hidden state for per-stream similarity
  Tensor probe;      // SLU-only gradient on the hidden state
  ItemStats stats;
};

struct StepCounts {
  std::size_t all = 0, slu = 0, asr = 0, ir = 0;
  std::size_t of(Role r) const {
    switch (r) {
      case Role::kSlu: return slu;
      case Role::kAsr: return asr;
      case Role::kIr: return ir;
      case Role::kAll: return all;
    }
    return all;
  }
};

struct EpochAcc {
  Acc l_slu, l_att, l_ctc, l_asr, l_ir, si, sa, ia, sim;

  void add(const ItemStats& s) {
    if (s.l_slu) l_slu.add(*s.l_slu);
    if (s.l_att) l_att.add(*s.l_att);
    if (s.l_ctc) l_ctc.add(*s.l_ctc);
    if (s.l_asr) l_asr.add(*s.l_asr);
    if (s.sim) {
      si.add((*s.sim)[0]);
      sa.add((*s.sim)[1]);
      ia.add((*s.sim)[2]);
      sim.add((*s.sim)[3]);
    }
  }
  LossReport report() const {
    LossReport r;
    r.l_slu = l_slu.mean();
    r.l_att = l_att.mean();
    r.l_ctc = l_ctc.mean();
    r.l_asr = l_asr.mean();
    r.l_ir = l_ir.mean();
    r.sim_si = si.mean();
    r.sim_sa = sa.mean();
    r.sim_ia = ia.mean();
    r.sim_total = sim.mean();
    return r;
  }
};

template <class M>
using ItemFn = std::function<ItemResult(M& bound, const StepItem& item, const StepCounts& counts,
                                        ForwardContext& ctx, bool probe)>;

template <class M>
struct Objective {
  std::vector<ParamGroup> trainable;
  ItemFn<M> item;
  double triplet_weight = 0;  // 0 disables the batch triplet term
  double triplet_margin = 0.2;
  double stream_sim_weight = 0;  // per-stream pooled similarity, per_task mode
  CosineMode cosine_mode = CosineMode::kSquared;
  const PartitionSpec* partition = nullptr;
  std::function<double(const LossReport&)> total;
};

struct NamedRef {
  std::string name;
  Tensor tensor;
};

template <class M>
std::vector<NamedRef> trainable_params(M& model, std::span<const ParamGroup> groups) {
  std::vector<NamedRef> out;
  model.visit([&](const std::string& name, ParamGroup g, Tensor& t) {
    if (std::find(groups.begin(), groups.end(), g) != groups.end()) out.push_back({name, t});
  });
  return out;
}

Tensor leaf_like(const Tensor& t) { return Tensor(t.shape(), std::vector<double>(t.values().begin(), t.values().end()), true); }

// Phase 2: triplets over the batch embeddings and the pooled similarity of
// per_task streams. Fills per-item export gradients.
struct CoupledResult {
  std::optional<double> l_ir;
  std::optional<std::array<double, 4>> sim;
  std::vector<std::vector<double>> embedding_grad, pooled_grad;
};

template <class M>
CoupledResult coupled_terms(const Objective<M>& obj, const Corpus& corpus, std::span<const StepItem> items,
                            std::span<const ItemResult> results, std::uint64_t seed) {
  CoupledResult out;
  out.embedding_grad.resize(items.size());
  out.pooled_grad.resize(items.size());
  Tape tape;
  TapeScope scope(&tape);
  std::vector<Tensor> emb(items.size()), pooled(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (results[i].embedding.defined()) emb[i] = leaf_like(results[i].embedding);
    if (results[i].pooled.defined()) {
      const auto v = results[i].pooled.values();
      pooled[i] = Tensor({1, v.size()}, std::vector<double>(v.begin(), v.end()), true);
    }
  }
  Tensor total;
  auto accumulate = [&](const Tensor& t) { total = total.defined() ? total + t : t; };

  if (obj.triplet_weight != 0) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> terms;
    for (std::size_t a = 0; a < items.size(); ++a) {
      if (!emb[a].defined()) continue;
      const auto spk = corpus.utterances[items[a].index].speaker;
      std::optional<std::size_t> pos;
      std::vector<std::size_t> negs;
      for (std::size_t j = 0; j < items.size(); ++j) {
        if (j == a || !emb[j].defined()) continue;
        if (corpus.utterances[items[j].index].speaker == spk) {
          if (!pos) pos = j;
        } else {
          negs.push_back(j);
        }
      }
      if (!pos || negs.empty()) continue;
      const std::size_t n = negs[std::uniform_int_distribution<std::size_t>(0, negs.size() - 1)(rng)];
      terms.push_back(triplet_loss(emb[a], emb[*pos], emb[n], obj.triplet_margin));
    }
    if (!terms.empty()) {
      const Tensor l_ir = sum(concat(terms)) * (1.0 / static_cast<double>(terms.size()));
      out.l_ir = l_ir.item();
      accumulate(obj.triplet_weight * l_ir);
    }
  }

  if (obj.stream_sim_weight != 0 || obj.partition != nullptr) {
    std::array<Tensor, 3> means;
    std::array<std::size_t, 3> counts{};
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!pooled[i].defined()) continue;
      const std::size_t s = static_cast<std::size_t>(items[i].role) - 1;
      means[s] = means[s].defined() ? means[s] + pooled[i] : pooled[i];
      ++counts[s];
    }
    if (counts[0] && counts[1] && counts[2]) {
      for (std::size_t s = 0; s < 3; ++s) means[s] = means[s] * (1.0 / static_cast<double>(counts[s]));
      const SimTerms st = sim_xy(means[0], means[1], means[2], *obj.partition, obj.cosine_mode);
      out.sim = std::array<double, 4>{st.si.item(), st.sa.item(), st.ia.item(), st.total.item()};
      if (obj.stream_sim_weight != 0) accumulate(obj.stream_sim_weight * st.total);
    }
  }

  if (total.defined()) {
    tape.backward(total);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (emb[i].defined()) out.embedding_grad[i].assign(emb[i].grad().begin(), emb[i].grad().end());
      if (pooled[i].defined()) out.pooled_grad[i].assign(pooled[i].grad().begin(), pooled[i].grad().end());
    }
  }
  return out;
}

struct StepOutcome {
  std::vector<ItemStats> stats;
  std::optional<double> l_ir;
  std::optional<std::array<double, 4>> stream_sim;
  Tensor probe;
};

template <class M>
StepOutcome run_step(M& model, const Corpus& corpus, std::span<const StepItem> items, const Objective<M>& obj,
                     const std::vector<NamedRef>& params, AdamState& state, const AdamConfig& adam,
                     kernels::Policy policy, std::uint64_t step_seed, bool want_probe) {
  StepCounts counts;
  for (const auto& it : items) {
    ++counts.all;
    if (it.role == Role::kSlu) ++counts.slu;
    if (it.role == Role::kAsr) ++counts.asr;
    if (it.role == Role::kIr) ++counts.ir;
  }
  const std::size_t n = items.size();
  std::vector<Tape> tapes(n);
  std::vector<M> bound(n);
  std::vector<ItemResult> results(n);

  kernels::for_each_index(
      n,
      [&](std::size_t i) {
        bound[i] = model.bind(obj.trainable);
        TapeScope scope(&tapes[i]);
        ForwardContext ctx{true, mix_seed(step_seed, i), 0};
        results[i] = obj.item(bound[i], items[i], counts, ctx, want_probe && i == 0);
      },
      policy);

  const CoupledResult coupled = coupled_terms(obj, corpus, items, results, mix_seed(step_seed, 0xc0u));

  std::vector<std::vector<Tensor>> item_params(n);
  kernels::for_each_index(
      n,
      [&](std::size_t i) {
        std::vector<Tape::Seed> seeds;
        if (results[i].loss.defined()) seeds.push_back({results[i].loss, {1.0}});
        if (!coupled.embedding_grad[i].empty()) seeds.push_back({results[i].embedding, coupled.embedding_grad[i]});
        if (!coupled.pooled_grad[i].empty()) seeds.push_back({results[i].pooled, coupled.pooled_grad[i]});
        if (!seeds.empty()) tapes[i].backward(seeds);
        for (auto& p : trainable_params(bound[i], obj.trainable)) item_params[i].push_back(p.tensor);
        tapes[i].clear();
      },
      policy);

  std::vector<std::vector<double>> grads(params.size());
  kernels::for_each_index(
      params.size(),
      [&](std::size_t p) {
        auto& g = grads[p];
        g.assign(params[p].tensor.numel(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          const auto src = item_params[i][p].grad();
          if (src.empty()) continue;
          for (std::size_t j = 0; j < g.size(); ++j) g[j] += src[j];
        }
      },
      policy);

  std::vector<NamedTensor> named;
  named.reserve(params.size());
  for (const auto& p : params) named.push_back({p.name, p.tensor});
  adam_step(named, grads, state, adam);

  StepOutcome out;
  for (auto& r : results) out.stats.push_back(r.stats);
  out.l_ir = coupled.l_ir;
  out.stream_sim = coupled.sim;
  if (want_probe && n > 0) out.probe = results[0].probe;
  return out;
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<std::vector<std::size_t>> plain_batches(std::span<const std::size_t> pool, std::size_t batch_size,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> order(pool.begin(), pool.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
  }
  return out;
}

// Builds the step plan of one epoch.
std::vector<std::vector<StepItem>> epoch_plan(const Corpus& corpus, const TrainConfig& cfg, bool per_task,
                                              std::uint64_t seed) {
  std::vector<std::vector<StepItem>> steps;
  if (!per_task) {
    const auto all = iota_indices(corpus.size());
    for (const auto& b : speaker_group_batches(corpus, all, cfg.batch_size, cfg.speaker_group, seed)) {
      std::vector<StepItem> s;
      for (auto i : b) s.push_back({i, Role::kAll});
      steps.push_back(std::move(s));
    }
    return steps;
  }
  const TaskStreams streams = partition_streams(corpus, cfg.stream_ratio, cfg.seed);
  const auto slu = plain_batches(streams.slu, cfg.batch_size, mix_seed(seed, 1));
  const auto asr = plain_batches(streams.asr, cfg.batch_size, mix_seed(seed, 2));
  const auto ir = speaker_group_batches(corpus, streams.ir, cfg.batch_size, cfg.speaker_group, mix_seed(seed, 3));
  const std::size_t count = std::min({slu.size(), asr.size(), ir.size()});
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<StepItem> s;
    for (auto i : slu[k]) s.push_back({i, Role::kSlu});
    for (auto i : asr[k]) s.push_back({i, Role::kAsr});
    for (auto i : ir[k]) s.push_back({i, Role::kIr});
    steps.push_back(std::move(s));
  }
  return steps;
}

template <class M>
std::vector<LossReport> run_epochs(M& model, const Corpus& corpus, std::size_t epochs, const Objective<M>& obj,
                                   const TrainConfig& cfg, bool per_task, std::uint64_t tag,
                                   const TrainHooks& hooks) {
  if (corpus.size() == 0) fail(errc::kInvalidArgument, "training corpus is empty");
  const auto params = trainable_params(model, obj.trainable);
  AdamState state;
  std::vector<LossReport> reports;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, tag, epoch);
    const auto plan = epoch_plan(corpus, cfg, per_task, epoch_seed);
    EpochAcc acc;
    for (std::size_t step = 0; step < plan.size(); ++step) {
      const bool probe = static_cast<bool>(hooks.slu_gradient);
      StepOutcome o = run_step(model, corpus, plan[step], obj, params, state, cfg.adam, cfg.policy,
                               mix_seed(epoch_seed, step), probe);
      for (const auto& s : o.stats) acc.add(s);
      if (o.l_ir) acc.l_ir.add(*o.l_ir);
      if (o.stream_sim) {
        acc.si.add((*o.stream_sim)[0]);
        acc.sa.add((*o.stream_sim)[1]);
        acc.ia.add((*o.stream_sim)[2]);
        acc.sim.add((*o.stream_sim)[3]);
      }
      if (probe && o.probe.defined()) hooks.slu_gradient({epoch, step, o.probe});
    }
    LossReport r = acc.report();
    r.total = obj.total(r);
    reports.push_back(r);
    if (hooks.epoch_end) hooks.epoch_end(epoch, r);
  }
  return reports;
}

struct AsrTerms {
  Tensor loss;
  double att = 0, ctc = 0;
};

AsrTerms asr_terms(const AsrHead& head, const Tensor& view, std::span<const Token> tokens, double alpha) {
  const Tensor att = attention_ce(head, view, tokens);
  const Tensor ctc = ctc_loss(head.ctc_log_probs(view), tokens, head.blank());
  return {asr_loss(att, ctc, alpha), att.item(), ctc.item()};
}

void add_loss(Tensor& acc, const Tensor& t) { acc = acc.defined() ? acc + t : t; }

double inv(std::size_t n) { return n ? 1.0 / static_cast<double>(n) : 0.0; }

bool has_role(Role r, Role want) { return r == Role::kAll || r == want; }

// SLU-only gradient on a detached copy of the hidden state.
Tensor slu_probe(const ModelBundle& model, const Tensor& hidden, std::size_t intent) {
  Tape tape;
  TapeScope scope(&tape);
  const std::array<ParamGroup, 1> none_of_heads = {ParamGroup::kEncoder};
  const ModelBundle frozen = model.bind(none_of_heads);
  Tensor leaf = leaf_like(hidden);
  tape.backward(cross_entropy(frozen.slu(frozen.view(leaf, Task::kSlu)), intent));
  return Tensor(leaf.shape(), std::vector<double>(leaf.grad().begin(), leaf.grad().end()));
}

const std::array<ParamGroup, 4> kAllGroups = {ParamGroup::kEncoder, ParamGroup::kSluHead, ParamGroup::kAsrHead,
                                              ParamGroup::kIrHead};

void require_partition(const ModelBundle& model, Preset preset) {
  const auto& v = model.partition().variant;
  bool ok = false;
  switch (preset) {
    case Preset::kMlSai:
    case Preset::kAtSai: ok = std::holds_alternative<FullPartition>(v); break;
    case Preset::kShPpslu:
    case Preset::kShaPpslu: ok = std::holds_alternative<ShPrefix>(v); break;
    default: ok = std::holds_alternative<FourWay>(v); break;
  }
  if (!ok) {
    fail(errc::kConfig, "preset " + std::string(preset_name(preset)) + " does not match partition " +
                            model.partition().to_text());
  }
}

}  // namespace

// ---- presets ----------------------------------------------------------------

std::string_view preset_name(Preset preset) { return kPresetNames[static_cast<std::size_t>(preset)]; }

Preset parse_preset(std::string_view name) {
  for (std::size_t i = 0; i < kPresets.size(); ++i) {
    if (kPresetNames[i] == name) return kPresets[i];
  }
  std::string known;
  for (auto n : kPresetNames) known += (known.empty() ? "" : ", ") + std::string(n);
  fail(errc::kConfig, "unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

std::span<const Preset> all_presets() { return kPresets; }

bool is_adversarial(Preset preset) { return base_preset(preset).has_value(); }

std::optional<Preset> base_preset(Preset preset) {
  switch (preset) {
    case Preset::kAtSai: return Preset::kMlSai;
    case Preset::kShaPpslu: return Preset::kShPpslu;
    case Preset::kHaPpslu: return Preset::kHPpslu;
    default: return std::nullopt;
  }
}

bool uses_similarity(Preset preset) { return preset == Preset::kHPpslu || preset == Preset::kHaPpslu; }

PartitionSpec preset_partition(Preset preset, std::size_t d, std::size_t sh_prefix, std::size_t shared_dim) {
  switch (preset) {
    case Preset::kMlSai:
    case Preset::kAtSai: return PartitionSpec::full(d);
    case Preset::kShPpslu:
    case Preset::kShaPpslu: return PartitionSpec::sh_prefix(sh_prefix ? sh_prefix : d / 2, d);
    default: break;
  }
  const std::size_t c = shared_dim ? shared_dim : d / 4;
  if (c >= d || (d - c) % 3 != 0) {
    std::string ok;
    for (std::size_t v = d % 3; v < d; v += 3) {
      if (v > 0) ok += (ok.empty() ? "" : ",") + std::to_string(v);
    }
    fail(errc::kConfig, "shared_dim " + std::to_string(c) + " leaves " + std::to_string(d > c ? d - c : 0) +
                            " columns, not divisible into three equal blocks; admissible values for d=" +
                            std::to_string(d) + ": " + ok);
  }
  const std::size_t m = (d - c) / 3;
  return PartitionSpec::four_way(m, m, m, c);
}

std::string_view stream_mode_name(StreamMode mode) { return mode == StreamMode::kShared ? "shared" : "per_task"; }

StreamMode parse_stream_mode(std::string_view name) {
  if (name == "shared") return StreamMode::kShared;
  if (name == "per_task") return StreamMode::kPerTask;
  fail(errc::kConfig, "stream_mode must be shared or per_task, got '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0) || !std::isfinite(adam.learning_rate)) fail(errc::kConfig, "learning_rate must be > 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    fail(errc::kConfig, "adam betas must lie in [0,1)");
  }
  if (!(adam.epsilon > 0)) fail(errc::kConfig, "adam epsilon must be > 0");
  if (!(adam.clip_norm >= 0)) fail(errc::kConfig, "grad_clip_norm must be >= 0");
  if (speaker_group < 2 || batch_size < speaker_group) {
    fail(errc::kConfig, "speaker_group must lie in [2, batch_size]");
  }
  if (epochs_pretrain == 0 || epochs_main == 0 || epochs_adv == 0 || epochs_attack == 0) {
    fail(errc::kConfig, "epoch counts must be positive");
  }
  for (auto r : stream_ratio) {
    if (r == 0) fail(errc::kConfig, "stream_ratio entries must be positive");
  }
  weights.validate();
}

// ---- optimizer ----------------------------------------------------------------

double adam_step(std::span<const NamedTensor> params, std::span<const std::vector<double>> grads,
                 AdamState& state, const AdamConfig& cfg) {
  if (grads.size() != params.size()) {
    fail(errc::kShape, "adam_step: " + std::to_string(grads.size()) + " gradients for " +
                           std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) fail(errc::kShape, "adam_step: state does not match parameters");
  double sq = 0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].tensor.numel() || state.m[p].size() != grads[p].size()) {
      fail(errc::kShape, "adam_step: size mismatch for " + params[p].name);
    }
    for (double g : grads[p]) {
      if (!std::isfinite(g)) fail(errc::kNonFinite, "non-finite gradient for parameter " + params[p].name);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  const double factor = (cfg.clip_norm > 0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor w = params[p].tensor;
    auto values = w.mutable_values();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[p][j] * factor;
      m[j] = cfg.beta1 * m[j] + (1 - cfg.beta1) * g;
      v[j] = cfg.beta2 * v[j] + (1 - cfg.beta2) * g * g;
      values[j] -= cfg.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.epsilon);
    }
  }
  return norm;
}

// ---- batching -------------------------------------------------------------------

std::vector<std::vector<std::size_t>> speaker_group_batches(const Corpus& corpus, std::span<const std::size_t> pool,
                                                            std::size_t batch_size, std::size_t group,
                                                            std::uint64_t seed) {
  if (group < 2 || batch_size < group) {
    fail(errc::kInvalidArgument, "speaker groups need 2 <= group <= batch_size");
  }
  std::mt19937_64 rng(seed);
  std::map<std::uint16_t, std::vector<std::size_t>> by_speaker;
  for (auto i : pool) by_speaker[corpus.utterances.at(i).speaker].push_back(i);
  std::vector<std::vector<std::size_t>> units;
  for (auto& [spk, members] : by_speaker) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t j = 0; j < members.size(); j += group) {
      units.emplace_back(members.begin() + j, members.begin() + std::min(members.size(), j + group));
    }
  }
  std::shuffle(units.begin(), units.end(), rng);
  std::vector<std::vector<std::size_t>> batches;
  std::vector<std::size_t> cur;
  for (const auto& u : units) {
    if (cur.size() + u.size() > batch_size) {
      batches.push_back(std::move(cur));
      cur.clear();
    }
    cur.insert(cur.end(), u.begin(), u.end());
  }
  if (!cur.empty()) batches.push_back(std::move(cur));
  return batches;
}

// ---- training phases --------------------------------------------------------------

std::vector<LossReport> pretrain_asr(ModelBundle& model, const Corpus& train, const TrainConfig& cfg,
                                     const TrainHooks& hooks) {
  cfg.validate();
  if (model.asr.width() != model.config().encoder.hidden_dim) {
    fail(errc::kConfig, "pretraining needs an ASR head reading the full hidden state");
  }
  Objective<ModelBundle> obj;
  obj.trainable = {ParamGroup::kEncoder, ParamGroup::kAsrHead};
  const double alpha = cfg.weights.alpha;
  obj.item = [&](ModelBundle& m, const StepItem& it, const StepCounts& counts, ForwardContext& ctx, bool) {
    const Utterance& u = train.utterances[it.index];
    const Tensor h = m.encode(u.frames_tensor(), ctx);
    const AsrTerms a = asr_terms(m.asr, h, u.tokens, alpha);
    ItemResult r;
    r.loss = a.loss * inv(counts.all);
    r.stats.l_att = a.att;
    r.stats.l_ctc = a.ctc;
    r.stats.l_asr = a.loss.item();
    return r;
  };
  obj.total = [](const LossReport& r) { return r.l_asr; };
  return run_epochs(model, train, cfg.epochs_pretrain, obj, cfg, false, kPretrainTag, hooks);
}

std::vector<LossReport> train_multitask(ModelBundle& model, const Corpus& train, const TrainConfig& cfg,
                                        const TrainHooks& hooks) {
  cfg.validate();
  if (is_adversarial(cfg.preset)) {
    fail(errc::kPreset, "preset " + std::string(preset_name(cfg.preset)) +
                            " is an adversarial fine-tune; run adversarial_finetune on its base");
  }
  require_partition(model, cfg.preset);
  const bool sim = model.partition().is_four_way();
  const bool per_task = cfg.stream_mode == StreamMode::kPerTask;
  LossWeights w = cfg.weights;
  if (cfg.preset == Preset::kHPpsluNocos) w.lambda4 = 0;
  const PartitionSpec spec = model.partition();

  Objective<ModelBundle> obj;
  obj.trainable.assign(kAllGroups.begin(), kAllGroups.end());
  obj.triplet_weight = w.lambda3;
  obj.triplet_margin = w.triplet_margin;
  obj.cosine_mode = w.cosine_mode;
  if (sim && per_task) {
    obj.partition = &spec;
    obj.stream_sim_weight = w.lambda4;
  }
  obj.item = [&, w](ModelBundle& m, const StepItem& it, const StepCounts& counts, ForwardContext& ctx,
                    bool probe) {
    const Utterance& u = train.utterances[it.index];
    const Tensor h = m.encode(u.frames_tensor(), ctx);
    ItemResult r;
    if (has_role(it.role, Role::kSlu)) {
      const Tensor l = cross_entropy(m.slu(m.view(h, Task::kSlu)), u.intent);
      add_loss(r.loss, l * (w.lambda1 * inv(counts.of(it.role))));
      r.stats.l_slu = l.item();
      if (probe) r.probe = slu_probe(m, h, u.intent);
    }
    if (has_role(it.role, Role::kAsr)) {
      const AsrTerms a = asr_terms(m.asr, m.view(h, Task::kAsr), u.tokens, w.alpha);
      add_loss(r.loss, a.loss * (w.lambda2 * inv(counts.of(it.role))));
      r.stats.l_att = a.att;
      r.stats.l_ctc = a.ctc;
      r.stats.l_asr = a.loss.item();
    }
    if (has_role(it.role, Role::kIr)) r.embedding = m.ir(m.view(h, Task::kIr));
    if (sim && it.role == Role::kAll) {
      const SimTerms s = sim_xy(h, h, h, spec, w.cosine_mode);
      if (w.lambda4 != 0) add_loss(r.loss, s.total * (w.lambda4 * inv(counts.all)));
      r.stats.sim = std::array<double, 4>{s.si.item(), s.sa.item(), s.ia.item(), s.total.item()};
    }
    if (sim && it.role != Role::kAll) r.pooled = mean_over_axis(h, 0);
    return r;
  };
  obj.total = [w, sim](const LossReport& r) { return compose_multitask(r, w, sim); };
  return run_epochs(model, train, cfg.epochs_main, obj, cfg, per_task, kMainTag, hooks);
}

std::vector<LossReport> adversarial_finetune(ModelBundle& model, const Corpus& train, const TrainConfig& cfg,
                                             const TrainHooks& hooks) {
  cfg.validate();
  if (!is_adversarial(cfg.preset)) {
    fail(errc::kPreset, "preset " + std::string(preset_name(cfg.preset)) + " is not an adversarial fine-tune");
  }
  require_partition(model, cfg.preset);
  const LossWeights w = cfg.weights;
  const PartitionSpec spec = model.partition();
  Objective<ModelBundle> obj;
  obj.trainable = {ParamGroup::kEncoder};
  obj.triplet_weight = -w.lambda3;
  obj.triplet_margin = w.triplet_margin;
  obj.item = [&, w](ModelBundle& m, const StepItem& it, const StepCounts& counts, ForwardContext& ctx,
                    bool probe) {
    const Utterance& u = train.utterances[it.index];
    const Tensor h = m.encode(u.frames_tensor(), ctx);
    const Tensor seen = attacker_view(h, spec);
    ItemResult r;
    const Tensor l_slu = cross_entropy(m.slu(m.view(h, Task::kSlu)), u.intent);
    const AsrTerms a = asr_terms(m.asr, seen, u.tokens, w.alpha);
    r.loss = (w.lambda1 * l_slu - w.lambda2 * a.loss) * inv(counts.all);
    r.embedding = m.ir(seen);
    r.stats.l_slu = l_slu.item();
    r.stats.l_att = a.att;
    r.stats.l_ctc = a.ctc;
    r.stats.l_asr = a.loss.item();
    if (probe) r.probe = slu_probe(m, h, u.intent);
    return r;
  };
  obj.total = [w](const LossReport& r) { return compose_adversarial(r, w); };
  return run_epochs(model, train, cfg.epochs_adv, obj, cfg, false, kAdvTag, hooks);
}

void init_from_pretrained(ModelBundle& model, const ModelBundle& pretrained) {
  if (!(model.config().encoder == pretrained.config().encoder)) {
    fail(errc::kConfig, "pretrained encoder configuration differs from the model's");
  }
  const ModelBundle src = pretrained.clone();
  std::map<std::string, Tensor> values;
  ModelBundle tmp = src;
  tmp.visit([&](const std::string& name, ParamGroup, Tensor& t) { values[name] = t; });
  const bool copy_asr = model.asr.width() == pretrained.asr.width() &&
                        model.config().decoder_dim == pretrained.config().decoder_dim &&
                        model.config().vocab_size == pretrained.config().vocab_size;
  model.visit([&](const std::string& name, ParamGroup g, Tensor& t) {
    if (g == ParamGroup::kEncoder || (g == ParamGroup::kAsrHead && copy_asr)) {
      const Tensor& v = values.at(name);
      std::copy(v.values().begin(), v.values().end(), t.mutable_values().begin());
    }
  });
}

// ---- attackers -------------------------------------------------------------------

void AttackerHeads::visit(const std::function<void(const std::string&, ParamGroup, Tensor&)>& fn) {
  asr.visit("asr", [&](const std::string& n, Tensor& t) { fn(n, ParamGroup::kAsrHead, t); });
  ir.visit("ir", [&](const std::string& n, Tensor& t) { fn(n, ParamGroup::kIrHead, t); });
}

AttackerHeads AttackerHeads::bind(std::span<const ParamGroup> trainable) const {
  AttackerHeads out = *this;
  out.visit([&](const std::string&, ParamGroup g, Tensor& t) {
    const bool grad = trainable.empty() ? t.requires_grad()
                                        : std::find(trainable.begin(), trainable.end(), g) != trainable.end();
    t = t.alias(grad);
  });
  return out;
}

std::vector<Tensor> frozen_views(const ModelBundle& frozen, const Corpus& corpus, kernels::Policy policy) {
  std::vector<Tensor> views(corpus.size());
  kernels::for_each_index(
      corpus.size(),
      [&](std::size_t i) {
        NoGradScope no_grad;
        views[i] = frozen.view(frozen.encode(corpus.utterances[i].frames_tensor()), Task::kSlu).clone();
      },
      policy);
  return views;
}

AttackerHeads train_attackers_frozen(const ModelBundle& frozen, const Corpus& attack_train,
                                     const Corpus& training_corpus, const TrainConfig& cfg,
                                     const AttackerConfig& attacker, std::vector<LossReport>* reports) {
  cfg.validate();
  const auto seen = training_corpus.speakers();
  for (auto s : attack_train.speakers()) {
    if (std::binary_search(seen.begin(), seen.end(), s)) {
      fail(errc::kProtocol, "attack corpus speaker " + std::to_string(s) + " also appears in the training corpus");
    }
  }
  const std::uint64_t checksum = frozen.encoder_checksum();
  const std::vector<Tensor> views = frozen_views(frozen, attack_train, cfg.policy);
  const std::size_t width = frozen.partition().width(Task::kSlu);
  const auto& mc = frozen.config();

  AttackerHeads heads;
  heads.asr = AsrHead::init(width, mc.vocab_size, attacker.decoder_dim, mix_seed(attacker.init_seed, 1));
  heads.ir = IrHead::init(width, attacker.ir_hidden, attacker.embedding_dim, mix_seed(attacker.init_seed, 2));
  heads.encoder_checksum = checksum;

  const double alpha = cfg.weights.alpha;
  Objective<AttackerHeads> obj;
  obj.trainable = {ParamGroup::kAsrHead, ParamGroup::kIrHead};
  obj.triplet_weight = 1.0;
  obj.triplet_margin = cfg.weights.triplet_margin;
  obj.item = [&](AttackerHeads& m, const StepItem& it, const StepCounts& counts, ForwardContext&, bool) {
    const Utterance& u = attack_train.utterances[it.index];
    const AsrTerms a = asr_terms(m.asr, views[it.index], u.tokens, alpha);
    ItemResult r;
    r.loss = a.loss * inv(counts.all);
    r.embedding = m.ir(views[it.index]);
    r.stats.l_att = a.att;
    r.stats.l_ctc = a.ctc;
    r.stats.l_asr = a.loss.item();
    return r;
  };
  obj.total = [](const LossReport& r) { return r.l_asr + r.l_ir; };
  auto rep = run_epochs(heads, attack_train, cfg.epochs_attack, obj, cfg, false, kAttackTag, {});
  if (reports) *reports = std::move(rep);
  if (frozen.encoder_checksum() != checksum) fail(errc::kProtocol, "encoder changed while training attackers");
  return heads;
}

namespace {
constexpr std::string_view kAttackerMagic = "PPSA";
constexpr std::uint32_t kAttackerVersion = 1;
}  // namespace

std::string encode_attackers(const AttackerHeads& heads) {
  io::Writer w;
  w.bytes(kAttackerMagic);
  w.u32(kAttackerVersion);
  w.u64(heads.encoder_checksum);
  w.u32(static_cast<std::uint32_t>(heads.asr.vocab_size));
  AttackerHeads view = heads;
  std::uint32_t count = 0;
  view.visit([&](const std::string&, ParamGroup, Tensor&) { ++count; });
  w.u32(count);
  view.visit([&](const std::string& name, ParamGroup, Tensor& t) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double x : t.values()) w.f64(x);
  });
  return w.take();
}

AttackerHeads decode_attackers(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(4) != kAttackerMagic) r.malformed("bad attacker magic");
  if (const auto v = r.u32(); v != kAttackerVersion) {
    fail(errc::kVersion, "attacker file version " + std::to_string(v) + ", expected " +
                             std::to_string(kAttackerVersion));
  }
  AttackerHeads heads;
  heads.encoder_checksum = r.u64();
  heads.asr.vocab_size = r.u32();
  const std::uint32_t count = r.u32();
  std::map<std::string, Tensor> tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 2) r.malformed("bad rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    std::vector<double> values(shape_numel(shape));
    for (auto& x : values) x = r.f64();
    tensors[name] = Tensor(shape, std::move(values));
  }
  if (!r.at_end()) r.malformed("trailing bytes");
  // Shapes follow from the stored tensors; take them by name.
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) fail(errc::kFormat, "attacker file lacks tensor " + name);
    Tensor t = it->second;
    tensors.erase(it);
    return t;
  };
  heads.asr.ctc = {take("asr.ctc.w"), take("asr.ctc.b")};
  heads.asr.embed = take("asr.embed");
  heads.asr.key = {take("asr.key.w"), take("asr.key.b")};
  heads.asr.value = {take("asr.value.w"), take("asr.value.b")};
  heads.asr.out = {take("asr.out.w"), take("asr.out.b")};
  heads.ir.l1 = {take("ir.l1.w"), take("ir.l1.b")};
  heads.ir.l2 = {take("ir.l2.w"), take("ir.l2.b")};
  if (!tensors.empty()) fail(errc::kFormat, "attacker file has unexpected tensor " + tensors.begin()->first);
  const std::size_t wdt = heads.asr.ctc.in();
  const std::size_t a = heads.asr.key.out();
  const std::size_t v = heads.asr.vocab_size;
  const bool ok = heads.asr.ctc.out() == v + 1 && heads.asr.embed.rank() == 2 && heads.asr.embed.dim(0) == v + 1 &&
                  heads.asr.embed.dim(1) == a && heads.asr.key.in() == wdt && heads.asr.value.in() == wdt &&
                  heads.asr.value.out() == a && heads.asr.out.in() == 2 * a && heads.asr.out.out() == v + 2 &&
                  heads.ir.l1.in() == wdt && heads.ir.l2.in() == heads.ir.l1.out();
  if (!ok) fail(errc::kFormat, "attacker tensors have inconsistent shapes");
  return heads;
}

void save_attackers(const AttackerHeads& heads, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = encode_attackers(heads);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(errc::kIo, "cannot write " + path.string());
}

AttackerHeads load_attackers(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_attackers(ss.str());
}

}  // namespace ppslu
