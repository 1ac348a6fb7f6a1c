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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppslu/data.hpp"
#include "ppslu/kernels.hpp"
#include "ppslu/losses.hpp"
#include "ppslu/model.hpp"

namespace ppslu {

// Every preset, in results-table order.
enum class Preset { kMlSai, kAtSai, kShPpslu, kShaPpslu, kHPpsluNocos, kHPpslu, kHaPpslu };
std::string_view preset_name(Preset preset);
Preset parse_preset(std::string_view name);
std::span<const Preset> all_presets();
bool is_adversarial(Preset preset);
// The multitask preset an adversarial preset fine-tunes.
std::optional<Preset> base_preset(Preset preset);
bool uses_similarity(Preset preset);
// Partition for a preset at hidden width d. sh_prefix defaults to d/2 and
// shared_dim to d/4 with equal individual blocks.
PartitionSpec preset_partition(Preset preset, std::size_t d, std::size_t sh_prefix = 0,
                               std::size_t shared_dim = 0);

enum class StreamMode { kShared, kPerTask };
std::string_view stream_mode_name(StreamMode mode);
StreamMode parse_stream_mode(std::string_view name);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // global gradient norm; 0 disables
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// One Adam update with bias correction, after global-norm clipping. Only the
// given tensors are touched. Returns the pre-clip gradient norm.
double adam_step(std::span<const NamedTensor> params, std::span<const std::vector<double>> grads,
                 AdamState& state, const AdamConfig& cfg);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t speaker_group = 2;  // same-speaker utterances per batch group
  std::size_t epochs_pretrain = 10;
  std::size_t epochs_main = 15;
  std::size_t epochs_adv = 10;
  std::size_t epochs_attack = 15;
  std::uint64_t seed = 42;
  Preset preset = Preset::kMlSai;
  LossWeights weights;
  StreamMode stream_mode = StreamMode::kShared;
  std::array<std::size_t, 3> stream_ratio{1, 1, 1};
  kernels::Policy policy = kernels::Policy::kParallel;

  void validate() const;
};

// Called once per step with the gradient of the SLU loss alone with respect
// to the encoder output of the first utterance in the batch.
struct SluGradientProbe {
  std::size_t epoch = 0, step = 0;
  Tensor hidden_grad;  // T x d
};

struct TrainHooks {
  std::function<void(const SluGradientProbe&)> slu_gradient;
  std::function<void(std::size_t epoch, const LossReport&)> epoch_end;
};

// Trains encoder + ASR head with the ASR loss on full views.
std::vector<LossReport> pretrain_asr(ModelBundle& model, const Corpus& train, const TrainConfig& cfg,
                                     const TrainHooks& hooks = {});

// Multitask training under the preset's partition and loss composition.
std::vector<LossReport> train_multitask(ModelBundle& model, const Corpus& train, const TrainConfig& cfg,
                                        const TrainHooks& hooks = {});

// Encoder-only updates against the frozen heads, which read the attacker view.
std::vector<LossReport> adversarial_finetune(ModelBundle& model, const Corpus& train,
                                             const TrainConfig& cfg, const TrainHooks& hooks = {});

// Copies the encoder (and, when widths match, the ASR head) of a pretrained
// full-width model into `model`.
void init_from_pretrained(ModelBundle& model, const ModelBundle& pretrained);

struct AttackerHeads {
  AsrHead asr;
  IrHead ir;
  std::uint64_t encoder_checksum = 0;  // of the encoder they were trained against

  std::size_t width() const { return asr.width(); }
  void visit(const std::function<void(const std::string&, ParamGroup, Tensor&)>& fn);
  AttackerHeads bind(std::span<const ParamGroup> trainable = {}) const;
};

struct AttackerConfig {
  std::size_t decoder_dim = 64;
  std::size_t ir_hidden = 64;
  std::size_t embedding_dim = 32;
  std::uint64_t init_seed = 11;
};

// The SLU view of every utterance under a frozen encoder, in eval mode.
std::vector<Tensor> frozen_views(const ModelBundle& frozen, const Corpus& corpus,
                                 kernels::Policy policy = kernels::Policy::kParallel);

// Fresh ASR and IR heads trained on the frozen encoder's SLU view of an
// attack corpus whose speakers must not appear in `training_corpus`.
AttackerHeads train_attackers_frozen(const ModelBundle& frozen, const Corpus& attack_train,
                                     const Corpus& training_corpus, const TrainConfig& cfg,
                                     const AttackerConfig& attacker = {},
                                     std::vector<LossReport>* reports = nullptr);

std::string encode_attackers(const AttackerHeads& heads);
AttackerHeads decode_attackers(std::string_view bytes);
void save_attackers(const AttackerHeads& heads, const std::filesystem::path& path);
AttackerHeads load_attackers(const std::filesystem::path& path);

// Per-epoch ordering of utterances into batches built from same-speaker
// groups of `group` utterances, so that every batch holds triplets.
std::vector<std::vector<std::size_t>> speaker_group_batches(const Corpus& corpus,
                                                            std::span<const std::size_t> pool,
                                                            std::size_t batch_size, std::size_t group,
                                                            std::uint64_t seed);

}  // namespace ppslu
