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

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "ppslu/data.hpp"
#include "ppslu/eval.hpp"
#include "ppslu/model.hpp"
#include "ppslu/train.hpp"

namespace ppslu {

// Everything an experiment needs, as one JSON document. Parsing overlays the
// given keys on the defaults and rejects anything it does not know.
struct RunConfig {
  // generator
  GeneratorConfig generator;
  std::array<double, 3> split{0.8, 0.1, 0.1};
  std::size_t attack_speakers = 10;
  std::size_t attack_utterances_per_intent_per_speaker = 4;
  std::array<double, 3> attack_split{0.6, 0.2, 0.2};
  // encoder (input_dim follows generator.feature_dim)
  EncoderConfig encoder;
  std::size_t decoder_dim = 64;
  std::size_t ir_hidden = 64;
  std::size_t embedding_dim = 32;
  // partition; 0 picks d/4 and d/2
  std::size_t shared_dim = 0;
  std::size_t sh_prefix = 0;
  LossWeights loss_weights;
  TrainConfig train;
  std::uint64_t attacker_init_seed = 11;
  EvalOptions eval;
  Preset preset = Preset::kHPpslu;
  // One seed drives rendering, splits, initialization and training order.
  std::uint64_t seed = 42;
  std::string out_dir = "runs/default";

  void validate() const;

  GeneratorConfig generator_config() const;
  GeneratorConfig attack_config() const;
  ModelConfig model_config(Preset p) const;
  ModelConfig pretrain_model_config() const;
  TrainConfig train_config(Preset p) const;
  AttackerConfig attacker_config() const;
};

RunConfig parse_run_config(std::string_view json_text);
// Fully resolved, stable key order, trailing newline.
std::string to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);
// PPSLU_SEED, when set, replaces the seed.
void apply_env_overrides(RunConfig& cfg);

std::string_view decoder_name(Decoder d);
Decoder parse_decoder(std::string_view name);

}  // namespace ppslu
