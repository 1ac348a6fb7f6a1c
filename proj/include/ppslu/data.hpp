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
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppslu/tensor.hpp"

namespace ppslu {

using Token = std::uint16_t;

struct IntRange {
  int lo = 0;
  int hi = 0;
  bool operator==(const IntRange&) const = default;
};

// Synthetic speech-like corpus. Each token owns a prototype frame vector, each
// speaker an additive offset, and each intent a fixed token template. An
// utterance renders its intent's template plus filler tokens, every token
// repeated for a few frames with Gaussian frame noise.
struct GeneratorConfig {
  std::size_t feature_dim = 16;
  std::size_t vocab_size = 12;  // real tokens; the CTC blank is not part of it
  std::size_t num_intents = 8;
  IntRange template_length{2, 4};
  std::size_t num_speakers = 20;
  double speaker_offset_scale = 0.5;
  double frame_noise_sigma = 0.1;
  IntRange repeats_per_token{2, 4};
  IntRange filler_tokens{0, 2};
  // The top filler_vocab token ids are reserved for fillers and never appear
  // in templates. 0 draws fillers from the whole vocabulary.
  std::size_t filler_vocab = 3;
  std::size_t utterances_per_intent_per_speaker = 4;
  // Prototypes and templates ("the language") come from language_seed;
  // speaker offsets and rendering come from seed.
  std::uint64_t language_seed = 42;
  std::uint64_t seed = 42;
  std::size_t speaker_id_base = 0;

  void validate() const;
  std::string to_text() const;
  static GeneratorConfig from_text(std::string_view text);
  bool operator==(const GeneratorConfig&) const = default;
};

struct Utterance {
  std::size_t num_frames = 0;
  std::size_t feature_dim = 0;
  std::vector<double> frames;  // num_frames x feature_dim, row-major
  std::vector<Token> tokens;
  std::uint16_t intent = 0;
  std::uint16_t speaker = 0;

  Tensor frames_tensor() const;
  bool operator==(const Utterance&) const = default;
};

struct Corpus {
  std::string config_text;
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  std::size_t feature_dim() const;
  std::size_t num_intents() const;  // 1 + max intent id
  std::vector<std::uint16_t> speakers() const;  // sorted, unique
  Corpus subset(std::span<const std::size_t> indices) const;
  bool operator==(const Corpus&) const = default;
};

struct Language {
  std::size_t feature_dim = 0;
  std::size_t vocab_size = 0;
  std::vector<double> prototypes;  // vocab_size x feature_dim
  std::vector<std::vector<Token>> templates;
};

Language make_language(const GeneratorConfig& cfg);
// num_speakers x feature_dim offsets for speakers speaker_id_base, ...
std::vector<double> make_speaker_offsets(const GeneratorConfig& cfg);

Corpus generate_corpus(const GeneratorConfig& cfg);

struct CorpusSplit {
  Corpus train, dev, test;
};

// Disjoint cover, stratified by (intent, speaker).
CorpusSplit split_corpus(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed);

// Same language as `base`, fresh speakers numbered after the base corpus's
// range. Only num_speakers and utterances_per_intent_per_speaker are taken from
// `attack`.
GeneratorConfig attack_generator_config(const GeneratorConfig& attack, const GeneratorConfig& base,
                                        std::uint64_t seed);
Corpus make_attack_corpus(const GeneratorConfig& attack, const GeneratorConfig& base,
                          std::uint64_t seed);

struct Triplet {
  std::size_t anchor = 0, positive = 0, negative = 0;
};
std::vector<Triplet> make_triplets(const Corpus& corpus, std::size_t count, std::uint64_t seed);

struct VerificationPair {
  std::size_t a = 0, b = 0;
  bool same_speaker = false;
};
std::vector<VerificationPair> make_verification_pairs(const Corpus& corpus, std::size_t count,
                                                      std::uint64_t seed);

// per_task stream mode: label-specific disjoint index streams.
struct TaskStreams {
  std::vector<std::size_t> slu, asr, ir;
};
TaskStreams partition_streams(const Corpus& corpus, std::array<std::size_t, 3> ratio,
                              std::uint64_t seed);

inline constexpr std::uint32_t kCorpusVersion = 1;

std::string encode_corpus(const Corpus& corpus);
Corpus decode_corpus(std::string_view bytes);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

}  // namespace ppslu
