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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ppslu/data.hpp"
#include "ppslu/kernels.hpp"
#include "ppslu/model.hpp"
#include "ppslu/train.hpp"

namespace ppslu {

// Levenshtein distance with unit costs.
std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b);
// Edit distance over reference length; the reference must be nonempty.
double wer(std::span<const Token> reference, std::span<const Token> hypothesis);

struct WerTotals {
  std::size_t edits = 0, reference_tokens = 0;
  void add(std::span<const Token> reference, std::span<const Token> hypothesis);
  double value() const;
};

enum class Decoder { kCtcGreedy, kAttentionGreedy };

struct VerificationResult {
  double accuracy = 0;
  double threshold = 0;
  std::size_t n_pairs = 0;
  bool balanced = true;
};

// Picks the threshold maximizing dev accuracy (score >= threshold means same
// speaker; ties go to the lowest threshold) and applies it to the test scores.
// Labels are 1 for same-speaker pairs.
VerificationResult verification_accuracy(std::span<const double> dev_scores, std::span<const std::uint8_t> dev_same,
                                         std::span<const double> test_scores,
                                         std::span<const std::uint8_t> test_same);

// Cosine-scored 1:1 verification over embeddings indexed like the corpora.
VerificationResult ir_verification_accuracy(std::span<const Tensor> test_embeddings,
                                            std::span<const VerificationPair> test_pairs,
                                            std::span<const Tensor> dev_embeddings,
                                            std::span<const VerificationPair> dev_pairs);

enum class Scenario { kNone, kS1, kS2 };
std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

struct EvalRow {
  std::string run_id;
  Preset preset = Preset::kMlSai;
  Scenario scenario = Scenario::kNone;
  double acc_slu = 0, wer_asr = 0, acc_ir = 0;
  std::size_t n_utt = 0, n_pairs = 0;
  std::uint64_t seed = 0;
  std::string warning;  // not serialized
};

struct EvalOptions {
  std::size_t num_pairs = 200;
  std::uint64_t pair_seed = 5;
  Decoder decoder = Decoder::kCtcGreedy;
  kernels::Policy policy = kernels::Policy::kParallel;
};

double slu_accuracy(const ModelBundle& model, const Corpus& test,
                    kernels::Policy policy = kernels::Policy::kParallel);

// Every head on its own task view.
EvalRow evaluate_plain(const ModelBundle& model, const Corpus& test, const Corpus& dev, const EvalOptions& opt = {});
// The jointly trained ASR and IR heads read only the SLU view.
EvalRow scenario1(const ModelBundle& model, const Corpus& test, const Corpus& dev, const EvalOptions& opt = {});
// Retrained attackers against the frozen encoder on the attack corpus.
EvalRow scenario2(const ModelBundle& frozen, const AttackerHeads& attackers, const Corpus& attack_test,
                  const Corpus& attack_dev, const EvalOptions& opt = {});

// ---- tables -------------------------------------------------------------------

std::string metrics_csv_header();
std::string to_csv(std::span<const EvalRow> rows);
std::vector<EvalRow> parse_csv(std::string_view text);
// Stable order: preset table order, then scenario, then run id.
void sort_rows(std::vector<EvalRow>& rows);
// Aligned text table with metric direction marks and the published
// full-scale numbers as a labeled sidebar.
std::string build_table(std::vector<EvalRow> rows);
std::string build_svg(std::vector<EvalRow> rows);

}  // namespace ppslu
