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
#include <span>
#include <string>
#include <string_view>

#include "ppslu/model.hpp"
#include "ppslu/tensor.hpp"

namespace ppslu {

enum class CosineMode { kRaw, kSquared };
std::string_view cosine_mode_name(CosineMode mode);
CosineMode parse_cosine_mode(std::string_view name);

struct LossWeights {
  double lambda1 = 1.0;  // SLU
  double lambda2 = 0.1;  // ASR
  double lambda3 = 1.0;  // IR
  double lambda4 = 0.1;  // similarity penalty
  double alpha = 0.3;    // attention share of the ASR loss
  double triplet_margin = 0.2;
  CosineMode cosine_mode = CosineMode::kSquared;

  void validate() const;
};

struct LossReport {
  double l_slu = 0, l_att = 0, l_ctc = 0, l_asr = 0, l_ir = 0;
  double sim_si = 0, sim_sa = 0, sim_ia = 0;
  double sim_total = 0;  // per cosine_mode
  double total = 0;
};

// Tensor-valued terms that feed the compositions; T is double or Tensor.
template <class T>
struct LossTerms {
  T l_slu, l_asr, l_ir, sim;
};

Tensor cross_entropy(const Tensor& logits, std::size_t target);

// Minimum number of frames that can carry `target` (repeats need a blank).
std::size_t ctc_min_frames(std::span<const Token> target);
// Negative log-likelihood of `target` under per-frame log-probabilities,
// summed over every alignment, via log-space forward-backward.
Tensor ctc_loss(const Tensor& log_probs, std::span<const Token> target, std::size_t blank);

// Teacher-forced mean cross-entropy over target tokens plus end-of-sequence.
Tensor attention_ce(const AsrHead& head, const Tensor& view, std::span<const Token> target);

template <class T>
T asr_loss(const T& l_att, const T& l_ctc, double alpha) {
  return alpha * l_att + (1.0 - alpha) * l_ctc;
}

// max(0, margin - (cos(a,p) - cos(a,n))) for unit-norm embeddings.
Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    double margin);

Tensor cosine_sim(const Tensor& a, const Tensor& b);

struct SimTerms {
  Tensor si, sa, ia;  // pairwise cosines of pooled individual blocks
  Tensor total;       // sum of cosines (raw) or of squared cosines
};
SimTerms sim_xy(const Tensor& h_s, const Tensor& h_a, const Tensor& h_i, const PartitionSpec& spec,
                CosineMode mode);

template <class T>
T compose_multitask(const LossTerms<T>& t, const LossWeights& w, bool include_sim) {
  T total = w.lambda1 * t.l_slu + w.lambda2 * t.l_asr + w.lambda3 * t.l_ir;
  if (include_sim) total = total + w.lambda4 * t.sim;
  return total;
}

template <class T>
T compose_adversarial(const LossTerms<T>& t, const LossWeights& w) {
  return w.lambda1 * t.l_slu - w.lambda2 * t.l_asr - w.lambda3 * t.l_ir;
}

inline LossTerms<double> terms_of(const LossReport& r) { return {r.l_slu, r.l_asr, r.l_ir, r.sim_total}; }

double compose_multitask(const LossReport& r, const LossWeights& w, bool include_sim);
double compose_adversarial(const LossReport& r, const LossWeights& w);

}  // namespace ppslu
