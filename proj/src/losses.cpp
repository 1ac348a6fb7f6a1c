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
#include "ppslu/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ppslu/error.hpp"

namespace ppslu {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_unit(const char* which, const Tensor& e) {
  double s = 0;
  for (double x : e.values()) s += x * x;
  if (std::abs(std::sqrt(s) - 1.0) > 1e-6) {
    fail(errc::kInvalidArgument, std::string("triplet_loss: ") + which + " embedding has norm " +
                                     std::to_string(std::sqrt(s)) + ", expected 1");
  }
}

}  // namespace

std::string_view cosine_mode_name(CosineMode mode) { return mode == CosineMode::kRaw ? "raw" : "squared"; }

CosineMode parse_cosine_mode(std::string_view name) {
  if (name == "raw") return CosineMode::kRaw;
  if (name == "squared") return CosineMode::kSquared;
  fail(errc::kConfig, "cosine_mode must be raw or squared, got '" + std::string(name) + "'");
}

void LossWeights::validate() const {
  for (double x : {lambda1, lambda2, lambda3, lambda4, triplet_margin}) {
    if (!std::isfinite(x) || x < 0) fail(errc::kConfig, "loss weights and margin must be finite and >= 0");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(errc::kConfig, "alpha must lie in [0,1]");
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
  if (target >= logits.cols()) {
    fail(errc::kBounds, "cross_entropy: target " + std::to_string(target) + " outside " +
                            std::to_string(logits.cols()) + " classes");
  }
  const std::size_t idx[] = {target};
  return scale(pick(log_softmax(logits), idx), -1.0);
}

std::size_t ctc_min_frames(std::span<const Token> target) {
  std::size_t n = target.size();
  for (std::size_t i = 1; i < target.size(); ++i) n += target[i] == target[i - 1];
  return n;
}

Tensor ctc_loss(const Tensor& log_probs, std::span<const Token> target, std::size_t blank) {
  if (log_probs.rank() != 2 || blank >= log_probs.cols()) {
    fail(errc::kShape, "ctc_loss: blank " + std::to_string(blank) + " outside log-probs " +
                           shape_string(log_probs.shape()));
  }
  const std::size_t T = log_probs.rows(), C = log_probs.cols();
  for (Token t : target) {
    if (t >= C || t == blank) fail(errc::kBounds, "ctc_loss: target token " + std::to_string(t) + " invalid");
  }
  if (T < ctc_min_frames(target)) {
    fail(errc::kInfeasible, "ctc_loss: " + std::to_string(T) + " frames cannot carry a " +
                                std::to_string(target.size()) + "-token target (need " +
                                std::to_string(ctc_min_frames(target)) + ")");
  }
  const auto lp = log_probs.values();
  for (double x : lp) {
    if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
      fail(errc::kNonFinite, "ctc_loss: non-finite log-probability");
    }
  }
  // Blank-interleaved label: blank, y1, blank, y2, ..., blank.
  const std::size_t S = 2 * target.size() + 1;
  std::vector<std::size_t> ext(S, blank);
  for (std::size_t i = 0; i < target.size(); ++i) ext[2 * i + 1] = target[i];
  auto can_skip = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = lp[blank];
  if (S > 1) alpha[1] = lp[ext[1]];
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (can_skip(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + lp[t * C + ext[s]];
    }
  }
  beta[(T - 1) * S + S - 1] = lp[(T - 1) * C + ext[S - 1]];
  if (S > 1) beta[(T - 1) * S + S - 2] = lp[(T - 1) * C + ext[S - 2]];
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && can_skip(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == kNegInf ? kNegInf : b + lp[t * C + ext[s]];
    }
  }
  double log_p = alpha[(T - 1) * S + S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[(T - 1) * S + S - 2]);
  if (log_p == kNegInf) fail(errc::kInfeasible, "ctc_loss: target has zero probability");

  // d(-log P)/d lp[t][k] = -sum_{s: ext[s]=k} exp(alpha+beta-lp-logP).
  std::vector<double> grad(T * C, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> acc(C, kNegInf);
    for (std::size_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] + beta[t * S + s];
      if (ab != kNegInf) acc[ext[s]] = log_add(acc[ext[s]], ab);
    }
    for (std::size_t k = 0; k < C; ++k) {
      if (acc[k] != kNegInf) grad[t * C + k] = -std::exp(acc[k] - lp[t * C + k] - log_p);
    }
  }
  return make_op_result("ctc_loss", {1}, {-log_p}, {log_probs},
                        [log_probs, grad = std::move(grad)](const TensorImpl& o) {
                          auto g = detail::grad_sink(*log_probs.impl());
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[0] * grad[i];
                        });
}

Tensor attention_ce(const AsrHead& head, const Tensor& view, std::span<const Token> target) {
  if (target.empty()) fail(errc::kInvalidArgument, "attention_ce: empty target");
  if (target.size() > kMaxDecodeLength) {
    fail(errc::kInvalidArgument, "attention_ce: target longer than " + std::to_string(kMaxDecodeLength));
  }
  // Inputs: sos, y1..yU. Outputs: y1..yU, eos.
  std::vector<std::size_t> inputs{head.sos()}, outputs;
  for (Token t : target) {
    if (t >= head.vocab_size) fail(errc::kBounds, "attention_ce: token " + std::to_string(t) + " out of vocabulary");
    inputs.push_back(t);
    outputs.push_back(t);
  }
  outputs.push_back(head.eos());
  const Tensor lp = head.decoder_log_probs(view, inputs);
  return scale(sum(pick(lp, outputs)), -1.0 / static_cast<double>(outputs.size()));
}

Tensor triplet_loss(const Tensor& anchor, const Tensor& positive, const Tensor& negative,
                    double margin) {
  check_unit("anchor", anchor);
  check_unit("positive", positive);
  check_unit("negative", negative);
  return relu(add_scalar(sub(cosine(anchor, negative), cosine(anchor, positive)), margin));
}

Tensor cosine_sim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    fail(errc::kShape, "cosine_sim: dimension mismatch " + shape_string(a.shape()) + " vs " +
                           shape_string(b.shape()));
  }
  return cosine(a, b);
}

SimTerms sim_xy(const Tensor& h_s, const Tensor& h_a, const Tensor& h_i, const PartitionSpec& spec,
                CosineMode mode) {
  if (!spec.is_four_way()) fail(errc::kConfig, "sim_xy needs a fourway partition");
  const auto bs = spec.individual(Task::kSlu), ba = spec.individual(Task::kAsr), bi = spec.individual(Task::kIr);
  if (bs.width() != ba.width() || ba.width() != bi.width()) {
    fail(errc::kConfig, "sim_xy needs equal block widths, got " + std::to_string(bs.width()) + "," +
                            std::to_string(ba.width()) + "," + std::to_string(bi.width()));
  }
  const Tensor ps = mean_over_axis(slice(h_s, bs.begin, bs.end), 0);
  const Tensor pa = mean_over_axis(slice(h_a, ba.begin, ba.end), 0);
  const Tensor pi = mean_over_axis(slice(h_i, bi.begin, bi.end), 0);
  SimTerms out{cosine(ps, pi), cosine(ps, pa), cosine(pi, pa), {}};
  if (mode == CosineMode::kRaw) {
    out.total = out.si + out.sa + out.ia;
  } else {
    out.total = mul(out.si, out.si) + mul(out.sa, out.sa) + mul(out.ia, out.ia);
  }
  return out;
}

double compose_multitask(const LossReport& r, const LossWeights& w, bool include_sim) {
  return compose_multitask(terms_of(r), w, include_sim);
}

double compose_adversarial(const LossReport& r, const LossWeights& w) {
  return compose_adversarial(terms_of(r), w);
}

}  // namespace ppslu
