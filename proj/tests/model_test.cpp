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
#include "ppslu/model.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include "gtest/gtest.h"
#include "ppslu/error.hpp"
#include "ppslu/losses.hpp"

namespace ppslu {
namespace {

Tensor random_frames(std::size_t T, std::size_t F, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(T * F);
  for (double& x : v) x = n(rng);
  return Tensor::matrix(T, F, std::move(v));
}

ModelConfig tiny_config(PartitionSpec partition = PartitionSpec::four_way(2, 2, 2, 2)) {
  ModelConfig cfg;
  cfg.encoder = {.input_dim = 3, .hidden_dim = 8, .num_layers = 1, .num_heads = 2, .ffn_dim = 6,
                 .dropout_rate = 0.0, .max_seq_len = 16};
  cfg.partition = partition;
  cfg.vocab_size = 4;
  cfg.num_intents = 3;
  cfg.ir_hidden = 5;
  cfg.embedding_dim = 4;
  cfg.decoder_dim = 4;
  return cfg;
}

// Runs `f` with the named parameter of a copy of `model` replaced by `t`.
ScalarFn with_param(const ModelBundle& model, const std::string& name,
                    const std::function<Tensor(const ModelBundle&)>& f) {
  return [model, name, f](const Tensor& t) {
    ModelBundle m = model;
    bool found = false;
    m.visit([&](const std::string& n, ParamGroup, Tensor& p) {
      if (n == name) p = t, found = true;
    });
    EXPECT_TRUE(found) << name;
    return f(m);
  };
}

Tensor param(ModelBundle& model, const std::string& name) {
  Tensor out;
  model.visit([&](const std::string& n, ParamGroup, Tensor& p) {
    if (n == name) out = p;
  });
  return out;
}

TEST(Encoder, OutputShapeAndEvalDeterminism) {
  ModelConfig cfg;
  ModelBundle model(cfg);
  const Tensor x = random_frames(5, 16, 1);
  const Tensor h1 = model.encode(x), h2 = model.encode(x);
  EXPECT_EQ(h1.shape(), (Shape{5, 64}));
  EXPECT_TRUE(std::equal(h1.values().begin(), h1.values().end(), h2.values().begin()));
}

TEST(Encoder, FrameOrderMatters) {
  ModelBundle model{ModelConfig{}};
  const Tensor x = random_frames(6, 16, 2);
  std::vector<double> rev(x.numel());
  for (std::size_t t = 0; t < 6; ++t) {
    std::copy_n(x.values().data() + t * 16, 16, rev.data() + (5 - t) * 16);
  }
  const Tensor h = model.encode(x), hr = model.encode(Tensor::matrix(6, 16, rev));
  // Without positions, reversing the input would just reverse the rows.
  double diff = 0;
  for (std::size_t t = 0; t < 6; ++t) {
    for (std::size_t j = 0; j < 64; ++j) diff += std::abs(h[t * 64 + j] - hr[(5 - t) * 64 + j]);
  }
  EXPECT_GT(diff, 1e-3);
}

TEST(Encoder, RejectsTooLongAndWrongWidthInput) {
  ModelConfig cfg;
  cfg.encoder.max_seq_len = 8;
  ModelBundle model(cfg);
  try {
    model.encode(random_frames(9, 16, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kInvalidArgument);
    EXPECT_NE(std::string(e.what()).find("max_seq_len"), std::string::npos);
  }
  EXPECT_THROW(model.encode(random_frames(4, 15, 3)), Error);
}

TEST(Encoder, TrainModeDropoutIsReproducibleFromContext) {
  ModelBundle model{ModelConfig{}};
  const Tensor x = random_frames(5, 16, 4);
  ForwardContext a{.train = true, .seed = 9}, b{.train = true, .seed = 9}, c{.train = true, .seed = 10};
  const Tensor ha = model.encode(x, a), hb = model.encode(x, b), hc = model.encode(x, c);
  EXPECT_TRUE(std::equal(ha.values().begin(), ha.values().end(), hb.values().begin()));
  EXPECT_FALSE(std::equal(ha.values().begin(), ha.values().end(), hc.values().begin()));
}

TEST(Encoder, ConcurrentEvalReadersAgree) {
  const ModelBundle model{ModelConfig{}};
  const Tensor x = random_frames(7, 16, 5);
  const Tensor ref = model.encode(x);
  std::vector<std::thread> threads;
  std::vector<int> ok(8, 0);
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      const Tensor h = model.encode(x);
      ok[i] = std::equal(h.values().begin(), h.values().end(), ref.values().begin());
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(std::count(ok.begin(), ok.end(), 1), 8);
}

TEST(Encoder, InvalidConfigsAreRejected) {
  ModelConfig cfg;
  cfg.encoder.num_heads = 5;
  EXPECT_THROW(ModelBundle{cfg}, Error);
  cfg = {};
  cfg.encoder.dropout_rate = 1.0;
  EXPECT_THROW(ModelBundle{cfg}, Error);
  cfg = {};
  cfg.partition = PartitionSpec::four_way(16, 16, 16, 8);
  EXPECT_THROW(ModelBundle{cfg}, Error);
}

TEST(Partition, FourWaySluViewColumns) {
  const auto spec = PartitionSpec::four_way(2, 2, 2, 2);
  std::vector<double> v(3 * 8);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i % 8);
  const Tensor view = task_view(Tensor::matrix(3, 8, v), spec, Task::kSlu);
  ASSERT_EQ(view.shape(), (Shape{3, 4}));
  EXPECT_EQ(std::vector<double>(view.values().begin(), view.values().begin() + 4),
            (std::vector<double>{0, 1, 6, 7}));
}

TEST(Partition, ShPrefixWidths) {
  const auto spec = PartitionSpec::sh_prefix(128, 256);
  EXPECT_EQ(spec.width(Task::kSlu), 128u);
  EXPECT_EQ(spec.width(Task::kAsr), 256u);
  EXPECT_EQ(spec.width(Task::kIr), 256u);
  const Tensor h = random_frames(2, 256, 1);
  EXPECT_EQ(task_view(h, spec, Task::kSlu).shape(), (Shape{2, 128}));
  EXPECT_EQ(task_view(h, spec, Task::kAsr).shape(), (Shape{2, 256}));
}

TEST(Partition, FourWayBlocksTileHiddenExactlyOnce) {
  for (const auto& spec : {PartitionSpec::four_way(2, 2, 2, 2), PartitionSpec::four_way(3, 1, 4, 2),
                           PartitionSpec::four_way(16, 16, 16, 16)}) {
    std::vector<int> hits(spec.total, 0);
    for (Task t : {Task::kSlu, Task::kAsr, Task::kIr}) {
      const auto r = spec.individual(t);
      for (std::size_t c = r.begin; c < r.end; ++c) ++hits[c];
      const auto cols = spec.columns(t);
      ASSERT_EQ(cols.size(), 2u);
      EXPECT_EQ(cols[1].end, spec.total);
    }
    const auto shared = spec.columns(Task::kSlu)[1];
    for (std::size_t c = shared.begin; c < shared.end; ++c) ++hits[c];
    for (int h : hits) EXPECT_EQ(h, 1);
  }
}

TEST(Partition, ParseAndValidate) {
  EXPECT_EQ(PartitionSpec::parse("fourway:16,16,16,16", 64), PartitionSpec::four_way(16, 16, 16, 16));
  EXPECT_EQ(PartitionSpec::parse("sh:32", 64), PartitionSpec::sh_prefix(32, 64));
  EXPECT_EQ(PartitionSpec::parse("full", 64), PartitionSpec::full(64));
  EXPECT_THROW(PartitionSpec::parse("sh:0", 64), Error);
  EXPECT_THROW(PartitionSpec::parse("sh:65", 64), Error);
  EXPECT_THROW(PartitionSpec::parse("fourway:16,16,16", 64), Error);
  EXPECT_THROW(PartitionSpec::parse("fourway:0,16,16,32", 64), Error);
  EXPECT_THROW(PartitionSpec::parse("fourway:16,16,16,15", 64), Error);
  EXPECT_THROW(PartitionSpec::parse("half", 64), Error);
  EXPECT_THROW(task_view(random_frames(2, 7, 1), PartitionSpec::four_way(2, 2, 2, 2), Task::kIr), Error);
}

TEST(Partition, SluGradientNeverReachesOtherIndividualBlocks) {
  const ModelBundle model(tiny_config(PartitionSpec::four_way(2, 3, 1, 2)));
  double live = 0;  // the SLU blocks themselves do receive gradient
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Tape tape;
    TapeScope scope(&tape);
    Tensor h = random_frames(4, 8, seed).clone(true);
    tape.backward(cross_entropy(model.slu(model.view(h, Task::kSlu)), seed % 3));
    const auto spec = model.partition();
    for (Task other : {Task::kAsr, Task::kIr}) {
      const auto r = spec.individual(other);
      for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t c = r.begin; c < r.end; ++c) EXPECT_EQ(h.grad()[t * 8 + c], 0.0);
      }
    }
    for (std::size_t t = 0; t < 4; ++t) live += std::abs(h.grad()[t * 8 + 0]) + std::abs(h.grad()[t * 8 + 7]);
  }
  EXPECT_GT(live, 0.0);
}

TEST(Heads, SluShapeAndFrameDuplicationInvariance) {
  const ModelBundle model(tiny_config());
  const Tensor v = random_frames(3, 4, 7);
  const Tensor logits = model.slu(v);
  EXPECT_EQ(logits.shape(), (Shape{3}));
  std::vector<double> dup;
  for (std::size_t t = 0; t < 3; ++t) {
    for (int rep = 0; rep < 2; ++rep) dup.insert(dup.end(), v.values().begin() + t * 4, v.values().begin() + t * 4 + 4);
  }
  const Tensor logits2 = model.slu(Tensor::matrix(6, 4, dup));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(logits[i], logits2[i], 1e-12);
  EXPECT_THROW(model.slu(random_frames(3, 5, 1)), Error);
}

TEST(Heads, CtcLogProbsNormalize) {
  const ModelBundle model(tiny_config());
  const Tensor lp = model.asr.ctc_log_probs(random_frames(5, 4, 8));
  ASSERT_EQ(lp.shape(), (Shape{5, 5}));
  for (std::size_t t = 0; t < 5; ++t) {
    double s = 0;
    for (std::size_t k = 0; k < 5; ++k) s += std::exp(lp[t * 5 + k]);
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_THROW(model.asr.ctc_log_probs(random_frames(5, 8, 1)), Error);
}

TEST(Heads, IrEmbeddingIsUnitNormAndDeterministic) {
  const ModelBundle model(tiny_config());
  const Tensor v = random_frames(4, 4, 9);
  const Tensor e = model.ir(v), e2 = model.ir(v);
  ASSERT_EQ(e.shape(), (Shape{4}));
  double n = 0;
  for (double x : e.values()) n += x * x;
  EXPECT_NEAR(std::sqrt(n), 1.0, 1e-9);
  EXPECT_TRUE(std::equal(e.values().begin(), e.values().end(), e2.values().begin()));
}

TEST(Heads, AttentionStepAndDecodeShapes) {
  const ModelBundle model(tiny_config());
  const Tensor v = random_frames(4, 4, 10);
  const Token prefix[] = {1, 2};
  const Tensor lp = model.asr.attention_step(v, prefix);
  ASSERT_EQ(lp.shape(), (Shape{6}));
  double s = 0;
  for (double x : lp.values()) s += std::exp(x);
  EXPECT_NEAR(s, 1.0, 1e-9);
  EXPECT_LE(attention_greedy_decode(model.asr, v).size(), kMaxDecodeLength);
  std::vector<Token> too_long(17, 0);
  EXPECT_THROW(model.asr.attention_step(v, too_long), Error);
  EXPECT_THROW(model.asr.attention_step(random_frames(4, 3, 1), prefix), Error);
}

TEST(Heads, CtcGreedyDecodeCollapsesPath) {
  // Classes a=0, b=1, blank=2; path [a, a, blank, b].
  auto path = [](std::vector<std::size_t> best) {
    std::vector<double> v(best.size() * 3, -5.0);
    for (std::size_t t = 0; t < best.size(); ++t) v[t * 3 + best[t]] = -0.1;
    return Tensor::matrix(best.size(), 3, v);
  };
  EXPECT_EQ(ctc_greedy_decode(path({0, 0, 2, 1}), 2), (std::vector<Token>{0, 1}));
  EXPECT_TRUE(ctc_greedy_decode(path({2, 2}), 2).empty());
  EXPECT_EQ(ctc_greedy_decode(path({0, 2, 0}), 2), (std::vector<Token>{0, 0}));
}

TEST(GradCheck, EncoderAndHeadsPassCompositeChecks) {
  const ModelBundle model(tiny_config());
  const Tensor x = random_frames(4, 3, 11);
  const std::vector<Token> target{1, 3};
  auto total_loss = [&](const ModelBundle& m, const Tensor& frames) {
    ForwardContext ctx;
    const Tensor h = m.encoder(frames, ctx);
    const Tensor l_slu = cross_entropy(m.slu(m.view(h, Task::kSlu)), 2);
    const Tensor av = m.view(h, Task::kAsr);
    const Tensor l_asr = asr_loss(attention_ce(m.asr, av, target),
                                  ctc_loss(m.asr.ctc_log_probs(av), target, m.asr.blank()), 0.3);
    const Tensor e = m.ir(m.view(h, Task::kIr));
    return l_slu + l_asr + sum(mul(e, Tensor::vector({0.3, -0.2, 0.5, 0.1})));
  };
  // Inputs.
  const auto r = grad_check([&](const Tensor& t) { return total_loss(model, t); }, x);
  EXPECT_TRUE(r.pass) << "frames rel " << r.max_rel_err;
  // A sample of parameters from every group.
  ModelBundle probe = model;
  for (const std::string name : {"encoder.input.w", "encoder.layer0.q.w", "encoder.layer0.k.b",
                                 "encoder.layer0.ln1.gamma", "encoder.layer0.ff1.w", "slu.l1.w",
                                 "asr.ctc.w", "asr.embed", "asr.key.w", "asr.out.w", "ir.l2.w"}) {
    const auto f = with_param(model, name, [&](const ModelBundle& m) { return total_loss(m, x); });
    const auto rp = grad_check(f, param(probe, name));
    EXPECT_TRUE(rp.pass) << name << " rel " << rp.max_rel_err;
  }
}

TEST(Bundle, ParameterNamesUniqueAndGrouped) {
  ModelBundle model{ModelConfig{}};
  std::set<std::string> names;
  std::map<ParamGroup, int> per_group;
  model.visit([&](const std::string& n, ParamGroup g, Tensor& t) {
    EXPECT_TRUE(names.insert(n).second) << n;
    ++per_group[g];
    EXPECT_TRUE(t.requires_grad());
    const auto prefix = n.substr(0, n.find('.'));
    const std::map<std::string, ParamGroup> expect{{"encoder", ParamGroup::kEncoder},
                                                   {"slu", ParamGroup::kSluHead},
                                                   {"asr", ParamGroup::kAsrHead},
                                                   {"ir", ParamGroup::kIrHead}};
    EXPECT_EQ(expect.at(prefix), g) << n;
  });
  EXPECT_EQ(per_group.size(), 4u);
  const ParamGroup enc[] = {ParamGroup::kEncoder};
  EXPECT_EQ(model.parameters(enc).size(), static_cast<std::size_t>(per_group[ParamGroup::kEncoder]));
}

TEST(Bundle, CloneIsIndependentAndBindShares) {
  ModelBundle model(tiny_config());
  ModelBundle copy = model.clone();
  ModelBundle bound = model.bind();
  param(model, "slu.l1.w").mutable_values()[0] += 1.0;
  EXPECT_NE(param(copy, "slu.l1.w")[0], param(model, "slu.l1.w")[0]);
  EXPECT_EQ(param(bound, "slu.l1.w")[0], param(model, "slu.l1.w")[0]);
  EXPECT_NE(param(bound, "slu.l1.w").impl(), param(model, "slu.l1.w").impl());
}

TEST(Bundle, EncoderChecksumTracksEncoderOnly) {
  ModelBundle model(tiny_config());
  const auto c0 = model.encoder_checksum();
  param(model, "slu.l2.b").mutable_values()[0] += 1.0;
  EXPECT_EQ(model.encoder_checksum(), c0);
  param(model, "encoder.layer0.o.b").mutable_values()[1] += 1e-12;
  EXPECT_NE(model.encoder_checksum(), c0);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  ModelBundle model(tiny_config(PartitionSpec::four_way(3, 1, 2, 2)));
  param(model, "asr.embed").mutable_values()[3] = 0.1234567890123;
  const auto path = std::filesystem::temp_directory_path() / "ppslu_model_test.ppsl";
  save_checkpoint(model, path, "stage=test\n");
  std::string extra;
  ModelBundle back = load_checkpoint(path, &extra);
  std::filesystem::remove(path);
  EXPECT_EQ(extra, "stage=test\n");
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(encode_checkpoint(back, "stage=test\n"), encode_checkpoint(model, "stage=test\n"));
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const std::string bytes = encode_checkpoint(ModelBundle(tiny_config()));
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      decode_checkpoint(std::string_view(bytes).substr(0, cut));
      FAIL() << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), errc::kFormat) << e.what();
    }
  }
  std::string bad = bytes;
  bad[4] = 9;
  try {
    decode_checkpoint(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kVersion);
  }
}

TEST(ModelConfig, TextRoundTrip) {
  ModelConfig cfg = tiny_config(PartitionSpec::sh_prefix(5, 8));
  cfg.encoder.dropout_rate = 0.125;
  cfg.init_seed = 77;
  EXPECT_EQ(ModelConfig::from_text(cfg.to_text()), cfg);
  EXPECT_THROW(ModelConfig::from_text("depth=3\n"), Error);
}

}  // namespace
}  // namespace ppslu
