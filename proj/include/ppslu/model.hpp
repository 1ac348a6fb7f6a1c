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
#include <functional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ppslu/data.hpp"
#include "ppslu/tensor.hpp"

namespace ppslu {

enum class Task { kSlu, kAsr, kIr };
std::string_view task_name(Task task);

enum class ParamGroup { kEncoder, kSluHead, kAsrHead, kIrHead };
std::string_view group_name(ParamGroup group);
ParamGroup parse_group(std::string_view name);

// Hidden-axis geometry. FourWay lays blocks out as [SLU | ASR | IR | shared].
struct FullPartition {
  bool operator==(const FullPartition&) const = default;
};
struct ShPrefix {
  std::size_t n = 0;
  bool operator==(const ShPrefix&) const = default;
};
struct FourWay {
  std::size_t m = 0, k = 0, l = 0, c = 0;
  bool operator==(const FourWay&) const = default;
};

struct ColumnRange {
  std::size_t begin = 0, end = 0;
  std::size_t width() const { return end - begin; }
  bool operator==(const ColumnRange&) const = default;
};

struct PartitionSpec {
  std::variant<FullPartition, ShPrefix, FourWay> variant;
  std::size_t total = 0;

  static PartitionSpec full(std::size_t d) { return {FullPartition{}, d}; }
  static PartitionSpec sh_prefix(std::size_t n, std::size_t d) { return {ShPrefix{n}, d}; }
  static PartitionSpec four_way(std::size_t m, std::size_t k, std::size_t l, std::size_t c) {
    return {FourWay{m, k, l, c}, m + k + l + c};
  }

  void validate() const;
  bool is_four_way() const { return std::holds_alternative<FourWay>(variant); }
  // Column blocks (in concatenation order) making up a task's view.
  std::vector<ColumnRange> columns(Task task) const;
  std::size_t width(Task task) const;
  // Individual block only; for FourWay this excludes the shared tail.
  ColumnRange individual(Task task) const;
  std::string to_text() const;  // "full", "sh:128", "fourway:16,16,16,16"
  static PartitionSpec parse(std::string_view text, std::size_t d);
  bool operator==(const PartitionSpec&) const = default;
};

Tensor task_view(const Tensor& hidden, const PartitionSpec& spec, Task task);

// What an attacker holding the jointly trained ASR/IR heads gets to see: the
// SLU view, adapted to the heads' input width. FourWay needs m == k == l so
// [SLU | shared] matches [ASR | shared]; ShPrefix zero-fills columns [n, d).
Tensor attacker_view(const Tensor& hidden, const PartitionSpec& spec);

struct EncoderConfig {
  std::size_t input_dim = 16;
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 2;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  double dropout_rate = 0.1;
  std::size_t max_seq_len = 64;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct ModelConfig {
  EncoderConfig encoder;
  PartitionSpec partition = PartitionSpec::full(64);
  std::size_t vocab_size = 12;   // real tokens
  std::size_t num_intents = 8;
  std::size_t ir_hidden = 64;
  std::size_t embedding_dim = 32;
  std::size_t decoder_dim = 64;
  std::uint64_t init_seed = 1;

  void validate() const;
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
  bool operator==(const ModelConfig&) const = default;
};

inline constexpr std::size_t kMaxDecodeLength = 16;

// Forward-pass context. Dropout masks are keyed by (seed, call counter), so a
// replayed forward with the same context reproduces the same masks.
struct ForwardContext {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t calls = 0;

  std::uint64_t next_seed();
};

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;

struct Linear {
  Tensor w, b;  // (in, out), (out)

  static Linear init(std::size_t in, std::size_t out, std::uint64_t seed);
  Tensor operator()(const Tensor& x) const;
  std::size_t in() const { return w.dim(0); }
  std::size_t out() const { return w.dim(1); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNormParams {
  Tensor gamma, beta;
  static LayerNormParams init(std::size_t d);
  Tensor operator()(const Tensor& x) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct EncoderLayer {
  Linear q, k, v, o;
  LayerNormParams ln1;
  Linear ff1, ff2;
  LayerNormParams ln2;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, std::uint64_t seed);

  // frames: T x F -> T x d.
  Tensor operator()(const Tensor& frames, ForwardContext& ctx) const;
  const EncoderConfig& config() const { return cfg_; }
  void visit(const ParamVisitor& fn);

 private:
  EncoderConfig cfg_;
  Linear input_;
  std::vector<EncoderLayer> layers_;
};

// Sinusoidal position table, T x d.
Tensor positional_encoding(std::size_t length, std::size_t d);

// Mean-pool, linear(w->w), relu, linear(w->num_intents).
struct SluHead {
  Linear l1, l2;
  static SluHead init(std::size_t width, std::size_t num_intents, std::uint64_t seed);
  std::size_t width() const { return l1.in(); }
  Tensor operator()(const Tensor& view) const;  // (num_intents)
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// CTC projection plus a one-layer attention decoder. Decoder classes are the
// V real tokens, start-of-sequence (V, input only) and end-of-sequence (V+1).
struct AsrHead {
  Linear ctc;          // w -> V+1, blank = V
  Tensor embed;        // (V+1) x a: tokens and start-of-sequence
  Linear key, value;   // w -> a
  Linear out;          // 2a -> V+2
  std::size_t vocab_size = 0;

  static AsrHead init(std::size_t width, std::size_t vocab_size, std::size_t decoder_dim,
                      std::uint64_t seed);
  std::size_t width() const { return ctc.in(); }
  std::size_t blank() const { return vocab_size; }
  std::size_t sos() const { return vocab_size; }
  std::size_t eos() const { return vocab_size + 1; }

  Tensor ctc_log_probs(const Tensor& view) const;  // T x (V+1)
  // Teacher-forced log-probabilities, one row per step: step j sees
  // inputs[j] and position j. Returns inputs.size() x (V+2).
  Tensor decoder_log_probs(const Tensor& view, std::span<const std::size_t> inputs) const;
  // Next-token log-probabilities after `prefix` (start token implied).
  Tensor attention_step(const Tensor& view, std::span<const Token> prefix) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Mean-pool, linear, relu, linear, l2-normalize.
struct IrHead {
  Linear l1, l2;
  static IrHead init(std::size_t width, std::size_t hidden, std::size_t embedding_dim,
                     std::uint64_t seed);
  std::size_t width() const { return l1.in(); }
  Tensor operator()(const Tensor& view) const;
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

std::vector<Token> ctc_greedy_decode(const Tensor& log_probs, std::size_t blank);
std::vector<Token> attention_greedy_decode(const AsrHead& head, const Tensor& view);

class ModelBundle {
 public:
  ModelBundle() = default;
  explicit ModelBundle(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  const PartitionSpec& partition() const { return cfg_.partition; }

  Encoder encoder;
  SluHead slu;
  AsrHead asr;
  IrHead ir;

  Tensor encode(const Tensor& frames, ForwardContext& ctx) const { return encoder(frames, ctx); }
  Tensor encode(const Tensor& frames) const;  // eval mode
  Tensor view(const Tensor& hidden, Task task) const { return task_view(hidden, cfg_.partition, task); }

  // Visits every parameter in a fixed order with its unique name and group.
  void visit(const std::function<void(const std::string&, ParamGroup, Tensor&)>& fn);
  std::vector<Tensor> parameters(std::span<const ParamGroup> groups = {});

  // Independent copy (frozen snapshot or attacker start point).
  ModelBundle clone() const;
  // Shares parameter storage, fresh gradient buffers: one per worker tape.
  // With `trainable` given, only those groups track gradients.
  ModelBundle bind(std::span<const ParamGroup> trainable = {}) const;
  void set_requires_grad(bool on);

  // FNV-1a over the encoder parameter bytes.
  std::uint64_t encoder_checksum() const;

 private:
  ModelBundle map_params(bool share, std::span<const ParamGroup> trainable) const;
  ModelConfig cfg_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelBundle& model, std::string_view extra_config = {});
ModelBundle decode_checkpoint(std::string_view bytes, std::string* extra_config = nullptr);
void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path,
                     std::string_view extra_config = {});
ModelBundle load_checkpoint(const std::filesystem::path& path, std::string* extra_config = nullptr);

}  // namespace ppslu
