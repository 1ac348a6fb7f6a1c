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
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ppslu/binary_io.hpp"
#include "ppslu/error.hpp"
#include "ppslu/rng.hpp"

namespace ppslu {
namespace {

constexpr std::string_view kCheckpointMagic = "PPSL";
constexpr std::string_view kExtraMarker = "--- extra ---\n";

void check_width(std::string_view who, const Tensor& view, std::size_t width) {
  if (view.rank() != 2 || view.cols() != width) {
    fail(errc::kShape, std::string(who) + ": expected a T x " + std::to_string(width) +
                           " view, got " + shape_string(view.shape()));
  }
  if (view.rows() == 0) fail(errc::kShape, std::string(who) + ": empty view");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    fail(errc::kConfig, key + ": expected an unsigned integer, got '" + v + "'");
  }
}

std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::string_view task_name(Task task) {
  switch (task) {
    case Task::kSlu: return "slu";
    case Task::kAsr: return "asr";
    case Task::kIr: return "ir";
  }
  return "?";
}

std::string_view group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kSluHead: return "slu_head";
    case ParamGroup::kAsrHead: return "asr_head";
    case ParamGroup::kIrHead: return "ir_head";
  }
  return "?";
}

ParamGroup parse_group(std::string_view name) {
  for (auto g : {ParamGroup::kEncoder, ParamGroup::kSluHead, ParamGroup::kAsrHead, ParamGroup::kIrHead}) {
    if (group_name(g) == name) return g;
  }
  fail(errc::kFormat, "unknown parameter group '" + std::string(name) + "'");
}

// ---- partition ------------------------------------------------------------

void PartitionSpec::validate() const {
  if (total == 0) fail(errc::kConfig, "partition total width must be >= 1");
  if (const auto* sh = std::get_if<ShPrefix>(&variant)) {
    if (sh->n < 1 || sh->n > total) {
      fail(errc::kConfig, "sh prefix n=" + std::to_string(sh->n) + " must lie in [1, " +
                              std::to_string(total) + "]");
    }
  } else if (const auto* fw = std::get_if<FourWay>(&variant)) {
    if (fw->m < 1 || fw->k < 1 || fw->l < 1 || fw->c < 1) {
      fail(errc::kConfig, "fourway parts must all be >= 1");
    }
    if (fw->m + fw->k + fw->l + fw->c != total) {
      fail(errc::kConfig, "fourway parts sum to " + std::to_string(fw->m + fw->k + fw->l + fw->c) +
                              ", hidden width is " + std::to_string(total));
    }
  }
}

std::vector<ColumnRange> PartitionSpec::columns(Task task) const {
  if (const auto* sh = std::get_if<ShPrefix>(&variant)) {
    if (task == Task::kSlu) return {{0, sh->n}};
  } else if (const auto* fw = std::get_if<FourWay>(&variant)) {
    return {individual(task), {fw->m + fw->k + fw->l, total}};
  }
  return {{0, total}};
}

ColumnRange PartitionSpec::individual(Task task) const {
  if (const auto* fw = std::get_if<FourWay>(&variant)) {
    switch (task) {
      case Task::kSlu: return {0, fw->m};
      case Task::kAsr: return {fw->m, fw->m + fw->k};
      case Task::kIr: return {fw->m + fw->k, fw->m + fw->k + fw->l};
    }
  }
  return columns(task).front();
}

std::size_t PartitionSpec::width(Task task) const {
  std::size_t w = 0;
  for (const auto& r : columns(task)) w += r.width();
  return w;
}

std::string PartitionSpec::to_text() const {
  if (const auto* sh = std::get_if<ShPrefix>(&variant)) return "sh:" + std::to_string(sh->n);
  if (const auto* fw = std::get_if<FourWay>(&variant)) {
    return "fourway:" + std::to_string(fw->m) + "," + std::to_string(fw->k) + "," +
           std::to_string(fw->l) + "," + std::to_string(fw->c);
  }
  return "full";
}

PartitionSpec PartitionSpec::parse(std::string_view text, std::size_t d) {
  const std::string s(text);
  PartitionSpec spec;
  if (s == "full") {
    spec = full(d);
  } else if (s.rfind("sh:", 0) == 0) {
    spec = sh_prefix(parse_size("partition", s.substr(3)), d);
  } else if (s.rfind("fourway:", 0) == 0) {
    std::vector<std::size_t> parts;
    std::stringstream ss(s.substr(8));
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(parse_size("partition", item));
    if (parts.size() != 4) fail(errc::kConfig, "fourway partition needs 4 parts: " + s);
    spec = four_way(parts[0], parts[1], parts[2], parts[3]);
    if (spec.total != d) {
      fail(errc::kConfig, "fourway parts sum to " + std::to_string(spec.total) + ", hidden width is " +
                              std::to_string(d));
    }
  } else {
    fail(errc::kConfig, "unknown partition '" + s + "' (full, sh:N, fourway:M,K,L,C)");
  }
  spec.validate();
  return spec;
}

Tensor task_view(const Tensor& hidden, const PartitionSpec& spec, Task task) {
  if (hidden.cols() != spec.total) {
    fail(errc::kShape, "task_view: hidden width " + std::to_string(hidden.cols()) +
                           " does not match partition total " + std::to_string(spec.total));
  }
  const auto ranges = spec.columns(task);
  if (ranges.size() == 1 && ranges[0].begin == 0 && ranges[0].end == spec.total) return hidden;
  std::vector<Tensor> parts;
  for (const auto& r : ranges) parts.push_back(slice(hidden, r.begin, r.end));
  return parts.size() == 1 ? parts[0] : concat(parts);
}

Tensor attacker_view(const Tensor& hidden, const PartitionSpec& spec) {
  if (const auto* fw = std::get_if<FourWay>(&spec.variant)) {
    if (fw->m != fw->k || fw->m != fw->l) {
      fail(errc::kShape, "attacker view: SLU width " + std::to_string(fw->m + fw->c) +
                             " does not match attacker input widths " + std::to_string(fw->k + fw->c) +
                             "/" + std::to_string(fw->l + fw->c));
    }
    return task_view(hidden, spec, Task::kSlu);
  }
  if (const auto* sh = std::get_if<ShPrefix>(&spec.variant)) {
    const Tensor prefix = task_view(hidden, spec, Task::kSlu);
    if (sh->n == spec.total) return prefix;
    return concat({prefix, Tensor::zeros({hidden.rows(), spec.total - sh->n})});
  }
  return task_view(hidden, spec, Task::kSlu);
}

// ---- configs ----------------------------------------------------------------

void EncoderConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || num_layers < 1 || num_heads < 1 || ffn_dim < 1) {
    fail(errc::kConfig, "encoder dimensions must all be >= 1");
  }
  if (hidden_dim % num_heads != 0) {
    fail(errc::kConfig, "hidden_dim " + std::to_string(hidden_dim) + " is not divisible by num_heads " +
                            std::to_string(num_heads));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail(errc::kConfig, "dropout_rate must lie in [0,1)");
  if (max_seq_len < 1) fail(errc::kConfig, "max_seq_len must be >= 1");
}

void ModelConfig::validate() const {
  encoder.validate();
  partition.validate();
  if (partition.total != encoder.hidden_dim) {
    fail(errc::kConfig, "partition total " + std::to_string(partition.total) + " != hidden_dim " +
                            std::to_string(encoder.hidden_dim));
  }
  if (vocab_size < 1 || num_intents < 2 || ir_hidden < 1 || embedding_dim < 1 || decoder_dim < 1) {
    fail(errc::kConfig, "model head sizes must be >= 1 (num_intents >= 2)");
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "decoder_dim=" << decoder_dim << '\n'
     << "dropout_rate=" << encoder.dropout_rate << '\n'
     << "embedding_dim=" << embedding_dim << '\n'
     << "ffn_dim=" << encoder.ffn_dim << '\n'
     << "hidden_dim=" << encoder.hidden_dim << '\n'
     << "init_seed=" << init_seed << '\n'
     << "input_dim=" << encoder.input_dim << '\n'
     << "ir_hidden=" << ir_hidden << '\n'
     << "max_seq_len=" << encoder.max_seq_len << '\n'
     << "num_heads=" << encoder.num_heads << '\n'
     << "num_intents=" << num_intents << '\n'
     << "num_layers=" << encoder.num_layers << '\n'
     << "partition=" << partition.to_text() << '\n'
     << "vocab_size=" << vocab_size << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig cfg;
  std::string partition = "full";
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::kConfig, "model config line without '=': " + line);
    const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
    if (key == "decoder_dim") cfg.decoder_dim = parse_size(key, v);
    else if (key == "dropout_rate") cfg.encoder.dropout_rate = std::stod(v);
    else if (key == "embedding_dim") cfg.embedding_dim = parse_size(key, v);
    else if (key == "ffn_dim") cfg.encoder.ffn_dim = parse_size(key, v);
    else if (key == "hidden_dim") cfg.encoder.hidden_dim = parse_size(key, v);
    else if (key == "init_seed") cfg.init_seed = parse_size(key, v);
    else if (key == "input_dim") cfg.encoder.input_dim = parse_size(key, v);
    else if (key == "ir_hidden") cfg.ir_hidden = parse_size(key, v);
    else if (key == "max_seq_len") cfg.encoder.max_seq_len = parse_size(key, v);
    else if (key == "num_heads") cfg.encoder.num_heads = parse_size(key, v);
    else if (key == "num_intents") cfg.num_intents = parse_size(key, v);
    else if (key == "num_layers") cfg.encoder.num_layers = parse_size(key, v);
    else if (key == "partition") partition = v;
    else if (key == "vocab_size") cfg.vocab_size = parse_size(key, v);
    else if (key.rfind("param.", 0) == 0) continue;
    else fail(errc::kConfig, "unknown model config key '" + key + "'");
  }
  cfg.partition = PartitionSpec::parse(partition, cfg.encoder.hidden_dim);
  return cfg;
}

std::uint64_t ForwardContext::next_seed() { return mix_seed(seed, calls++); }

// ---- layers -----------------------------------------------------------------

Linear Linear::init(std::size_t in, std::size_t out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> w(in * out);
  for (double& x : w) x = u(rng);
  return {Tensor::matrix(in, out, std::move(w), true), Tensor::zeros({out}, true)};
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, w), b); }

void Linear::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".w", w);
  fn(prefix + ".b", b);
}

LayerNormParams LayerNormParams::init(std::size_t d) {
  return {Tensor(Shape{d}, std::vector<double>(d, 1.0), true), Tensor::zeros({d}, true)};
}

Tensor LayerNormParams::operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma);
  fn(prefix + ".beta", beta);
}

void EncoderLayer::visit(const std::string& prefix, const ParamVisitor& fn) {
  q.visit(prefix + ".q", fn);
  k.visit(prefix + ".k", fn);
  v.visit(prefix + ".v", fn);
  o.visit(prefix + ".o", fn);
  ln1.visit(prefix + ".ln1", fn);
  ff1.visit(prefix + ".ff1", fn);
  ff2.visit(prefix + ".ff2", fn);
  ln2.visit(prefix + ".ln2", fn);
}

Tensor positional_encoding(std::size_t length, std::size_t d) {
  std::vector<double> pe(length * d);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
      pe[t * d + i] = i % 2 == 0 ? std::sin(static_cast<double>(t) * freq) : std::cos(static_cast<double>(t) * freq);
    }
  }
  return Tensor::matrix(length, d, std::move(pe));
}

Encoder::Encoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t d = cfg.hidden_dim;
  input_ = Linear::init(cfg.input_dim, d, mix_seed(seed, 0));
  for (std::size_t i = 0; i < cfg.num_layers; ++i) {
    auto s = [&](std::uint64_t j) { return mix_seed(seed, i + 1, j); };
    layers_.push_back({Linear::init(d, d, s(0)), Linear::init(d, d, s(1)), Linear::init(d, d, s(2)),
                       Linear::init(d, d, s(3)), LayerNormParams::init(d),
                       Linear::init(d, cfg.ffn_dim, s(4)), Linear::init(cfg.ffn_dim, d, s(5)),
                       LayerNormParams::init(d)});
  }
}

Tensor Encoder::operator()(const Tensor& frames, ForwardContext& ctx) const {
  if (frames.rank() != 2 || frames.cols() != cfg_.input_dim || frames.rows() == 0) {
    fail(errc::kShape, "encoder: expected T x " + std::to_string(cfg_.input_dim) + " frames, got " +
                           shape_string(frames.shape()));
  }
  const std::size_t T = frames.rows(), d = cfg_.hidden_dim;
  if (T > cfg_.max_seq_len) {
    fail(errc::kInvalidArgument, "sequence length " + std::to_string(T) + " exceeds max_seq_len " +
                                     std::to_string(cfg_.max_seq_len));
  }
  for (double x : frames.values()) {
    if (!std::isfinite(x)) fail(errc::kNonFinite, "encoder: non-finite input frame value");
  }
  const double rate = cfg_.dropout_rate;
  const std::size_t heads = cfg_.num_heads, dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor h = add(input_(frames), positional_encoding(T, d));
  h = dropout(h, rate, ctx.train, ctx.next_seed());
  for (const auto& layer : layers_) {
    const Tensor q = layer.q(h), k = layer.k(h), v = layer.v(h);
    std::vector<Tensor> ctx_heads;
    ctx_heads.reserve(heads);
    for (std::size_t i = 0; i < heads; ++i) {
      const Tensor qh = slice(q, i * dh, (i + 1) * dh);
      const Tensor kh = slice(k, i * dh, (i + 1) * dh);
      const Tensor vh = slice(v, i * dh, (i + 1) * dh);
      const Tensor attn = softmax(scale(matmul_nt(qh, kh), inv_sqrt_dh));
      ctx_heads.push_back(matmul(attn, vh));
    }
    const Tensor attn_out = layer.o(heads == 1 ? ctx_heads[0] : concat(ctx_heads));
    h = layer.ln1(add(h, dropout(attn_out, rate, ctx.train, ctx.next_seed())));
    const Tensor ff = layer.ff2(relu(layer.ff1(h)));
    h = layer.ln2(add(h, dropout(ff, rate, ctx.train, ctx.next_seed())));
  }
  return h;
}

void Encoder::visit(const ParamVisitor& fn) {
  input_.visit("encoder.input", fn);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].visit("encoder.layer" + std::to_string(i), fn);
}

// ---- heads ------------------------------------------------------------------

SluHead SluHead::init(std::size_t width, std::size_t num_intents, std::uint64_t seed) {
  return {Linear::init(width, width, mix_seed(seed, 0)), Linear::init(width, num_intents, mix_seed(seed, 1))};
}

Tensor SluHead::operator()(const Tensor& view) const {
  check_width("slu head", view, width());
  return l2(relu(l1(mean_over_axis(view, 0))));
}

void SluHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  l1.visit(prefix + ".l1", fn);
  l2.visit(prefix + ".l2", fn);
}

AsrHead AsrHead::init(std::size_t width, std::size_t vocab_size, std::size_t decoder_dim,
                      std::uint64_t seed) {
  AsrHead h;
  h.vocab_size = vocab_size;
  h.ctc = Linear::init(width, vocab_size + 1, mix_seed(seed, 0));
  std::mt19937_64 rng(mix_seed(seed, 1));
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(decoder_dim)));
  std::vector<double> e((vocab_size + 1) * decoder_dim);
  for (double& x : e) x = normal(rng);
  h.embed = Tensor::matrix(vocab_size + 1, decoder_dim, std::move(e), true);
  h.key = Linear::init(width, decoder_dim, mix_seed(seed, 2));
  h.value = Linear::init(width, decoder_dim, mix_seed(seed, 3));
  h.out = Linear::init(2 * decoder_dim, vocab_size + 2, mix_seed(seed, 4));
  return h;
}

Tensor AsrHead::ctc_log_probs(const Tensor& view) const {
  check_width("asr ctc head", view, width());
  return log_softmax(ctc(view));
}

Tensor AsrHead::decoder_log_probs(const Tensor& view, std::span<const std::size_t> inputs) const {
  check_width("asr attention decoder", view, width());
  if (inputs.empty() || inputs.size() > kMaxDecodeLength + 1) {
    fail(errc::kInvalidArgument, "decoder input length must lie in [1, " +
                                     std::to_string(kMaxDecodeLength + 1) + "]");
  }
  for (std::size_t t : inputs) {
    if (t > sos()) fail(errc::kBounds, "decoder input token " + std::to_string(t) + " out of range");
  }
  const std::size_t a = embed.cols();
  const Tensor query = add(gather_rows(embed, inputs), positional_encoding(inputs.size(), a));
  const Tensor keys = key(view), values = value(view);
  const Tensor attn = softmax(scale(matmul_nt(query, keys), 1.0 / std::sqrt(static_cast<double>(a))));
  const Tensor context = matmul(attn, values);
  return log_softmax(out(concat({context, query})));
}

Tensor AsrHead::attention_step(const Tensor& view, std::span<const Token> prefix) const {
  if (prefix.size() > kMaxDecodeLength) {
    fail(errc::kInvalidArgument, "decoder prefix longer than " + std::to_string(kMaxDecodeLength));
  }
  std::vector<std::size_t> inputs{sos()};
  inputs.insert(inputs.end(), prefix.begin(), prefix.end());
  const std::vector<std::size_t> last{inputs.size() - 1};
  const Tensor rows = gather_rows(decoder_log_probs(view, inputs), last);
  return Tensor::vector({rows.values().begin(), rows.values().end()});
}

void AsrHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  ctc.visit(prefix + ".ctc", fn);
  fn(prefix + ".embed", embed);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  out.visit(prefix + ".out", fn);
}

IrHead IrHead::init(std::size_t width, std::size_t hidden, std::size_t embedding_dim,
                    std::uint64_t seed) {
  return {Linear::init(width, hidden, mix_seed(seed, 0)), Linear::init(hidden, embedding_dim, mix_seed(seed, 1))};
}

Tensor IrHead::operator()(const Tensor& view) const {
  check_width("ir head", view, width());
  return l2_normalize(l2(relu(l1(mean_over_axis(view, 0)))));
}

void IrHead::visit(const std::string& prefix, const ParamVisitor& fn) {
  l1.visit(prefix + ".l1", fn);
  l2.visit(prefix + ".l2", fn);
}

std::vector<Token> ctc_greedy_decode(const Tensor& log_probs, std::size_t blank) {
  if (log_probs.rank() != 2 || blank >= log_probs.cols()) {
    fail(errc::kShape, "ctc_greedy_decode: blank index outside " + shape_string(log_probs.shape()));
  }
  std::vector<Token> out;
  std::size_t prev = blank;
  const std::size_t C = log_probs.cols();
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    const std::size_t best = argmax(log_probs.values().subspan(t * C, C));
    if (best != blank && best != prev) out.push_back(static_cast<Token>(best));
    prev = best;
  }
  return out;
}

std::vector<Token> attention_greedy_decode(const AsrHead& head, const Tensor& view) {
  NoGradScope no_grad;
  std::vector<Token> out;
  while (out.size() < kMaxDecodeLength) {
    const Tensor lp = head.attention_step(view, out);
    auto row = lp.values();
    // Start-of-sequence is an input symbol only.
    std::size_t best = head.eos();
    for (std::size_t c = 0; c < head.vocab_size; ++c) {
      if (row[c] > row[best]) best = c;
    }
    if (best == head.eos()) break;
    out.push_back(static_cast<Token>(best));
  }
  return out;
}

// ---- bundle -----------------------------------------------------------------

ModelBundle::ModelBundle(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::uint64_t s = cfg.init_seed;
  encoder = Encoder(cfg.encoder, mix_seed(s, 1));
  slu = SluHead::init(cfg.partition.width(Task::kSlu), cfg.num_intents, mix_seed(s, 2));
  asr = AsrHead::init(cfg.partition.width(Task::kAsr), cfg.vocab_size, cfg.decoder_dim, mix_seed(s, 3));
  ir = IrHead::init(cfg.partition.width(Task::kIr), cfg.ir_hidden, cfg.embedding_dim, mix_seed(s, 4));
}

Tensor ModelBundle::encode(const Tensor& frames) const {
  ForwardContext ctx;
  return encoder(frames, ctx);
}

void ModelBundle::visit(const std::function<void(const std::string&, ParamGroup, Tensor&)>& fn) {
  encoder.visit([&](const std::string& n, Tensor& t) { fn(n, ParamGroup::kEncoder, t); });
  slu.visit("slu", [&](const std::string& n, Tensor& t) { fn(n, ParamGroup::kSluHead, t); });
  asr.visit("asr", [&](const std::string& n, Tensor& t) { fn(n, ParamGroup::kAsrHead, t); });
  ir.visit("ir", [&](const std::string& n, Tensor& t) { fn(n, ParamGroup::kIrHead, t); });
}

std::vector<Tensor> ModelBundle::parameters(std::span<const ParamGroup> groups) {
  std::vector<Tensor> out;
  visit([&](const std::string&, ParamGroup g, Tensor& t) {
    if (groups.empty() || std::find(groups.begin(), groups.end(), g) != groups.end()) out.push_back(t);
  });
  return out;
}

ModelBundle ModelBundle::map_params(bool share, std::span<const ParamGroup> trainable) const {
  ModelBundle out = *this;
  out.visit([&](const std::string&, ParamGroup g, Tensor& t) {
    const bool grad = trainable.empty() ? t.requires_grad()
                                        : std::find(trainable.begin(), trainable.end(), g) != trainable.end();
    t = share ? t.alias(grad) : t.clone(grad);
  });
  return out;
}

ModelBundle ModelBundle::clone() const { return map_params(false, {}); }
ModelBundle ModelBundle::bind(std::span<const ParamGroup> trainable) const { return map_params(true, trainable); }

void ModelBundle::set_requires_grad(bool on) {
  visit([on](const std::string&, ParamGroup, Tensor& t) { t = t.alias(on); });
}

std::uint64_t ModelBundle::encoder_checksum() const {
  ModelBundle view = *this;
  io::Writer w;
  view.encoder.visit([&](const std::string& name, Tensor& t) {
    w.string(name);
    for (double x : t.values()) w.f64(x);
  });
  return io::fnv1a(w.buffer());
}

// ---- checkpoint -------------------------------------------------------------

std::string encode_checkpoint(const ModelBundle& model, std::string_view extra_config) {
  ModelBundle view = model;
  std::string text = model.config().to_text();
  std::vector<std::pair<std::string, Tensor>> tensors;
  view.visit([&](const std::string& name, ParamGroup g, Tensor& t) {
    text += "param." + name + "=" + std::string(group_name(g)) + "\n";
    tensors.emplace_back(name, t);
  });
  if (!extra_config.empty()) {
    text += kExtraMarker;
    text += extra_config;
  }
  io::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.string(text);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.string(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (double x : t.values()) w.f64(x);
  }
  return w.take();
}

ModelBundle decode_checkpoint(std::string_view bytes, std::string* extra_config) {
  io::Reader r(bytes);
  if (r.bytes(4) != kCheckpointMagic) fail(errc::kFormat, "not a checkpoint file (bad magic) at byte offset 0");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    fail(errc::kVersion, "checkpoint version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  std::string text = r.string();
  std::string extra;
  if (const auto pos = text.find(kExtraMarker); pos != std::string::npos) {
    extra = text.substr(pos + kExtraMarker.size());
    text.resize(pos);
  }
  std::map<std::string, std::string> tags;
  {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.rfind("param.", 0) != 0) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) r.malformed("bad parameter tag line");
      tags[line.substr(6, eq - 6)] = line.substr(eq + 1);
    }
  }
  ModelBundle model(ModelConfig::from_text(text));

  const std::uint32_t count = r.u32();
  std::map<std::string, std::pair<Shape, std::vector<double>>> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    const std::uint8_t rank = r.u8();
    if (rank == 0 || rank > 4) r.malformed("tensor '" + name + "' has invalid rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_numel(shape);
    if (n > bytes.size()) r.malformed("tensor '" + name + "' larger than file");
    std::vector<double> values(n);
    for (double& x : values) x = r.f64();
    if (!loaded.emplace(name, std::make_pair(std::move(shape), std::move(values))).second) {
      r.malformed("duplicate tensor '" + name + "'");
    }
  }
  if (!r.at_end()) r.malformed("trailing bytes after last tensor");

  std::size_t matched = 0;
  model.visit([&](const std::string& name, ParamGroup g, Tensor& t) {
    const auto it = loaded.find(name);
    if (it == loaded.end()) fail(errc::kFormat, "checkpoint is missing tensor '" + name + "'");
    if (it->second.first != t.shape()) {
      fail(errc::kFormat, "tensor '" + name + "' has shape " + shape_string(it->second.first) +
                              ", model expects " + shape_string(t.shape()));
    }
    const auto tag = tags.find(name);
    if (tag == tags.end() || parse_group(tag->second) != g) {
      fail(errc::kFormat, "tensor '" + name + "' has a missing or wrong group tag");
    }
    std::copy(it->second.second.begin(), it->second.second.end(), t.mutable_values().begin());
    ++matched;
  });
  if (matched != loaded.size()) fail(errc::kFormat, "checkpoint has tensors the model does not know");
  if (extra_config) *extra_config = std::move(extra);
  return model;
}

void save_checkpoint(const ModelBundle& model, const std::filesystem::path& path,
                     std::string_view extra_config) {
  io::write_file(path, encode_checkpoint(model, extra_config));
}

ModelBundle load_checkpoint(const std::filesystem::path& path, std::string* extra_config) {
  return decode_checkpoint(io::read_file(path), extra_config);
}

}  // namespace ppslu
