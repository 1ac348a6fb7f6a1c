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

#include "ppslu/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>

#include "json.hpp"
#include "ppslu/binary_io.hpp"
#include "ppslu/error.hpp"

namespace ppslu {
namespace {

using Json = nlohmann::ordered_json;
// Seeds and counts share one integer path.
static_assert(std::is_same_v<std::size_t, std::uint64_t>);

[[noreturn]] void bad_value(const std::string& key, const std::string& want) {
  fail(errc::kConfig, "config key '" + key + "': expected " + want);
}

// Per-type conversion between JSON values and config fields.
void read(const Json& j, const std::string& key, std::size_t& out) {
  if (!j.is_number_unsigned()) bad_value(key, "a non-negative integer");
  out = j.get<std::size_t>();
}
void read(const Json& j, const std::string& key, double& out) {
  if (!j.is_number()) bad_value(key, "a number");
  out = j.get<double>();
}
void read(const Json& j, const std::string& key, std::string& out) {
  if (!j.is_string()) bad_value(key, "a string");
  out = j.get<std::string>();
}
void read(const Json& j, const std::string& key, IntRange& out) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    bad_value(key, "an integer pair [lo, hi]");
  }
  out = {j[0].get<int>(), j[1].get<int>()};
}
template <class T>
void read(const Json& j, const std::string& key, std::array<T, 3>& out) {
  if (!j.is_array() || j.size() != 3) bad_value(key, "an array of three numbers");
  for (std::size_t i = 0; i < 3; ++i) read(j[i], key, out[i]);
}
template <class E, class Parse>
void read_enum(const Json& j, const std::string& key, E& out, Parse parse) {
  if (!j.is_string()) bad_value(key, "a string");
  try {
    out = parse(j.get<std::string>());
  } catch (const Error& e) {
    fail(errc::kConfig, "config key '" + key + "': " + e.what());
  }
}
void read(const Json& j, const std::string& key, Preset& out) { read_enum(j, key, out, parse_preset); }
void read(const Json& j, const std::string& key, CosineMode& out) { read_enum(j, key, out, parse_cosine_mode); }
void read(const Json& j, const std::string& key, StreamMode& out) { read_enum(j, key, out, parse_stream_mode); }
void read(const Json& j, const std::string& key, Decoder& out) { read_enum(j, key, out, parse_decoder); }
void read(const Json& j, const std::string& key, kernels::Policy& out) {
  read_enum(j, key, out, [](std::string_view s) {
    if (s == "parallel") return kernels::Policy::kParallel;
    if (s == "serial") return kernels::Policy::kSerial;
    fail(errc::kConfig, "unknown policy '" + std::string(s) + "' (expected parallel or serial)");
  });
}

Json write(std::size_t v) { return v; }
Json write(double v) { return v; }
Json write(const std::string& v) { return v; }
Json write(IntRange v) { return Json::array({v.lo, v.hi}); }
template <class T>
Json write(const std::array<T, 3>& v) {
  return Json::array({v[0], v[1], v[2]});
}
Json write(Preset p) { return std::string(preset_name(p)); }
Json write(CosineMode m) { return std::string(cosine_mode_name(m)); }
Json write(StreamMode m) { return std::string(stream_mode_name(m)); }
Json write(Decoder d) { return std::string(decoder_name(d)); }
Json write(kernels::Policy p) { return p == kernels::Policy::kParallel ? "parallel" : "serial"; }

// Single source of truth for the document layout. An empty section means a
// top-level key.
template <class C, class F>
void visit_fields(C& c, F&& f) {
  auto& g = c.generator;
  f("generator", "feature_dim", g.feature_dim);
  f("generator", "vocab_size", g.vocab_size);
  f("generator", "num_intents", g.num_intents);
  f("generator", "template_length", g.template_length);
  f("generator", "num_speakers", g.num_speakers);
  f("generator", "speaker_offset_scale", g.speaker_offset_scale);
  f("generator", "frame_noise_sigma", g.frame_noise_sigma);
  f("generator", "repeats_per_token", g.repeats_per_token);
  f("generator", "filler_tokens", g.filler_tokens);
  f("generator", "filler_vocab", g.filler_vocab);
  f("generator", "utterances_per_intent_per_speaker", g.utterances_per_intent_per_speaker);
  f("generator", "language_seed", g.language_seed);
  f("generator", "split", c.split);
  f("generator", "attack_speakers", c.attack_speakers);
  f("generator", "attack_utterances_per_intent_per_speaker", c.attack_utterances_per_intent_per_speaker);
  f("generator", "attack_split", c.attack_split);

  auto& e = c.encoder;
  f("encoder", "hidden_dim", e.hidden_dim);
  f("encoder", "num_layers", e.num_layers);
  f("encoder", "num_heads", e.num_heads);
  f("encoder", "ffn_dim", e.ffn_dim);
  f("encoder", "dropout_rate", e.dropout_rate);
  f("encoder", "max_seq_len", e.max_seq_len);
  f("encoder", "decoder_dim", c.decoder_dim);
  f("encoder", "ir_hidden", c.ir_hidden);
  f("encoder", "embedding_dim", c.embedding_dim);

  f("partition", "shared_dim", c.shared_dim);
  f("partition", "sh_prefix", c.sh_prefix);

  auto& w = c.loss_weights;
  f("loss_weights", "lambda1", w.lambda1);
  f("loss_weights", "lambda2", w.lambda2);
  f("loss_weights", "lambda3", w.lambda3);
  f("loss_weights", "lambda4", w.lambda4);
  f("loss_weights", "alpha", w.alpha);
  f("loss_weights", "triplet_margin", w.triplet_margin);
  f("loss_weights", "cosine_mode", w.cosine_mode);

  auto& t = c.train;
  f("train", "learning_rate", t.adam.learning_rate);
  f("train", "beta1", t.adam.beta1);
  f("train", "beta2", t.adam.beta2);
  f("train", "epsilon", t.adam.epsilon);
  f("train", "grad_clip_norm", t.adam.clip_norm);
  f("train", "batch_size", t.batch_size);
  f("train", "speaker_group", t.speaker_group);
  f("train", "epochs_pretrain", t.epochs_pretrain);
  f("train", "epochs_main", t.epochs_main);
  f("train", "epochs_adv", t.epochs_adv);
  f("train", "epochs_attack", t.epochs_attack);
  f("train", "stream_mode", t.stream_mode);
  f("train", "stream_ratio", t.stream_ratio);
  f("train", "policy", t.policy);
  f("train", "attacker_init_seed", c.attacker_init_seed);

  f("eval", "num_pairs", c.eval.num_pairs);
  f("eval", "pair_seed", c.eval.pair_seed);
  f("eval", "decoder", c.eval.decoder);

  f("", "preset", c.preset);
  f("", "seed", c.seed);
  f("", "out_dir", c.out_dir);
}

const std::vector<std::string> kSections = {"generator", "encoder", "partition", "loss_weights", "train", "eval"};

void check_fractions(const std::array<double, 3>& f, const char* key) {
  double s = 0;
  for (double x : f) {
    if (!(x > 0) || !std::isfinite(x)) fail(errc::kConfig, std::string(key) + ": fractions must be positive");
    s += x;
  }
  if (std::fabs(s - 1.0) > 1e-9) fail(errc::kConfig, std::string(key) + ": fractions must sum to 1");
}

}  // namespace

std::string_view decoder_name(Decoder d) { return d == Decoder::kCtcGreedy ? "ctc" : "attention"; }

Decoder parse_decoder(std::string_view name) {
  if (name == "ctc") return Decoder::kCtcGreedy;
  if (name == "attention") return Decoder::kAttentionGreedy;
  fail(errc::kConfig, "unknown decoder '" + std::string(name) + "' (expected ctc or attention)");
}

void RunConfig::validate() const {
  generator_config().validate();
  if (attack_speakers < 2) fail(errc::kConfig, "generator.attack_speakers must be >= 2");
  if (attack_utterances_per_intent_per_speaker == 0) {
    fail(errc::kConfig, "generator.attack_utterances_per_intent_per_speaker must be >= 1");
  }
  check_fractions(split, "generator.split");
  check_fractions(attack_split, "generator.attack_split");
  for (Preset p : all_presets()) model_config(p).validate();
  train_config(preset).validate();
  if (eval.num_pairs < 2) fail(errc::kConfig, "eval.num_pairs must be >= 2");
  if (out_dir.empty()) fail(errc::kConfig, "out_dir must be nonempty");
}

GeneratorConfig RunConfig::generator_config() const {
  GeneratorConfig g = generator;
  g.seed = seed;
  return g;
}

GeneratorConfig RunConfig::attack_config() const {
  GeneratorConfig a = generator;
  a.num_speakers = attack_speakers;
  a.utterances_per_intent_per_speaker = attack_utterances_per_intent_per_speaker;
  return a;
}

ModelConfig RunConfig::model_config(Preset p) const {
  ModelConfig m;
  m.encoder = encoder;
  m.encoder.input_dim = generator.feature_dim;
  m.partition = preset_partition(p, encoder.hidden_dim, sh_prefix, shared_dim);
  m.vocab_size = generator.vocab_size;
  m.num_intents = generator.num_intents;
  m.ir_hidden = ir_hidden;
  m.embedding_dim = embedding_dim;
  m.decoder_dim = decoder_dim;
  m.init_seed = seed;
  return m;
}

ModelConfig RunConfig::pretrain_model_config() const { return model_config(Preset::kMlSai); }

TrainConfig RunConfig::train_config(Preset p) const {
  TrainConfig t = train;
  t.weights = loss_weights;
  t.preset = p;
  t.seed = seed;
  return t;
}

AttackerConfig RunConfig::attacker_config() const {
  return {decoder_dim, ir_hidden, embedding_dim, attacker_init_seed};
}

RunConfig parse_run_config(std::string_view json_text) {
  Json doc;
  try {
    doc = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    fail(errc::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(errc::kConfig, "config must be a JSON object");

  RunConfig cfg;
  std::map<std::string, std::set<std::string>> known;
  visit_fields(cfg, [&](const std::string& section, const std::string& key, auto& field) {
    known[section].insert(key);
    const Json* node = &doc;
    if (!section.empty()) {
      auto it = doc.find(section);
      if (it == doc.end()) return;
      if (!it->is_object()) fail(errc::kConfig, "config section '" + section + "' must be an object");
      node = &*it;
    }
    auto it = node->find(key);
    if (it == node->end()) return;
    read(*it, section.empty() ? key : section + "." + key, field);
  });
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const bool is_section = std::find(kSections.begin(), kSections.end(), it.key()) != kSections.end();
    if (is_section) {
      for (auto jt = it->begin(); jt != it->end(); ++jt) {
        if (!known[it.key()].count(jt.key())) {
          fail(errc::kConfig, "unknown config key '" + it.key() + "." + jt.key() + "'");
        }
      }
    } else if (!known[""].count(it.key())) {
      fail(errc::kConfig, "unknown config key '" + it.key() + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string to_json(const RunConfig& cfg) {
  Json doc = Json::object();
  for (const auto& s : kSections) doc[s] = Json::object();
  RunConfig copy = cfg;
  visit_fields(copy, [&](const std::string& section, const std::string& key, auto& field) {
    if (section.empty()) {
      doc[key] = write(field);
    } else {
      doc[section][key] = write(field);
    }
  });
  return doc.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  try {
    return parse_run_config(io::read_file(path));
  } catch (const Error& e) {
    if (e.code() == errc::kConfig) fail(errc::kConfig, path.string() + ": " + e.what());
    throw;
  }
}

void apply_env_overrides(RunConfig& cfg) {
  const char* env = std::getenv("PPSLU_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0' || errno != 0 || env[0] == '-') {
    fail(errc::kConfig, "PPSLU_SEED must be a non-negative integer, got '" + std::string(env) + "'");
  }
  cfg.seed = v;
}

}  // namespace ppslu
