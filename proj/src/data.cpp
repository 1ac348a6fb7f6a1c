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

#include "ppslu/data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "ppslu/binary_io.hpp"
#include "ppslu/error.hpp"
#include "ppslu/rng.hpp"

namespace ppslu {
namespace {

constexpr std::string_view kCorpusMagic = "PPSC";
constexpr int kTemplateCandidates = 4096;

enum Stream : std::uint64_t {
  kPrototypes = 1,
  kTemplates = 2,
  kOffsets = 3,
  kRender = 4,
};

int uniform_int(std::mt19937_64& rng, IntRange r) {
  return std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
}

void check_range(const char* name, IntRange r, int min_lo) {
  if (r.lo < min_lo || r.hi < r.lo) {
    fail(errc::kConfig, std::string(name) + " range [" + std::to_string(r.lo) + "," +
                            std::to_string(r.hi) + "] is invalid");
  }
}

std::string range_text(IntRange r) { return std::to_string(r.lo) + "," + std::to_string(r.hi); }

IntRange parse_range(const std::string& key, const std::string& v) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) fail(errc::kConfig, key + ": expected lo,hi");
  return {std::stoi(v.substr(0, comma)), std::stoi(v.substr(comma + 1))};
}

// Uniform over [lo, hi) excluding `avoid`.
Token draw_token(std::mt19937_64& rng, std::size_t lo, std::size_t hi, int avoid) {
  std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
  for (;;) {
    const auto t = static_cast<int>(pick(rng));
    if (t != avoid) return static_cast<Token>(t);
  }
}

// One candidate template set, or empty if rejection sampling gets stuck.
std::vector<std::vector<Token>> draw_templates(const GeneratorConfig& cfg, std::mt19937_64& rng) {
  const std::size_t content = cfg.vocab_size - cfg.filler_vocab;
  std::vector<std::vector<Token>> templates;
  std::vector<std::set<Token>> token_sets;
  for (std::size_t i = 0; i < cfg.num_intents; ++i) {
    for (int attempt = 0;; ++attempt) {
      if (attempt > 20000) return {};
      const int len = uniform_int(rng, cfg.template_length);
      std::vector<Token> tpl;
      for (int j = 0; j < len; ++j) tpl.push_back(draw_token(rng, 0, content, tpl.empty() ? -1 : tpl.back()));
      const std::set<Token> tokens(tpl.begin(), tpl.end());
      const bool separable = std::all_of(token_sets.begin(), token_sets.end(), [&](const auto& other) {
        std::size_t shared = 0;
        for (Token t : tokens) shared += other.count(t);
        return shared <= 1 && shared < tokens.size() && shared < other.size();
      });
      if (separable) {
        token_sets.push_back(tokens);
        templates.push_back(std::move(tpl));
        break;
      }
    }
  }
  return templates;
}

// Worst-case separation of intents after mean pooling. Fillers dilute the
// template mean toward the filler span, so each intent traces a segment
// s * m_i (s in [0.4, 1]) once the filler directions are projected out.
double template_margin(const std::vector<std::vector<Token>>& templates, const GeneratorConfig& cfg,
                       const std::vector<double>& protos) {
  const std::size_t F = cfg.feature_dim;
  std::vector<std::vector<double>> basis;
  for (std::size_t t = cfg.vocab_size - cfg.filler_vocab; t < cfg.vocab_size; ++t) {
    std::vector<double> v(protos.begin() + static_cast<std::ptrdiff_t>(t * F),
                          protos.begin() + static_cast<std::ptrdiff_t>((t + 1) * F));
    for (const auto& e : basis) {
      const double d = std::inner_product(v.begin(), v.end(), e.begin(), 0.0);
      for (std::size_t j = 0; j < F; ++j) v[j] -= d * e[j];
    }
    const double n = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (n < 1e-9) continue;
    for (double& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  std::vector<std::vector<double>> means;
  for (const auto& tpl : templates) {
    std::vector<double> m(F, 0.0);
    for (Token t : tpl) {
      for (std::size_t j = 0; j < F; ++j) m[j] += protos[t * F + j] / static_cast<double>(tpl.size());
    }
    for (const auto& e : basis) {
      const double d = std::inner_product(m.begin(), m.end(), e.begin(), 0.0);
      for (std::size_t j = 0; j < F; ++j) m[j] -= d * e[j];
    }
    means.push_back(std::move(m));
  }
  constexpr std::array kScales{0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < means.size(); ++a) {
    for (std::size_t b = a + 1; b < means.size(); ++b) {
      for (double sa : kScales) {
        for (double sb : kScales) {
          double d = 0;
          for (std::size_t j = 0; j < F; ++j) {
            d += (sa * means[a][j] - sb * means[b][j]) * (sa * means[a][j] - sb * means[b][j]);
          }
          margin = std::min(margin, d);
        }
      }
    }
  }
  return std::sqrt(margin);
}

}  // namespace

void GeneratorConfig::validate() const {
  if (feature_dim < 1) fail(errc::kConfig, "feature_dim must be >= 1");
  if (vocab_size < 3) fail(errc::kConfig, "vocab_size must be >= 3");
  if (filler_vocab == 1 || filler_vocab + 2 > vocab_size) {
    fail(errc::kConfig, "filler_vocab must be 0 or in [2, vocab_size - 2]");
  }
  if (num_intents < 1) fail(errc::kConfig, "num_intents must be >= 1");
  if (num_speakers < 1) fail(errc::kConfig, "num_speakers must be >= 1");
  if (utterances_per_intent_per_speaker < 1) {
    fail(errc::kConfig, "utterances_per_intent_per_speaker must be >= 1");
  }
  check_range("template_length", template_length, 1);
  check_range("repeats_per_token", repeats_per_token, 1);
  check_range("filler_tokens", filler_tokens, 0);
  if (template_length.hi + filler_tokens.hi > 8) {
    fail(errc::kConfig, "template_length.hi + filler_tokens.hi must not exceed 8 tokens");
  }
  if (!(frame_noise_sigma >= 0.0) || !std::isfinite(frame_noise_sigma)) {
    fail(errc::kConfig, "frame_noise_sigma must be finite and >= 0");
  }
  if (!(speaker_offset_scale >= 0.0) || !std::isfinite(speaker_offset_scale)) {
    fail(errc::kConfig, "speaker_offset_scale must be finite and >= 0");
  }
  if (speaker_id_base + num_speakers > 65535) fail(errc::kConfig, "speaker ids exceed u16 range");
}

std::string GeneratorConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "feature_dim=" << feature_dim << '\n'
     << "filler_tokens=" << range_text(filler_tokens) << '\n'
     << "filler_vocab=" << filler_vocab << '\n'
     << "frame_noise_sigma=" << frame_noise_sigma << '\n'
     << "language_seed=" << language_seed << '\n'
     << "num_intents=" << num_intents << '\n'
     << "num_speakers=" << num_speakers << '\n'
     << "repeats_per_token=" << range_text(repeats_per_token) << '\n'
     << "seed=" << seed << '\n'
     << "speaker_id_base=" << speaker_id_base << '\n'
     << "speaker_offset_scale=" << speaker_offset_scale << '\n'
     << "template_length=" << range_text(template_length) << '\n'
     << "utterances_per_intent_per_speaker=" << utterances_per_intent_per_speaker << '\n'
     << "vocab_size=" << vocab_size << '\n';
  return os.str();
}

GeneratorConfig GeneratorConfig::from_text(std::string_view text) {
  GeneratorConfig cfg;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(errc::kConfig, "generator config line without '=': " + line);
    const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
    if (key == "feature_dim") cfg.feature_dim = std::stoull(v);
    else if (key == "filler_vocab") cfg.filler_vocab = std::stoull(v);
    else if (key == "filler_tokens") cfg.filler_tokens = parse_range(key, v);
    else if (key == "frame_noise_sigma") cfg.frame_noise_sigma = std::stod(v);
    else if (key == "language_seed") cfg.language_seed = std::stoull(v);
    else if (key == "num_intents") cfg.num_intents = std::stoull(v);
    else if (key == "num_speakers") cfg.num_speakers = std::stoull(v);
    else if (key == "repeats_per_token") cfg.repeats_per_token = parse_range(key, v);
    else if (key == "seed") cfg.seed = std::stoull(v);
    else if (key == "speaker_id_base") cfg.speaker_id_base = std::stoull(v);
    else if (key == "speaker_offset_scale") cfg.speaker_offset_scale = std::stod(v);
    else if (key == "template_length") cfg.template_length = parse_range(key, v);
    else if (key == "utterances_per_intent_per_speaker") cfg.utterances_per_intent_per_speaker = std::stoull(v);
    else if (key == "vocab_size") cfg.vocab_size = std::stoull(v);
    else fail(errc::kConfig, "unknown generator config key '" + key + "'");
  }
  return cfg;
}

Tensor Utterance::frames_tensor() const {
  return Tensor::matrix(num_frames, feature_dim, frames);
}

std::size_t Corpus::feature_dim() const {
  return utterances.empty() ? 0 : utterances.front().feature_dim;
}

std::size_t Corpus::num_intents() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n = std::max<std::size_t>(n, u.intent + 1u);
  return n;
}

std::vector<std::uint16_t> Corpus::speakers() const {
  std::set<std::uint16_t> s;
  for (const auto& u : utterances) s.insert(u.speaker);
  return {s.begin(), s.end()};
}

Corpus Corpus::subset(std::span<const std::size_t> indices) const {
  Corpus out;
  out.config_text = config_text;
  out.utterances.reserve(indices.size());
  for (std::size_t i : indices) out.utterances.push_back(utterances.at(i));
  return out;
}

Language make_language(const GeneratorConfig& cfg) {
  cfg.validate();
  Language lang;
  lang.feature_dim = cfg.feature_dim;
  lang.vocab_size = cfg.vocab_size;
  lang.prototypes.resize(cfg.vocab_size * cfg.feature_dim);
  {
    std::mt19937_64 rng(mix_seed(cfg.language_seed, kPrototypes));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : lang.prototypes) x = normal(rng);
  }
  // Templates avoid adjacent repeats (indistinguishable from a longer token)
  // and pairwise share at most one distinct token. Among a fixed number of
  // such candidates the one with the widest intent margin wins.
  std::mt19937_64 rng(mix_seed(cfg.language_seed, kTemplates));
  double best_margin = -1.0;
  for (int candidate = 0; candidate < kTemplateCandidates; ++candidate) {
    auto templates = draw_templates(cfg, rng);
    if (templates.empty()) continue;
    const double margin = template_margin(templates, cfg, lang.prototypes);
    if (margin > best_margin) {
      best_margin = margin;
      lang.templates = std::move(templates);
    }
  }
  if (lang.templates.empty()) fail(errc::kConfig, "cannot draw separable intent templates; enlarge vocab");
  return lang;
}

std::vector<double> make_speaker_offsets(const GeneratorConfig& cfg) {
  cfg.validate();
  std::vector<double> offsets(cfg.num_speakers * cfg.feature_dim);
  std::mt19937_64 rng(mix_seed(cfg.seed, kOffsets));
  std::normal_distribution<double> normal(0.0, cfg.speaker_offset_scale);
  for (double& x : offsets) x = cfg.speaker_offset_scale > 0.0 ? normal(rng) : 0.0;
  return offsets;
}

Corpus generate_corpus(const GeneratorConfig& cfg) {
  const Language lang = make_language(cfg);
  const std::vector<double> offsets = make_speaker_offsets(cfg);
  const std::size_t F = cfg.feature_dim;

  Corpus corpus;
  corpus.config_text = cfg.to_text();
  corpus.utterances.reserve(cfg.num_speakers * cfg.num_intents * cfg.utterances_per_intent_per_speaker);

  const std::size_t filler_lo = cfg.vocab_size - cfg.filler_vocab;
  std::mt19937_64 rng(mix_seed(cfg.seed, kRender));
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t s = 0; s < cfg.num_speakers; ++s) {
    const double* offset = offsets.data() + s * F;
    for (std::size_t intent = 0; intent < cfg.num_intents; ++intent) {
      for (std::size_t k = 0; k < cfg.utterances_per_intent_per_speaker; ++k) {
        Utterance u;
        u.intent = static_cast<std::uint16_t>(intent);
        u.speaker = static_cast<std::uint16_t>(cfg.speaker_id_base + s);
        u.feature_dim = F;
        u.tokens = lang.templates[intent];
        // Fillers go before or after the template, never inside it.
        const int fillers = uniform_int(rng, cfg.filler_tokens);
        for (int f = 0; f < fillers; ++f) {
          if (std::bernoulli_distribution(0.5)(rng)) {
            u.tokens.insert(u.tokens.begin(), draw_token(rng, filler_lo, cfg.vocab_size, u.tokens.front()));
          } else {
            u.tokens.push_back(draw_token(rng, filler_lo, cfg.vocab_size, u.tokens.back()));
          }
        }
        for (Token t : u.tokens) {
          const int repeats = uniform_int(rng, cfg.repeats_per_token);
          const double* proto = lang.prototypes.data() + t * F;
          for (int r = 0; r < repeats; ++r) {
            for (std::size_t j = 0; j < F; ++j) {
              u.frames.push_back(proto[j] + offset[j] + cfg.frame_noise_sigma * noise(rng));
            }
          }
          u.num_frames += static_cast<std::size_t>(repeats);
        }
        corpus.utterances.push_back(std::move(u));
      }
    }
  }
  return corpus;
}

CorpusSplit split_corpus(const Corpus& corpus, std::array<double, 3> fractions, std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) fail(errc::kInvalidArgument, "split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    fail(errc::kInvalidArgument, "split fractions must sum to 1, got " + std::to_string(total));
  }
  std::mt19937_64 rng(mix_seed(seed, 1));

  // Groups by (intent, speaker), shuffled internally.
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& u = corpus.utterances[i];
    groups[{u.intent, u.speaker}].push_back(i);
  }
  for (auto& [key, members] : groups) std::shuffle(members.begin(), members.end(), rng);

  // Within each intent, walk items by rank inside their (intent, speaker)
  // group and deal splits by largest deficit. Speakers are reshuffled at every
  // rank; a fixed order would hand whole groups to the same split, and then
  // same-speaker test pairs would mostly share an intent.
  std::map<int, std::vector<std::vector<std::size_t>*>> by_intent;
  for (auto& [key, members] : groups) by_intent[key.first].push_back(&members);

  std::array<std::vector<std::size_t>, 3> assigned;
  for (auto& [intent, speaker_groups] : by_intent) {
    std::size_t max_rank = 0;
    for (const auto* g : speaker_groups) max_rank = std::max(max_rank, g->size());
    std::array<std::size_t, 3> counts{};
    std::size_t seen = 0;
    for (std::size_t rank = 0; rank < max_rank; ++rank) {
      std::shuffle(speaker_groups.begin(), speaker_groups.end(), rng);
      for (const auto* g : speaker_groups) {
        if (rank >= g->size()) continue;
        ++seen;
        std::size_t best = 0;
        double best_deficit = -1e300;
        for (std::size_t k = 0; k < 3; ++k) {
          const double deficit = fractions[k] * static_cast<double>(seen) - static_cast<double>(counts[k]);
          if (deficit > best_deficit + 1e-12) {
            best_deficit = deficit;
            best = k;
          }
        }
        ++counts[best];
        assigned[best].push_back((*g)[rank]);
      }
    }
  }
  for (auto& a : assigned) std::sort(a.begin(), a.end());
  return {corpus.subset(assigned[0]), corpus.subset(assigned[1]), corpus.subset(assigned[2])};
}

GeneratorConfig attack_generator_config(const GeneratorConfig& attack, const GeneratorConfig& base,
                                        std::uint64_t seed) {
  GeneratorConfig cfg = base;
  cfg.num_speakers = attack.num_speakers;
  cfg.utterances_per_intent_per_speaker = attack.utterances_per_intent_per_speaker;
  cfg.speaker_id_base = base.speaker_id_base + base.num_speakers;
  cfg.seed = seed;
  if (cfg.seed == base.seed) cfg.seed = mix_seed(seed, 0xa77ac);
  return cfg;
}

Corpus make_attack_corpus(const GeneratorConfig& attack, const GeneratorConfig& base,
                          std::uint64_t seed) {
  return generate_corpus(attack_generator_config(attack, base, seed));
}

namespace {

std::map<std::uint16_t, std::vector<std::size_t>> by_speaker(const Corpus& corpus) {
  std::map<std::uint16_t, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) out[corpus.utterances[i].speaker].push_back(i);
  return out;
}

std::size_t pick_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::vector<Triplet> make_triplets(const Corpus& corpus, std::size_t count, std::uint64_t seed) {
  const auto speakers = by_speaker(corpus);
  std::vector<const std::vector<std::size_t>*> anchors;
  std::vector<const std::vector<std::size_t>*> all;
  for (const auto& [spk, idx] : speakers) {
    all.push_back(&idx);
    if (idx.size() >= 2) anchors.push_back(&idx);
  }
  if (all.size() < 2 || anchors.empty()) {
    fail(errc::kInvalidArgument, "make_triplets needs >= 2 speakers and one with >= 2 utterances");
  }
  std::mt19937_64 rng(mix_seed(seed, 2));
  std::vector<Triplet> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const auto* pos_group = anchors[pick_index(rng, anchors.size())];
    const std::size_t a = pick_index(rng, pos_group->size());
    std::size_t p = pick_index(rng, pos_group->size() - 1);
    if (p >= a) ++p;
    const std::vector<std::size_t>* neg_group;
    do {
      neg_group = all[pick_index(rng, all.size())];
    } while (neg_group == pos_group);
    out.push_back({(*pos_group)[a], (*pos_group)[p], (*neg_group)[pick_index(rng, neg_group->size())]});
  }
  return out;
}

std::vector<VerificationPair> make_verification_pairs(const Corpus& corpus, std::size_t count,
                                                      std::uint64_t seed) {
  const auto speakers = by_speaker(corpus);
  std::vector<const std::vector<std::size_t>*> multi, all;
  for (const auto& [spk, idx] : speakers) {
    all.push_back(&idx);
    if (idx.size() >= 2) multi.push_back(&idx);
  }
  if (all.size() < 2 || multi.empty()) {
    fail(errc::kInvalidArgument,
         "verification pairs need >= 2 speakers and one with >= 2 utterances");
  }
  std::mt19937_64 rng(mix_seed(seed, 3));
  std::vector<VerificationPair> out;
  out.reserve(count);
  const std::size_t same = count / 2;
  for (std::size_t n = 0; n < count; ++n) {
    if (n < same) {
      const auto* g = multi[pick_index(rng, multi.size())];
      const std::size_t a = pick_index(rng, g->size());
      std::size_t b = pick_index(rng, g->size() - 1);
      if (b >= a) ++b;
      out.push_back({(*g)[a], (*g)[b], true});
    } else {
      const std::size_t ga = pick_index(rng, all.size());
      std::size_t gb = pick_index(rng, all.size() - 1);
      if (gb >= ga) ++gb;
      out.push_back({(*all[ga])[pick_index(rng, all[ga]->size())],
                     (*all[gb])[pick_index(rng, all[gb]->size())], false});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

TaskStreams partition_streams(const Corpus& corpus, std::array<std::size_t, 3> ratio,
                              std::uint64_t seed) {
  const std::size_t period = ratio[0] + ratio[1] + ratio[2];
  if (ratio[0] == 0 || ratio[1] == 0 || ratio[2] == 0) {
    fail(errc::kInvalidArgument, "every task stream needs a positive share");
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(mix_seed(seed, 4));
  std::shuffle(order.begin(), order.end(), rng);
  TaskStreams streams;
  for (std::size_t j = 0; j < order.size(); ++j) {
    const std::size_t slot = j % period;
    if (slot < ratio[0]) streams.slu.push_back(order[j]);
    else if (slot < ratio[0] + ratio[1]) streams.asr.push_back(order[j]);
    else streams.ir.push_back(order[j]);
  }
  for (auto* s : {&streams.slu, &streams.asr, &streams.ir}) std::sort(s->begin(), s->end());
  return streams;
}

std::string encode_corpus(const Corpus& corpus) {
  io::Writer w;
  w.bytes(kCorpusMagic);
  w.u32(kCorpusVersion);
  w.string(corpus.config_text);
  w.u32(static_cast<std::uint32_t>(corpus.size()));
  for (const auto& u : corpus.utterances) {
    w.u32(static_cast<std::uint32_t>(u.num_frames));
    w.u32(static_cast<std::uint32_t>(u.feature_dim));
    for (double x : u.frames) w.f64(x);
    w.u16(static_cast<std::uint16_t>(u.tokens.size()));
    for (Token t : u.tokens) w.u16(t);
    w.u16(u.intent);
    w.u16(u.speaker);
  }
  return w.take();
}

Corpus decode_corpus(std::string_view bytes) {
  io::Reader r(bytes);
  if (r.bytes(4) != kCorpusMagic) fail(errc::kFormat, "not a corpus file (bad magic) at byte offset 0");
  const std::uint32_t version = r.u32();
  if (version != kCorpusVersion) {
    fail(errc::kVersion, "corpus file version " + std::to_string(version) + ", expected " +
                             std::to_string(kCorpusVersion));
  }
  Corpus c;
  c.config_text = r.string();
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Utterance u;
    u.num_frames = r.u32();
    u.feature_dim = r.u32();
    if (u.num_frames == 0 || u.feature_dim == 0) r.malformed("empty frame matrix");
    if (i > 0 && u.feature_dim != c.utterances.front().feature_dim) r.malformed("inconsistent feature_dim");
    const std::size_t values = u.num_frames * u.feature_dim;
    if (values > bytes.size()) r.malformed("frame matrix larger than file");
    u.frames.resize(values);
    for (double& x : u.frames) x = r.f64();
    const std::uint16_t tokens = r.u16();
    u.tokens.resize(tokens);
    for (Token& t : u.tokens) t = r.u16();
    u.intent = r.u16();
    u.speaker = r.u16();
    c.utterances.push_back(std::move(u));
  }
  if (!r.at_end()) r.malformed("trailing bytes after last utterance");
  return c;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  io::write_file(path, encode_corpus(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) { return decode_corpus(io::read_file(path)); }

}  // namespace ppslu
