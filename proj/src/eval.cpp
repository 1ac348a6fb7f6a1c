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

#include "ppslu/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <tuple>

#include "ppslu/error.hpp"
#include "ppslu/rng.hpp"

namespace ppslu {
namespace {

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double cosine_score(const Tensor& a, const Tensor& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double den = std::sqrt(aa) * std::sqrt(bb);
  return den > 0 ? ab / den : 0.0;
}

std::vector<Tensor> hidden_states(const ModelBundle& model, const Corpus& corpus, kernels::Policy policy) {
  std::vector<Tensor> out(corpus.size());
  kernels::for_each_index(
      corpus.size(),
      [&](std::size_t i) {
        NoGradScope no_grad;
        out[i] = model.encode(corpus.utterances[i].frames_tensor());
      },
      policy);
  return out;
}

template <class ViewFn>
std::vector<Tensor> map_views(const std::vector<Tensor>& hidden, ViewFn fn) {
  std::vector<Tensor> out;
  out.reserve(hidden.size());
  NoGradScope no_grad;
  for (const auto& h : hidden) out.push_back(fn(h));
  return out;
}

double accuracy_on(const SluHead& head, const std::vector<Tensor>& views, const Corpus& corpus,
                   kernels::Policy policy) {
  if (corpus.size() == 0) fail(errc::kInvalidArgument, "accuracy on an empty split");
  std::vector<int> hit(corpus.size(), 0);
  kernels::for_each_index(
      corpus.size(),
      [&](std::size_t i) {
        NoGradScope no_grad;
        hit[i] = argmax(head(views[i]).values()) == corpus.utterances[i].intent;
      },
      policy);
  std::size_t n = 0;
  for (int h : hit) n += static_cast<std::size_t>(h);
  return static_cast<double>(n) / static_cast<double>(corpus.size());
}

double wer_on(const AsrHead& head, const std::vector<Tensor>& views, const Corpus& corpus, Decoder decoder,
              kernels::Policy policy) {
  std::vector<std::vector<Token>> hyp(corpus.size());
  kernels::for_each_index(
      corpus.size(),
      [&](std::size_t i) {
        NoGradScope no_grad;
        hyp[i] = decoder == Decoder::kCtcGreedy ? ctc_greedy_decode(head.ctc_log_probs(views[i]), head.blank())
                                                : attention_greedy_decode(head, views[i]);
      },
      policy);
  WerTotals totals;
  for (std::size_t i = 0; i < corpus.size(); ++i) totals.add(corpus.utterances[i].tokens, hyp[i]);
  return totals.value();
}

std::vector<Tensor> embeddings_on(const IrHead& head, const std::vector<Tensor>& views, kernels::Policy policy) {
  std::vector<Tensor> out(views.size());
  kernels::for_each_index(
      views.size(),
      [&](std::size_t i) {
        NoGradScope no_grad;
        out[i] = head(views[i]);
      },
      policy);
  return out;
}

struct Heads {
  const SluHead* slu;
  const AsrHead* asr;
  const IrHead* ir;
};

// Shared body of every evaluation: SLU on its own view, attackers on
// `attack_view` of the same hidden states.
template <class SluView, class AttackView>
EvalRow evaluate_with(const ModelBundle& model, Heads heads, const Corpus& test, const Corpus& dev,
                      const EvalOptions& opt, SluView slu_view, AttackView attack_view, AttackView ir_view) {
  if (dev.size() == 0) fail(errc::kInvalidArgument, "verification needs a nonempty dev split");
  const auto h_test = hidden_states(model, test, opt.policy);
  const auto h_dev = hidden_states(model, dev, opt.policy);
  EvalRow row;
  row.acc_slu = accuracy_on(*heads.slu, map_views(h_test, slu_view), test, opt.policy);
  row.wer_asr = wer_on(*heads.asr, map_views(h_test, attack_view), test, opt.decoder, opt.policy);
  const auto test_pairs = make_verification_pairs(test, opt.num_pairs, opt.pair_seed);
  const auto dev_pairs = make_verification_pairs(dev, opt.num_pairs, mix_seed(opt.pair_seed, 1));
  const auto ver = ir_verification_accuracy(embeddings_on(*heads.ir, map_views(h_test, ir_view), opt.policy),
                                            test_pairs,
                                            embeddings_on(*heads.ir, map_views(h_dev, ir_view), opt.policy),
                                            dev_pairs);
  row.acc_ir = ver.accuracy;
  row.n_utt = test.size();
  row.n_pairs = ver.n_pairs;
  if (!ver.balanced) row.warning = "unbalanced verification pairs";
  return row;
}

using ViewFn = std::function<Tensor(const Tensor&)>;

}  // namespace

// ---- metrics ------------------------------------------------------------------

std::size_t edit_distance(std::span<const Token> a, std::span<const Token> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1] ? 1u : 0u)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(std::span<const Token> reference, std::span<const Token> hypothesis) {
  if (reference.empty()) fail(errc::kInvalidArgument, "wer: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) / static_cast<double>(reference.size());
}

void WerTotals::add(std::span<const Token> reference, std::span<const Token> hypothesis) {
  if (reference.empty()) fail(errc::kInvalidArgument, "wer: empty reference");
  edits += edit_distance(reference, hypothesis);
  reference_tokens += reference.size();
}

double WerTotals::value() const {
  if (reference_tokens == 0) fail(errc::kInvalidArgument, "wer: no reference tokens");
  return static_cast<double>(edits) / static_cast<double>(reference_tokens);
}

VerificationResult verification_accuracy(std::span<const double> dev_scores, std::span<const std::uint8_t> dev_same,
                                         std::span<const double> test_scores,
                                         std::span<const std::uint8_t> test_same) {
  if (dev_scores.empty()) fail(errc::kInvalidArgument, "verification: empty dev pairs");
  if (test_scores.empty()) fail(errc::kInvalidArgument, "verification: empty test pairs");
  if (dev_scores.size() != dev_same.size() || test_scores.size() != test_same.size()) {
    fail(errc::kShape, "verification: scores and labels differ in length");
  }
  auto accuracy_at = [](std::span<const double> s, std::span<const std::uint8_t> y, double thr) {
    std::size_t ok = 0;
    for (std::size_t i = 0; i < s.size(); ++i) ok += (s[i] >= thr) == (y[i] != 0);
    return static_cast<double>(ok) / static_cast<double>(s.size());
  };
  std::vector<double> candidates(dev_scores.begin(), dev_scores.end());
  candidates.push_back(std::numeric_limits<double>::infinity());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best_thr = candidates.front();
  double best_acc = -1;
  for (double thr : candidates) {
    const double acc = accuracy_at(dev_scores, dev_same, thr);
    if (acc > best_acc) {
      best_acc = acc;
      best_thr = thr;
    }
  }
  VerificationResult out;
  out.threshold = best_thr;
  out.accuracy = accuracy_at(test_scores, test_same, best_thr);
  out.n_pairs = test_scores.size();
  const auto same = static_cast<std::size_t>(std::count_if(test_same.begin(), test_same.end(),
                                                           [](std::uint8_t y) { return y != 0; }));
  out.balanced = 2 * same == test_same.size();
  return out;
}

VerificationResult ir_verification_accuracy(std::span<const Tensor> test_embeddings,
                                            std::span<const VerificationPair> test_pairs,
                                            std::span<const Tensor> dev_embeddings,
                                            std::span<const VerificationPair> dev_pairs) {
  auto score = [](std::span<const Tensor> emb, std::span<const VerificationPair> pairs, std::vector<double>& s,
                  std::vector<std::uint8_t>& y) {
    for (const auto& p : pairs) {
      if (p.a >= emb.size() || p.b >= emb.size()) fail(errc::kBounds, "verification pair outside embeddings");
      s.push_back(cosine_score(emb[p.a], emb[p.b]));
      y.push_back(p.same_speaker);
    }
  };
  std::vector<double> ds, ts;
  std::vector<std::uint8_t> dy, ty;
  score(dev_embeddings, dev_pairs, ds, dy);
  score(test_embeddings, test_pairs, ts, ty);
  return verification_accuracy(ds, dy, ts, ty);
}

std::string_view scenario_name(Scenario s) {
  switch (s) {
    case Scenario::kNone: return "none";
    case Scenario::kS1: return "s1";
    case Scenario::kS2: return "s2";
  }
  return "none";
}

Scenario parse_scenario(std::string_view name) {
  if (name == "none") return Scenario::kNone;
  if (name == "s1" || name == "1") return Scenario::kS1;
  if (name == "s2" || name == "2") return Scenario::kS2;
  fail(errc::kConfig, "unknown scenario '" + std::string(name) + "' (expected 1 or 2)");
}

double slu_accuracy(const ModelBundle& model, const Corpus& test, kernels::Policy policy) {
  const auto h = hidden_states(model, test, policy);
  return accuracy_on(model.slu, map_views(h, [&](const Tensor& x) { return model.view(x, Task::kSlu); }), test,
                     policy);
}

EvalRow evaluate_plain(const ModelBundle& model, const Corpus& test, const Corpus& dev, const EvalOptions& opt) {
  const ViewFn slu = [&](const Tensor& h) { return model.view(h, Task::kSlu); };
  const ViewFn asr = [&](const Tensor& h) { return model.view(h, Task::kAsr); };
  const ViewFn ir = [&](const Tensor& h) { return model.view(h, Task::kIr); };
  EvalRow row = evaluate_with(model, {&model.slu, &model.asr, &model.ir}, test, dev, opt, slu, asr, ir);
  row.scenario = Scenario::kNone;
  return row;
}

EvalRow scenario1(const ModelBundle& model, const Corpus& test, const Corpus& dev, const EvalOptions& opt) {
  const PartitionSpec spec = model.partition();
  const ViewFn slu = [&](const Tensor& h) { return model.view(h, Task::kSlu); };
  const ViewFn seen = [spec](const Tensor& h) { return attacker_view(h, spec); };
  EvalRow row = evaluate_with(model, {&model.slu, &model.asr, &model.ir}, test, dev, opt, slu, seen, seen);
  row.scenario = Scenario::kS1;
  return row;
}

EvalRow scenario2(const ModelBundle& frozen, const AttackerHeads& attackers, const Corpus& attack_test,
                  const Corpus& attack_dev, const EvalOptions& opt) {
  const std::uint64_t before = frozen.encoder_checksum();
  if (before != attackers.encoder_checksum) {
    fail(errc::kProtocol, "attackers were trained against a different encoder (checksum mismatch)");
  }
  if (attackers.width() != frozen.partition().width(Task::kSlu)) {
    fail(errc::kShape, "attacker width " + std::to_string(attackers.width()) + " does not match the SLU view width " +
                           std::to_string(frozen.partition().width(Task::kSlu)));
  }
  const ViewFn slu = [&](const Tensor& h) { return frozen.view(h, Task::kSlu); };
  EvalRow row = evaluate_with(frozen, {&frozen.slu, &attackers.asr, &attackers.ir}, attack_test, attack_dev, opt,
                              slu, slu, slu);
  row.scenario = Scenario::kS2;
  if (frozen.encoder_checksum() != before) fail(errc::kProtocol, "encoder changed during evaluation");
  return row;
}

// ---- tables -------------------------------------------------------------------

std::string metrics_csv_header() { return "run_id,preset,scenario,acc_slu,wer_asr,acc_ir,n_utt,n_pairs,seed"; }

std::string to_csv(std::span<const EvalRow> rows) {
  std::string out = metrics_csv_header() + "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.6f,%.6f,%.6f,%zu,%zu,%llu\n", r.run_id.c_str(),
                  std::string(preset_name(r.preset)).c_str(), std::string(scenario_name(r.scenario)).c_str(),
                  r.acc_slu, r.wer_asr, r.acc_ir, r.n_utt, r.n_pairs, static_cast<unsigned long long>(r.seed));
    out += buf;
  }
  return out;
}

std::vector<EvalRow> parse_csv(std::string_view text) {
  std::vector<EvalRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != metrics_csv_header()) fail(errc::kFormat, "metrics csv: unexpected header '" + line + "'");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 9) fail(errc::kFormat, "metrics csv line " + std::to_string(lineno) + ": expected 9 fields");
    try {
      EvalRow r;
      r.run_id = f[0];
      r.preset = parse_preset(f[1]);
      r.scenario = parse_scenario(f[2]);
      r.acc_slu = std::stod(f[3]);
      r.wer_asr = std::stod(f[4]);
      r.acc_ir = std::stod(f[5]);
      r.n_utt = std::stoull(f[6]);
      r.n_pairs = std::stoull(f[7]);
      r.seed = std::stoull(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      fail(errc::kFormat, "metrics csv line " + std::to_string(lineno) + ": malformed number");
    }
  }
  if (lineno == 0) fail(errc::kFormat, "metrics csv is empty");
  return rows;
}

void sort_rows(std::vector<EvalRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const EvalRow& a, const EvalRow& b) {
    return std::tie(a.preset, a.scenario, a.run_id) < std::tie(b.preset, b.scenario, b.run_id);
  });
}

namespace {

struct Reference {
  const char* method;
  const char* slurp;
  const char* fsc;
};

// Published full-scale results. SLURP/FSC with a 12-layer 256-wide encoder.
constexpr Reference kMainTable[] = {
    {"ML-SAI", "74.1  12.6  82.8", "99.4  12.0  83.1"},        {"AT-SAI", "72.8  69.1  54.3", "98.2  77.1  55.0"},
    {"SH-PPSLU", "73.8  49.7  69.8", "99.3  65.3  77.2"},      {"SHA-PPSLU", "72.1  78.6  53.5", "98.0  88.0  53.0"},
    {"H-PPSLU-nocos", "73.9  75.3  69.0", "99.2  78.5  69.5"}, {"H-PPSLU", "73.4  87.4  66.2", "99.1  86.8  67.2"},
    {"HA-PPSLU", "72.2  89.8  52.2", "97.2  92.1  52.3"},
};
constexpr Reference kSharedTable[] = {
    {"H-PPSLU c=88", "73.8  78.5  67.6", "99.2  80.2  67.3"}, {"H-PPSLU c=76", "73.8  84.0  67.1", "99.0  85.9  67.3"},
    {"H-PPSLU c=64", "73.4  87.4  66.2", "99.1  86.8  67.2"}, {"H-PPSLU c=52", "73.2  89.0  65.3", "99.0  90.1  66.8"},
    {"H-PPSLU c=40", "72.8  86.1  63.7", "99.1  86.5  62.6"},
};
constexpr Reference kRetrainTable[] = {
    {"ML-SAI", "22.1  90.5", "23.3  90.2"},
    {"AT-SAI", "82.6  71.8", "83.0  77.8"},
    {"H-PPSLU", "42.5  75.3", "39.2  77.5"},
    {"HA-PPSLU", "92.1  60.2", "92.3  68.5"},
};

std::string pad(std::string s, std::size_t w) {
  // Counts code points so the arrow marks do not skew alignment.
  std::size_t len = 0;
  for (unsigned char c : s) len += (c & 0xc0) != 0x80;
  if (len < w) s.append(w - len, ' ');
  return s;
}

std::string pct(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * x);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string build_table(std::vector<EvalRow> rows) {
  if (rows.empty()) fail(errc::kInvalidArgument, "report needs at least one metrics row");
  sort_rows(rows);
  std::ostringstream out;
  out << "Desk-scale results on the synthetic corpus (percent)\n\n";
  const std::vector<std::pair<std::string, std::size_t>> cols = {
      {"preset", 15}, {"scenario", 9}, {"ACC-SLU↑", 10}, {"WER-ASR↑", 10}, {"ACC-IR↓", 9},
      {"n_utt", 7},   {"n_pairs", 8},  {"seed", 6},      {"run_id", 16}};
  std::string header;
  for (const auto& [name, w] : cols) header += pad(name, w);
  while (!header.empty() && header.back() == ' ') header.pop_back();
  out << header << "\n";
  out << std::string(90, '-') << "\n";
  for (const auto& r : rows) {
    std::string line;
    line += pad(std::string(preset_name(r.preset)), 15);
    line += pad(std::string(scenario_name(r.scenario)), 9);
    line += pad(pct(r.acc_slu), 10);
    line += pad(pct(r.wer_asr), 10);
    line += pad(pct(r.acc_ir), 9);
    line += pad(std::to_string(r.n_utt), 7);
    line += pad(std::to_string(r.n_pairs), 8);
    line += pad(std::to_string(r.seed), 6);
    line += r.run_id;
    out << line << "\n";
  }
  out << "\nScenarios: none = every head on its own view; s1 = jointly trained attacker heads on the SLU\n"
         "view only; s2 = attackers retrained from scratch on the frozen encoder, disjoint speakers.\n";

  out << "\nReference: published full-scale results (SLURP / FSC, real speech, 12-layer encoder).\n"
         "Not comparable with the synthetic desk-scale numbers above; shown for direction only.\n\n";
  out << pad("method", 16) << pad("SLURP SLU↑ WER↑ IR↓", 20) << "FSC SLU↑ WER↑ IR↓\n";
  for (const auto& r : kMainTable) out << pad(r.method, 16) << pad(r.slurp, 20) << r.fsc << "\n";
  out << "\nShared dimension c (d=256):\n";
  for (const auto& r : kSharedTable) out << pad(r.method, 16) << pad(r.slurp, 20) << r.fsc << "\n";
  out << "\nRetrained attackers:\n" << pad("method", 16) << pad("SLURP WER↑ IR↓", 20) << "FSC WER↑ IR↓\n";
  for (const auto& r : kRetrainTable) out << pad(r.method, 16) << pad(r.slurp, 20) << r.fsc << "\n";
  return out.str();
}

std::string build_svg(std::vector<EvalRow> rows) {
  if (rows.empty()) fail(errc::kInvalidArgument, "chart needs at least one metrics row");
  sort_rows(rows);
  const int group_w = 90, bar_w = 22, left = 50, top = 30, plot_h = 200;
  const int width = left + group_w * static_cast<int>(rows.size()) + 140;
  const int height = top + plot_h + 70;
  const char* colors[3] = {"#4878a8", "#d9822b", "#5a9e5a"};
  const char* labels[3] = {"ACC-SLU (up)", "WER-ASR (up)", "ACC-IR (down)"};
  std::ostringstream s;
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - 140 << "\" y2=\"" << top + plot_h
    << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const int y = top + plot_h - k * plot_h / 4;
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 3 << "\" text-anchor=\"end\">" << k * 25 << "</text>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double vals[3] = {rows[i].acc_slu, std::min(rows[i].wer_asr, 1.0), rows[i].acc_ir};
    const int x0 = left + static_cast<int>(i) * group_w + 10;
    for (int k = 0; k < 3; ++k) {
      const int h = static_cast<int>(std::lround(vals[k] * plot_h));
      s << "<rect x=\"" << x0 + k * bar_w << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w - 2
        << "\" height=\"" << h << "\" fill=\"" << colors[k] << "\"/>\n";
    }
    const std::string label = std::string(preset_name(rows[i].preset)) + " " + std::string(scenario_name(rows[i].scenario));
    s << "<text x=\"" << x0 + 33 << "\" y=\"" << top + plot_h + 14 << "\" text-anchor=\"middle\">"
      << xml_escape(label) << "</text>\n";
  }
  for (int k = 0; k < 3; ++k) {
    const int y = top + 10 + 16 * k;
    s << "<rect x=\"" << width - 130 << "\" y=\"" << y - 8 << "\" width=\"10\" height=\"10\" fill=\"" << colors[k]
      << "\"/>\n";
    s << "<text x=\"" << width - 115 << "\" y=\"" << y << "\">" << labels[k] << "</text>\n";
  }
  s << "<text x=\"" << left << "\" y=\"16\" font-size=\"12\">Desk-scale metrics (percent)</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace ppslu
