// Copyright 2026 The diin-cpp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Acceptance runner: one PASS/FAIL line per criterion C1..C9. Exit status is
// the number of failed criteria.

#include <chrono>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "diin/embedding.hpp"
#include "diin/encoding.hpp"
#include "diin/evaluation.hpp"
#include "diin/gradcheck.hpp"
#include "diin/interaction.hpp"
#include "diin/model.hpp"
#include "diin/training.hpp"
#include "test_support.hpp"

using namespace diin;
using namespace diin::testing;
namespace op = diin::ops;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool ok = true;
  std::ostringstream detail;
  std::vector<std::string> failures;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      failures.push_back(what);
    }
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// C1 gradient suite
// ---------------------------------------------------------------------------

void grad(Verdict& v, const std::string& name, const GraphBuilder& build, ParameterStore& s, double& worst,
          std::size_t& probes, GradCheckOptions opts = {}) {
  auto r = finite_difference_check(build, s, 1e-4, std::move(opts));
  worst = std::max(worst, r.max_error());
  probes += r.checked();
  std::ostringstream os;
  os << name << "\n" << r;
  v.check(r.passed() && r.checked() > 0, os.str());
}

void randomize_biases(ParameterStore& s, Rng& rng, double limit) {
  std::uniform_real_distribution<double> u(-limit, limit);
  for (const auto& p : s)
    if (p->kind == ParamKind::Bias)
      for (auto& x : p->value->data) x = u(rng);
}

void c1(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t probes = 0;

  using Unary = std::function<Var(Var)>;
  const std::vector<std::pair<std::string, Unary>> unaries = {
      {"relu", [](Var x) { return op::relu(x); }},
      {"sigmoid", [](Var x) { return op::sigmoid(x); }},
      {"tanh", [](Var x) { return op::tanh(x); }},
      {"abs", [](Var x) { return op::abs(x); }},
      {"scale", [](Var x) { return op::scale(x, -2.5); }},
      {"softmax0", [](Var x) { return op::softmax(x, 0); }},
      {"softmax1", [](Var x) { return op::softmax(x, 1); }},
      {"transpose", [](Var x) { return op::transpose(x); }},
      {"flatten", [](Var x) { return op::flatten(x); }},
      {"slice", [](Var x) { return op::slice(x, 1, 1, 3); }},
      {"mean", [](Var x) { return op::mean(x); }},
      {"dropout", [](Var x) { return op::dropout(x, 0.5); }},
  };
  using Binary = std::function<Var(Var, Var)>;
  const std::vector<std::tuple<std::string, Shape, Binary>> binaries = {
      {"add", {3, 4}, [](Var a, Var b) { return op::add(a, b); }},
      {"sub", {3, 4}, [](Var a, Var b) { return op::sub(a, b); }},
      {"mul", {3, 4}, [](Var a, Var b) { return op::mul(a, b); }},
      {"add_bcast", {1, 4}, [](Var a, Var b) { return op::add(a, b); }},
      {"mul_bcast", {3, 1}, [](Var a, Var b) { return op::mul(a, b); }},
      {"concat0", {2, 4}, [](Var a, Var b) { return op::concat({a, b}, 0); }},
      {"concat1", {3, 2}, [](Var a, Var b) { return op::concat({a, b}, 1); }},
      {"matmul", {4, 2}, [](Var a, Var b) { return op::matmul(a, b); }},
      {"pairwise_mul", {5, 4}, [](Var a, Var b) { return op::pairwise_mul(a, b); }},
  };
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (const auto& [name, fn] : unaries) {
      Rng rng(seed);
      ParameterStore s;
      auto& x = uniform_param(s, "x", {3, 5}, rng);
      grad(v, name, [&](Graph& g) { return project(g, fn(g.param(x)), seed); }, s, worst, probes);
    }
    for (const auto& [name, bshape, fn] : binaries) {
      Rng rng(seed + 100);
      ParameterStore s;
      auto& a = uniform_param(s, "a", {3, 4}, rng);
      auto& b = uniform_param(s, "b", bshape, rng);
      grad(v, name, [&](Graph& g) { return project(g, fn(g.param(a), g.param(b)), seed); }, s, worst, probes);
    }
    {
      Rng rng(seed + 200);
      ParameterStore s;
      auto& x = uniform_param(s, "x", {2, 4, 5, 3}, rng);
      auto& k = uniform_param(s, "k", {3, 3, 3, 2}, rng);
      auto& b = uniform_param(s, "b", {2}, rng);
      grad(v, "conv2d", [&](Graph& g) {
        return project(g, op::conv2d(g.param(x), g.param(k), g.param(b), op::Padding::Same), seed);
      }, s, worst, probes);
    }
    {
      Rng rng(seed + 300);
      ParameterStore s;
      auto& x = uniform_param(s, "x", {3, 8, 4}, rng);
      auto& k = uniform_param(s, "k", {5, 4, 3}, rng);
      auto& b = uniform_param(s, "b", {3}, rng);
      grad(v, "conv1d", [&](Graph& g) {
        return project(g, op::conv1d(g.param(x), g.param(k), g.param(b), op::Padding::Valid), seed);
      }, s, worst, probes);
    }
    {
      Rng rng(seed + 400);
      ParameterStore s;
      auto& x = uniform_param(s, "x", {2, 5, 3, 2}, rng);
      grad(v, "maxpool2d", [&](Graph& g) { return project(g, op::maxpool2d(g.param(x)), seed); }, s, worst, probes);
      grad(v, "max_over_time", [&](Graph& g) {
        return project(g, op::max_over_time(op::reshape(g.param(x), {2, 15, 2})), seed);
      }, s, worst, probes);
    }
    {
      Rng rng(seed + 500);
      ParameterStore s;
      auto& t = uniform_param(s, "table", {6, 3}, rng);
      const std::vector<int> ids{0, 3, 3, 5}, labels{2, 0, 1, 1};
      grad(v, "gather_rows+cross_entropy",
           [&](Graph& g) { return op::cross_entropy(op::gather_rows(g.param(t), ids), labels); }, s, worst, probes);
    }
  }

  {
    Rng rng(4);
    ParameterStore s;
    auto& x = uniform_param(s, "x", {4, 6}, rng);
    std::vector<Highway> stack{make_highway(s, "hw0", 6, 6, "test", rng), make_highway(s, "hw1", 6, 6, "test", rng)};
    randomize_biases(s, rng, 0.5);
    grad(v, "highway stack", [&](Graph& g) { return project(g, highway_stack(g, g.param(x), stack, 1.0), 1); }, s,
         worst, probes);
  }
  for (auto norm : {AttentionNorm::OverKeys, AttentionNorm::OverQueries}) {
    for (std::size_t length : {4u, 3u}) {
      Rng rng(12 + length);
      ParameterStore s;
      auto& p = uniform_param(s, "p", {4, 3}, rng);
      auto& w = uniform_param(s, "attention/w", {9}, rng);
      grad(v, "self-attention",
           [&](Graph& g) { return project(g, self_attention(g, g.param(p), g.param(w), length, norm), 3); }, s,
           worst, probes, attention_aware(norm));
    }
  }
  {
    Rng rng(16);
    ParameterStore s;
    auto& ph = uniform_param(s, "p_hat", {3, 5}, rng);
    auto& pb = uniform_param(s, "p_bar", {3, 5}, rng);
    auto fg = make_fuse_gate(s, "fuse", 5, "test", rng);
    randomize_biases(s, rng, 0.5);
    grad(v, "fuse gate", [&](Graph& g) { return project(g, fuse_gate(g, g.param(ph), g.param(pb), fg), 4); }, s,
         worst, probes);
  }
  {
    ModelConfig c = tiny_config(10, 8);
    auto data = tiny_data(c, 2, 7);
    Rng rng(11);
    DiinModel m(c, data.vocab.words.size(), data.vocab.chars.size(), rng);
    randomize_biases(m.params(), rng, 0.1);
    grad(v, "full tiny model", [&](Graph& g) { return project(g, m.forward(g, data.features).logits, 3); },
         m.params(), worst, probes);
    ModelConfig cr = c;
    cr.share_highway = false;
    Rng rng2(12);
    DiinModel mr(cr, 20, 20, rng2);
    grad(v, "regularizers",
         [&](Graph& g) { return op::add(l2_sum(g, mr.params(), cr), mr.difference_penalty(g)); }, mr.params(),
         worst, probes);
  }
  const double secs = seconds_since(t0);
  v.check(secs < 300.0, "runtime over 5 min");
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu probes, worst relative error %.3g, %.1f s", probes, worst, secs);
  v.detail << buf;
}

// ---------------------------------------------------------------------------
// C2 extractor arithmetic
// ---------------------------------------------------------------------------

// Integer closed form with eta = a/20 and theta = b/20.
struct Oracle {
  std::vector<std::size_t> channels, rows, cols;
  std::size_t flat;
};

Oracle closed_form(std::size_t d, std::size_t a, std::size_t n, std::size_t g, std::size_t b, std::size_t p,
                   std::size_t h) {
  Oracle o;
  std::size_t c = d * a / 20;
  o.channels = {d, c};
  o.rows = {p};
  o.cols = {h};
  for (int k = 0; k < 3; ++k) {
    c += n * g;
    o.channels.push_back(c);
    c = c * b / 20;
    o.channels.push_back(c);
    p = (p + 1) / 2;
    h = (h + 1) / 2;
    o.rows.push_back(p);
    o.cols.push_back(h);
  }
  o.flat = p * h * c;
  return o;
}

void c2(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto t = extractor_trace(448, 48, 48, ExtractorConfig{});
  v.check(t.channels == std::vector<std::size_t>{448, 134, 294, 147, 307, 153, 313, 156}, "default channel trace");
  v.check(t.rows == std::vector<std::size_t>{48, 24, 12, 6}, "default spatial trace");
  v.check(t.flat == 5616, "default flat width");
  const auto o = closed_form(448, 6, 8, 20, 10, 48, 48);
  v.check(o.channels == t.channels && o.flat == t.flat, "oracle disagrees on defaults");

  std::mt19937_64 rng(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::size_t forwards = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t d, a, n, g, b, p, h;
    do {
      d = pick(4, 64);
      a = pick(4, 20);
      n = pick(1, 4);
      g = pick(1, 8);
      b = pick(6, 20);
      p = pick(8, 40);
      h = pick(8, 40);
    } while (d * a / 20 == 0);
    ExtractorConfig xc;
    xc.eta = static_cast<double>(a) / 20.0;
    xc.layers = n;
    xc.growth = g;
    xc.theta = static_cast<double>(b) / 20.0;
    const auto want = closed_form(d, a, n, g, b, p, h);
    const auto got = extractor_trace(d, p, h, xc);
    const std::string tag = "config " + std::to_string(trial);
    v.check(got.channels == want.channels, tag + " channels");
    v.check(got.rows == want.rows && got.cols == want.cols, tag + " spatial");
    v.check(got.flat == want.flat, tag + " flat");
    // Shapes from an actual forward pass must agree as well.
    Rng prng(trial);
    ParameterStore s;
    auto params = make_extractor(s, d, xc, prng);
    Graph graph;
    auto out = extract_features(graph, graph.constant(random_tensor({1, p, h, d}, trial, 0.1)), params);
    v.check(out.features.shape() == Shape({1, want.flat}), tag + " forward flat");
    v.check(out.first_block.shape() == Shape({1, p, h, want.channels[2]}), tag + " forward first block");
    ++forwards;
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "defaults 448->...->156 flat 5616, 20 random configs (%zu forwards), %.2f s",
                forwards, seconds_since(t0));
  v.detail << buf;
}

// ---------------------------------------------------------------------------
// C3 schedules
// ---------------------------------------------------------------------------

void c3(Verdict& v) {
  v.check(l2_ratio(50000.0) == 4.5e-6, "l2_ratio(50000)");
  v.check(keep_rate(10000.0) == 0.977, "keep_rate(10000)");
  Rng rng(1);
  ParameterStore s;
  auto& x = s.create("x", {1}, ParamKind::Weight, "test", InitSpec::zeros(), rng);
  x.value->data[0] = 2.0;
  x.grad->data[0] = 1.0;
  std::map<std::string, AdadeltaSlots> slots;
  adadelta_step(s, slots, 0.5, 0.95, 1e-8);
  // E[g^2] = 0.05; dx = -sqrt(0 + 1e-8) / sqrt(0.05 + 1e-8) * g
  const double dx = -std::sqrt(1e-8) / std::sqrt(0.05 + 1e-8);
  const double err = std::abs(x.value->data[0] - (2.0 + 0.5 * dx));
  v.check(err <= 1e-10, "adadelta first step");
  char buf[160];
  std::snprintf(buf, sizeof buf, "l2_ratio(50000)=%.17g keep_rate(10000)=%.17g adadelta dx=%.6g err=%.2g",
                l2_ratio(50000.0), keep_rate(10000.0), dx, err);
  v.detail << buf;
}

// ---------------------------------------------------------------------------
// C4 parameter counts
// ---------------------------------------------------------------------------

void c4(Verdict& v) {
  std::vector<std::size_t> counts;
  for (std::size_t d : table6_dims()) counts.push_back(count_parameters(dimension_config(d)).total);
  const auto at = [&](std::size_t d) {
    const auto& dims = table6_dims();
    return counts[static_cast<std::size_t>(std::find(dims.begin(), dims.end(), d) - dims.begin())];
  };
  const double r448 = static_cast<double>(count_parameters(ModelConfig{}).total) / 4.36e6 - 1.0;
  const double r10 = static_cast<double>(at(10)) / 708e3 - 1.0;
  const double r600 = static_cast<double>(at(600)) / 7.20e6 - 1.0;
  v.check(std::abs(r448) <= 0.02, "d=448 outside 2%");
  v.check(std::abs(r10) <= 0.10, "d=10 outside 10%");
  v.check(std::abs(r600) <= 0.10, "d=600 outside 10%");
  for (std::size_t i = 1; i < counts.size(); ++i)
    v.check(counts[i] > counts[i - 1], "not monotone at d=" + std::to_string(table6_dims()[i]));
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "excluding embeddings, biases included: 448->%zu (%+.3f%%) 10->%zu (%+.3f%%) 600->%zu (%+.3f%%), "
                "monotone over 10 widths",
                count_parameters(ModelConfig{}).total, 100 * r448, at(10), 100 * r10, at(600), 100 * r600);
  v.detail << buf;
}

// ---------------------------------------------------------------------------
// C5 overfit
// ---------------------------------------------------------------------------

ModelConfig overfit_config(std::uint64_t seed) {
  ModelConfig c;
  c.word_dim = 16;
  c.char_dim = 8;
  c.char_out = 8;
  c.model_dim = 32;
  c.dense_layers = 2;
  c.growth = 8;
  c.max_len_p = 12;
  c.max_len_h = 12;
  c.batch_size = 8;
  c.seed = seed;
  return c;
}

void c5(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  int reached = 0;
  std::ostringstream steps;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const ModelConfig c = overfit_config(seed);
    const auto pairs = synthetic_corpus(32, seed);
    const auto vocab = build_vocabularies(pairs, c.word_dim, c.char_dim);
    const auto feats = featurize_all(pairs, vocab, c.cutoff_p(), c.cutoff_h());
    Rng rng(seed);
    DiinModel m(c, vocab.words.size(), vocab.chars.size(), rng);
    Trainer tr(m, feats);
    auto res = tr.run({.max_steps = 2000, .train_eval_every = 25, .stop_at_train_accuracy = 1.0, .out_dir = {}});
    if (res.reached_target_at) {
      ++reached;
      steps << (seed > 1 ? " " : "") << *res.reached_target_at;
    } else {
      steps << (seed > 1 ? " " : "") << "never(" << res.final_train_accuracy.value_or(0.0) << ")";
    }
  }
  const double secs = seconds_since(t0);
  v.check(reached >= 4, "only " + std::to_string(reached) + " of 5 seeds reached 100%");
  v.check(secs < 600.0, "runtime over 10 min");
  char buf[200];
  std::snprintf(buf, sizeof buf, "%d/5 seeds at 100%% train accuracy, steps: %s, %.1f s", reached,
                steps.str().c_str(), secs);
  v.detail << buf;
}

// ---------------------------------------------------------------------------
// C6 ablation matrix
// ---------------------------------------------------------------------------

void c6(Verdict& v) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t trained = 0;
  for (const auto& row : ablation_rows()) {
    if (row.name == "full") continue;
    const ModelConfig c = with_ablation(overfit_config(3), row.name);
    const auto pairs = synthetic_corpus(32, 3);
    const auto vocab = build_vocabularies(pairs, c.word_dim, c.char_dim);
    const auto feats = featurize_all(pairs, vocab, c.cutoff_p(), c.cutoff_h());
    Rng rng(3);
    DiinModel m(c, vocab.words.size(), vocab.chars.size(), rng);
    Trainer tr(m, feats);
    try {
      auto res = tr.run({.max_steps = 200, .out_dir = {}});
      bool finite = res.steps == 200;
      for (const auto& r : res.metrics) finite = finite && std::isfinite(r.train_loss);
      v.check(finite, row.name + " non-finite loss");
      ++trained;
    } catch (const std::exception& e) {
      v.check(false, row.name + ": " + e.what());
    }
  }

  const ModelConfig base;
  const std::size_t full = count_parameters(base).total;
  std::map<std::string, std::size_t> n;
  for (const auto& row : ablation_rows()) n[row.name] = count_parameters(with_ablation(base, row.name)).total;
  const std::size_t d = 448;
  const std::size_t one_side = 3 * d + 3 * (2 * d * d + d);  // attention vector + fuse gate
  v.check(full - n["tied"] == one_side, "tied != untied - one encoder set");
  v.check(with_ablation(base, "em").encoder_dim() == 447, "no-EM width is not 447");
  v.check(n["fuse"] == n["addition-skip"], "fuse and addition-skip rows differ");
  for (const auto& row : ablation_rows())
    if (row.name != "full") v.check(n[row.name] != full, row.name + " count equals full model");
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu variants x 200 steps finite; tied saves %zu, no-EM d=447, %.1f s", trained,
                full - n["tied"], seconds_since(t0));
  v.detail << buf;
}

// ---------------------------------------------------------------------------
// C7 determinism
// ---------------------------------------------------------------------------

void c7(Verdict& v) {
  ModelConfig c = overfit_config(9);
  c.keep_decay_steps = 50;  // dropout active
  c.dev_every = 25;
  const auto pairs = synthetic_corpus(24, 9);
  const auto dev = synthetic_corpus(8, 10);
  std::vector<SentencePair> all = pairs;
  all.insert(all.end(), dev.begin(), dev.end());
  const auto vocab = build_vocabularies(all, c.word_dim, c.char_dim);
  const auto feats = featurize_all(pairs, vocab, c.cutoff_p(), c.cutoff_h());
  const auto dev_feats = featurize_all(dev, vocab, c.cutoff_p(), c.cutoff_h());
  auto run = [&](const std::string& name) {
    Rng rng(c.seed);
    DiinModel m(c, vocab.words.size(), vocab.chars.size(), rng);
    Trainer tr(m, feats, &dev_feats);
    const auto dir = scratch_dir(name);
    auto res = tr.run({.max_steps = 100, .out_dir = dir});
    std::vector<double> losses;
    for (const auto& r : res.metrics) losses.push_back(r.train_loss);
    return std::make_pair(losses, dir);
  };
  auto [a, da] = run("accept_det_a");
  auto [b, db] = run("accept_det_b");
  v.check(a.size() == 100, "expected 100 logged steps");
  bool bitwise = a.size() == b.size();
  for (std::size_t i = 0; bitwise && i < a.size(); ++i) bitwise = std::memcmp(&a[i], &b[i], sizeof(double)) == 0;
  v.check(bitwise, "loss logs differ");
  for (const char* f : {"metrics.csv", "last.bin", "last.manifest", "best.bin", "best.manifest"})
    v.check(fs::exists(da / f) && slurp(da / f) == slurp(db / f), std::string(f) + " differs");
  v.detail << "100 steps with dropout, loss log and best/last checkpoints byte-identical";
}

// ---------------------------------------------------------------------------
// C8 EM bits and tags
// ---------------------------------------------------------------------------

std::string bits(const std::vector<int>& b) {
  std::string s;
  for (int x : b) s += static_cast<char>('0' + x);
  return s;
}

SentencePair nli(const std::string& p, const std::string& h) {
  SentencePair s;
  s.premise = tokenize(p);
  s.hypothesis = tokenize(h);
  return s;
}

void c8(Verdict& v) {
  const char* rows[3][2] = {
      {"The FCC has created two tiers of small business for this service with the approval of the SBA.",
       "The SBA has given the go-ahead for the FCC to divide this service into two tiers of small business."},
      {"He was crying like his mother had just walloped him.", "He was crying like his mother hit him with a spoon."},
      {"Later, Tom testified against John so as to avoid the electric chair.",
       "Tom refused to turn on his friend, even though he was slated to be executed."}};
  // Produced by an independent Porter stemmer over the same tokens.
  const char* em[3][2] = {{"1110111111110101111", "11101011100110111111"},
                          {"11111100011", "111111010001"},
                          {"01100000100001", "10100001000001001"}};
  TagSet want[3];
  want[0].word_overlap = true;
  want[0].long_sentence = true;
  want[1].word_overlap = true;
  want[2].long_sentence = true;
  for (int r = 0; r < 3; ++r) {
    const auto p = tokenize(rows[r][0]), h = tokenize(rows[r][1]);
    v.check(bits(exact_match_bits(p, h)) == em[r][0], "EM premise row " + std::to_string(r + 1));
    v.check(bits(exact_match_bits(h, p)) == em[r][1], "EM hypothesis row " + std::to_string(r + 1));
    v.check(tag_example(nli(rows[r][0], rows[r][1])) == want[r], "tags row " + std::to_string(r + 1));
  }
  v.check(!tag_example(nli("a b c d e f g h i j", "a b c d e f g x y z")).word_overlap, "overlap 0.7 fired");
  v.check(tag_example(nli("a b c d e f g h i j", "a b c d e f g h y z")).word_overlap, "overlap 0.8 missed");
  v.check(tag_example(nli("A cat sits.", "There is no cat.")).negation, "negation 'no'");
  v.check(tag_example(nli("He isn't here.", "He left.")).negation, "negation n't");
  v.check(!tag_example(nli("Dogs bark.", "Cats purr.")).negation, "negation false positive");
  std::string p30, h16;
  for (int i = 0; i < 30; ++i) p30 += "w ";
  for (int i = 0; i < 16; ++i) h16 += "w ";
  v.check(!tag_example(nli(p30, h16)).long_sentence, "long at 30/16");
  v.check(tag_example(nli(p30 + "w", h16)).long_sentence, "long premise 31");
  v.check(tag_example(nli(p30, h16 + "w")).long_sentence, "long hypothesis 17");
  const auto t = tag_example(nli("Most people agree.", "They might go."));
  v.check(t.quantifier, "quantifier");
  v.check(t.modal, "modal");
  v.check(t.belief, "belief");
  v.check(tag_example(nli("Dogs bark.", "Cats purr.")) == TagSet{}, "plain pair tagged");
  v.detail << "3 sample pairs EM bits and tags, 12 constructed fixtures";
}

// ---------------------------------------------------------------------------
// C9 heatmap export
// ---------------------------------------------------------------------------

void c9(Verdict& v) {
  ModelConfig c = tiny_config(12, 32);
  c.dataset = "snli";
  const auto pair = nli("Two dogs are running through a field of tall grass near a fence.", "Dogs run outside.");
  const auto vocab = build_vocabularies({pair}, c.word_dim, c.char_dim);
  const auto feats = featurize(pair, vocab, c.cutoff_p(), c.cutoff_h());
  auto run = [&](const std::string& name) {
    Rng rng(5);
    DiinModel m(c, vocab.words.size(), vocab.chars.size(), rng);
    const auto dir = scratch_dir(name);
    auto files = export_activations(m, feats, ExportTarget::Interaction, {0, 7}, dir);
    std::string all;
    for (const auto& f : files) all += slurp(f);
    return std::make_pair(all + slurp(dir / "interaction.json"), files);
  };
  auto [a, files] = run("accept_export_a");
  auto [b, unused] = run("accept_export_b");
  (void)unused;
  v.check(a == b, "export differs between runs");
  std::size_t rows = 0, cols = 0;
  {
    std::ifstream in(files.at(0));
    std::string line;
    std::getline(in, line);
    cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    while (std::getline(in, line)) ++rows;
  }
  v.check(rows >= 1 && rows <= 32 && cols >= 1 && cols <= 32, "grid outside 32x32");
  v.check(rows == feats.premise.length && cols == feats.hypothesis.length, "grid not cropped to tokens");
  v.detail << "interaction channels 0,7: " << rows << "x" << cols << " grid, byte-identical across runs";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"C1 gradient suite", c1},   {"C2 extractor arithmetic", c2}, {"C3 schedules", c3},
      {"C4 parameter counts", c4}, {"C5 overfit", c5},              {"C6 ablation matrix", c6},
      {"C7 determinism", c7},      {"C8 EM and tag fixtures", c8},   {"C9 heatmap export", c9},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Verdict v;
    try {
      fn(v);
    } catch (const std::exception& e) {
      v.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (v.ok ? "PASS " : "FAIL ") << name << ": " << v.detail.str() << std::endl;
    for (const auto& f : v.failures) std::cout << "    " << f << '\n';
    failed += !v.ok;
  }
  return failed;
}
