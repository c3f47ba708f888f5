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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "diin/embedding.hpp"
#include "diin/encoding.hpp"
#include "diin/gradcheck.hpp"
#include "diin/interaction.hpp"
#include "diin/model.hpp"
#include "test_support.hpp"

using namespace diin;
using namespace diin::testing;
namespace op = diin::ops;

namespace {

void expect_grads(const GraphBuilder& build, ParameterStore& store, GradCheckOptions opts = {}) {
  auto report = finite_difference_check(build, store, 1e-4, std::move(opts));
  EXPECT_TRUE(report.passed()) << report;
  EXPECT_GT(report.checked(), 0u);
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape, b.shape);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], tol) << i;
}

double at2(const Tensor& t, std::size_t i, std::size_t j) { return t.data[i * t.shape[1] + j]; }

}  // namespace

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

class EmbeddingTest : public ::testing::Test {
 protected:
  void SetUp() override {
    pair.premise = tokenize("The FCC has created two tiers of small business for this service with "
                            "the approval of the SBA.");
    pair.hypothesis = tokenize("The SBA has given the go-ahead for the FCC to divide this service "
                               "into two tiers of small business.");
    vocab = build_vocabularies({pair}, cfg.word_dim, cfg.char_dim);
    feats = featurize(pair, vocab, cfg.cutoff_p(), cfg.cutoff_h());
  }
  ModelConfig cfg;  // full widths, cutoff 48
  SentencePair pair;
  Vocabularies vocab{Vocabulary(300), Vocabulary(100)};
  PairFeatures feats;
  Rng rng{3};
};

TEST_F(EmbeddingTest, WidthIs448AndPadRowsZero) {
  ParameterStore store;
  auto e = make_embedding(store, cfg, vocab.words.size(), vocab.chars.size(), rng);
  Graph g;
  auto out = embed_pair(g, e, cfg, feats, 1.0);
  ASSERT_EQ(out.premise.shape(), (Shape{48, 448}));
  ASSERT_EQ(out.hypothesis.shape(), (Shape{48, 448}));
  const Tensor& p = out.premise.value();
  const std::size_t real = feats.premise.length;
  for (std::size_t i = 0; i < 48; ++i) {
    double ones = 0.0, row_abs = 0.0;
    for (std::size_t k = 400; k < 447; ++k) ones += at2(p, i, k);
    for (std::size_t k = 0; k < 448; ++k) row_abs += std::fabs(at2(p, i, k));
    if (i < real) {
      EXPECT_EQ(ones, 1.0) << i;
    } else {
      EXPECT_EQ(row_abs, 0.0) << i;
    }
  }
  ASSERT_EQ(feats.premise.tokens[1], "FCC");
  EXPECT_EQ(at2(p, 1, 447), 1.0);
  // Word block is the table row verbatim.
  const auto& table = *e.words->value;
  const auto id = static_cast<std::size_t>(feats.premise.word_ids[1]);
  for (std::size_t k = 0; k < 300; ++k) EXPECT_EQ(at2(p, 1, k), table.data[id * 300 + k]);
}

TEST_F(EmbeddingTest, AllPadCharsGiveBiasConstant) {
  ParameterStore store;
  auto e = make_embedding(store, cfg, vocab.words.size(), vocab.chars.size(), rng);
  for (std::size_t k = 0; k < 100; ++k) e.char_bias->value->data[k] = 0.01 * (static_cast<double>(k) - 50.0);
  Graph g;
  std::vector<int> ids(16, Vocabulary::kPad);
  Var y = char_conv_encode(g, e, ids);
  ASSERT_EQ(y.shape(), (Shape{1, 100}));
  for (std::size_t k = 0; k < 100; ++k)
    EXPECT_DOUBLE_EQ(y.value().data[k], std::max(0.0, e.char_bias->value->data[k]));
}

TEST_F(EmbeddingTest, CharFeaturesPerTokenAndPermutationLocal) {
  ParameterStore store;
  auto e = make_embedding(store, cfg, vocab.words.size(), vocab.chars.size(), rng);
  std::vector<int> ids(feats.premise.char_ids.begin(), feats.premise.char_ids.begin() + 48 * 0 + 3 * 16);
  std::vector<int> swapped = ids;
  std::swap_ranges(swapped.begin(), swapped.begin() + 16, swapped.begin() + 16);
  Graph g;
  const Tensor a = char_conv_encode(g, e, ids).value();
  const Tensor b = char_conv_encode(g, e, swapped).value();
  ASSERT_EQ(a.shape, (Shape{3, 100}));
  for (std::size_t k = 0; k < 100; ++k) {
    EXPECT_EQ(a.data[k], b.data[100 + k]);
    EXPECT_EQ(a.data[100 + k], b.data[k]);
    EXPECT_EQ(a.data[200 + k], b.data[200 + k]);
  }
  std::vector<int> many(48 * 16, 2);
  EXPECT_EQ(char_conv_encode(g, e, many).shape(), (Shape{48, 100}));
}

TEST_F(EmbeddingTest, GradientsReachUsedRowsOnly) {
  ParameterStore store;
  auto e = make_embedding(store, cfg, vocab.words.size(), vocab.chars.size(), rng);
  Graph g;
  auto out = embed_pair(g, e, cfg, feats, 1.0);
  auto grads = backward(g, project(g, out.premise, 5), store);
  const auto& gw = grads.at("embed/word");
  const auto used = static_cast<std::size_t>(feats.premise.word_ids[1]);
  double used_norm = 0.0, pad_norm = 0.0;
  for (std::size_t k = 0; k < 300; ++k) {
    used_norm += std::fabs(gw.data[used * 300 + k]);
    pad_norm += std::fabs(gw.data[k]);
  }
  EXPECT_GT(used_norm, 0.0);
  EXPECT_EQ(pad_norm, 0.0);
  double char_norm = 0.0;
  for (double v : grads.at("embed/char").data) char_norm += std::fabs(v);
  EXPECT_GT(char_norm, 0.0);
}

TEST_F(EmbeddingTest, SharedCharConvAndDropoutIdentity) {
  ParameterStore store;
  auto e = make_embedding(store, cfg, vocab.words.size(), vocab.chars.size(), rng);
  std::size_t kernels = 0;
  for (const auto& p : store) kernels += p->name.find("char_conv/kernel") != std::string::npos;
  EXPECT_EQ(kernels, 1u);
  Rng drop(1);
  Graph train(true, &drop), eval;
  EXPECT_EQ(embed_pair(train, e, cfg, feats, 1.0).premise.value(),
            embed_pair(eval, e, cfg, feats, 1.0).premise.value());
}

TEST_F(EmbeddingTest, OutOfRangeIdRejected) {
  ParameterStore store;
  auto e = make_embedding(store, cfg, vocab.words.size(), vocab.chars.size(), rng);
  PairFeatures bad = feats;
  bad.premise.word_ids[0] = static_cast<int>(vocab.words.size()) + 5;
  Graph g;
  EXPECT_THROW(embed_pair(g, e, cfg, bad, 1.0), Error);
}

TEST_F(EmbeddingTest, NoEmDropsLastColumn) {
  ModelConfig c = cfg;
  c.use_em = false;
  EXPECT_EQ(c.embedding_dim(), 447u);
  ParameterStore store;
  auto e = make_embedding(store, c, vocab.words.size(), vocab.chars.size(), rng);
  Graph g;
  EXPECT_EQ(embed_pair(g, e, c, feats, 1.0).premise.dim(1), 447u);
}

// ---------------------------------------------------------------------------
// Highway
// ---------------------------------------------------------------------------

TEST(Highway, GateClosedIsIdentityOpenIsTransform) {
  Rng rng(2);
  ParameterStore s;
  auto hw = make_highway(s, "hw", 6, 6, "test", rng);
  const Tensor x = random_tensor({4, 6}, 9);
  hw.gate.b->value->fill(-1e9);
  {
    Graph g;
    EXPECT_EQ(highway_layer(g, g.constant(x), hw, 1.0).value(), x);
  }
  hw.gate.b->value->fill(1e9);
  Graph g;
  Var t = op::tanh(affine(g, g.constant(x), hw.transform));
  expect_near(highway_layer(g, g.constant(x), hw, 1.0).value(), t.value(), 1e-15);
}

TEST(Highway, StackGradcheck) {
  Rng rng(4);
  ParameterStore s;
  auto& x = uniform_param(s, "x", {4, 6}, rng);
  std::vector<Highway> stack{make_highway(s, "hw0", 6, 6, "test", rng),
                             make_highway(s, "hw1", 6, 6, "test", rng)};
  for (const auto& p : s)
    if (p->kind == ParamKind::Bias)
      for (auto& v : p->value->data) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  expect_grads([&](Graph& g) { return project(g, highway_stack(g, g.param(x), stack, 1.0), 1); }, s);
}

TEST(HighwayVariant, WidthAndIdentityBranch) {
  Rng rng(5);
  ParameterStore s;
  auto narrow = make_highway(s, "v", 448, 100, "test", rng);
  EXPECT_TRUE(narrow.has_carry());
  Graph g;
  EXPECT_EQ(highway_layer(g, g.constant(random_tensor({3, 448}, 1)), narrow, 1.0).shape(),
            (Shape{3, 100}));
  auto same = make_highway(s, "same", 7, 7, "test", rng);
  EXPECT_FALSE(same.has_carry());
  same.gate.b->value->fill(-1e9);
  const Tensor x = random_tensor({2, 7}, 2);
  EXPECT_EQ(highway_layer(g, g.constant(x), same, 1.0).value(), x);
}

TEST(HighwayVariant, GradcheckBothBranches) {
  for (std::size_t out : {3u, 5u}) {
    Rng rng(6 + out);
    ParameterStore s;
    auto& x = uniform_param(s, "x", {3, 5}, rng);
    auto hw = make_highway(s, "v", 5, out, "test", rng);
    expect_grads([&](Graph& g) { return project(g, highway_layer(g, g.param(x), hw, 1.0), out); }, s);
  }
}

// ---------------------------------------------------------------------------
// Self-attention
// ---------------------------------------------------------------------------

namespace {

// Direct double loop over the trilinear logits.
Tensor brute_attention(const Tensor& p, const Tensor& w, AttentionNorm norm, std::size_t length) {
  const std::size_t len = p.shape[0], d = p.shape[1];
  Tensor a({len, len});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        s += w.data[k] * p.data[i * d + k] + w.data[d + k] * p.data[j * d + k] +
             w.data[2 * d + k] * p.data[i * d + k] * p.data[j * d + k];
      a.data[i * len + j] = s;
    }
  Tensor wts({len, len});
  for (std::size_t i = 0; i < length; ++i)
    for (std::size_t j = 0; j < length; ++j) {
      double z = 0.0;
      for (std::size_t k = 0; k < length; ++k)
        z += norm == AttentionNorm::OverKeys ? std::exp(a.data[i * len + k]) : std::exp(a.data[k * len + j]);
      wts.data[i * len + j] = std::exp(a.data[i * len + j]) / z;
    }
  Tensor out({len, d});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j)
      for (std::size_t k = 0; k < d; ++k) out.data[i * d + k] += wts.data[i * len + j] * p.data[j * d + k];
  return out;
}

}  // namespace

TEST(SelfAttention, SinglePositionIsIdentity) {
  Graph g;
  const Tensor p = random_tensor({1, 4}, 3);
  Var out = self_attention(g, g.constant(p), g.constant(random_tensor({12}, 4)), 1, AttentionNorm::OverKeys);
  expect_near(out.value(), p, 1e-15);
}

TEST(SelfAttention, IdenticalRows) {
  Graph g;
  Tensor p({4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) p.data[i * 3 + k] = 0.1 * static_cast<double>(k + 1);
  Var out = self_attention(g, g.constant(p), g.constant(random_tensor({9}, 5)), 4, AttentionNorm::OverKeys);
  expect_near(out.value(), p, 1e-12);
}

TEST(SelfAttention, MatchesBruteForceBothModes) {
  for (auto norm : {AttentionNorm::OverKeys, AttentionNorm::OverQueries}) {
    Graph g;
    const Tensor p = random_tensor({3, 2}, 6);
    const Tensor w = random_tensor({6}, 7);
    expect_near(self_attention(g, g.constant(p), g.constant(w), 3, norm).value(),
                brute_attention(p, w, norm, 3), 1e-12);
  }
}

TEST(SelfAttention, MaskedWeightsNormalizeAndZeroPads) {
  for (auto norm : {AttentionNorm::OverKeys, AttentionNorm::OverQueries}) {
    Graph g;
    Tensor p = random_tensor({5, 3}, 8);
    for (std::size_t k = 0; k < 3; ++k) p.data[3 * 3 + k] = p.data[4 * 3 + k] = 0.0;
    const Tensor a = attention_weights(g, g.constant(p), g.constant(random_tensor({9}, 9)), 3, norm).value();
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 5; ++j)
        if (i >= 3 || j >= 3) {
          EXPECT_EQ(a.data[i * 5 + j], 0.0);
        }
    for (std::size_t x = 0; x < 3; ++x) {
      double s = 0.0;
      for (std::size_t y = 0; y < 3; ++y) s += norm == AttentionNorm::OverKeys ? a.data[x * 5 + y] : a.data[y * 5 + x];
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    const Tensor out = self_attention(g, g.constant(p), g.constant(random_tensor({9}, 9)), 3, norm).value();
    Tensor head({3, 3}, std::vector<double>(p.data.begin(), p.data.begin() + 9));
    const Tensor ref = brute_attention(head, random_tensor({9}, 9), norm, 3);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(out.data[i], ref.data[i], 1e-12);
  }
}

TEST(SelfAttention, PermutationEquivariant) {
  Graph g;
  const Tensor p = random_tensor({4, 3}, 10);
  const Tensor w = random_tensor({9}, 11);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  Tensor q({4, 3});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) q.data[i * 3 + k] = p.data[perm[i] * 3 + k];
  const Tensor a = self_attention(g, g.constant(p), g.constant(w), 4, AttentionNorm::OverKeys).value();
  const Tensor b = self_attention(g, g.constant(q), g.constant(w), 4, AttentionNorm::OverKeys).value();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(b.data[i * 3 + k], a.data[perm[i] * 3 + k], 1e-12);
}

TEST(SelfAttention, GradcheckBothModesWithMask) {
  for (auto norm : {AttentionNorm::OverKeys, AttentionNorm::OverQueries}) {
    for (std::size_t length : {4u, 3u}) {
      Rng rng(12 + length);
      ParameterStore s;
      auto& p = uniform_param(s, "p", {4, 3}, rng);
      auto& w = uniform_param(s, "attention/w", {9}, rng);
      expect_grads([&](Graph& g) {
        return project(g, self_attention(g, g.param(p), g.param(w), length, norm), 3);
      }, s, attention_aware(norm));
    }
  }
}

// ---------------------------------------------------------------------------
// Fuse gate
// ---------------------------------------------------------------------------

TEST(FuseGate, ForcedGates) {
  Rng rng(13);
  ParameterStore s;
  auto fg = make_fuse_gate(s, "fuse", 4, "test", rng);
  const Tensor ph = random_tensor({3, 4}, 14), pb = random_tensor({3, 4}, 15);
  fg.f.b->value->fill(-1e9);
  {
    Graph g;
    Var x = op::concat({g.constant(ph), g.constant(pb)}, 1);
    Var r = op::sigmoid(affine(g, x, fg.r));
    expect_near(fuse_gate(g, g.constant(ph), g.constant(pb), fg).value(),
                op::mul(r, g.constant(ph)).value(), 1e-15);
  }
  fg.r.b->value->fill(-1e9);
  fg.f.b->value->fill(1e9);
  Graph g;
  Var x = op::concat({g.constant(ph), g.constant(pb)}, 1);
  Var z = op::tanh(affine(g, x, fg.z));
  expect_near(fuse_gate(g, g.constant(ph), g.constant(pb), fg).value(), z.value(), 1e-15);
}

TEST(FuseGate, Gradcheck) {
  Rng rng(16);
  ParameterStore s;
  auto& ph = uniform_param(s, "p_hat", {3, 5}, rng);
  auto& pb = uniform_param(s, "p_bar", {3, 5}, rng);
  auto fg = make_fuse_gate(s, "fuse", 5, "test", rng);
  for (Linear* l : {&fg.z, &fg.r, &fg.f})
    for (auto& v : l->b->value->data) v = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
  expect_grads([&](Graph& g) { return project(g, fuse_gate(g, g.param(ph), g.param(pb), fg), 4); }, s);
}

TEST(FuseGate, HighwayPlusFuseMicrograph) {
  Rng rng(17);
  ParameterStore s;
  auto& x = uniform_param(s, "x", {3, 4}, rng);
  auto hw = make_highway(s, "hw", 4, 4, "test", rng);
  auto& w = uniform_param(s, "attention/w", {12}, rng);
  auto fg = make_fuse_gate(s, "fuse", 4, "test", rng);
  expect_grads([&](Graph& g) {
    Var h = highway_layer(g, g.param(x), hw, 1.0);
    Var bar = self_attention(g, h, g.param(w), 3, AttentionNorm::OverKeys);
    return project(g, fuse_gate(g, h, bar, fg), 5);
  }, s, attention_aware(AttentionNorm::OverKeys));
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

namespace {

ModelConfig encoder_config(std::size_t d) {
  ModelConfig c = tiny_config(d);
  c.word_dim = d - 47 - 1 - c.char_out;  // embedding width == d
  return c;
}

}  // namespace

TEST(Encoder, NoEncodingIsIdentity) {
  ModelConfig c = encoder_config(60);
  c.use_encoding = false;
  Rng rng(18);
  ParameterStore s;
  auto enc = make_encoder(s, c, rng);
  EXPECT_EQ(s.size(), 0u);
  Graph g;
  const Tensor p = random_tensor({8, 60}, 1), h = random_tensor({8, 60}, 2);
  auto out = encode_pair(g, g.constant(p), g.constant(h), 8, 8, enc, c);
  EXPECT_EQ(out.premise.value(), p);
  EXPECT_EQ(out.hypothesis.value(), h);
}

TEST(Encoder, AdditionSkipIsSumOfHighwayAndAttention) {
  ModelConfig c = encoder_config(60);
  c.use_fuse_gate = false;
  c.addition_skip = true;
  Rng rng(19);
  ParameterStore s;
  auto enc = make_encoder(s, c, rng);
  Graph g;
  const Tensor p = random_tensor({8, 60}, 3);
  auto out = encode_pair(g, g.constant(p), g.constant(p), 8, 8, enc, c);
  Var hat = highway_stack(g, g.constant(p), enc.premise.highway, 1.0);
  Var bar = self_attention(g, hat, g.param(*enc.premise.attention), 8, c.attention_norm);
  expect_near(out.premise.value(), op::add(hat, bar).value(), 1e-12);
}

TEST(Encoder, TiedNamesIdenticalAndPenaltyZero) {
  ModelConfig c = encoder_config(60);
  c.tied_encoders = true;
  Rng rng(20);
  ParameterStore s;
  auto enc = make_encoder(s, c, rng);
  EXPECT_EQ(enc.premise.attention->name, enc.hypothesis.attention->name);
  EXPECT_EQ(enc.premise.fuse.z.w->name, enc.hypothesis.fuse.z.w->name);
  Graph g;
  EXPECT_EQ(weight_difference_penalty(g, enc, 1e-3).value()[0], 0.0);
}

TEST(Encoder, ShapePreservedInEveryMode) {
  for (const char* row : {"full", "selfatt-fuse", "fuse", "addition-skip", "tied", "encoding"}) {
    ModelConfig c = with_ablation(encoder_config(60), row);
    Rng rng(21);
    ParameterStore s;
    auto enc = make_encoder(s, c, rng);
    Graph g;
    auto out = encode_pair(g, g.constant(random_tensor({8, 60}, 1)), g.constant(random_tensor({8, 60}, 2)),
                           5, 6, enc, c);
    EXPECT_EQ(out.premise.shape(), (Shape{8, 60})) << row;
    EXPECT_EQ(out.hypothesis.shape(), (Shape{8, 60})) << row;
    if (!c.use_encoding) continue;
    for (std::size_t k = 0; k < 60; ++k) EXPECT_EQ(out.premise.value().data[7 * 60 + k], 0.0) << row;
  }
}

TEST(DifferencePenalty, AttentionVectorExample) {
  ModelConfig c = encoder_config(2 + 47 + 1 + 5 + 1);
  c.word_dim = 1;
  c.model_dim = 2;  // d = 2
  c.use_fuse_gate = false;
  Rng rng(22);
  ParameterStore s;
  auto enc = make_encoder(s, c, rng);
  ASSERT_EQ(enc.paired.size(), 1u);
  enc.premise.attention->value->fill(1.0);
  enc.hypothesis.attention->value->fill(0.0);
  Graph g;
  EXPECT_NEAR(weight_difference_penalty(g, enc, 1e-3).value()[0], 0.006, 1e-15);
  std::swap(enc.premise, enc.hypothesis);
  for (auto& pr : enc.paired) std::swap(pr.first, pr.second);
  EXPECT_NEAR(weight_difference_penalty(g, enc, 1e-3).value()[0], 0.006, 1e-15);
  enc.premise.attention->value->fill(0.25);
  enc.hypothesis.attention->value->fill(0.25);
  EXPECT_EQ(weight_difference_penalty(g, enc, 1e-3).value()[0], 0.0);
}

TEST(DifferencePenalty, PerSideHighwayIncludedBySwitch) {
  ModelConfig c = encoder_config(60);
  c.share_highway = false;
  Rng rng(23);
  ParameterStore a;
  EXPECT_EQ(make_encoder(a, c, rng).paired.size(), 2u * 4u + 1u + 6u);
  c.penalize_highway = false;
  ParameterStore b;
  EXPECT_EQ(make_encoder(b, c, rng).paired.size(), 1u + 6u);
}

// ---------------------------------------------------------------------------
// Interaction and extractor
// ---------------------------------------------------------------------------

TEST(Interaction, ShapeAndIdentityRow) {
  Graph g;
  Var i = build_interaction(g.constant(random_tensor({32, 448}, 1)), g.constant(random_tensor({32, 448}, 2)));
  EXPECT_EQ(i.shape(), (Shape{32, 32, 448}));
  Tensor p = random_tensor({2, 4}, 3);
  for (std::size_t k = 0; k < 4; ++k) p.data[k] = 1.0;
  const Tensor h = random_tensor({3, 4}, 4);
  const Tensor t = build_interaction(g.constant(p), g.constant(h)).value();
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(t.data[j * 4 + k], h.data[j * 4 + k]);
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t k = 0; k < 4; ++k)
        EXPECT_EQ(t.data[(a * 3 + b) * 4 + k], p.data[a * 4 + k] * h.data[b * 4 + k]);
  EXPECT_THROW(build_interaction(g.constant(random_tensor({2, 4}, 1)), g.constant(random_tensor({2, 5}, 1))),
               ShapeError);
}

TEST(Interaction, AllOnesHypothesisBroadcastsPremise) {
  Graph g;
  const Tensor p = random_tensor({3, 4}, 5);
  const Tensor t = build_interaction(g.constant(p), g.constant(Tensor({2, 4}, 1.0))).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(t.data[(i * 2 + j) * 4 + k], p.data[i * 4 + k]);
}

TEST(Similarity, DotProducts) {
  Graph g;
  Tensor a({2, 2}, {1, 0, 0, 1});
  Tensor b({2, 2}, {0, 1, 1, 0});
  EXPECT_EQ(similarity_matrix(g.constant(a), g.constant(Tensor({1, 2}, {0, 0}))).value(), Tensor({2, 1}, 0.0));
  const Tensor gram = similarity_matrix(g.constant(a), g.constant(a)).value();
  EXPECT_EQ(gram.data[1], gram.data[2]);
  const Tensor p = random_tensor({3, 4}, 6), h = random_tensor({2, 4}, 7);
  const Tensor m = similarity_matrix(g.constant(p), g.constant(h)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += p.data[i * 4 + k] * h.data[j * 4 + k];
      EXPECT_NEAR(m.data[i * 2 + j], s, 1e-14);
    }
  (void)b;
}

TEST(Extractor, ChannelArithmetic) {
  EXPECT_EQ(scaled_channels(448, 0.3), 134u);
  EXPECT_EQ(scaled_channels(10, 0.3), 3u);
  EXPECT_EQ(scaled_channels(600, 0.3), 180u);
  EXPECT_EQ(scaled_channels(294, 0.5), 147u);
}

TEST(Extractor, StageShapes) {
  Rng rng(24);
  ParameterStore s;
  Graph g;
  Var x = g.constant(random_tensor({1, 6, 5, 448}, 1));
  Conv sd = make_conv(s, "sd", 1, 448, scaled_channels(448, 0.3), rng);
  Var y = scale_down(g, x, sd);
  EXPECT_EQ(y.shape(), (Shape{1, 6, 5, 134}));
  std::vector<Conv> block;
  std::size_t ch = 134;
  for (int l = 0; l < 8; ++l, ch += 20) block.push_back(make_conv(s, "l" + std::to_string(l), 3, ch, 20, rng));
  Var z = dense_block(g, y, block);
  EXPECT_EQ(z.shape(), (Shape{1, 6, 5, 294}));
  EXPECT_EQ(dense_block(g, y, {}).value(), y.value());
  Conv tr = make_conv(s, "tr", 1, 294, 147, rng);
  EXPECT_EQ(transition(g, z, tr, true).shape(), (Shape{1, 3, 3, 147}));
  EXPECT_EQ(transition(g, z, tr, false).shape(), (Shape{1, 3, 3, 147}));
}

TEST(Extractor, TransitionOfConstantMapIsConstant) {
  Rng rng(25);
  ParameterStore s;
  Conv tr = make_conv(s, "tr", 1, 4, 2, rng);
  Graph g;
  const Tensor out = transition(g, g.constant(Tensor({1, 48, 48, 4}, 0.5)), tr, true).value();
  EXPECT_EQ(out.shape, (Shape{1, 24, 24, 2}));
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out.data[i], out.data[i % 2]);
}

TEST(Extractor, ScaleDownToZeroRejected) {
  Rng rng(26);
  ParameterStore s;
  ExtractorConfig c;
  EXPECT_THROW(make_extractor(s, 3, c, rng), Error);
}

TEST(Extractor, DefaultTraceAndFlatWidths) {
  ExtractorConfig c;
  const auto t = extractor_trace(448, 48, 48, c);
  EXPECT_EQ(t.channels, (std::vector<std::size_t>{448, 134, 294, 147, 307, 153, 313, 156}));
  EXPECT_EQ(t.rows, (std::vector<std::size_t>{48, 24, 12, 6}));
  EXPECT_EQ(t.flat, 5616u);
  EXPECT_EQ(extractor_trace(448, 32, 32, c).flat, 2496u);
  EXPECT_EQ(extractor_trace(448, 24, 24, c).flat, 1404u);
}

TEST(Extractor, ShortSequenceNamesMinimum) {
  try {
    extractor_trace(448, 4, 48, ExtractorConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("minimum sequence length is 8"), std::string::npos) << e.what();
  }
}

TEST(Extractor, ForwardAtQuoraCutoffMatchesTrace) {
  Rng rng(27);
  ParameterStore s;
  ExtractorConfig c;
  auto params = make_extractor(s, 448, c, rng);
  Graph g;
  auto out = extract_features(g, g.constant(random_tensor({1, 24, 24, 448}, 3, 0.1)), params);
  EXPECT_EQ(out.features.shape(), (Shape{1, 1404}));
  EXPECT_EQ(out.first_block.shape(), (Shape{1, 24, 24, 294}));
}

TEST(Extractor, TinyGradcheck) {
  Rng rng(28);
  ParameterStore s;
  ExtractorConfig c;
  c.layers = 2;
  c.growth = 3;
  auto& x = uniform_param(s, "interaction", {1, 8, 8, 8}, rng);
  auto params = make_extractor(s, 8, c, rng);
  for (const auto& p : s)
    if (p->kind == ParamKind::Bias)
      for (auto& v : p->value->data) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  auto report = finite_difference_check(
      [&](Graph& g) { return project(g, extract_features(g, g.param(x), params).features, 6); }, s, 1e-4);
  EXPECT_TRUE(report.passed()) << report;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

TEST(Output, ZeroWeightsGiveZeroLogitsAndClassZero) {
  Rng rng(29);
  ParameterStore s;
  Linear out = make_linear(s, "output", 5616, 3, "output", rng);
  EXPECT_EQ(out.w->shape(), (Shape{5616, 3}));
  out.w->value->fill(0.0);
  Graph g;
  Var logits = classify(g, g.constant(random_tensor({1, 5616}, 1)), out);
  EXPECT_EQ(logits.value(), Tensor({1, 3}, 0.0));
  std::array<double, 3> probs{1.0 / 3, 1.0 / 3, 1.0 / 3};
  EXPECT_EQ(DiinModel::argmax(probs), 0);
}

TEST(Output, ClassifyGradcheck) {
  Rng rng(30);
  ParameterStore s;
  auto& f = uniform_param(s, "features", {2, 7}, rng);
  Linear out = make_linear(s, "output", 7, 3, "output", rng);
  expect_grads([&](Graph& g) { return project(g, classify(g, g.param(f), out), 7); }, s);
}

TEST(Output, SentenceEncodingFeatures) {
  Graph g;
  const Tensor p = random_tensor({2, 448}, 1);
  Var f = sentence_encoding_features(g.constant(p), g.constant(p), {1}, 2, {1}, 2);
  ASSERT_EQ(f.shape(), (Shape{1, 1792}));
  for (std::size_t k = 0; k < 448; ++k) {
    EXPECT_EQ(f.value().data[k], p.data[k]);  // single real token: max is the row
    EXPECT_EQ(f.value().data[896 + k], 0.0);   // |p - h|
  }
}
