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

#ifndef DIIN_ENCODING_HPP
#define DIIN_ENCODING_HPP

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "diin/config.hpp"
#include "diin/graph.hpp"
#include "diin/ops.hpp"

namespace diin {

inline constexpr double kMaskedLogit = -1e30;

// ---------------------------------------------------------------------------
// Dense layers
// ---------------------------------------------------------------------------

struct Linear {
  Parameter* w = nullptr;  // [in, out]
  Parameter* b = nullptr;  // [out]
};

inline Linear make_linear(ParameterStore& store, const std::string& name, std::size_t in,
                          std::size_t out, const std::string& group, Rng& rng) {
  Linear l;
  l.w = &store.create(name + "/w", {in, out}, ParamKind::Weight, group, InitSpec::glorot(in, out), rng);
  l.b = &store.create(name + "/b", {out}, ParamKind::Bias, group, InitSpec::zeros(), rng);
  return l;
}

/// x W + b for x [N, in].
inline Var affine(Graph& g, Var x, const Linear& l) {
  const std::size_t out = l.w->shape()[1];
  return ops::add(ops::matmul(x, g.param(*l.w)), ops::reshape(g.param(*l.b), {1, out}));
}

// ---------------------------------------------------------------------------
// Highway
// ---------------------------------------------------------------------------

/// One highway layer. `carry` is set only when the input and output widths
/// differ, in which case the carried input is projected first.
struct Highway {
  Linear transform;
  Linear gate;
  Linear carry;
  bool has_carry() const { return carry.w != nullptr; }
  std::size_t out_dim() const { return transform.w->shape()[1]; }
};

inline Highway make_highway(ParameterStore& store, const std::string& name, std::size_t in,
                            std::size_t out, const std::string& group, Rng& rng) {
  if (out < 1) throw Error("highway: output width must be >= 1");
  Highway h;
  h.transform = make_linear(store, name + "/transform", in, out, group, rng);
  h.gate = make_linear(store, name + "/gate", in, out, group, rng);
  if (in != out) h.carry = make_linear(store, name + "/carry", in, out, group, rng);
  return h;
}

/// o = g * t + (1 - g) * x', t = tanh(x Wt + bt), g = sigmoid(x Wg + bg),
/// x' = x or x Wx + bx.
inline Var highway_layer(Graph& g, Var x, const Highway& h, double keep) {
  Var xd = ops::dropout(x, keep);
  Var t = ops::tanh(affine(g, xd, h.transform));
  Var gate = ops::sigmoid(affine(g, xd, h.gate));
  Var carried = h.has_carry() ? affine(g, xd, h.carry) : x;
  return ops::add(carried, ops::mul(gate, ops::sub(t, carried)));
}

inline Var highway_stack(Graph& g, Var x, const std::vector<Highway>& layers, double keep) {
  for (const auto& h : layers) x = highway_layer(g, x, h, keep);
  return x;
}

// ---------------------------------------------------------------------------
// Self-attention
// ---------------------------------------------------------------------------

/// Attention weights [L, L] with logits w_a . [a; b; a*b]. Rows and columns
/// at or beyond `length` carry exactly zero weight.
inline Var attention_weights(Graph& g, Var p, Var w_a, std::size_t length, AttentionNorm norm,
                             double keep = 1.0) {
  const std::size_t len = p.dim(0), d = p.dim(1);
  if (w_a.value().size() != 3 * d) {
    throw ShapeError("self_attention: w_a has " + std::to_string(w_a.value().size()) +
                     " entries, expected " + std::to_string(3 * d));
  }
  if (length > len) length = len;
  Var pd = ops::dropout(p, keep);
  Var w = ops::reshape(w_a, {3 * d, 1});
  Var s1 = ops::matmul(pd, ops::slice(w, 0, 0, d));                         // [L,1]
  Var s2 = ops::transpose(ops::matmul(pd, ops::slice(w, 0, d, d)));         // [1,L]
  Var w3 = ops::transpose(ops::slice(w, 0, 2 * d, d));                      // [1,d]
  Var cross = ops::matmul(ops::mul(pd, w3), ops::transpose(pd));            // [L,L]
  Var logits = ops::add(ops::add(cross, s1), s2);
  const std::size_t axis = norm == AttentionNorm::OverKeys ? 1 : 0;
  if (length == len) return ops::softmax(logits, axis);
  Tensor additive({len, len});
  Tensor keep_mask({len, len});
  for (std::size_t i = 0; i < len; ++i)
    for (std::size_t j = 0; j < len; ++j) {
      const bool pad_i = i >= length, pad_j = j >= length;
      if (axis == 1 ? pad_j : pad_i) additive.data[i * len + j] = kMaskedLogit;
      keep_mask.data[i * len + j] = (pad_i || pad_j) ? 0.0 : 1.0;
    }
  Var a = ops::softmax(ops::add(logits, g.constant(std::move(additive))), axis);
  return ops::mul(a, g.constant(std::move(keep_mask)));
}

/// P-bar = A P-hat for one sentence P-hat [L, d].
inline Var self_attention(Graph& g, Var p, Var w_a, std::size_t length, AttentionNorm norm,
                          double keep = 1.0) {
  return ops::matmul(attention_weights(g, p, w_a, length, norm, keep), p);
}

/// True for entries of w_a that only shift every logit along the normalized
/// axis by the same amount: the query term under OverKeys, the key term under
/// OverQueries. Softmax cancels them, so their gradient is identically zero.
inline bool attention_shift_invariant(AttentionNorm norm, std::size_t d, std::size_t index) {
  return norm == AttentionNorm::OverKeys ? index < d : (index >= d && index < 2 * d);
}

// ---------------------------------------------------------------------------
// Fuse gate
// ---------------------------------------------------------------------------

struct FuseGate {
  Linear z, r, f;  // each [2d, d]
};

inline FuseGate make_fuse_gate(ParameterStore& store, const std::string& name, std::size_t d,
                               const std::string& group, Rng& rng) {
  return {make_linear(store, name + "/z", 2 * d, d, group, rng),
          make_linear(store, name + "/r", 2 * d, d, group, rng),
          make_linear(store, name + "/f", 2 * d, d, group, rng)};
}

/// z = tanh, r = sigmoid, f = sigmoid of affine maps of [P-hat; P-bar];
/// result r * P-hat + f * z.
inline Var fuse_gate(Graph& g, Var p_hat, Var p_bar, const FuseGate& fg, double keep = 1.0) {
  if (p_hat.shape() != p_bar.shape()) {
    throw ShapeError("fuse_gate: " + shape_str(p_hat.shape()) + " vs " + shape_str(p_bar.shape()));
  }
  Var x = ops::dropout(ops::concat({p_hat, p_bar}, 1), keep);
  Var z = ops::tanh(affine(g, x, fg.z));
  Var r = ops::sigmoid(affine(g, x, fg.r));
  Var f = ops::sigmoid(affine(g, x, fg.f));
  return ops::add(ops::mul(r, p_hat), ops::mul(f, z));
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

struct EncoderSide {
  std::vector<Highway> highway;
  Parameter* attention = nullptr;  // [3d]
  FuseGate fuse;
};

struct EncoderParams {
  bool enabled = false;
  EncoderSide premise;
  EncoderSide hypothesis;
  /// Corresponding (premise, hypothesis) parameters under the difference
  /// penalty. Empty when tied.
  std::vector<std::pair<Parameter*, Parameter*>> paired;
};

namespace detail {

inline void pair_linear(std::vector<std::pair<Parameter*, Parameter*>>& out, const Linear& a,
                        const Linear& b) {
  if (!a.w) return;
  out.emplace_back(a.w, b.w);
  out.emplace_back(a.b, b.b);
}

inline std::vector<Highway> make_highway_stack(ParameterStore& store, const std::string& prefix,
                                               std::size_t in, std::size_t d, Rng& rng) {
  return {make_highway(store, prefix + "/highway/0", in, d, "encoder", rng),
          make_highway(store, prefix + "/highway/1", d, d, "encoder", rng)};
}

}  // namespace detail

inline EncoderParams make_encoder(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  EncoderParams enc;
  if (!cfg.use_encoding) return enc;
  enc.enabled = true;
  const std::size_t in = cfg.embedding_dim(), d = cfg.encoder_dim();
  std::vector<Highway> shared;
  if (cfg.share_highway) shared = detail::make_highway_stack(store, "encoder", in, d, rng);

  auto build_side = [&](const std::string& prefix) {
    EncoderSide s;
    s.highway = cfg.share_highway ? shared : detail::make_highway_stack(store, prefix, in, d, rng);
    if (cfg.use_self_att)
      s.attention = &store.create(prefix + "/attention/w", {3 * d}, ParamKind::Weight, "encoder",
                                  InitSpec::glorot(3 * d, 1), rng);
    if (cfg.use_fuse_gate) s.fuse = make_fuse_gate(store, prefix + "/fuse", d, "encoder", rng);
    return s;
  };

  if (cfg.tied_encoders) {
    enc.premise = build_side("encoder/shared");
    enc.hypothesis = enc.premise;
    return enc;
  }
  enc.premise = build_side("encoder/premise");
  enc.hypothesis = build_side("encoder/hypothesis");

  auto& pairs = enc.paired;
  if (!cfg.share_highway && cfg.penalize_highway) {
    for (std::size_t l = 0; l < enc.premise.highway.size(); ++l) {
      const Highway& a = enc.premise.highway[l];
      const Highway& b = enc.hypothesis.highway[l];
      detail::pair_linear(pairs, a.transform, b.transform);
      detail::pair_linear(pairs, a.gate, b.gate);
      detail::pair_linear(pairs, a.carry, b.carry);
    }
  }
  if (enc.premise.attention) pairs.emplace_back(enc.premise.attention, enc.hypothesis.attention);
  detail::pair_linear(pairs, enc.premise.fuse.z, enc.hypothesis.fuse.z);
  detail::pair_linear(pairs, enc.premise.fuse.r, enc.hypothesis.fuse.r);
  detail::pair_linear(pairs, enc.premise.fuse.f, enc.hypothesis.fuse.f);
  return enc;
}

/// Encodes a batch of sentences stacked as [B*len, in]. `lengths` gives the
/// real length of each sentence; padded rows of the result are zero.
inline Var encode_sentences(Graph& g, Var x, const EncoderSide& side, const ModelConfig& cfg,
                            const std::vector<std::size_t>& lengths, std::size_t len,
                            Var mask, double keep) {
  if (!cfg.use_encoding) return x;
  Var h = ops::mul(highway_stack(g, x, side.highway, keep), mask);
  if (!cfg.use_self_att) return h;
  Var w_a = g.param(*side.attention);
  std::vector<Var> bars;
  bars.reserve(lengths.size());
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    Var p = lengths.size() == 1 ? h : ops::slice(h, 0, b * len, len);
    bars.push_back(self_attention(g, p, w_a, lengths[b], cfg.attention_norm, keep));
  }
  Var bar = bars.size() == 1 ? bars[0] : ops::concat(bars, 0);
  Var out;
  if (cfg.use_fuse_gate) out = fuse_gate(g, h, bar, side.fuse, keep);
  else if (cfg.addition_skip) out = ops::add(h, bar);
  else out = bar;
  return ops::mul(out, mask);
}

struct EncodedPair {
  Var premise;
  Var hypothesis;
};

/// Single pair: premise [p, in] and hypothesis [h, in] with real lengths.
inline EncodedPair encode_pair(Graph& g, Var premise, Var hypothesis, std::size_t p_len,
                               std::size_t h_len, const EncoderParams& enc,
                               const ModelConfig& cfg, double keep = 1.0) {
  auto mask = [&](std::size_t rows, std::size_t n) {
    Tensor m({rows, 1});
    for (std::size_t i = 0; i < std::min(rows, n); ++i) m.data[i] = 1.0;
    return g.constant(std::move(m));
  };
  const std::size_t p = premise.dim(0), h = hypothesis.dim(0);
  return {encode_sentences(g, premise, enc.premise, cfg, {p_len}, p, mask(p, p_len), keep),
          encode_sentences(g, hypothesis, enc.hypothesis, cfg, {h_len}, h, mask(h, h_len), keep)};
}

/// ratio * sum over paired parameters of ||w_premise - w_hypothesis||^2.
inline Var weight_difference_penalty(Graph& g, const EncoderParams& enc, double ratio) {
  if (enc.paired.empty()) return g.constant(Tensor::scalar(0.0));
  std::vector<Var> terms;
  for (const auto& [a, b] : enc.paired) {
    Var diff = ops::sub(g.param(*a), g.param(*b));
    terms.push_back(ops::reshape(ops::sum(ops::mul(diff, diff)), {1}));
  }
  return ops::scale(ops::sum(ops::concat(terms, 0)), ratio);
}

}  // namespace diin

#endif  // DIIN_ENCODING_HPP
