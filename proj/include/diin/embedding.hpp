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

#ifndef DIIN_EMBEDDING_HPP
#define DIIN_EMBEDDING_HPP

#include <span>
#include <vector>

#include "diin/config.hpp"
#include "diin/features.hpp"
#include "diin/graph.hpp"
#include "diin/ops.hpp"

namespace diin {

struct EmbeddingParams {
  Parameter* words = nullptr;        // [V, word_dim]
  Parameter* chars = nullptr;        // [C, char_dim]
  Parameter* char_kernel = nullptr;  // [K, char_dim, char_out]
  Parameter* char_bias = nullptr;    // [char_out]
};

/// Creates the embedding tables and the character convolution. The PAD rows
/// of both tables are zero and frozen. `word_vectors` (if non-empty) seeds the
/// word table verbatim.
inline EmbeddingParams make_embedding(ParameterStore& store, const ModelConfig& cfg,
                                      std::size_t word_vocab, std::size_t char_vocab, Rng& rng,
                                      const Tensor* word_vectors = nullptr) {
  EmbeddingParams e;
  e.words = &store.create("embed/word", {word_vocab, cfg.word_dim}, ParamKind::Embedding,
                          "embedding", InitSpec::uniform(0.05), rng);
  if (word_vectors && word_vectors->size() > 0) {
    if (word_vectors->shape != e.words->shape()) {
      throw ShapeError("make_embedding: word vectors " + shape_str(word_vectors->shape) +
                       " vs table " + shape_str(e.words->shape()));
    }
    *e.words->value = *word_vectors;
  }
  e.chars = &store.create("embed/char", {char_vocab, cfg.char_dim}, ParamKind::Embedding,
                          "embedding", InitSpec::uniform(0.05), rng);
  for (Parameter* t : {e.words, e.chars}) {
    const std::size_t w = t->shape()[1];
    std::fill_n(t->value->data.begin(), w, 0.0);
    t->frozen_rows = {static_cast<std::size_t>(Vocabulary::kPad)};
  }
  e.char_kernel = &store.create(
      "embed/char_conv/kernel", {cfg.char_kernel, cfg.char_dim, cfg.char_out}, ParamKind::Weight,
      "embedding", InitSpec::glorot(cfg.char_kernel * cfg.char_dim, cfg.char_kernel * cfg.char_out),
      rng);
  e.char_bias = &store.create("embed/char_conv/bias", {cfg.char_out}, ParamKind::Bias, "embedding",
                              InitSpec::zeros(), rng);
  return e;
}

/// Character feature per token: embed the 16-char window, VALID conv1d,
/// relu, max over the remaining positions. char_ids holds 16 ids per token.
inline Var char_conv_encode(Graph& g, const EmbeddingParams& e, std::span<const int> char_ids) {
  if (char_ids.size() % kCharWindow != 0)
    throw ShapeError("char_conv_encode: " + std::to_string(char_ids.size()) +
                     " ids is not a multiple of the window");
  const std::size_t tokens = char_ids.size() / kCharWindow;
  const std::size_t cdim = e.chars->shape()[1];
  Var table = g.param(*e.chars);
  Var x = ops::reshape(ops::gather_rows(table, char_ids), {tokens, kCharWindow, cdim});
  Var y = ops::relu(ops::conv1d(x, g.param(*e.char_kernel), g.param(*e.char_bias), ops::Padding::Valid));
  return ops::max_over_time(y);
}

/// Token features for a batch of sentences padded (or cut) to `len` rows:
/// [B*len, word ; char ; pos one-hot ; em]. Padded rows are zero. Dropout
/// touches the word block only.
inline Var embed_sentences(Graph& g, const EmbeddingParams& e, const ModelConfig& cfg,
                           const std::vector<const FeatureBundle*>& sents, std::size_t len,
                           double keep) {
  const std::size_t rows = sents.size() * len;
  std::vector<int> words(rows, Vocabulary::kPad);
  std::vector<int> chars(rows * kCharWindow, Vocabulary::kPad);
  Tensor pos({rows, static_cast<std::size_t>(kPosCount)});
  Tensor em({rows, 1});
  Tensor mask({rows, 1});
  for (std::size_t b = 0; b < sents.size(); ++b) {
    const FeatureBundle& s = *sents[b];
    const std::size_t n = std::min(s.length, len);
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t r = b * len + t;
      words[r] = s.word_ids[t];
      std::copy_n(s.char_ids.begin() + static_cast<std::ptrdiff_t>(t * kCharWindow), kCharWindow,
                  chars.begin() + static_cast<std::ptrdiff_t>(r * kCharWindow));
      const int p = s.pos_ids[t];
      if (p < 0 || p >= kPosCount) throw Error("embed: POS id " + std::to_string(p) + " out of range");
      if (p != kPosPad) pos.data[r * kPosCount + static_cast<std::size_t>(p)] = 1.0;
      em.data[r] = s.em_bits[t];
      mask.data[r] = 1.0;
    }
  }
  Var w = ops::dropout(ops::gather_rows(g.param(*e.words), words), keep);
  Var c = char_conv_encode(g, e, chars);
  std::vector<Var> parts{w, c, g.constant(std::move(pos))};
  if (cfg.use_em) parts.push_back(g.constant(std::move(em)));
  return ops::mul(ops::concat(parts, 1), g.constant(std::move(mask)));
}

/// Row mask [B*len, 1]: 1 for real tokens, 0 for padding.
inline Tensor row_mask(const std::vector<std::size_t>& lengths, std::size_t len) {
  Tensor m({lengths.size() * len, 1});
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t t = 0; t < std::min(lengths[b], len); ++t) m.data[b * len + t] = 1.0;
  return m;
}

struct EmbeddingOutput {
  Var premise;     // [p, d]
  Var hypothesis;  // [h, d]
};

/// Single-pair convenience wrapper; rows beyond the real length are zero.
inline EmbeddingOutput embed_pair(Graph& g, const EmbeddingParams& e, const ModelConfig& cfg,
                                  const PairFeatures& pair, double keep) {
  return {embed_sentences(g, e, cfg, {&pair.premise}, cfg.cutoff_p(), keep),
          embed_sentences(g, e, cfg, {&pair.hypothesis}, cfg.cutoff_h(), keep)};
}

}  // namespace diin

#endif  // DIIN_EMBEDDING_HPP
