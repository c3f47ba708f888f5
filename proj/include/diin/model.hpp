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

#ifndef DIIN_MODEL_HPP
#define DIIN_MODEL_HPP

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "diin/config.hpp"
#include "diin/corpus.hpp"
#include "diin/embedding.hpp"
#include "diin/encoding.hpp"
#include "diin/features.hpp"
#include "diin/interaction.hpp"

namespace diin {

/// Linear map of the flat features to class logits, dropout first.
inline Var classify(Graph& g, Var features, const Linear& out, double keep = 1.0) {
  return affine(g, ops::dropout(features, keep), out);
}

/// [p; h; |p - h|; p * h] where p, h are the per-sentence maxima over the
/// real rows. Inputs are stacked [B*len, d].
inline Var sentence_encoding_features(Var premise, Var hypothesis,
                                      const std::vector<std::size_t>& p_lengths, std::size_t p_len,
                                      const std::vector<std::size_t>& h_lengths, std::size_t h_len) {
  auto pool = [](Var x, const std::vector<std::size_t>& lengths, std::size_t len) {
    const std::size_t d = x.dim(1);
    std::vector<Var> rows;
    for (std::size_t b = 0; b < lengths.size(); ++b) {
      const std::size_t n = std::max<std::size_t>(1, std::min(lengths[b], len));
      rows.push_back(ops::max_over_time(ops::reshape(ops::slice(x, 0, b * len, n), {1, n, d})));
    }
    return rows.size() == 1 ? rows[0] : ops::concat(rows, 0);
  };
  Var p = pool(premise, p_lengths, p_len);
  Var h = pool(hypothesis, h_lengths, h_len);
  return ops::concat({p, h, ops::abs(ops::sub(p, h)), ops::mul(p, h)}, 1);
}

struct ForwardResult {
  Var logits;       // [B, 3]
  Var premise;      // encoded, [B*p, d]
  Var hypothesis;   // encoded, [B*h, d]
  Var interaction;  // [B, p, h, k] (unset without the conv extractor)
  Var first_block;  // [B, p, h, c]
  Var features;     // [B, flat]
};

/// The full network: embedding, encoding, interaction, extractor, output.
class DiinModel {
 public:
  DiinModel(const ModelConfig& cfg, std::size_t word_vocab, std::size_t char_vocab, Rng& rng,
            const Tensor* word_vectors = nullptr)
      : cfg_(cfg) {
    cfg_.validate();
    embedding_ = make_embedding(store_, cfg_, word_vocab, char_vocab, rng, word_vectors);
    encoder_ = make_encoder(store_, cfg_, rng);
    const std::size_t d = cfg_.encoder_dim();
    std::size_t flat = 4 * d;
    if (cfg_.use_conv_extractor) {
      const auto xc = ExtractorConfig::from(cfg_);
      const std::size_t in = cfg_.similarity_matrix_mode ? 1 : d;
      flat = extractor_trace(in, cfg_.cutoff_p(), cfg_.cutoff_h(), xc).flat;
      extractor_ = make_extractor(store_, in, xc, rng);
    }
    output_ = make_linear(store_, "output", flat, kNumClasses, "output", rng);
  }

  DiinModel(const DiinModel&) = delete;
  DiinModel& operator=(const DiinModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const EmbeddingParams& embedding() const { return embedding_; }
  const EncoderParams& encoder() const { return encoder_; }
  const ExtractorParams& extractor() const { return extractor_; }
  const Linear& output() const { return output_; }

  ForwardResult forward(Graph& g, std::span<const PairFeatures> items, double keep = 1.0) const {
    if (items.empty()) throw Error("forward: empty batch");
    const std::size_t p_len = cfg_.cutoff_p(), h_len = cfg_.cutoff_h();
    std::vector<const FeatureBundle*> ps, hs;
    std::vector<std::size_t> pl, hl;
    for (const auto& it : items) {
      ps.push_back(&it.premise);
      hs.push_back(&it.hypothesis);
      pl.push_back(std::min(it.premise.length, p_len));
      hl.push_back(std::min(it.hypothesis.length, h_len));
    }
    Var pe = embed_sentences(g, embedding_, cfg_, ps, p_len, keep);
    Var he = embed_sentences(g, embedding_, cfg_, hs, h_len, keep);
    Var pm = g.constant(row_mask(pl, p_len));
    Var hm = g.constant(row_mask(hl, h_len));

    ForwardResult r;
    r.premise = encode_sentences(g, pe, encoder_.premise, cfg_, pl, p_len, pm, keep);
    r.hypothesis = encode_sentences(g, he, encoder_.hypothesis, cfg_, hl, h_len, hm, keep);

    if (!cfg_.use_conv_extractor) {
      r.features = sentence_encoding_features(r.premise, r.hypothesis, pl, p_len, hl, h_len);
    } else {
      const std::size_t d = r.premise.dim(1);
      const std::size_t bsz = items.size();
      std::vector<Var> blocks;
      for (std::size_t b = 0; b < bsz; ++b) {
        Var p = bsz == 1 ? r.premise : ops::slice(r.premise, 0, b * p_len, p_len);
        Var h = bsz == 1 ? r.hypothesis : ops::slice(r.hypothesis, 0, b * h_len, h_len);
        if (cfg_.similarity_matrix_mode)
          blocks.push_back(ops::reshape(similarity_matrix(p, h), {1, p_len, h_len, 1}));
        else
          blocks.push_back(ops::reshape(build_interaction(p, h), {1, p_len, h_len, d}));
      }
      r.interaction = blocks.size() == 1 ? blocks[0] : ops::concat(blocks, 0);
      auto ex = extract_features(g, r.interaction, extractor_, keep);
      r.features = ex.features;
      r.first_block = ex.first_block;
    }
    r.logits = classify(g, r.features, output_, keep);
    return r;
  }

  /// Encoder difference penalty at the configured ratio.
  Var difference_penalty(Graph& g) const {
    return weight_difference_penalty(g, encoder_, cfg_.diff_penalty);
  }

  /// Softmax probabilities for each item, inference mode, in chunks.
  std::vector<std::array<double, kNumClasses>> predict_proba(std::span<const PairFeatures> items,
                                                             std::size_t chunk = 64) const {
    std::vector<std::array<double, kNumClasses>> out;
    out.reserve(items.size());
    for (std::size_t s = 0; s < items.size(); s += chunk) {
      Graph g(false);
      auto part = items.subspan(s, std::min(chunk, items.size() - s));
      const Tensor& logits = forward(g, part).logits.value();
      for (std::size_t i = 0; i < part.size(); ++i) {
        std::array<double, kNumClasses> p{};
        double mx = logits.data[i * kNumClasses];
        for (int c = 1; c < kNumClasses; ++c) mx = std::max(mx, logits.data[i * kNumClasses + c]);
        double z = 0.0;
        for (int c = 0; c < kNumClasses; ++c) z += p[c] = std::exp(logits.data[i * kNumClasses + c] - mx);
        for (auto& v : p) v /= z;
        out.push_back(p);
      }
    }
    return out;
  }

  std::vector<int> predict(std::span<const PairFeatures> items) const {
    std::vector<int> out;
    for (const auto& p : predict_proba(items)) out.push_back(argmax(p));
    return out;
  }

  /// Lowest index wins ties.
  static int argmax(const std::array<double, kNumClasses>& p) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (p[c] > p[best]) best = c;
    return best;
  }

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  EmbeddingParams embedding_;
  EncoderParams encoder_;
  ExtractorParams extractor_;
  Linear output_;
};

}  // namespace diin

#endif  // DIIN_MODEL_HPP
