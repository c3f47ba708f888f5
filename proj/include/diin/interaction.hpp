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

#ifndef DIIN_INTERACTION_HPP
#define DIIN_INTERACTION_HPP

#include <string>
#include <vector>

#include "diin/config.hpp"
#include "diin/graph.hpp"
#include "diin/ops.hpp"

namespace diin {

struct ExtractorConfig {
  double eta = 0.3;
  std::size_t layers = 8;  // per dense block
  std::size_t growth = 20;
  double theta = 0.5;
  std::size_t blocks = 3;
  bool transition_relu = true;
  bool scale_down = true;  // off for the 1-channel similarity input

  static ExtractorConfig from(const ModelConfig& c) {
    return {c.eta, c.dense_layers, c.growth, c.theta, c.dense_blocks, c.transition_relu,
            !c.similarity_matrix_mode};
  }

  void validate() const {
    if (!(eta > 0.0 && eta <= 1.0)) throw Error("extractor: eta must be in (0, 1]");
    if (!(theta > 0.0 && theta <= 1.0)) throw Error("extractor: theta must be in (0, 1]");
    if (layers < 1 || growth < 1) throw Error("extractor: layers and growth must be >= 1");
  }
};

/// Shortest sequence the extractor accepts: every transition halves the
/// spatial extent, so 2^blocks positions are needed before the last pool.
inline std::size_t min_sequence_length(const ExtractorConfig& c) {
  return std::size_t{1} << c.blocks;
}

/// Closed-form channel and spatial trace of the extractor.
struct ExtractorTrace {
  std::vector<std::size_t> channels;  // input, after scale-down, then (block, transition) pairs
  std::vector<std::size_t> rows;      // spatial extent along the premise axis per stage
  std::vector<std::size_t> cols;
  std::size_t flat = 0;
};

inline ExtractorTrace extractor_trace(std::size_t channels, std::size_t p, std::size_t h,
                                      const ExtractorConfig& c) {
  c.validate();
  const std::size_t need = min_sequence_length(c);
  if (p < need || h < need) {
    throw Error("extractor: sequence lengths " + std::to_string(p) + "x" + std::to_string(h) +
                " collapse to zero; minimum sequence length is " + std::to_string(need));
  }
  ExtractorTrace t;
  t.channels.push_back(channels);
  std::size_t ch = channels;
  if (c.scale_down) {
    ch = scaled_channels(channels, c.eta);
    if (ch < 1) throw Error("scale_down: floor(" + std::to_string(channels) + " * eta) is 0");
    t.channels.push_back(ch);
  }
  t.rows.push_back(p);
  t.cols.push_back(h);
  for (std::size_t b = 0; b < c.blocks; ++b) {
    ch += c.layers * c.growth;
    t.channels.push_back(ch);
    ch = scaled_channels(ch, c.theta);
    if (ch < 1) throw Error("transition: floor(channels * theta) is 0");
    t.channels.push_back(ch);
    p = (p + 1) / 2;
    h = (h + 1) / 2;
    t.rows.push_back(p);
    t.cols.push_back(h);
  }
  t.flat = p * h * ch;
  return t;
}

// ---------------------------------------------------------------------------
// Interaction
// ---------------------------------------------------------------------------

/// I[i, j, :] = P[i, :] * H[j, :] -> [p, h, d]. Padded rows of the inputs are
/// zero, so the matching fibres are zero too.
inline Var build_interaction(Var premise, Var hypothesis) {
  if (premise.value().rank() != 2 || hypothesis.value().rank() != 2 ||
      premise.dim(1) != hypothesis.dim(1)) {
    throw ShapeError("build_interaction: width mismatch " + shape_str(premise.shape()) + " vs " +
                     shape_str(hypothesis.shape()));
  }
  return ops::pairwise_mul(premise, hypothesis);
}

/// M[i, j] = P[i, :] . H[j, :] -> [p, h].
inline Var similarity_matrix(Var premise, Var hypothesis) {
  if (premise.dim(1) != hypothesis.dim(1)) {
    throw ShapeError("similarity_matrix: width mismatch " + shape_str(premise.shape()) + " vs " +
                     shape_str(hypothesis.shape()));
  }
  return ops::matmul(premise, ops::transpose(hypothesis));
}

// ---------------------------------------------------------------------------
// Feature extractor
// ---------------------------------------------------------------------------

struct Conv {
  Parameter* w = nullptr;  // [k, k, in, out]
  Parameter* b = nullptr;  // [out]
};

inline Conv make_conv(ParameterStore& store, const std::string& name, std::size_t k,
                      std::size_t in, std::size_t out, Rng& rng) {
  Conv c;
  c.w = &store.create(name + "/w", {k, k, in, out}, ParamKind::Weight, "extractor",
                      InitSpec::glorot(k * k * in, k * k * out), rng);
  c.b = &store.create(name + "/b", {out}, ParamKind::Bias, "extractor", InitSpec::zeros(), rng);
  return c;
}

struct ExtractorParams {
  ExtractorConfig config;
  Conv scale_down;                       // unset when config.scale_down is false
  std::vector<std::vector<Conv>> blocks;  // [block][layer]
  std::vector<Conv> transitions;
};

inline ExtractorParams make_extractor(ParameterStore& store, std::size_t channels,
                                      const ExtractorConfig& cfg, Rng& rng) {
  cfg.validate();
  ExtractorParams x;
  x.config = cfg;
  std::size_t ch = channels;
  if (cfg.scale_down) {
    const std::size_t out = scaled_channels(channels, cfg.eta);
    if (out < 1) throw Error("scale_down: floor(" + std::to_string(channels) + " * eta) is 0");
    x.scale_down = make_conv(store, "extractor/scale_down", 1, ch, out, rng);
    ch = out;
  }
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    std::vector<Conv> layers;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      layers.push_back(make_conv(store, "extractor/block" + std::to_string(b) + "/layer" +
                                            std::to_string(l),
                                 3, ch, cfg.growth, rng));
      ch += cfg.growth;
    }
    x.blocks.push_back(std::move(layers));
    const std::size_t out = scaled_channels(ch, cfg.theta);
    if (out < 1) throw Error("transition: floor(channels * theta) is 0");
    x.transitions.push_back(make_conv(store, "extractor/transition" + std::to_string(b), 1, ch, out, rng));
    ch = out;
  }
  return x;
}

inline Var apply_conv(Graph& g, Var x, const Conv& c, double keep) {
  return ops::conv2d(ops::dropout(x, keep), g.param(*c.w), g.param(*c.b), ops::Padding::Same);
}

/// 1x1 convolution to floor(k * eta) channels, no activation.
inline Var scale_down(Graph& g, Var x, const Conv& c, double keep = 1.0) {
  return apply_conv(g, x, c, keep);
}

/// n layers of relu(conv3x3) each appended to the running concatenation.
inline Var dense_block(Graph& g, Var x, const std::vector<Conv>& layers, double keep = 1.0) {
  for (const auto& c : layers) x = ops::concat({x, ops::relu(apply_conv(g, x, c, keep))}, 3);
  return x;
}

/// 1x1 convolution to floor(c * theta) channels (relu optional), then a 2x2
/// stride-2 max pool.
inline Var transition(Graph& g, Var x, const Conv& c, bool relu, double keep = 1.0) {
  Var y = apply_conv(g, x, c, keep);
  if (relu) y = ops::relu(y);
  return ops::maxpool2d(y, 2, 2);
}

struct ExtractorOutput {
  Var features;     // [B, flat]
  Var first_block;  // output of the first dense block, [B, p, h, c]
};

/// x [B, p, h, k] -> flattened features.
inline ExtractorOutput extract_features(Graph& g, Var x, const ExtractorParams& params,
                                        double keep = 1.0) {
  const auto& cfg = params.config;
  if (x.value().rank() != 4) throw ShapeError("extract_features: expects [B,p,h,k], got " + shape_str(x.shape()));
  const std::size_t need = min_sequence_length(cfg);
  if (x.dim(1) < need || x.dim(2) < need) {
    throw Error("extractor: sequence lengths " + std::to_string(x.dim(1)) + "x" +
                std::to_string(x.dim(2)) + " collapse to zero; minimum sequence length is " +
                std::to_string(need));
  }
  ExtractorOutput out;
  if (cfg.scale_down) x = scale_down(g, x, params.scale_down, keep);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    x = dense_block(g, x, params.blocks[b], keep);
    if (b == 0) out.first_block = x;
    x = transition(g, x, params.transitions[b], cfg.transition_relu, keep);
  }
  out.features = ops::flatten(x);
  return out;
}

}  // namespace diin

#endif  // DIIN_INTERACTION_HPP
