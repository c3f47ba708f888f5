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

#ifndef DIIN_CONFIG_HPP
#define DIIN_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "diin/tensor.hpp"
#include "diin/text.hpp"

namespace diin {

/// floor(k * ratio) with a small guard against binary rounding
/// (600 * 0.3 must give 180).
inline std::size_t scaled_channels(std::size_t k, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(k) * ratio + 1e-9));
}

enum class AttentionNorm { OverKeys, OverQueries };

/// Every hyperparameter and ablation switch of a run. Text form is flat
/// key=value, one per line, '#' comments; unknown keys are rejected.
struct ModelConfig {
  // data
  std::string dataset = "multinli";  // multinli | snli | quora
  std::size_t max_len_p = 0;         // 0: dataset cutoff
  std::size_t max_len_h = 0;
  double snli_mix_fraction = 0.15;

  // embedding
  std::size_t word_dim = 300;
  std::size_t char_dim = 100;
  std::size_t char_out = 100;
  std::size_t char_kernel = 5;
  std::size_t model_dim = 0;  // 0: embedding width

  // extractor
  double eta = 0.3;
  std::size_t dense_layers = 8;
  std::size_t growth = 20;
  double theta = 0.5;
  std::size_t dense_blocks = 3;
  bool transition_relu = true;

  // encoder
  bool share_highway = true;
  bool penalize_highway = true;
  AttentionNorm attention_norm = AttentionNorm::OverKeys;

  // optimization
  std::size_t batch_size = 70;
  double learning_rate = 0.5;
  double sgd_learning_rate = 3e-4;
  double rho = 0.95;
  double epsilon = 1e-8;
  std::size_t switch_patience = 30000;
  double keep_decay = 0.977;
  std::size_t keep_decay_steps = 10000;
  bool keep_staircase = false;
  double l2_full_ratio = 0.9e-5;
  std::size_t l2_full_step = 100000;
  double diff_penalty = 1e-3;
  bool l2_include_embeddings = false;
  bool l2_include_biases = false;
  std::size_t dev_every = 1000;

  // features
  bool em_exclude_stopwords = false;

  // ablations
  bool use_em = true;
  bool use_conv_extractor = true;
  bool use_encoding = true;
  bool use_self_att = true;
  bool use_fuse_gate = true;
  bool addition_skip = false;
  bool similarity_matrix_mode = false;
  bool tied_encoders = false;

  std::uint64_t seed = 1;

  std::size_t cutoff_p() const { return max_len_p ? max_len_p : dataset_cutoff(); }
  std::size_t cutoff_h() const { return max_len_h ? max_len_h : dataset_cutoff(); }

  std::size_t dataset_cutoff() const {
    if (dataset == "snli") return 32;
    if (dataset == "quora") return 24;
    return 48;
  }

  /// Width of the concatenated token features.
  std::size_t embedding_dim() const {
    return word_dim + char_out + static_cast<std::size_t>(kPosCount) + (use_em ? 1 : 0);
  }

  /// Width of the encoded representation (d).
  std::size_t encoder_dim() const {
    if (!use_encoding) return embedding_dim();
    return model_dim ? model_dim : embedding_dim();
  }

  void validate() const {
    auto fail = [](const std::string& msg) { throw Error("invalid config: " + msg); };
    if (dataset != "multinli" && dataset != "snli" && dataset != "quora")
      fail("dataset must be multinli, snli or quora");
    if (!(eta > 0.0 && eta <= 1.0)) fail("eta must be in (0, 1]");
    if (!(theta > 0.0 && theta <= 1.0)) fail("theta must be in (0, 1]");
    if (dense_layers < 1) fail("dense_layers must be >= 1");
    if (growth < 1) fail("growth must be >= 1");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (word_dim < 1 || char_dim < 1 || char_out < 1) fail("embedding widths must be >= 1");
    if (char_kernel < 1 || char_kernel > 16) fail("char_kernel must be in [1, 16]");
    if (!(keep_decay > 0.0 && keep_decay <= 1.0)) fail("keep_decay must be in (0, 1]");
    if (keep_decay_steps < 1 || l2_full_step < 2) fail("schedule step counts too small");
    if (!(rho > 0.0 && rho < 1.0)) fail("rho must be in (0, 1)");
    if (epsilon <= 0.0) fail("epsilon must be > 0");
    if (dev_every < 1) fail("dev_every must be >= 1");
    if (addition_skip && (!use_self_att || use_fuse_gate))
      fail("addition_skip requires use_self_att=true and use_fuse_gate=false");
    if (use_fuse_gate && !use_self_att) fail("use_fuse_gate requires use_self_att");
    if (!use_encoding && (model_dim != 0 && model_dim != embedding_dim()))
      fail("model_dim needs the encoding layer");
    if (!use_encoding && tied_encoders) fail("tied_encoders needs the encoding layer");
    if (similarity_matrix_mode && !use_conv_extractor)
      fail("similarity_matrix_mode needs the convolutional extractor");
    if (cutoff_p() < 1 || cutoff_h() < 1) fail("sequence cutoffs must be >= 1");
  }

  /// Sets one field from text. Unknown keys and unparsable values throw.
  void set(const std::string& key, const std::string& value) {
    auto& table = setters();
    auto it = table.find(key);
    if (it == table.end()) throw Error("unknown config key: " + key);
    try {
      it->second(*this, value);
    } catch (const Error&) {
      throw;
    } catch (const std::exception&) {
      throw Error("bad value for " + key + ": '" + value + "'");
    }
  }

  /// Applies "key=value" overrides.
  void apply(const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw Error("override must be key=value: " + o);
      set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
    }
  }

  static ModelConfig parse(const std::string& text) {
    ModelConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error("config line " + std::to_string(lineno) + ": expected key=value");
      try {
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const Error& e) {
        throw Error("config line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return c;
  }

  static ModelConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  /// Canonical text form; parse(to_text()) reproduces the config.
  std::string to_text() const {
    std::ostringstream out;
    for (const auto& key : keys()) out << key << '=' << get(key) << '\n';
    return out.str();
  }

  std::string get(const std::string& key) const {
    auto& table = getters();
    auto it = table.find(key);
    if (it == table.end()) throw Error("unknown config key: " + key);
    return it->second(*this);
  }

  static std::vector<std::string> keys() {
    std::vector<std::string> out;
    for (const auto& [k, v] : getters()) out.push_back(k);
    return out;
  }

  friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
    return a.to_text() == b.to_text();
  }

 private:
  using Setter = std::function<void(ModelConfig&, const std::string&)>;
  using Getter = std::function<std::string(const ModelConfig&)>;

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  static bool to_bool(const std::string& v) {
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw Error("expected a boolean, got '" + v + "'");
  }

  static std::size_t to_size(const std::string& v) {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw Error("expected a non-negative integer, got '" + v + "'");
    const auto n = std::stoull(v, &pos);
    if (pos != v.size()) throw Error("expected an integer, got '" + v + "'");
    return static_cast<std::size_t>(n);
  }

  static double to_double(const std::string& v) {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw Error("expected a number, got '" + v + "'");
    return d;
  }

  static std::string fmt(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  }

  template <typename Fn>
  static void each_field(Fn&& fn) {
    fn("dataset", &ModelConfig::dataset);
    fn("max_len_p", &ModelConfig::max_len_p);
    fn("max_len_h", &ModelConfig::max_len_h);
    fn("snli_mix_fraction", &ModelConfig::snli_mix_fraction);
    fn("word_dim", &ModelConfig::word_dim);
    fn("char_dim", &ModelConfig::char_dim);
    fn("char_out", &ModelConfig::char_out);
    fn("char_kernel", &ModelConfig::char_kernel);
    fn("model_dim", &ModelConfig::model_dim);
    fn("eta", &ModelConfig::eta);
    fn("dense_layers", &ModelConfig::dense_layers);
    fn("growth", &ModelConfig::growth);
    fn("theta", &ModelConfig::theta);
    fn("dense_blocks", &ModelConfig::dense_blocks);
    fn("transition_relu", &ModelConfig::transition_relu);
    fn("share_highway", &ModelConfig::share_highway);
    fn("penalize_highway", &ModelConfig::penalize_highway);
    fn("attention_norm", &ModelConfig::attention_norm);
    fn("batch_size", &ModelConfig::batch_size);
    fn("learning_rate", &ModelConfig::learning_rate);
    fn("sgd_learning_rate", &ModelConfig::sgd_learning_rate);
    fn("rho", &ModelConfig::rho);
    fn("epsilon", &ModelConfig::epsilon);
    fn("switch_patience", &ModelConfig::switch_patience);
    fn("keep_decay", &ModelConfig::keep_decay);
    fn("keep_decay_steps", &ModelConfig::keep_decay_steps);
    fn("keep_staircase", &ModelConfig::keep_staircase);
    fn("l2_full_ratio", &ModelConfig::l2_full_ratio);
    fn("l2_full_step", &ModelConfig::l2_full_step);
    fn("diff_penalty", &ModelConfig::diff_penalty);
    fn("l2_include_embeddings", &ModelConfig::l2_include_embeddings);
    fn("l2_include_biases", &ModelConfig::l2_include_biases);
    fn("dev_every", &ModelConfig::dev_every);
    fn("em_exclude_stopwords", &ModelConfig::em_exclude_stopwords);
    fn("use_em", &ModelConfig::use_em);
    fn("use_conv_extractor", &ModelConfig::use_conv_extractor);
    fn("use_encoding", &ModelConfig::use_encoding);
    fn("use_self_att", &ModelConfig::use_self_att);
    fn("use_fuse_gate", &ModelConfig::use_fuse_gate);
    fn("addition_skip", &ModelConfig::addition_skip);
    fn("similarity_matrix_mode", &ModelConfig::similarity_matrix_mode);
    fn("tied_encoders", &ModelConfig::tied_encoders);
    fn("seed", &ModelConfig::seed);
  }

  static void read(const std::string& v, std::string& out) { out = v; }
  static void read(const std::string& v, bool& out) { out = to_bool(v); }
  static void read(const std::string& v, std::size_t& out) { out = to_size(v); }
  static void read(const std::string& v, double& out) { out = to_double(v); }
  static void read(const std::string& v, AttentionNorm& out) {
    if (v == "over_keys") out = AttentionNorm::OverKeys;
    else if (v == "over_queries") out = AttentionNorm::OverQueries;
    else throw Error("attention_norm must be over_keys or over_queries");
  }

  static std::string write(const std::string& v) { return v; }
  static std::string write(bool v) { return v ? "true" : "false"; }
  static std::string write(std::size_t v) { return std::to_string(v); }
  static std::string write(double v) { return fmt(v); }
  static std::string write(AttentionNorm v) {
    return v == AttentionNorm::OverKeys ? "over_keys" : "over_queries";
  }

  static const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
      std::map<std::string, Setter> t;
      each_field([&](const char* name, auto member) {
        t[name] = [member](ModelConfig& c, const std::string& v) { read(v, c.*member); };
      });
      return t;
    }();
    return table;
  }

  static const std::map<std::string, Getter>& getters() {
    static const std::map<std::string, Getter> table = [] {
      std::map<std::string, Getter> t;
      each_field([&](const char* name, auto member) {
        t[name] = [member](const ModelConfig& c) { return write(c.*member); };
      });
      return t;
    }();
    return table;
  }
};

// ---------------------------------------------------------------------------
// Ablation rows
// ---------------------------------------------------------------------------

struct AblationRow {
  std::string name;
  std::string description;
  std::function<void(ModelConfig&)> apply;
};

/// The full model plus the eight ablations, in table order.
inline const std::vector<AblationRow>& ablation_rows() {
  static const std::vector<AblationRow> rows = {
      {"full", "DIIN", [](ModelConfig&) {}},
      {"em", "DIIN - exact match feature", [](ModelConfig& c) { c.use_em = false; }},
      {"conv", "DIIN - convolutional structure", [](ModelConfig& c) { c.use_conv_extractor = false; }},
      {"encoding", "DIIN - encoding layer",
       [](ModelConfig& c) {
         c.use_encoding = false;
         c.model_dim = 0;
       }},
      {"selfatt-fuse", "DIIN - self-attention and fuse gate",
       [](ModelConfig& c) {
         c.use_self_att = false;
         c.use_fuse_gate = false;
       }},
      {"fuse", "DIIN - fuse gate", [](ModelConfig& c) { c.use_fuse_gate = false; }},
      {"addition-skip", "DIIN - fuse gate + addition as skip connection",
       [](ModelConfig& c) {
         c.use_fuse_gate = false;
         c.addition_skip = true;
       }},
      {"similarity", "DIIN - dense interaction tensor + similarity matrix",
       [](ModelConfig& c) { c.similarity_matrix_mode = true; }},
      {"tied", "DIIN - tied encoding layer parameter", [](ModelConfig& c) { c.tied_encoders = true; }},
  };
  return rows;
}

inline const AblationRow& ablation_row(const std::string& name) {
  for (const auto& r : ablation_rows())
    if (r.name == name) return r;
  throw Error("unknown ablation row: " + name);
}

inline ModelConfig with_ablation(ModelConfig base, const std::string& row) {
  ablation_row(row).apply(base);
  base.validate();
  return base;
}

}  // namespace diin

#endif  // DIIN_CONFIG_HPP
