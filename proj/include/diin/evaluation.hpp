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

#ifndef DIIN_EVALUATION_HPP
#define DIIN_EVALUATION_HPP

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "diin/config.hpp"
#include "diin/corpus.hpp"
#include "diin/features.hpp"
#include "diin/model.hpp"
#include "diin/text.hpp"

namespace diin {

// ---------------------------------------------------------------------------
// Error-analysis tags
// ---------------------------------------------------------------------------

struct TagSet {
  bool word_overlap = false;
  bool negation = false;
  bool long_sentence = false;
  bool quantifier = false;
  bool modal = false;
  bool belief = false;
  bool conditional_keyword = false;

  bool operator==(const TagSet&) const = default;
};

inline constexpr std::array<std::string_view, 7> kTagNames = {
    "word_overlap", "negation", "long_sentence", "quantifier", "modal", "belief", "conditional_keyword"};

inline bool tag_value(const TagSet& t, std::size_t i) {
  const std::array<bool, 7> v{t.word_overlap, t.negation, t.long_sentence, t.quantifier,
                              t.modal,        t.belief,   t.conditional_keyword};
  return v.at(i);
}

namespace lexicon {

inline const std::unordered_set<std::string>& negations() {
  static const std::unordered_set<std::string> s{"no", "not", "n't", "never", "none"};
  return s;
}
inline const std::unordered_set<std::string>& quantifiers() {
  static const std::unordered_set<std::string> s{"much", "enough", "more", "most",   "less",
                                                 "least", "no",    "none", "some",   "any",
                                                 "many",  "few",   "several", "almost", "nearly"};
  return s;
}
inline const std::unordered_set<std::string>& modals() {
  static const std::unordered_set<std::string> s{"can", "could", "may", "might", "must", "will", "would", "should"};
  return s;
}
inline const std::unordered_set<std::string>& beliefs() {
  static const std::unordered_set<std::string> s{"know",   "believe", "understand", "doubt",    "think",
                                                 "suppose", "recognize", "forget",  "remember", "imagine",
                                                 "mean",   "agree",   "disagree",   "deny",     "promise"};
  return s;
}
inline const std::unordered_set<std::string>& conditionals() {
  static const std::unordered_set<std::string> s{"if", "unless"};
  return s;
}

}  // namespace lexicon

/// Multiset intersection of lowercased tokens over the shorter side.
inline double token_overlap(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : a) ++counts[lowercase(t)];
  std::size_t shared = 0;
  for (const auto& t : b) {
    auto it = counts.find(lowercase(t));
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++shared;
    }
  }
  return static_cast<double>(shared) / static_cast<double>(std::min(a.size(), b.size()));
}

inline TagSet tag_example(const SentencePair& pair) {
  TagSet t;
  t.word_overlap = token_overlap(pair.premise, pair.hypothesis) > 0.70;
  t.long_sentence = pair.premise.size() > 30 || pair.hypothesis.size() > 16;
  for (const auto* side : {&pair.premise, &pair.hypothesis}) {
    for (const auto& raw : *side) {
      const std::string w = lowercase(raw);
      if (lexicon::negations().count(w) || detail::ends_with(w, "n't")) t.negation = true;
      if (lexicon::quantifiers().count(w)) t.quantifier = true;
      if (lexicon::modals().count(w)) t.modal = true;
      if (lexicon::beliefs().count(w)) t.belief = true;
      if (lexicon::conditionals().count(w)) t.conditional_keyword = true;
    }
  }
  return t;
}

// ---------------------------------------------------------------------------
// Accuracy reports
// ---------------------------------------------------------------------------

struct Tally {
  std::size_t total = 0;
  std::size_t correct = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
  void add(bool ok) {
    ++total;
    correct += ok;
  }
};

struct TagTally {
  Tally with, without;
};

struct EvalReport {
  Tally overall;
  std::map<std::string, Tally> per_genre;
  std::optional<Tally> matched, mismatched;
  std::map<std::string, TagTally> per_tag;

  double accuracy() const { return overall.accuracy(); }
};

/// Scores predictions against gold labels. When `matched_genres` is
/// non-empty, examples whose genre is in it count as matched, the rest as
/// mismatched.
inline EvalReport score(const std::vector<int>& predictions, const std::vector<SentencePair>& pairs,
                        const std::set<std::string>& matched_genres = {}) {
  if (pairs.empty()) throw Error("evaluate: empty dataset");
  if (predictions.size() != pairs.size()) throw Error("evaluate: prediction count mismatch");
  EvalReport r;
  if (!matched_genres.empty()) {
    r.matched.emplace();
    r.mismatched.emplace();
  }
  for (auto name : kTagNames) r.per_tag[std::string(name)];
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool ok = predictions[i] == static_cast<int>(pairs[i].label);
    r.overall.add(ok);
    r.per_genre[pairs[i].genre].add(ok);
    if (!matched_genres.empty()) (matched_genres.count(pairs[i].genre) ? *r.matched : *r.mismatched).add(ok);
    const TagSet tags = tag_example(pairs[i]);
    for (std::size_t k = 0; k < kTagNames.size(); ++k) {
      auto& tt = r.per_tag[std::string(kTagNames[k])];
      (tag_value(tags, k) ? tt.with : tt.without).add(ok);
    }
  }
  return r;
}

inline EvalReport evaluate(const DiinModel& model, const std::vector<SentencePair>& pairs,
                           const std::vector<PairFeatures>& features,
                           const std::set<std::string>& matched_genres = {}) {
  if (features.empty()) throw Error("evaluate: empty dataset");
  return score(model.predict(features), pairs, matched_genres);
}

/// Human-readable table, one line per group.
inline std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  char buf[128];
  auto line = [&](const std::string& name, const Tally& t) {
    std::snprintf(buf, sizeof buf, "%-24s %8zu %8.4f\n", name.c_str(), t.total, t.accuracy());
    os << buf;
  };
  line("overall", r.overall);
  if (r.matched) line("matched", *r.matched);
  if (r.mismatched) line("mismatched", *r.mismatched);
  for (const auto& [g, t] : r.per_genre) line("genre:" + g, t);
  for (const auto& [tag, t] : r.per_tag)
    if (t.with.total) line("tag:" + tag, t.with);
  return os.str();
}

inline nlohmann::json report_json(const EvalReport& r) {
  auto tally = [](const Tally& t) {
    return nlohmann::json{{"total", t.total}, {"correct", t.correct}, {"accuracy", t.accuracy()}};
  };
  nlohmann::json j;
  j["overall"] = tally(r.overall);
  if (r.matched) j["matched"] = tally(*r.matched);
  if (r.mismatched) j["mismatched"] = tally(*r.mismatched);
  for (const auto& [g, t] : r.per_genre) j["per_genre"][g] = tally(t);
  for (const auto& [tag, t] : r.per_tag) j["per_tag"][tag] = {{"with", tally(t.with)}, {"without", tally(t.without)}};
  return j;
}

// ---------------------------------------------------------------------------
// Activation export
// ---------------------------------------------------------------------------

enum class ExportTarget { Interaction, DenseBlock1 };

inline std::string_view target_name(ExportTarget t) {
  return t == ExportTarget::Interaction ? "interaction" : "dense_block_1";
}

inline ExportTarget parse_export_target(std::string_view s) {
  if (s == "interaction") return ExportTarget::Interaction;
  if (s == "dense_block_1") return ExportTarget::DenseBlock1;
  throw Error("unknown export target '" + std::string(s) + "' (interaction | dense_block_1)");
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Writes one p x h CSV per channel (header row: hypothesis tokens; first
/// column: premise tokens; cropped to the real lengths) and a JSON sidecar.
/// Returns the CSV paths.
inline std::vector<std::filesystem::path> export_activations(const DiinModel& model, const PairFeatures& pair,
                                                             ExportTarget target,
                                                             const std::vector<std::size_t>& channels,
                                                             const std::filesystem::path& out_dir) {
  if (!model.config().use_conv_extractor) throw Error("export: model has no interaction tensor");
  if (channels.empty()) throw Error("export: no channels selected");
  Graph g;
  const std::vector<PairFeatures> one{pair};
  auto r = model.forward(g, one);
  const Tensor& t = (target == ExportTarget::Interaction ? r.interaction : r.first_block).value();
  const std::size_t ph = t.shape[1], hh = t.shape[2], ch = t.shape[3];
  for (std::size_t c : channels)
    if (c >= ch)
      throw Error("export: channel " + std::to_string(c) + " out of range for " + std::string(target_name(target)) +
                  " with " + std::to_string(ch) + " channels");
  const std::size_t rows = std::min(pair.premise.length, ph);
  const std::size_t cols = std::min(pair.hypothesis.length, hh);
  std::filesystem::create_directories(out_dir);
  const std::string stem(target_name(target));
  std::vector<std::filesystem::path> files;
  char buf[40];
  for (std::size_t c : channels) {
    const auto path = out_dir / (stem + "_ch" + std::to_string(c) + ".csv");
    std::ofstream out(path);
    if (!out) throw Error("export: cannot write " + path.string());
    out << "premise\\hypothesis";
    for (std::size_t j = 0; j < cols; ++j) out << ',' << detail::csv_field(pair.hypothesis.tokens.at(j));
    out << '\n';
    for (std::size_t i = 0; i < rows; ++i) {
      out << detail::csv_field(pair.premise.tokens.at(i));
      for (std::size_t j = 0; j < cols; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", t.data[(i * hh + j) * ch + c]);
        out << ',' << buf;
      }
      out << '\n';
    }
    files.push_back(path);
  }
  nlohmann::json side;
  side["target"] = stem;
  side["colormap"] = "viridis";
  side["channels"] = channels;
  side["available_channels"] = ch;
  side["rows"] = rows;
  side["cols"] = cols;
  side["premise_tokens"] = std::vector<std::string>(pair.premise.tokens.begin(), pair.premise.tokens.begin() + static_cast<std::ptrdiff_t>(rows));
  side["hypothesis_tokens"] = std::vector<std::string>(pair.hypothesis.tokens.begin(), pair.hypothesis.tokens.begin() + static_cast<std::ptrdiff_t>(cols));
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  side["files"] = names;
  std::ofstream(out_dir / (stem + ".json")) << side.dump(2) << '\n';
  return files;
}

// ---------------------------------------------------------------------------
// Parameter counts
// ---------------------------------------------------------------------------

struct ParamCount {
  std::size_t total = 0;      // trainable, embedding layer excluded
  std::size_t embedding = 0;  // word table, char table, char conv
  std::map<std::string, std::size_t> by_module;

  std::size_t with_embedding() const { return total + embedding; }
};

inline ParamCount count_store(const ParameterStore& store) {
  ParamCount c;
  for (const auto& p : store) {
    if (!p->trainable) continue;
    c.by_module[p->group] += p->size();
    (p->group == "embedding" ? c.embedding : c.total) += p->size();
  }
  return c;
}

/// Builds the model and counts its parameters. Vocabulary sizes only affect
/// the embedding figure.
inline ParamCount count_parameters(const ModelConfig& config, std::size_t word_vocab = 2, std::size_t char_vocab = 2) {
  Rng rng(config.seed);
  DiinModel m(config, word_vocab, char_vocab, rng);
  return count_store(m.params());
}

/// Dimensions listed in the appendix study.
inline const std::vector<std::size_t>& table6_dims() {
  static const std::vector<std::size_t> d{10, 30, 50, 100, 150, 250, 350, 447, 540, 600};
  return d;
}

/// Config for one row of the dimension study: the default model with the
/// encoder width set to d (448 is the unmodified model).
inline ModelConfig dimension_config(std::size_t d, ModelConfig base = {}) {
  base.model_dim = d == base.embedding_dim() ? 0 : d;
  return base;
}

/// "4.36 M", "708 K".
inline std::string format_count(std::size_t n) {
  char buf[32];
  if (n >= 1000000)
    std::snprintf(buf, sizeof buf, "%.2f M", static_cast<double>(n) / 1e6);
  else if (n >= 1000)
    std::snprintf(buf, sizeof buf, "%.0f K", static_cast<double>(n) / 1e3);
  else
    std::snprintf(buf, sizeof buf, "%zu", n);
  return buf;
}

}  // namespace diin

#endif  // DIIN_EVALUATION_HPP
