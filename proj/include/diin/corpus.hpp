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

#ifndef DIIN_CORPUS_HPP
#define DIIN_CORPUS_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "diin/text.hpp"

namespace diin {

enum class Label : int { Entailment = 0, Neutral = 1, Contradiction = 2 };
inline constexpr int kNumClasses = 3;

inline std::string_view label_name(Label l) {
  switch (l) {
    case Label::Entailment: return "entailment";
    case Label::Neutral: return "neutral";
    case Label::Contradiction: return "contradiction";
  }
  return "?";
}

inline std::optional<Label> parse_label(std::string_view s) {
  if (s == "entailment") return Label::Entailment;
  if (s == "neutral") return Label::Neutral;
  if (s == "contradiction") return Label::Contradiction;
  return std::nullopt;
}

struct SentencePair {
  std::vector<std::string> premise;
  std::vector<std::string> hypothesis;
  std::vector<std::string> premise_tags;     // empty when the corpus has none
  std::vector<std::string> hypothesis_tags;
  Label label = Label::Entailment;
  std::string genre;
};

enum class CorpusFormat { SnliJsonl, MultiNliJsonl, QuoraTsv };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  if (s == "snli-jsonl") return CorpusFormat::SnliJsonl;
  if (s == "multinli-jsonl") return CorpusFormat::MultiNliJsonl;
  if (s == "quora-tsv") return CorpusFormat::QuoraTsv;
  throw Error("unknown corpus format: " + std::string(s));
}

/// Leaves of a bracketed constituency parse, "(ROOT (S (NP (DT A) (NN man))))"
/// -> tokens {A, man}, tags {DT, NN}.
inline void parse_tree_leaves(std::string_view tree, std::vector<std::string>& tokens,
                              std::vector<std::string>& tags) {
  std::size_t i = 0;
  while (i < tree.size()) {
    if (tree[i] != '(') {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < tree.size() && tree[j] != ' ' && tree[j] != '(' && tree[j] != ')') ++j;
    std::string label(tree.substr(i + 1, j - i - 1));
    if (j < tree.size() && tree[j] == ' ') {
      std::size_t k = j + 1;
      if (k < tree.size() && tree[k] != '(') {
        std::size_t e = k;
        while (e < tree.size() && tree[e] != ')') ++e;
        tags.push_back(label);
        tokens.emplace_back(tree.substr(k, e - k));
        i = e;
        continue;
      }
    }
    i = j;
  }
}

namespace detail {

inline void split_tagged(const nlohmann::json& obj, const std::string& side,
                         std::vector<std::string>& tokens, std::vector<std::string>& tags) {
  const std::string parse_key = side + "_parse";
  const std::string pos_key = side + "_pos";
  if (obj.contains(parse_key) && obj[parse_key].is_string()) {
    parse_tree_leaves(obj[parse_key].get<std::string>(), tokens, tags);
    if (!tokens.empty()) return;
  }
  tokens = tokenize(obj.at(side).get<std::string>());
  if (obj.contains(pos_key) && obj[pos_key].is_string()) {
    std::istringstream ss(obj[pos_key].get<std::string>());
    std::string t;
    while (ss >> t) tags.push_back(t);
    if (tags.size() != tokens.size()) tags.clear();
  }
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find('\t', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
  return out;
}

}  // namespace detail

/// Reads a corpus. Pairs labelled "-" are dropped, Quora duplicate/not
/// duplicate map to entailment/neutral. Parse errors carry the line number.
inline std::vector<SentencePair> load_corpus(const std::filesystem::path& path, CorpusFormat format,
                                             std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error("load_corpus: cannot open " + path.string());
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  std::vector<SentencePair> pairs;
  std::string line;
  std::size_t lineno = 0;
  std::size_t skipped_empty = 0;
  std::vector<std::size_t> tsv_cols{0, 1, 2};

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    SentencePair pair;
    if (format == CorpusFormat::QuoraTsv) {
      auto cols = detail::split_tabs(line);
      if (lineno == 1) {
        auto find = [&](const char* name) {
          return std::find(cols.begin(), cols.end(), name) - cols.begin();
        };
        const auto q1 = find("question1"), q2 = find("question2"), dup = find("is_duplicate");
        const auto n = static_cast<std::ptrdiff_t>(cols.size());
        if (q1 < n && q2 < n && dup < n) {
          tsv_cols = {static_cast<std::size_t>(q1), static_cast<std::size_t>(q2),
                      static_cast<std::size_t>(dup)};
          continue;
        }
      }
      const std::size_t need = *std::max_element(tsv_cols.begin(), tsv_cols.end()) + 1;
      if (cols.size() < need) {
        throw Error("load_corpus: malformed line " + where + ": expected " +
                    std::to_string(need) + " tab-separated fields");
      }
      const std::string& lab = cols[tsv_cols[2]];
      if (lab == "1") pair.label = Label::Entailment;
      else if (lab == "0") pair.label = Label::Neutral;
      else throw Error("load_corpus: unknown label '" + lab + "' at " + where);
      pair.premise = tokenize(cols[tsv_cols[0]]);
      pair.hypothesis = tokenize(cols[tsv_cols[1]]);
    } else {
      nlohmann::json obj;
      try {
        obj = nlohmann::json::parse(line);
        const auto lab = obj.at("gold_label").get<std::string>();
        if (lab == "-") continue;
        auto parsed = parse_label(lab);
        if (!parsed) throw Error("load_corpus: unknown label '" + lab + "' at " + where);
        pair.label = *parsed;
        detail::split_tagged(obj, "sentence1", pair.premise, pair.premise_tags);
        detail::split_tagged(obj, "sentence2", pair.hypothesis, pair.hypothesis_tags);
        if (obj.contains("genre") && obj["genre"].is_string()) pair.genre = obj["genre"].get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw Error("load_corpus: malformed line " + where + ": " + e.what());
      }
    }
    if (pair.premise.empty() || pair.hypothesis.empty()) {
      ++skipped_empty;
      continue;
    }
    pairs.push_back(std::move(pair));
  }
  if (skipped_empty) warn(std::to_string(skipped_empty) + " pairs with an empty sentence skipped");
  if (pairs.empty()) warn("corpus " + path.string() + " is empty");
  return pairs;
}

/// Deterministic fraction of a corpus (used to mix SNLI into MultiNLI runs).
inline std::vector<SentencePair> sample_fraction(const std::vector<SentencePair>& pairs,
                                                 double fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(pairs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pairs.size())));
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<SentencePair> out;
  out.reserve(keep);
  for (auto i : idx) out.push_back(pairs[i]);
  return out;
}

/// 32-or-more template pairs with a balanced, learnable label signal: the
/// hypothesis either restates the premise (entailment), negates it
/// (contradiction), or adds an unsupported detail (neutral).
inline std::vector<SentencePair> synthetic_corpus(std::size_t count, std::uint64_t seed) {
  static const std::vector<std::string> subjects = {"man", "woman", "dog", "child", "girl",
                                                    "boy", "cat", "player"};
  static const std::vector<std::string> verbs = {"running", "sleeping", "eating", "singing",
                                                 "jumping", "reading"};
  static const std::vector<std::string> places = {"park", "street", "house", "beach", "field"};
  static const std::vector<std::string> extras = {"happily", "quickly", "alone", "outside"};
  std::mt19937_64 rng(seed);
  auto pick = [&](const std::vector<std::string>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::vector<SentencePair> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string s = pick(subjects), v = pick(verbs), p = pick(places);
    SentencePair pair;
    pair.premise = tokenize("A " + s + " is " + v + " in the " + p + " .");
    pair.label = static_cast<Label>(i % 3);
    switch (pair.label) {
      case Label::Entailment: pair.hypothesis = tokenize("A " + s + " is " + v + " ."); break;
      case Label::Contradiction: pair.hypothesis = tokenize("The " + s + " is not " + v + " ."); break;
      case Label::Neutral:
        pair.hypothesis = tokenize("A " + s + " is " + v + " " + pick(extras) + " .");
        break;
    }
    pair.genre = "synthetic";
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace diin

#endif  // DIIN_CORPUS_HPP
