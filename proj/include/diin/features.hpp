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

#ifndef DIIN_FEATURES_HPP
#define DIIN_FEATURES_HPP

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "diin/corpus.hpp"
#include "diin/graph.hpp"
#include "diin/text.hpp"

namespace diin {

inline constexpr std::size_t kCharWindow = 16;

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Token <-> id map plus an id -> vector table. Id 0 is PAD (zero vector,
/// frozen), id 1 is OOV.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kOov = 1;

  explicit Vocabulary(std::size_t dim = 300) : dim_(dim) {
    add("<pad>");
    add("<oov>");
  }

  int add(const std::string& token) {
    if (auto it = index_.find(token); it != index_.end()) return it->second;
    const int id = static_cast<int>(tokens_.size());
    index_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  int id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kOov : it->second;
  }
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return dim_; }

  /// Vector table [size, dim]; empty until initialized.
  const Tensor& vectors() const { return vectors_; }
  Tensor& vectors() { return vectors_; }

  /// Every row uniform(-limit, limit), PAD row zero.
  void init_random(Rng& rng, double limit = 0.05) {
    vectors_ = Tensor({size(), dim_});
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : vectors_.data) v = u(rng);
    std::fill_n(vectors_.data.begin(), dim_, 0.0);
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("vocabulary: cannot write " + path.string());
    const bool has_vectors = vectors_.size() == size() * dim_ && vectors_.size() > 0;
    out << "diin-vocab 1 " << size() << ' ' << dim_ << ' ' << (has_vectors ? 1 : 0) << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t i = 0; i < size(); ++i) {
      out << tokens_[i];
      if (has_vectors)
        for (std::size_t k = 0; k < dim_; ++k) out << ' ' << vectors_.data[i * dim_ + k];
      out << '\n';
    }
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("vocabulary: cannot open " + path.string());
    std::string magic;
    int version = 0, has_vectors = 0;
    std::size_t n = 0, dim = 0;
    if (!(in >> magic >> version >> n >> dim >> has_vectors) || magic != "diin-vocab") {
      throw Error("vocabulary: bad header in " + path.string());
    }
    Vocabulary v(dim);
    v.index_.clear();
    v.tokens_.clear();
    if (has_vectors) v.vectors_ = Tensor({n, dim});
    for (std::size_t i = 0; i < n; ++i) {
      std::string tok;
      if (!(in >> tok)) throw Error("vocabulary: truncated file " + path.string());
      v.index_.emplace(tok, static_cast<int>(i));
      v.tokens_.push_back(tok);
      if (has_vectors)
        for (std::size_t k = 0; k < dim; ++k) in >> v.vectors_.data[i * dim + k];
    }
    if (!in) throw Error("vocabulary: truncated file " + path.string());
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.dim_ == b.dim_ && a.tokens_ == b.tokens_ && a.vectors_ == b.vectors_;
  }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> tokens_;
  Tensor vectors_;
};

struct Vocabularies {
  Vocabulary words{300};
  Vocabulary chars{100};
};

/// Word vocabulary (cased) and character vocabulary from a corpus.
inline Vocabularies build_vocabularies(const std::vector<SentencePair>& pairs,
                                       std::size_t word_dim = 300, std::size_t char_dim = 100) {
  Vocabularies v{Vocabulary(word_dim), Vocabulary(char_dim)};
  auto take = [&](const std::vector<std::string>& toks) {
    for (const auto& t : toks) {
      v.words.add(t);
      for (const auto& c : utf8_chars(t)) v.chars.add(c);
    }
  };
  for (const auto& p : pairs) {
    take(p.premise);
    take(p.hypothesis);
  }
  return v;
}

/// Fills `vocab` from a GloVe-style text file ("token v1 ... vD" per line).
/// Tokens found in the file get the file vector verbatim; the rest get
/// uniform(-0.05, 0.05); PAD stays zero. Returns the number of hits.
inline std::size_t load_pretrained_vectors(const std::filesystem::path& path, Vocabulary& vocab,
                                           Rng& rng) {
  vocab.init_random(rng);
  std::ifstream in(path);
  if (!in) throw Error("load_pretrained_vectors: cannot open " + path.string());
  const std::size_t dim = vocab.dim();
  std::string line;
  std::size_t lineno = 0, hits = 0;
  std::vector<double> row;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    const std::string token = line.substr(0, sp);
    row.clear();
    if (sp != std::string::npos) {
      const char* p = line.c_str() + sp;
      char* end = nullptr;
      for (;;) {
        const double v = std::strtod(p, &end);
        if (end == p) break;
        row.push_back(v);
        p = end;
      }
    }
    if (row.size() != dim) {
      throw Error("load_pretrained_vectors: line " + std::to_string(lineno) + " of " +
                  path.string() + " has " + std::to_string(row.size()) + " values, expected " +
                  std::to_string(dim));
    }
    if (!vocab.contains(token)) continue;
    const int id = vocab.id(token);
    if (id == Vocabulary::kPad) continue;
    std::copy(row.begin(), row.end(), vocab.vectors().data.begin() + static_cast<std::ptrdiff_t>(id * dim));
    ++hits;
  }
  return hits;
}

// ---------------------------------------------------------------------------
// Per-token features
// ---------------------------------------------------------------------------

/// Features of one sentence. All per-token arrays have `length` rows
/// (char_ids has length * 16 entries).
struct FeatureBundle {
  std::vector<int> word_ids;
  std::vector<int> char_ids;
  std::vector<int> pos_ids;
  std::vector<int> em_bits;
  std::size_t length = 0;
  std::vector<std::string> tokens;  // kept for export labels
};

struct PairFeatures {
  FeatureBundle premise;
  FeatureBundle hypothesis;
  int label = 0;
  std::string genre;
};

/// Ids of the first 16 characters, right-padded with the PAD char id.
inline std::vector<int> char_window(const std::string& token, const Vocabulary& chars) {
  std::vector<int> ids(kCharWindow, Vocabulary::kPad);
  const auto cs = utf8_chars(token);
  for (std::size_t i = 0; i < std::min(cs.size(), kCharWindow); ++i) ids[i] = chars.id(cs[i]);
  return ids;
}

inline FeatureBundle make_bundle(const std::vector<std::string>& tokens,
                                 const std::vector<std::string>& tags,
                                 const std::vector<std::string>& other, const Vocabularies& vocab,
                                 std::size_t cutoff, bool em_exclude_stopwords,
                                 std::size_t* unknown_tags) {
  FeatureBundle b;
  b.length = std::min(tokens.size(), cutoff);
  const auto pos = pos_ids(tokens, tags, unknown_tags);
  const auto em = exact_match_bits(tokens, other, em_exclude_stopwords);
  for (std::size_t i = 0; i < b.length; ++i) {
    b.word_ids.push_back(vocab.words.id(tokens[i]));
    const auto cw = char_window(tokens[i], vocab.chars);
    b.char_ids.insert(b.char_ids.end(), cw.begin(), cw.end());
    b.pos_ids.push_back(pos[i]);
    b.em_bits.push_back(em[i]);
    b.tokens.push_back(tokens[i]);
  }
  return b;
}

/// Featurizes a pair with hard length cutoffs. EM bits are computed against
/// the full paired sentence before truncation.
inline PairFeatures featurize(const SentencePair& pair, const Vocabularies& vocab,
                              std::size_t max_len_p, std::size_t max_len_h,
                              bool em_exclude_stopwords = false,
                              std::size_t* unknown_tags = nullptr) {
  PairFeatures f;
  f.premise = make_bundle(pair.premise, pair.premise_tags, pair.hypothesis, vocab, max_len_p,
                          em_exclude_stopwords, unknown_tags);
  f.hypothesis = make_bundle(pair.hypothesis, pair.hypothesis_tags, pair.premise, vocab,
                             max_len_h, em_exclude_stopwords, unknown_tags);
  f.label = static_cast<int>(pair.label);
  f.genre = pair.genre;
  return f;
}

inline std::vector<PairFeatures> featurize_all(const std::vector<SentencePair>& pairs,
                                               const Vocabularies& vocab, std::size_t max_len_p,
                                               std::size_t max_len_h,
                                               bool em_exclude_stopwords = false,
                                               std::size_t* unknown_tags = nullptr) {
  std::vector<PairFeatures> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs)
    out.push_back(featurize(p, vocab, max_len_p, max_len_h, em_exclude_stopwords, unknown_tags));
  return out;
}

/// Pads a bundle to `cutoff` rows: word/char PAD ids, POS PAD id, EM 0.
/// `length` keeps the real row count.
inline FeatureBundle pad_bundle(const FeatureBundle& b, std::size_t cutoff) {
  FeatureBundle out = b;
  out.word_ids.resize(cutoff, Vocabulary::kPad);
  out.char_ids.resize(cutoff * kCharWindow, Vocabulary::kPad);
  out.pos_ids.resize(cutoff, kPosPad);
  out.em_bits.resize(cutoff, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
  std::vector<PairFeatures> items;  // padded to the cutoffs
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the source list
};

/// Epoch-wise shuffled, padded batches. The order is a pure function of
/// (seed, epoch); the final batch holds the remainder.
class BatchIterator {
 public:
  BatchIterator(const std::vector<PairFeatures>& data, std::size_t batch_size,
                std::size_t max_len_p, std::size_t max_len_h, std::uint64_t seed,
                bool shuffle = true)
      : data_(&data), batch_size_(batch_size), max_len_p_(max_len_p), max_len_h_(max_len_h),
        seed_(seed), shuffle_(shuffle) {
    if (batch_size < 1) throw Error("batch_iterator: batch_size must be >= 1");
    start_epoch(0);
  }

  static std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                              std::uint64_t epoch, bool shuffle = true) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(epoch >> 32)};
      Rng rng(seq);
      std::shuffle(order.begin(), order.end(), rng);
    }
    return order;
  }

  /// Next batch; rolls over to the next epoch when the current one ends.
  Batch next() {
    if (data_->empty()) throw Error("batch_iterator: empty dataset");
    if (pos_ >= order_.size()) start_epoch(epoch_ + 1);
    Batch b;
    const std::size_t end = std::min(pos_ + batch_size_, order_.size());
    for (; pos_ < end; ++pos_) {
      const auto& src = (*data_)[order_[pos_]];
      PairFeatures f;
      f.premise = pad_bundle(src.premise, max_len_p_);
      f.hypothesis = pad_bundle(src.hypothesis, max_len_h_);
      f.label = src.label;
      f.genre = src.genre;
      b.labels.push_back(src.label);
      b.indices.push_back(order_[pos_]);
      b.items.push_back(std::move(f));
    }
    return b;
  }

  /// All batches of one epoch, without disturbing the running position.
  std::vector<Batch> epoch(std::uint64_t e) const {
    BatchIterator copy = *this;
    copy.start_epoch(e);
    std::vector<Batch> out;
    while (copy.pos_ < copy.order_.size()) out.push_back(copy.next());
    return out;
  }

  std::uint64_t current_epoch() const { return epoch_; }

 private:
  void start_epoch(std::uint64_t e) {
    epoch_ = e;
    pos_ = 0;
    order_ = epoch_order(data_->size(), seed_, e, shuffle_);
  }

  const std::vector<PairFeatures>* data_;
  std::size_t batch_size_, max_len_p_, max_len_h_;
  std::uint64_t seed_;
  bool shuffle_;
  std::uint64_t epoch_ = 0;
  std::size_t pos_ = 0;
  std::vector<std::size_t> order_;
};

}  // namespace diin

#endif  // DIIN_FEATURES_HPP
