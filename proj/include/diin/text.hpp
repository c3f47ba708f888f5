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

#ifndef DIIN_TEXT_HPP
#define DIIN_TEXT_HPP

// Token-level text utilities: tokenizer, UTF-8 character split, Porter
// stemmer, the fixed 47-slot POS inventory and a fallback tagger.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "diin/tensor.hpp"

namespace diin {

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

inline bool is_edge_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

/// Whitespace split, then leading and trailing ASCII punctuation peeled off
/// as one token per character. Case and word-internal punctuation
/// ("go-ahead", "didn't") are kept.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) {
      std::string_view chunk = text.substr(i, j - i);
      std::size_t lo = 0, hi = chunk.size();
      while (lo < hi && is_edge_punct(static_cast<unsigned char>(chunk[lo]))) {
        out.emplace_back(1, chunk[lo]);
        ++lo;
      }
      std::size_t tail = hi;
      while (tail > lo && is_edge_punct(static_cast<unsigned char>(chunk[tail - 1]))) --tail;
      if (tail > lo) out.emplace_back(chunk.substr(lo, tail - lo));
      for (std::size_t k = tail; k < hi; ++k) out.emplace_back(1, chunk[k]);
    }
    i = j;
  }
  return out;
}

/// Splits a UTF-8 string into code-point substrings. Invalid lead bytes are
/// taken as single characters.
inline std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

inline std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// ---------------------------------------------------------------------------
// Porter stemmer
// ---------------------------------------------------------------------------

namespace detail {

class PorterStemmer {
 public:
  std::string operator()(std::string word) {
    b_ = std::move(word);
    if (b_.size() <= 2) return b_;
    k_ = static_cast<int>(b_.size()) - 1;
    step1ab();
    if (k_ > 0) {
      step1c();
      step2();
      step3();
      step4();
      step5();
    }
    return b_.substr(0, static_cast<std::size_t>(k_ + 1));
  }

 private:
  bool cons(int i) const {
    switch (b_[static_cast<std::size_t>(i)]) {
      case 'a': case 'e': case 'i': case 'o': case 'u': return false;
      case 'y': return i == 0 ? true : !cons(i - 1);
      default: return true;
    }
  }

  // Number of VC sequences in b[0..j].
  int m() const {
    int n = 0, i = 0;
    for (;;) {
      if (i > j_) return n;
      if (!cons(i)) break;
      ++i;
    }
    ++i;
    for (;;) {
      for (;;) {
        if (i > j_) return n;
        if (cons(i)) break;
        ++i;
      }
      ++i;
      ++n;
      for (;;) {
        if (i > j_) return n;
        if (!cons(i)) break;
        ++i;
      }
      ++i;
    }
  }

  bool vowel_in_stem() const {
    for (int i = 0; i <= j_; ++i)
      if (!cons(i)) return true;
    return false;
  }

  bool double_c(int j) const {
    return j >= 1 && b_[static_cast<std::size_t>(j)] == b_[static_cast<std::size_t>(j - 1)] &&
           cons(j);
  }

  bool cvc(int i) const {
    if (i < 2 || !cons(i) || cons(i - 1) || !cons(i - 2)) return false;
    const char ch = b_[static_cast<std::size_t>(i)];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  bool ends(std::string_view s) {
    const int len = static_cast<int>(s.size());
    if (len > k_ + 1) return false;
    if (b_.compare(static_cast<std::size_t>(k_ - len + 1), s.size(), s) != 0) return false;
    j_ = k_ - len;
    return true;
  }

  void set_to(std::string_view s) {
    b_.replace(static_cast<std::size_t>(j_ + 1), b_.size(), s);
    k_ = j_ + static_cast<int>(s.size());
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void r(std::string_view s) {
    if (m() > 0) set_to(s);
  }

  char at(int i) const { return b_[static_cast<std::size_t>(i)]; }

  void step1ab() {
    b_.resize(static_cast<std::size_t>(k_ + 1));
    if (at(k_) == 's') {
      if (ends("sses")) k_ -= 2;
      else if (ends("ies")) set_to("i");
      else if (at(k_ - 1) != 's') --k_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
    }
    if (ends("eed")) {
      if (m() > 0) --k_;
    } else if ((ends("ed") || ends("ing")) && vowel_in_stem()) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
      if (ends("at")) set_to("ate");
      else if (ends("bl")) set_to("ble");
      else if (ends("iz")) set_to("ize");
      else if (double_c(k_)) {
        --k_;
        const char ch = at(k_);
        if (ch == 'l' || ch == 's' || ch == 'z') ++k_;
      } else {
        j_ = k_;
        if (m() == 1 && cvc(k_)) set_to("e");
      }
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  void step1c() {
    if (ends("y") && vowel_in_stem()) b_[static_cast<std::size_t>(k_)] = 'i';
  }

  bool rule(std::string_view suffix, std::string_view repl) {
    if (!ends(suffix)) return false;
    r(repl);
    return true;
  }

  void step2() {
    if (k_ < 1) return;
    switch (at(k_ - 1)) {
      case 'a':
        if (rule("ational", "ate")) break;
        rule("tional", "tion");
        break;
      case 'c':
        if (rule("enci", "ence")) break;
        rule("anci", "ance");
        break;
      case 'e': rule("izer", "ize"); break;
      case 'l':
        if (rule("bli", "ble")) break;
        if (rule("alli", "al")) break;
        if (rule("entli", "ent")) break;
        if (rule("eli", "e")) break;
        rule("ousli", "ous");
        break;
      case 'o':
        if (rule("ization", "ize")) break;
        if (rule("ation", "ate")) break;
        rule("ator", "ate");
        break;
      case 's':
        if (rule("alism", "al")) break;
        if (rule("iveness", "ive")) break;
        if (rule("fulness", "ful")) break;
        rule("ousness", "ous");
        break;
      case 't':
        if (rule("aliti", "al")) break;
        if (rule("iviti", "ive")) break;
        rule("biliti", "ble");
        break;
      case 'g': rule("logi", "log"); break;
      default: break;
    }
  }

  void step3() {
    switch (at(k_)) {
      case 'e':
        if (rule("icate", "ic")) break;
        if (rule("ative", "")) break;
        rule("alize", "al");
        break;
      case 'i': rule("iciti", "ic"); break;
      case 'l':
        if (rule("ical", "ic")) break;
        rule("ful", "");
        break;
      case 's': rule("ness", ""); break;
      default: break;
    }
  }

  void step4() {
    if (k_ < 1) return;
    bool hit = false;
    switch (at(k_ - 1)) {
      case 'a': hit = ends("al"); break;
      case 'c': hit = ends("ance") || ends("ence"); break;
      case 'e': hit = ends("er"); break;
      case 'i': hit = ends("ic"); break;
      case 'l': hit = ends("able") || ends("ible"); break;
      case 'n': hit = ends("ant") || ends("ement") || ends("ment") || ends("ent"); break;
      case 'o':
        hit = (ends("ion") && j_ >= 0 && (at(j_) == 's' || at(j_) == 't')) || ends("ou");
        break;
      case 's': hit = ends("ism"); break;
      case 't': hit = ends("ate") || ends("iti"); break;
      case 'u': hit = ends("ous"); break;
      case 'v': hit = ends("ive"); break;
      case 'z': hit = ends("ize"); break;
      default: break;
    }
    if (hit && m() > 1) {
      k_ = j_;
      b_.resize(static_cast<std::size_t>(k_ + 1));
    }
  }

  void step5() {
    j_ = k_;
    if (at(k_) == 'e') {
      const int a = m();
      if (a > 1 || (a == 1 && !cvc(k_ - 1))) --k_;
    }
    if (at(k_) == 'l' && double_c(k_)) {
      j_ = k_;
      if (m() > 1) --k_;
    }
    b_.resize(static_cast<std::size_t>(k_ + 1));
  }

  std::string b_;
  int k_ = 0;
  int j_ = 0;
};

}  // namespace detail

/// Porter (1980) stem of the lowercased token.
inline std::string stem(std::string_view token) {
  return detail::PorterStemmer{}(lowercase(token));
}

// ---------------------------------------------------------------------------
// Part of speech
// ---------------------------------------------------------------------------

/// 45 Penn Treebank tags, then UNK and PAD. Index is the id. The same list
/// ships as assets/pos_tags.txt.
inline constexpr std::array<std::string_view, 47> kPosInventory = {
    "CC",  "CD",  "DT",   "EX",  "FW",  "IN",  "JJ",  "JJR", "JJS", "LS",  "MD",  "NN",
    "NNS", "NNP", "NNPS", "PDT", "POS", "PRP", "PRP$", "RB", "RBR", "RBS", "RP",  "SYM",
    "TO",  "UH",  "VB",   "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",  "WP$", "WRB",
    "#",   "$",   "''",   "``",  "-LRB-", "-RRB-", ",", ".",  ":",   "<UNK>", "<PAD>"};

inline constexpr int kPosCount = 47;
inline constexpr int kPosUnk = 45;
inline constexpr int kPosPad = 46;

inline int pos_id(std::string_view tag) {
  // Bracket tags appear both as PTB escapes and literally.
  if (tag == "(") tag = "-LRB-";
  if (tag == ")") tag = "-RRB-";
  for (int i = 0; i < kPosUnk; ++i)
    if (kPosInventory[static_cast<std::size_t>(i)] == tag) return i;
  return kPosUnk;
}

namespace detail {

inline const std::unordered_map<std::string, std::string>& closed_class_lexicon() {
  static const std::unordered_map<std::string, std::string> lex = [] {
    std::unordered_map<std::string, std::string> m;
    auto put = [&](const char* tag, std::initializer_list<const char*> words) {
      for (const char* w : words) m.emplace(w, tag);
    };
    put("DT", {"a", "an", "the", "this", "that", "these", "those", "each", "every", "another",
               "no", "some", "any", "all", "both", "either", "neither"});
    put("IN", {"of", "in", "on", "at", "by", "for", "with", "about", "against", "between",
               "into", "through", "during", "before", "after", "above", "below", "from", "up",
               "down", "over", "under", "like", "while", "because", "if", "unless", "although",
               "though", "since", "as", "than", "whether", "near", "without", "upon", "across"});
    put("CC", {"and", "or", "but", "nor", "yet", "so", "plus"});
    put("PRP", {"i", "you", "he", "she", "it", "we", "they", "me", "him", "her", "us", "them",
                "myself", "himself", "herself", "itself", "themselves", "ourselves"});
    put("PRP$", {"my", "your", "his", "its", "our", "their"});
    put("MD", {"can", "could", "may", "might", "must", "will", "would", "shall", "should"});
    put("TO", {"to"});
    put("EX", {"there"});
    put("WDT", {"which", "whatever"});
    put("WP", {"who", "whom", "what"});
    put("WP$", {"whose"});
    put("WRB", {"when", "where", "why", "how"});
    put("RB", {"not", "n't", "never", "very", "also", "just", "too", "only", "often", "always",
               "almost", "nearly", "even", "here", "now", "then", "later", "already"});
    put("VBZ", {"is", "has", "does", "'s"});
    put("VBP", {"are", "am", "have", "do", "'re", "'m", "'ve"});
    put("VBD", {"was", "were", "had", "did"});
    put("VB", {"be"});
    put("VBN", {"been"});
    put("VBG", {"being"});
    put("UH", {"oh", "yes", "well", "uh", "um"});
    put("POS", {"'"});
    put(",", {","});
    put(".", {".", "!", "?"});
    put(":", {":", ";", "--", "-", "..."});
    put("$", {"$"});
    put("#", {"#"});
    put("``", {"``", "\""});
    put("''", {"''"});
    put("-LRB-", {"(", "[", "{"});
    put("-RRB-", {")", "]", "}"});
    return m;
  }();
  return lex;
}

inline bool ends_with(std::string_view s, std::string_view suf) {
  return s.size() >= suf.size() && s.substr(s.size() - suf.size()) == suf;
}

}  // namespace detail

/// Lexicon and suffix rules; used when a corpus carries no tags.
inline std::string fallback_tag(std::string_view token, bool sentence_initial) {
  if (token.empty()) return "<UNK>";
  const std::string low = lowercase(token);
  const auto& lex = detail::closed_class_lexicon();
  if (auto it = lex.find(low); it != lex.end()) return it->second;
  if (std::all_of(token.begin(), token.end(), [](unsigned char c) {
        return std::isdigit(c) || c == '.' || c == ',';
      }) && std::isdigit(static_cast<unsigned char>(token.front()))) {
    return "CD";
  }
  if (token.size() == 1 && is_edge_punct(static_cast<unsigned char>(token[0]))) return "SYM";
  if (std::isupper(static_cast<unsigned char>(token.front())) && !sentence_initial) {
    return detail::ends_with(low, "s") && token.size() > 3 ? "NNPS" : "NNP";
  }
  if (std::all_of(token.begin(), token.end(), [](unsigned char c) { return std::isupper(c); }) &&
      token.size() > 1) {
    return "NNP";
  }
  using detail::ends_with;
  if (ends_with(low, "ing") && low.size() > 4) return "VBG";
  if (ends_with(low, "ed") && low.size() > 3) return "VBD";
  if (ends_with(low, "ly") && low.size() > 3) return "RB";
  if (ends_with(low, "est") && low.size() > 4) return "JJS";
  if (ends_with(low, "ous") || ends_with(low, "ful") || ends_with(low, "ive") ||
      ends_with(low, "able") || ends_with(low, "ible") || ends_with(low, "al") ||
      ends_with(low, "ic") || ends_with(low, "less")) {
    return "JJ";
  }
  if (ends_with(low, "s") && !ends_with(low, "ss") && low.size() > 3) return "NNS";
  return "NN";
}

/// Maps tokens to POS ids in [0, 47). With provided tags, unknown tags map to
/// UNK and are counted in `unknown_tags`; without, the fallback tagger runs.
inline std::vector<int> pos_ids(std::span<const std::string> tokens,
                                std::span<const std::string> provided_tags = {},
                                std::size_t* unknown_tags = nullptr) {
  std::vector<int> out;
  out.reserve(tokens.size());
  if (!provided_tags.empty()) {
    if (provided_tags.size() != tokens.size()) {
      throw Error("pos_ids: " + std::to_string(provided_tags.size()) + " tags for " +
                  std::to_string(tokens.size()) + " tokens");
    }
    for (const auto& t : provided_tags) {
      const int id = pos_id(t);
      if (id == kPosUnk && unknown_tags) ++*unknown_tags;
      out.push_back(id);
    }
    return out;
  }
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(pos_id(fallback_tag(tokens[i], i == 0)));
  return out;
}

// ---------------------------------------------------------------------------
// Exact match
// ---------------------------------------------------------------------------

inline const std::unordered_set<std::string>& em_stopwords() {
  static const std::unordered_set<std::string> s = {
      "a", "an", "the", "of", "to", "in", "on", "at", "for", "and", "or", "is", "are", "was",
      "were", "be", "it", "that", "this", "with", "as", "by", "from"};
  return s;
}

/// bit[i] = 1 iff the lowercased stem of a[i] equals the stem of some token
/// in b. With `exclude_stopwords`, punctuation and a short stop-word list
/// never match.
inline std::vector<int> exact_match_bits(std::span<const std::string> a,
                                         std::span<const std::string> b,
                                         bool exclude_stopwords = false) {
  auto skip = [&](const std::string& t) {
    if (!exclude_stopwords) return false;
    if (t.size() == 1 && is_edge_punct(static_cast<unsigned char>(t[0]))) return true;
    return em_stopwords().count(lowercase(t)) > 0;
  };
  std::unordered_set<std::string> stems;
  for (const auto& t : b)
    if (!skip(t)) stems.insert(stem(t));
  std::vector<int> bits;
  bits.reserve(a.size());
  for (const auto& t : a) bits.push_back(!skip(t) && stems.count(stem(t)) ? 1 : 0);
  return bits;
}

}  // namespace diin

#endif  // DIIN_TEXT_HPP
