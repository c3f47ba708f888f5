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

#ifndef DIIN_CHECKPOINT_HPP
#define DIIN_CHECKPOINT_HPP

// Checkpoint layout: a text manifest plus one flat blob of little-endian
// IEEE-754 doubles.
//
//   diin-checkpoint 1
//   meta <key> <value...>
//   tensor <name> f64 <shape> <byte offset> <count>
//
// <shape> is "AxBxC" or "scalar".

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "diin/graph.hpp"

namespace diin {

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline std::string encode_shape(const Shape& s) {
  if (s.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

inline Shape decode_shape(const std::string& text) {
  Shape s;
  if (text == "scalar") return s;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) s.push_back(std::stoull(part));
  return s;
}

inline void put_le(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
}

inline double get_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& manifest,
                             const std::filesystem::path& blob, const Checkpoint& ckpt) {
  std::ostringstream man;
  man << "diin-checkpoint 1\n";
  for (const auto& [k, v] : ckpt.meta) man << "meta " << k << ' ' << v << '\n';
  std::string bytes;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.find_first_of(" \t\n") != std::string::npos) {
      throw Error("checkpoint: tensor name contains whitespace: " + name);
    }
    man << "tensor " << name << " f64 " << detail::encode_shape(t.shape) << ' ' << bytes.size()
        << ' ' << t.size() << '\n';
    for (double v : t.data) detail::put_le(bytes, v);
  }
  std::ofstream mf(manifest, std::ios::binary);
  std::ofstream bf(blob, std::ios::binary);
  if (!mf || !bf) throw Error("checkpoint: cannot open " + manifest.string() + " for writing");
  mf << man.str();
  bf.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!mf || !bf) throw Error("checkpoint: write failed for " + manifest.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& manifest,
                                  const std::filesystem::path& blob) {
  std::ifstream mf(manifest);
  if (!mf) throw Error("checkpoint: cannot open " + manifest.string());
  std::ifstream bf(blob, std::ios::binary);
  if (!bf) throw Error("checkpoint: cannot open " + blob.string());
  std::string bytes((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(mf, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != "diin-checkpoint 1") throw Error("checkpoint: bad header in " + manifest.string());
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key, value;
      ls >> key;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.meta[key] = value;
    } else if (tag == "tensor") {
      std::string name, dtype, shape;
      std::size_t offset = 0, count = 0;
      if (!(ls >> name >> dtype >> shape >> offset >> count) || dtype != "f64") {
        throw Error("checkpoint: malformed manifest line " + std::to_string(lineno));
      }
      Shape s = detail::decode_shape(shape);
      if (numel(s) != count || offset + 8 * count > bytes.size()) {
        throw Error("checkpoint: inconsistent entry for " + name);
      }
      Tensor t(s);
      const auto* base = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
      for (std::size_t i = 0; i < count; ++i) t.data[i] = detail::get_le(base + 8 * i);
      ckpt.tensors.emplace_back(name, std::move(t));
    } else {
      throw Error("checkpoint: unknown record '" + tag + "' at line " + std::to_string(lineno));
    }
  }
  return ckpt;
}

/// Copies every parameter value into a checkpoint, in store order.
inline Checkpoint snapshot(const ParameterStore& store) {
  Checkpoint c;
  for (const auto& p : store) c.tensors.emplace_back(p->name, *p->value);
  return c;
}

/// Loads parameter values by name. Every store parameter must be present
/// with a matching shape.
inline void restore(ParameterStore& store, const Checkpoint& c) {
  for (const auto& p : store) {
    const Tensor* t = c.find(p->name);
    if (!t) throw Error("checkpoint: missing parameter " + p->name);
    if (t->shape != p->shape()) {
      throw Error("checkpoint: shape mismatch for " + p->name + ": " + shape_str(t->shape) +
                  " vs " + shape_str(p->shape()));
    }
    *p->value = *t;
  }
}

}  // namespace diin

#endif  // DIIN_CHECKPOINT_HPP
