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

#ifndef DIIN_GRAPH_HPP
#define DIIN_GRAPH_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "diin/tensor.hpp"

namespace diin {

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

enum class ParamKind { Weight, Bias, Embedding };

/// How a parameter is filled at construction.
struct InitSpec {
  enum class Kind { Zeros, Uniform, Glorot };
  Kind kind = Kind::Zeros;
  double limit = 0.0;  // Uniform: half-width
  std::size_t fan_in = 0, fan_out = 0;  // Glorot

  static InitSpec zeros() { return {}; }
  static InitSpec uniform(double limit) { return {Kind::Uniform, limit, 0, 0}; }
  static InitSpec glorot(std::size_t fan_in, std::size_t fan_out) {
    return {Kind::Glorot, 0.0, fan_in, fan_out};
  }

  double bound() const {
    switch (kind) {
      case Kind::Zeros: return 0.0;
      case Kind::Uniform: return limit;
      case Kind::Glorot: return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    }
    return 0.0;
  }

  std::string describe() const {
    switch (kind) {
      case Kind::Zeros: return "zeros";
      case Kind::Uniform: return "uniform(" + std::to_string(limit) + ")";
      case Kind::Glorot:
        return "glorot(" + std::to_string(fan_in) + "," + std::to_string(fan_out) + ")";
    }
    return "?";
  }
};

struct Parameter {
  std::string name;
  std::string group;  // embedding | encoder | extractor | output
  ParamKind kind = ParamKind::Weight;
  InitSpec init;
  bool trainable = true;
  std::vector<std::size_t> frozen_rows;  // rows kept fixed (PAD entries of tables)
  std::shared_ptr<Tensor> value;
  std::shared_ptr<Tensor> grad;

  const Shape& shape() const { return value->shape; }
  std::size_t size() const { return value->size(); }
};

/// Owns every parameter of a model. Names are unique; iteration follows
/// creation order so initialization and serialization are deterministic.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& create(const std::string& name, Shape shape, ParamKind kind, const std::string& group,
                    InitSpec init, Rng& rng) {
    if (by_name_.count(name)) throw Error("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->group = group;
    p->kind = kind;
    p->init = init;
    p->value = std::make_shared<Tensor>(shape);
    p->grad = std::make_shared<Tensor>(shape);
    const double b = init.bound();
    if (b > 0.0) {
      std::uniform_real_distribution<double> dist(-b, b);
      for (auto& v : p->value->data) v = dist(rng);
    }
    Parameter& ref = *p;
    by_name_[name] = p.get();
    params_.push_back(std::move(p));
    return ref;
  }

  Parameter* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }
  const Parameter* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }
  Parameter& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw Error("unknown parameter: " + name);
  }
  const Parameter& at(const std::string& name) const {
    if (auto* p = find(name)) return *p;
    throw Error("unknown parameter: " + name);
  }

  std::size_t size() const { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p->grad->fill(0.0);
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p->trainable) n += p->size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, Parameter*> by_name_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

struct Node {
  std::string op;
  std::shared_ptr<Tensor> value;
  std::shared_ptr<Tensor> grad;
  std::vector<Node*> parents;
  std::function<void(Node&)> backward_rule;
  bool requires_grad = false;

  /// Gradient slot of this node, allocated as zeros on first use.
  Tensor& accum() {
    if (!grad) grad = std::make_shared<Tensor>(value->shape);
    return *grad;
  }
};

class Graph;

/// Lightweight handle to a node recorded on a Graph.
class Var {
 public:
  Var() = default;
  Var(Graph* g, Node* n) : graph_(g), node_(n) {}

  const Tensor& value() const { return *node_->value; }
  const Shape& shape() const { return node_->value->shape; }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  const Tensor* grad() const { return node_->grad.get(); }
  Node* node() const { return node_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return node_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  Node* node_ = nullptr;
};

/// Eager-forward, recorded-tape reverse-mode graph. Nodes are appended in
/// creation order, which is a topological order, so backward is a single
/// reverse sweep that visits each node once.
class Graph {
 public:
  explicit Graph(bool training = false, Rng* rng = nullptr) : training_(training), rng_(rng) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }
  Rng* rng() const { return rng_; }

  Var constant(Tensor t) {
    auto n = std::make_unique<Node>();
    n->op = "constant";
    n->value = std::make_shared<Tensor>(std::move(t));
    return push(std::move(n));
  }

  /// Leaf bound to a parameter's storage; gradients accumulate directly into
  /// Parameter::grad.
  Var param(const Parameter& p) {
    if (auto it = leaves_.find(&p); it != leaves_.end()) return Var(this, it->second);
    auto n = std::make_unique<Node>();
    n->op = "param:" + p.name;
    n->value = p.value;
    n->grad = p.grad;
    n->requires_grad = p.trainable;
    Var v = push(std::move(n));
    leaves_[&p] = v.node();
    return v;
  }

  /// Records a derived node. The rule is kept only when some parent needs a
  /// gradient.
  Var record(std::string op, Tensor value, std::vector<Node*> parents,
             std::function<void(Node&)> rule) {
    auto n = std::make_unique<Node>();
    n->op = std::move(op);
    n->value = std::make_shared<Tensor>(std::move(value));
    for (Node* p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    n->parents = std::move(parents);
    if (n->requires_grad) n->backward_rule = std::move(rule);
    return push(std::move(n));
  }

  void backward(Var loss) {
    if (loss.value().size() != 1) {
      throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    loss.node()->accum()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.backward_rule && n.grad) n.backward_rule(n);
    }
  }

  /// Hash of every discrete branch taken in the forward pass (relu signs,
  /// max-pool winners). Used to keep finite differences away from kinks.
  std::uint64_t kink_signature() const { return kink_hash_; }
  void mix_kink(std::uint64_t v) {
    kink_hash_ ^= v + 0x9e3779b97f4a7c15ULL + (kink_hash_ << 6) + (kink_hash_ >> 2);
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  Var push(std::unique_ptr<Node> n) {
    Node* raw = n.get();
    nodes_.push_back(std::move(n));
    return Var(this, raw);
  }

  std::vector<std::unique_ptr<Node>> nodes_;
  std::unordered_map<const Parameter*, Node*> leaves_;
  bool training_;
  Rng* rng_;
  std::uint64_t kink_hash_ = 0;
};

/// Runs a fresh backward pass from a scalar loss and returns a copy of every
/// parameter gradient keyed by name. Parameters the loss does not reach map
/// to zeros.
inline std::map<std::string, Tensor> backward(Graph& g, Var loss, ParameterStore& store) {
  store.zero_grad();
  g.backward(loss);
  std::map<std::string, Tensor> out;
  for (const auto& p : store) out.emplace(p->name, *p->grad);
  return out;
}

}  // namespace diin

#endif  // DIIN_GRAPH_HPP
