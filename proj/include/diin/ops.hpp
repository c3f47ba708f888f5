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

#ifndef DIIN_OPS_HPP
#define DIIN_OPS_HPP

// Differentiable primitives. Every function computes its forward value
// eagerly and records a backward rule on the operand graph.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "diin/graph.hpp"

namespace diin::ops {

namespace detail {

inline void require(bool ok, const std::string& op, const std::string& msg) {
  if (!ok) throw ShapeError(op + ": " + msg);
}

inline Graph& graph_of(const Var& v) { return *v.graph(); }

inline std::uint64_t hash_bits(std::span<const double> xs, double threshold = 0.0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double x : xs) {
    h ^= static_cast<std::uint64_t>(x > threshold) + 1;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t hash_indices(std::span<const std::size_t> xs) {
  std::uint64_t h = 1469598103934665603ULL;
  for (auto x : xs) {
    h ^= x + 1;
    h *= 1099511628211ULL;
  }
  return h;
}

// Maps every flat output index of a broadcast binary op to operand offsets.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> ia, ib;
};

inline Broadcast broadcast(const std::string& op, const Shape& a, const Shape& b) {
  require(a.size() == b.size(), op,
          "rank mismatch " + shape_str(a) + " vs " + shape_str(b));
  Broadcast r;
  const std::size_t rank = a.size();
  r.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    require(a[d] == b[d] || a[d] == 1 || b[d] == 1, op,
            "incompatible extents " + shape_str(a) + " vs " + shape_str(b));
    r.out[d] = std::max(a[d], b[d]);
  }
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ma = 1, mb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = a[d] == 1 ? 0 : ma;
    sb[d] = b[d] == 1 ? 0 : mb;
    ma *= a[d];
    mb *= b[d];
  }
  const std::size_t n = numel(r.out);
  r.ia.resize(n);
  r.ib.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      oa += idx[d] * sa[d];
      ob += idx[d] * sb[d];
    }
    r.ia[k] = oa;
    r.ib[k] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < r.out[d]) break;
      idx[d] = 0;
    }
  }
  return r;
}

// outer × axis × inner factorization around one axis.
struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r;
  for (std::size_t d = 0; d < axis; ++d) r.outer *= s[d];
  r.len = s[axis];
  for (std::size_t d = axis + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

enum class BinOp { Add, Sub, Mul };

inline Var binary(const std::string& name, BinOp kind, Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape == y.shape) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
      switch (kind) {
        case BinOp::Add: out[i] = x[i] + y[i]; break;
        case BinOp::Sub: out[i] = x[i] - y[i]; break;
        case BinOp::Mul: out[i] = x[i] * y[i]; break;
      }
    }
    Node* na = a.node();
    Node* nb = b.node();
    return graph_of(a).record(name, std::move(out), {na, nb}, [na, nb, kind](Node& self) {
      const Tensor& g = *self.grad;
      if (na->requires_grad) {
        Tensor& ga = na->accum();
        for (std::size_t i = 0; i < g.size(); ++i)
          ga[i] += kind == BinOp::Mul ? g[i] * (*nb->value)[i] : g[i];
      }
      if (nb->requires_grad) {
        Tensor& gb = nb->accum();
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (kind) {
            case BinOp::Add: gb[i] += g[i]; break;
            case BinOp::Sub: gb[i] -= g[i]; break;
            case BinOp::Mul: gb[i] += g[i] * (*na->value)[i]; break;
          }
        }
      }
    });
  }
  auto bc = std::make_shared<Broadcast>(broadcast(name, x.shape, y.shape));
  Tensor out(bc->out);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double u = x[bc->ia[k]], v = y[bc->ib[k]];
    switch (kind) {
      case BinOp::Add: out[k] = u + v; break;
      case BinOp::Sub: out[k] = u - v; break;
      case BinOp::Mul: out[k] = u * v; break;
    }
  }
  Node* na = a.node();
  Node* nb = b.node();
  return graph_of(a).record(name, std::move(out), {na, nb}, [na, nb, kind, bc](Node& self) {
    const Tensor& g = *self.grad;
    if (na->requires_grad) {
      Tensor& ga = na->accum();
      for (std::size_t k = 0; k < g.size(); ++k)
        ga[bc->ia[k]] += kind == BinOp::Mul ? g[k] * (*nb->value)[bc->ib[k]] : g[k];
    }
    if (nb->requires_grad) {
      Tensor& gb = nb->accum();
      for (std::size_t k = 0; k < g.size(); ++k) {
        switch (kind) {
          case BinOp::Add: gb[bc->ib[k]] += g[k]; break;
          case BinOp::Sub: gb[bc->ib[k]] -= g[k]; break;
          case BinOp::Mul: gb[bc->ib[k]] += g[k] * (*na->value)[bc->ia[k]]; break;
        }
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Var unary(const std::string& name, Var x, Fwd fwd, Deriv deriv) {
  const Tensor& in = x.value();
  Tensor out(in.shape);
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  Node* nx = x.node();
  return graph_of(x).record(name, std::move(out), {nx}, [nx, deriv](Node& self) {
    const Tensor& g = *self.grad;
    const Tensor& in = *nx->value;
    const Tensor& y = *self.value;
    Tensor& gx = nx->accum();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(in[i], y[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

/// Elementwise sum; operands of equal rank broadcast along extent-1 axes.
inline Var add(Var a, Var b) { return detail::binary("add", detail::BinOp::Add, a, b); }
inline Var sub(Var a, Var b) { return detail::binary("sub", detail::BinOp::Sub, a, b); }
inline Var mul(Var a, Var b) { return detail::binary("mul", detail::BinOp::Mul, a, b); }

inline Var scale(Var x, double s) {
  return detail::unary("scale", x, [s](double v) { return s * v; },
                       [s](double, double) { return s; });
}

/// relu with subgradient 0 at the origin.
inline Var relu(Var x) {
  x.graph()->mix_kink(detail::hash_bits(x.value().data));
  return detail::unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                       [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

inline Var sigmoid(Var x) {
  return detail::unary("sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                       [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(Var x) {
  return detail::unary("tanh", x, [](double v) { return std::tanh(v); },
                       [](double, double y) { return 1.0 - y * y; });
}

inline Var abs(Var x) {
  x.graph()->mix_kink(detail::hash_bits(x.value().data));
  return detail::unary("abs", x, [](double v) { return std::fabs(v); },
                       [](double in, double) { return in > 0.0 ? 1.0 : (in < 0.0 ? -1.0 : 0.0); });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::require(x.rank() == 2 && y.rank() == 2 && x.shape[1] == y.shape[0], "matmul",
                  "cannot multiply " + shape_str(x.shape) + " by " + shape_str(y.shape));
  const std::size_t n = x.shape[0], k = x.shape[1], m = y.shape[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = &out.data[i * m];
    for (std::size_t l = 0; l < k; ++l) {
      const double xv = x.data[i * k + l];
      if (xv == 0.0) continue;
      const double* yrow = &y.data[l * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += xv * yrow[j];
    }
  }
  Node* na = a.node();
  Node* nb = b.node();
  return a.graph()->record("matmul", std::move(out), {na, nb}, [na, nb, n, k, m](Node& self) {
    const Tensor& g = *self.grad;
    const Tensor& x = *na->value;
    const Tensor& y = *nb->value;
    if (na->requires_grad) {
      Tensor& gx = na->accum();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          double s = 0.0;
          const double* grow = &g.data[i * m];
          const double* yrow = &y.data[l * m];
          for (std::size_t j = 0; j < m; ++j) s += grow[j] * yrow[j];
          gx.data[i * k + l] += s;
        }
    }
    if (nb->requires_grad) {
      Tensor& gy = nb->accum();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t l = 0; l < k; ++l) {
          const double xv = x.data[i * k + l];
          if (xv == 0.0) continue;
          const double* grow = &g.data[i * m];
          double* gyrow = &gy.data[l * m];
          for (std::size_t j = 0; j < m; ++j) gyrow[j] += xv * grow[j];
        }
    }
  });
}

inline Var transpose(Var a) {
  const Tensor& x = a.value();
  detail::require(x.rank() == 2, "transpose", "expects rank 2, got " + shape_str(x.shape));
  const std::size_t n = x.shape[0], m = x.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.data[j * n + i] = x.data[i * m + j];
  Node* na = a.node();
  return a.graph()->record("transpose", std::move(out), {na}, [na, n, m](Node& self) {
    const Tensor& g = *self.grad;
    Tensor& gx = na->accum();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) gx.data[i * m + j] += g.data[j * n + i];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Var reshape(Var a, Shape shape) {
  detail::require(numel(shape) == a.value().size(), "reshape",
                  "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Tensor out(std::move(shape), a.value().data);
  Node* na = a.node();
  return a.graph()->record("reshape", std::move(out), {na}, [na](Node& self) {
    Tensor& gx = na->accum();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*self.grad)[i];
  });
}

/// Collapses every axis after the first: [N, ...] -> [N, prod(...)].
inline Var flatten(Var a) {
  detail::require(a.value().rank() >= 1, "flatten", "expects rank >= 1");
  const std::size_t n = a.dim(0);
  return reshape(a, {n, n == 0 ? 0 : a.value().size() / n});
}

inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  detail::require(!parts.empty(), "concat", "no operands");
  const Shape& s0 = parts[0].shape();
  detail::require(axis < s0.size(), "concat", "axis " + std::to_string(axis) + " out of range");
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == s0[d];
    detail::require(ok, "concat", "extent mismatch " + shape_str(s0) + " vs " + shape_str(s));
    out_shape[axis] += s[axis];
  }
  auto split = detail::split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::vector<Node*> nodes;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& v = p.value();
    const std::size_t block = v.shape[axis] * split.inner;
    for (std::size_t o = 0; o < split.outer; ++o)
      std::copy_n(&v.data[o * block], block, &out.data[o * split.len * split.inner + off]);
    nodes.push_back(p.node());
    offsets.push_back(off);
    off += block;
  }
  return parts[0].graph()->record(
      "concat", std::move(out), nodes, [nodes, offsets, split, axis](Node& self) {
        const Tensor& g = *self.grad;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          Node* n = nodes[i];
          if (!n->requires_grad) continue;
          Tensor& gx = n->accum();
          const std::size_t block = n->value->shape[axis] * split.inner;
          for (std::size_t o = 0; o < split.outer; ++o) {
            const double* src = &g.data[o * split.len * split.inner + offsets[i]];
            double* dst = &gx.data[o * block];
            for (std::size_t t = 0; t < block; ++t) dst[t] += src[t];
          }
        }
      });
}

inline Var slice(Var a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  detail::require(axis < s.size() && start + length <= s[axis], "slice",
                  "range [" + std::to_string(start) + "," + std::to_string(start + length) +
                      ") outside " + shape_str(s));
  auto split = detail::split_axis(s, axis);
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out(out_shape);
  const std::size_t block = length * split.inner;
  for (std::size_t o = 0; o < split.outer; ++o)
    std::copy_n(&a.value().data[(o * split.len + start) * split.inner], block,
                &out.data[o * block]);
  Node* na = a.node();
  return a.graph()->record("slice", std::move(out), {na}, [na, split, start, block](Node& self) {
    Tensor& gx = na->accum();
    for (std::size_t o = 0; o < split.outer; ++o) {
      const double* src = &self.grad->data[o * block];
      double* dst = &gx.data[(o * split.len + start) * split.inner];
      for (std::size_t t = 0; t < block; ++t) dst[t] += src[t];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalization
// ---------------------------------------------------------------------------

inline Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data) s += v;
  Node* na = a.node();
  return a.graph()->record("sum", Tensor::scalar(s), {na}, [na](Node& self) {
    const double g = (*self.grad)[0];
    Tensor& gx = na->accum();
    for (auto& v : gx.data) v += g;
  });
}

inline Var mean(Var a) {
  detail::require(a.value().size() > 0, "mean", "empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

/// Numerically stable softmax along one axis.
inline Var softmax(Var a, std::size_t axis) {
  const Tensor& x = a.value();
  detail::require(axis < x.rank(), "softmax",
                  "axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape));
  auto sp = detail::split_axis(x.shape, axis);
  Tensor out(x.shape);
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.len * sp.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < sp.len; ++t) mx = std::max(mx, x.data[base + t * sp.inner]);
      double z = 0.0;
      for (std::size_t t = 0; t < sp.len; ++t) {
        const double e = std::exp(x.data[base + t * sp.inner] - mx);
        out.data[base + t * sp.inner] = e;
        z += e;
      }
      for (std::size_t t = 0; t < sp.len; ++t) out.data[base + t * sp.inner] /= z;
    }
  Node* na = a.node();
  return a.graph()->record("softmax", std::move(out), {na}, [na, sp](Node& self) {
    const Tensor& g = *self.grad;
    const Tensor& y = *self.value;
    Tensor& gx = na->accum();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.len * sp.inner + in;
        double dot = 0.0;
        for (std::size_t t = 0; t < sp.len; ++t) {
          const std::size_t k = base + t * sp.inner;
          dot += g.data[k] * y.data[k];
        }
        for (std::size_t t = 0; t < sp.len; ++t) {
          const std::size_t k = base + t * sp.inner;
          gx.data[k] += y.data[k] * (g.data[k] - dot);
        }
      }
  });
}

/// Mean softmax cross-entropy of logits [B, C] against integer labels.
inline Var cross_entropy(Var logits, std::span<const int> labels) {
  const Tensor& x = logits.value();
  detail::require(x.rank() == 2 && x.shape[0] == labels.size(), "cross_entropy",
                  "logits " + shape_str(x.shape) + " vs " + std::to_string(labels.size()) +
                      " labels");
  const std::size_t b = x.shape[0], c = x.shape[1];
  auto probs = std::make_shared<Tensor>(x.shape);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    detail::require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < c, "cross_entropy",
                    "label out of range");
    const double* row = &x.data[i * c];
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < c; ++j) probs->data[i * c + j] = std::exp(row[j] - mx) / z;
    loss += -(row[labels[i]] - mx - std::log(z));
  }
  std::vector<int> lab(labels.begin(), labels.end());
  Node* nl = logits.node();
  return logits.graph()->record(
      "cross_entropy", Tensor::scalar(loss / static_cast<double>(b)), {nl},
      [nl, probs, lab, b, c](Node& self) {
        const double g = (*self.grad)[0] / static_cast<double>(b);
        Tensor& gx = nl->accum();
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < c; ++j)
            gx.data[i * c + j] +=
                g * (probs->data[i * c + j] - (static_cast<int>(j) == lab[i] ? 1.0 : 0.0));
      });
}

// ---------------------------------------------------------------------------
// Stochastic
// ---------------------------------------------------------------------------

/// Inverted dropout. Identity when the graph is not training or keep == 1.
inline Var dropout(Var x, double keep_rate) {
  detail::require(keep_rate > 0.0 && keep_rate <= 1.0, "dropout",
                  "keep_rate must lie in (0,1], got " + std::to_string(keep_rate));
  Graph& g = *x.graph();
  if (!g.training() || keep_rate >= 1.0) return x;
  if (!g.rng()) throw Error("dropout: training graph has no random generator");
  std::bernoulli_distribution keep(keep_rate);
  auto mask = std::make_shared<std::vector<double>>(x.value().size());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = keep(*g.rng()) ? 1.0 / keep_rate : 0.0;
    out[i] = x.value()[i] * (*mask)[i];
  }
  Node* nx = x.node();
  return g.record("dropout", std::move(out), {nx}, [nx, mask](Node& self) {
    Tensor& gx = nx->accum();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += (*self.grad)[i] * (*mask)[i];
  });
}

// ---------------------------------------------------------------------------
// Lookup and interaction
// ---------------------------------------------------------------------------

/// Rows of table [V, D] selected by ids -> [ids.size(), D].
inline Var gather_rows(Var table, std::span<const int> ids) {
  const Tensor& t = table.value();
  detail::require(t.rank() == 2, "gather_rows", "table must be rank 2");
  const std::size_t v = t.shape[0], d = t.shape[1];
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw Error("gather_rows: id " + std::to_string(ids[i]) + " out of range [0," +
                  std::to_string(v) + ")");
    }
    std::copy_n(&t.data[static_cast<std::size_t>(ids[i]) * d], d, &out.data[i * d]);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  Node* nt = table.node();
  return table.graph()->record("gather_rows", std::move(out), {nt}, [nt, idv, d](Node& self) {
    Tensor& gt = nt->accum();
    for (std::size_t i = 0; i < idv.size(); ++i) {
      double* dst = &gt.data[static_cast<std::size_t>(idv[i]) * d];
      const double* src = &self.grad->data[i * d];
      for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
    }
  });
}

/// Dense interaction block: out[i, j, :] = a[i, :] * b[j, :].
inline Var pairwise_mul(Var a, Var b) {
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  detail::require(x.rank() == 2 && y.rank() == 2 && x.shape[1] == y.shape[1], "pairwise_mul",
                  "channel mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  const std::size_t p = x.shape[0], h = y.shape[0], d = x.shape[1];
  Tensor out({p, h, d});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < h; ++j) {
      double* dst = &out.data[(i * h + j) * d];
      const double* xi = &x.data[i * d];
      const double* yj = &y.data[j * d];
      for (std::size_t k = 0; k < d; ++k) dst[k] = xi[k] * yj[k];
    }
  Node* na = a.node();
  Node* nb = b.node();
  return a.graph()->record("pairwise_mul", std::move(out), {na, nb}, [na, nb, p, h, d](Node& self) {
    const Tensor& g = *self.grad;
    const Tensor& x = *na->value;
    const Tensor& y = *nb->value;
    Tensor* gx = na->requires_grad ? &na->accum() : nullptr;
    Tensor* gy = nb->requires_grad ? &nb->accum() : nullptr;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < h; ++j) {
        const double* gij = &g.data[(i * h + j) * d];
        for (std::size_t k = 0; k < d; ++k) {
          if (gx) gx->data[i * d + k] += gij[k] * y.data[j * d + k];
          if (gy) gy->data[j * d + k] += gij[k] * x.data[i * d + k];
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Convolution and pooling (NHWC)
// ---------------------------------------------------------------------------

enum class Padding { Same, Valid };

/// Stride-1 2-D convolution. x [N,H,W,C], kernel [KH,KW,C,O], bias [O] or
/// invalid Var. SAME pads with zeros so spatial extents are preserved.
inline Var conv2d(Var x, Var kernel, Var bias, Padding padding) {
  const Tensor& in = x.value();
  const Tensor& k = kernel.value();
  detail::require(in.rank() == 4 && k.rank() == 4, "conv2d",
                  "expects input NHWC and kernel [KH,KW,C,O], got " + shape_str(in.shape) +
                      " and " + shape_str(k.shape));
  detail::require(in.shape[3] == k.shape[2], "conv2d",
                  "input channels " + std::to_string(in.shape[3]) + " vs kernel " +
                      shape_str(k.shape));
  const std::size_t n = in.shape[0], hh = in.shape[1], ww = in.shape[2], c = in.shape[3];
  const std::size_t kh = k.shape[0], kw = k.shape[1], o = k.shape[3];
  if (bias.valid()) {
    detail::require(bias.value().rank() == 1 && bias.value().size() == o, "conv2d",
                    "bias " + shape_str(bias.shape()) + " vs " + std::to_string(o) +
                        " output channels");
  }
  std::size_t oh, ow;
  std::ptrdiff_t pt = 0, pl = 0;
  if (padding == Padding::Same) {
    oh = hh;
    ow = ww;
    pt = static_cast<std::ptrdiff_t>((kh - 1) / 2);
    pl = static_cast<std::ptrdiff_t>((kw - 1) / 2);
  } else {
    detail::require(hh >= kh && ww >= kw, "conv2d",
                    "VALID kernel " + shape_str(k.shape) + " larger than input " +
                        shape_str(in.shape));
    oh = hh - kh + 1;
    ow = ww - kw + 1;
  }
  Tensor out({n, oh, ow, o});
  const double* bptr = bias.valid() ? bias.value().data.data() : nullptr;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double* dst = &out.data[((b * oh + y) * ow + xo) * o];
        if (bptr) std::copy_n(bptr, o, dst);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pt;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(hh)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo + kx) - pl;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(ww)) continue;
            const double* src = &in.data[((b * hh + iy) * ww + ix) * c];
            const double* wk = &k.data[(ky * kw + kx) * c * o];
            for (std::size_t ci = 0; ci < c; ++ci) {
              const double v = src[ci];
              if (v == 0.0) continue;
              const double* wrow = wk + ci * o;
              for (std::size_t co = 0; co < o; ++co) dst[co] += v * wrow[co];
            }
          }
        }
      }
  Node* nx = x.node();
  Node* nk = kernel.node();
  Node* nbias = bias.valid() ? bias.node() : nullptr;
  std::vector<Node*> parents{nx, nk};
  if (nbias) parents.push_back(nbias);
  return x.graph()->record(
      "conv2d", std::move(out), parents,
      [nx, nk, nbias, n, hh, ww, c, kh, kw, o, oh, ow, pt, pl](Node& self) {
        const Tensor& g = *self.grad;
        const Tensor& in = *nx->value;
        const Tensor& k = *nk->value;
        Tensor* gx = nx->requires_grad ? &nx->accum() : nullptr;
        Tensor* gk = nk->requires_grad ? &nk->accum() : nullptr;
        if (nbias && nbias->requires_grad) {
          Tensor& gb = nbias->accum();
          for (std::size_t i = 0; i < g.size(); i += o)
            for (std::size_t co = 0; co < o; ++co) gb.data[co] += g.data[i + co];
        }
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t xo = 0; xo < ow; ++xo) {
              const double* gout = &g.data[((b * oh + y) * ow + xo) * o];
              for (std::size_t ky = 0; ky < kh; ++ky) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + ky) - pt;
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(hh)) continue;
                for (std::size_t kx = 0; kx < kw; ++kx) {
                  const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(xo + kx) - pl;
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(ww)) continue;
                  const std::size_t in_off = ((b * hh + iy) * ww + ix) * c;
                  const std::size_t k_off = (ky * kw + kx) * c * o;
                  for (std::size_t ci = 0; ci < c; ++ci) {
                    const double* wrow = &k.data[k_off + ci * o];
                    if (gx) {
                      double s = 0.0;
                      for (std::size_t co = 0; co < o; ++co) s += gout[co] * wrow[co];
                      gx->data[in_off + ci] += s;
                    }
                    if (gk) {
                      const double v = in.data[in_off + ci];
                      if (v == 0.0) continue;
                      double* gw = &gk->data[k_off + ci * o];
                      for (std::size_t co = 0; co < o; ++co) gw[co] += v * gout[co];
                    }
                  }
                }
              }
            }
      });
}

/// 1-D convolution over time. x [N,T,C], kernel [K,C,O], bias [O].
inline Var conv1d(Var x, Var kernel, Var bias, Padding padding) {
  detail::require(x.value().rank() == 3 && kernel.value().rank() == 3, "conv1d",
                  "expects input [N,T,C] and kernel [K,C,O], got " + shape_str(x.shape()) +
                      " and " + shape_str(kernel.shape()));
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  const std::size_t k = kernel.dim(0), o = kernel.dim(2);
  Var x4 = reshape(x, {n, 1, t, c});
  Var k4 = reshape(kernel, {1, k, kernel.dim(1), o});
  Var y = conv2d(x4, k4, bias, padding);
  return reshape(y, {n, y.dim(2), o});
}

/// Max pooling with a square window and stride over NHWC input. Output
/// extents are ceil(H / stride); windows that run past the border only see
/// in-range elements. Ties resolve to the lowest index.
inline Var maxpool2d(Var x, std::size_t window = 2, std::size_t stride = 2) {
  const Tensor& in = x.value();
  detail::require(in.rank() == 4, "maxpool2d", "expects NHWC, got " + shape_str(in.shape));
  detail::require(window >= 1 && stride >= 1, "maxpool2d", "window and stride must be >= 1");
  const std::size_t n = in.shape[0], hh = in.shape[1], ww = in.shape[2], c = in.shape[3];
  detail::require(hh >= 1 && ww >= 1, "maxpool2d", "empty spatial extent " + shape_str(in.shape));
  const std::size_t oh = (hh + stride - 1) / stride, ow = (ww + stride - 1) / stride;
  Tensor out({n, oh, ow, c});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo)
        for (std::size_t ci = 0; ci < c; ++ci) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          bool first = true;
          for (std::size_t ky = 0; ky < window; ++ky) {
            const std::size_t iy = y * stride + ky;
            if (iy >= hh) break;
            for (std::size_t kx = 0; kx < window; ++kx) {
              const std::size_t ix = xo * stride + kx;
              if (ix >= ww) break;
              const std::size_t idx = ((b * hh + iy) * ww + ix) * c + ci;
              if (first || in.data[idx] > best) {
                best = in.data[idx];
                best_idx = idx;
                first = false;
              }
            }
          }
          const std::size_t oi = ((b * oh + y) * ow + xo) * c + ci;
          out.data[oi] = best;
          (*arg)[oi] = best_idx;
        }
  x.graph()->mix_kink(detail::hash_indices(*arg));
  Node* nx = x.node();
  return x.graph()->record("maxpool2d", std::move(out), {nx}, [nx, arg](Node& self) {
    Tensor& gx = nx->accum();
    for (std::size_t i = 0; i < arg->size(); ++i) gx.data[(*arg)[i]] += self.grad->data[i];
  });
}

/// Max over the time axis: [N,T,C] -> [N,C]. Ties resolve to the lowest t.
inline Var max_over_time(Var x) {
  const Tensor& in = x.value();
  detail::require(in.rank() == 3 && in.shape[1] >= 1, "max_over_time",
                  "expects [N,T>=1,C], got " + shape_str(in.shape));
  const std::size_t n = in.shape[0], t = in.shape[1], c = in.shape[2];
  Tensor out({n, c});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ci = 0; ci < c; ++ci) {
      std::size_t best = (b * t) * c + ci;
      for (std::size_t s = 1; s < t; ++s) {
        const std::size_t idx = (b * t + s) * c + ci;
        if (in.data[idx] > in.data[best]) best = idx;
      }
      out.data[b * c + ci] = in.data[best];
      (*arg)[b * c + ci] = best;
    }
  x.graph()->mix_kink(detail::hash_indices(*arg));
  Node* nx = x.node();
  return x.graph()->record("max_over_time", std::move(out), {nx}, [nx, arg](Node& self) {
    Tensor& gx = nx->accum();
    for (std::size_t i = 0; i < arg->size(); ++i) gx.data[(*arg)[i]] += self.grad->data[i];
  });
}

// ---------------------------------------------------------------------------
// Name-based dispatch
// ---------------------------------------------------------------------------

using Attr = std::variant<long, double, std::string, std::vector<long>>;
using Attrs = std::map<std::string, Attr>;

namespace detail {

template <typename T>
T attr(const Attrs& attrs, const std::string& op, const std::string& key) {
  auto it = attrs.find(key);
  if (it == attrs.end()) throw ShapeError(op + ": missing attribute '" + key + "'");
  if (const T* v = std::get_if<T>(&it->second)) return *v;
  throw ShapeError(op + ": attribute '" + key + "' has the wrong type");
}

inline void arity(const std::string& op, const std::vector<Var>& in, std::size_t lo,
                  std::size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    throw ShapeError(op + ": expected " + std::to_string(lo) +
                     (lo == hi ? "" : "-" + std::to_string(hi)) + " inputs, got " +
                     std::to_string(in.size()));
  }
}

inline Padding padding_attr(const Attrs& attrs, const std::string& op) {
  const auto p = attr<std::string>(attrs, op, "padding");
  if (p == "same") return Padding::Same;
  if (p == "valid") return Padding::Valid;
  throw ShapeError(op + ": padding must be 'same' or 'valid'");
}

}  // namespace detail

/// Applies a primitive by name. Attributes: conv2d/conv1d need "padding";
/// softmax needs "axis"; concat needs "axis"; dropout needs "keep_rate";
/// scale needs "factor"; reshape needs "shape"; slice needs "axis", "start",
/// "length"; gather_rows needs "ids"; maxpool2d takes optional "window",
/// "stride".
inline Var apply_primitive(const std::string& kind, const std::vector<Var>& in,
                           const Attrs& attrs = {}) {
  using detail::arity;
  using detail::attr;
  if (kind == "matmul") { arity(kind, in, 2, 2); return matmul(in[0], in[1]); }
  if (kind == "add") { arity(kind, in, 2, 2); return add(in[0], in[1]); }
  if (kind == "sub") { arity(kind, in, 2, 2); return sub(in[0], in[1]); }
  if (kind == "mul") { arity(kind, in, 2, 2); return mul(in[0], in[1]); }
  if (kind == "abs") { arity(kind, in, 1, 1); return abs(in[0]); }
  if (kind == "relu") { arity(kind, in, 1, 1); return relu(in[0]); }
  if (kind == "sigmoid") { arity(kind, in, 1, 1); return sigmoid(in[0]); }
  if (kind == "tanh") { arity(kind, in, 1, 1); return tanh(in[0]); }
  if (kind == "transpose") { arity(kind, in, 1, 1); return transpose(in[0]); }
  if (kind == "flatten") { arity(kind, in, 1, 1); return flatten(in[0]); }
  if (kind == "sum") { arity(kind, in, 1, 1); return sum(in[0]); }
  if (kind == "mean") { arity(kind, in, 1, 1); return mean(in[0]); }
  if (kind == "max_over_time") { arity(kind, in, 1, 1); return max_over_time(in[0]); }
  if (kind == "pairwise_mul") { arity(kind, in, 2, 2); return pairwise_mul(in[0], in[1]); }
  if (kind == "scale") {
    arity(kind, in, 1, 1);
    return scale(in[0], attr<double>(attrs, kind, "factor"));
  }
  if (kind == "softmax") {
    arity(kind, in, 1, 1);
    return softmax(in[0], static_cast<std::size_t>(attr<long>(attrs, kind, "axis")));
  }
  if (kind == "concat") {
    arity(kind, in, 1, in.size() + 1);
    return concat(in, static_cast<std::size_t>(attr<long>(attrs, kind, "axis")));
  }
  if (kind == "dropout") {
    arity(kind, in, 1, 1);
    return dropout(in[0], attr<double>(attrs, kind, "keep_rate"));
  }
  if (kind == "reshape") {
    arity(kind, in, 1, 1);
    Shape s;
    for (long v : attr<std::vector<long>>(attrs, kind, "shape")) s.push_back(static_cast<std::size_t>(v));
    return reshape(in[0], s);
  }
  if (kind == "slice") {
    arity(kind, in, 1, 1);
    return slice(in[0], static_cast<std::size_t>(attr<long>(attrs, kind, "axis")),
                 static_cast<std::size_t>(attr<long>(attrs, kind, "start")),
                 static_cast<std::size_t>(attr<long>(attrs, kind, "length")));
  }
  if (kind == "gather_rows") {
    arity(kind, in, 1, 1);
    std::vector<int> ids;
    for (long v : attr<std::vector<long>>(attrs, kind, "ids")) ids.push_back(static_cast<int>(v));
    return gather_rows(in[0], ids);
  }
  if (kind == "conv2d" || kind == "conv1d") {
    arity(kind, in, 2, 3);
    Var bias = in.size() == 3 ? in[2] : Var{};
    const Padding p = detail::padding_attr(attrs, kind);
    return kind == "conv2d" ? conv2d(in[0], in[1], bias, p) : conv1d(in[0], in[1], bias, p);
  }
  if (kind == "maxpool2d") {
    arity(kind, in, 1, 1);
    const auto get = [&](const char* key, long dflt) {
      auto it = attrs.find(key);
      return it == attrs.end() ? dflt : std::get<long>(it->second);
    };
    return maxpool2d(in[0], static_cast<std::size_t>(get("window", 2)),
                     static_cast<std::size_t>(get("stride", 2)));
  }
  throw Error("unknown primitive: " + kind);
}

}  // namespace diin::ops

#endif  // DIIN_OPS_HPP
