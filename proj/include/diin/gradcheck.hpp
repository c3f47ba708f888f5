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

#ifndef DIIN_GRADCHECK_HPP
#define DIIN_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "diin/graph.hpp"

namespace diin {

struct GradCheckOptions {
  double step = 1e-5;
  double floor = 1e-8;
  /// Entries probed per parameter; 0 probes all of them. When limited, the
  /// probed entries are evenly strided through the tensor.
  std::size_t max_entries = 0;
  /// Entries whose gradient is identically zero (the loss does not depend on
  /// them). These are not scored by relative error; instead the analytic
  /// gradient must be at most `invariant_tol` and the numeric one at most
  /// `floor`.
  std::function<bool(const Parameter&, std::size_t)> invariant;
  double invariant_tol = 1e-12;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0, worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  // perturbation crossed a relu/max-pool kink
  std::size_t invariant = 0;
  bool invariant_ok = true;
  bool ok = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed() const {
    return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.ok; });
  }
  std::size_t checked() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.checked;
    return n;
  }

  friend std::ostream& operator<<(std::ostream& os, const GradCheckReport& r) {
    for (const auto& e : r.entries) {
      os << (e.ok ? "  ok   " : "  FAIL ") << e.name << " max_rel=" << e.max_rel_error
         << " checked=" << e.checked << " excluded=" << e.excluded;
      if (!e.ok) os << " worst[" << e.worst_index << "] analytic=" << e.worst_analytic << " numeric=" << e.worst_numeric;
      if (e.invariant) os << " invariant=" << e.invariant << (e.invariant_ok ? "" : " (nonzero)");
      os << '\n';
    }
    return os;
  }
};

/// Builds a scalar loss on a fresh graph. Must be deterministic (no dropout).
using GraphBuilder = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of every trainable parameter in `store`
/// against central differences. Relative error per entry is
/// |analytic - numeric| / max(|numeric|, floor).
inline GradCheckReport finite_difference_check(const GraphBuilder& build, ParameterStore& store,
                                               double tolerance, GradCheckOptions opts = {}) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::uint64_t base_sig;
  {
    Graph g;
    Var loss = build(g);
    store.zero_grad();
    g.backward(loss);
    base_sig = g.kink_signature();
  }

  auto eval = [&](std::uint64_t& sig) {
    Graph g;
    Var loss = build(g);
    sig = g.kink_signature();
    return loss.value()[0];
  };

  for (const auto& holder : store) {
    Parameter& p = *holder;
    if (!p.trainable) continue;
    GradCheckEntry entry;
    entry.name = p.name;
    const Tensor analytic = *p.grad;
    const std::size_t n = p.size();
    const std::size_t stride =
        opts.max_entries == 0 || n <= opts.max_entries ? 1 : (n + opts.max_entries - 1) / opts.max_entries;
    for (std::size_t i = 0; i < n; i += stride) {
      double& slot = p.value->data[i];
      const double saved = slot;
      std::uint64_t sp, sm;
      slot = saved + opts.step;
      const double lp = eval(sp);
      slot = saved - opts.step;
      const double lm = eval(sm);
      slot = saved;
      if (sp != base_sig || sm != base_sig) {
        ++entry.excluded;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * opts.step);
      if (opts.invariant && opts.invariant(p, i)) {
        ++entry.invariant;
        if (std::fabs(analytic[i]) > opts.invariant_tol || std::fabs(numeric) > opts.floor) {
          entry.invariant_ok = false;
          entry.worst_index = i;
          entry.worst_analytic = analytic[i];
          entry.worst_numeric = numeric;
        }
        continue;
      }
      const double err =
          std::fabs(analytic[i] - numeric) / std::max(std::fabs(numeric), opts.floor);
      if (err > entry.max_rel_error && entry.invariant_ok) {
        entry.worst_index = i;
        entry.worst_analytic = analytic[i];
        entry.worst_numeric = numeric;
      }
      entry.max_rel_error = std::max(entry.max_rel_error, err);
      ++entry.checked;
    }
    entry.ok = entry.max_rel_error < tolerance && entry.invariant_ok;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace diin

#endif  // DIIN_GRADCHECK_HPP
