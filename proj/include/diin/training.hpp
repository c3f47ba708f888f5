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

#ifndef DIIN_TRAINING_HPP
#define DIIN_TRAINING_HPP

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "diin/checkpoint.hpp"
#include "diin/config.hpp"
#include "diin/corpus.hpp"
#include "diin/features.hpp"
#include "diin/model.hpp"

namespace diin {

// ---------------------------------------------------------------------------
// Schedules
// ---------------------------------------------------------------------------

/// sigmoid(((t - S/2) * 8) / (S/2)) * R
inline double l2_ratio(double t, double full_step = 100000.0, double full_ratio = 0.9e-5) {
  const double half = full_step / 2.0;
  const double z = ((t - half) * 8.0) / half;
  return full_ratio / (1.0 + std::exp(-z));
}

inline double l2_ratio(double t, const ModelConfig& c) {
  return l2_ratio(t, static_cast<double>(c.l2_full_step), c.l2_full_ratio);
}

/// decay^(t / steps); with `staircase` the exponent is floored.
inline double keep_rate(double t, double decay = 0.977, double steps = 10000.0, bool staircase = false) {
  double e = t / steps;
  if (staircase) e = std::floor(e);
  return std::pow(decay, e);
}

inline double keep_rate(double t, const ModelConfig& c) {
  return keep_rate(t, c.keep_decay, static_cast<double>(c.keep_decay_steps), c.keep_staircase);
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Parameters under the L2 term: trainable weights; embedding tables and
/// biases only when switched on.
inline bool l2_included(const Parameter& p, const ModelConfig& c) {
  if (!p.trainable) return false;
  if (p.kind == ParamKind::Embedding) return c.l2_include_embeddings;
  if (p.kind == ParamKind::Bias) return c.l2_include_biases;
  return true;
}

/// Sum of squares over the L2 set (no ratio applied).
inline Var l2_sum(Graph& g, const ParameterStore& store, const ModelConfig& c) {
  std::vector<Var> terms;
  for (const auto& p : store) {
    if (!l2_included(*p, c)) continue;
    Var w = g.param(*p);
    terms.push_back(ops::sum(ops::mul(w, w)));
  }
  if (terms.empty()) return g.constant(Tensor::scalar(0.0));
  Var total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
  return total;
}

struct LossParts {
  Var total;
  Var cross_entropy;
  Var l2;          // already scaled by the ratio
  Var difference;  // already scaled
  double l2_ratio = 0.0;
};

/// Mean cross-entropy + l2_ratio(t) * sum ||w||^2 + encoder difference penalty.
inline LossParts total_loss(Graph& g, const DiinModel& model, Var logits, std::span<const int> labels,
                            double step) {
  LossParts out;
  const auto& c = model.config();
  out.cross_entropy = ops::cross_entropy(logits, labels);
  out.l2_ratio = l2_ratio(step, c);
  out.l2 = ops::scale(l2_sum(g, model.params(), c), out.l2_ratio);
  out.difference = model.difference_penalty(g);
  out.total = ops::add(ops::add(out.cross_entropy, out.l2), out.difference);
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

enum class Phase { Adadelta, Sgd };

inline std::string_view phase_name(Phase p) { return p == Phase::Adadelta ? "adadelta" : "sgd"; }

struct AdadeltaSlots {
  Tensor sq_grad;    // E[g^2]
  Tensor sq_update;  // E[dx^2]
};

/// Zeroes the gradient rows listed in `frozen_rows`.
inline void mask_frozen(Parameter& p) {
  if (p.frozen_rows.empty()) return;
  const std::size_t rows = p.shape().at(0);
  const std::size_t width = p.size() / rows;
  for (std::size_t r : p.frozen_rows)
    std::fill_n(p.grad->data.begin() + static_cast<std::ptrdiff_t>(r * width), width, 0.0);
}

/// One Adadelta update over every trainable parameter, reading p.grad.
inline void adadelta_step(ParameterStore& store, std::map<std::string, AdadeltaSlots>& slots, double lr,
                          double rho, double eps) {
  for (const auto& holder : store) {
    Parameter& p = *holder;
    if (!p.trainable) continue;
    mask_frozen(p);
    auto it = slots.find(p.name);
    if (it == slots.end()) it = slots.emplace(p.name, AdadeltaSlots{Tensor(p.shape()), Tensor(p.shape())}).first;
    auto& eg = it->second.sq_grad.data;
    auto& ex = it->second.sq_update.data;
    auto& x = p.value->data;
    const auto& gr = p.grad->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = gr[i];
      eg[i] = rho * eg[i] + (1.0 - rho) * g * g;
      const double dx = -(std::sqrt(ex[i] + eps) / std::sqrt(eg[i] + eps)) * g;
      ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
      x[i] += lr * dx;
    }
  }
}

inline void sgd_step(ParameterStore& store, double lr) {
  for (const auto& holder : store) {
    Parameter& p = *holder;
    if (!p.trainable) continue;
    mask_frozen(p);
    auto& x = p.value->data;
    const auto& gr = p.grad->data;
    for (std::size_t i = 0; i < x.size(); ++i) x[i] -= lr * gr[i];
  }
}

// ---------------------------------------------------------------------------
// Train state
// ---------------------------------------------------------------------------

struct TrainState {
  std::uint64_t step = 0;
  double best_dev = -1.0;
  std::uint64_t best_step = 0;
  Phase phase = Phase::Adadelta;
  std::optional<std::uint64_t> switched_at;
  std::map<std::string, AdadeltaSlots> slots;
  Rng rng{0};

  bool operator==(const TrainState& o) const {
    if (step != o.step || best_dev != o.best_dev || best_step != o.best_step || phase != o.phase ||
        switched_at != o.switched_at || rng != o.rng || slots.size() != o.slots.size())
      return false;
    for (const auto& [k, v] : slots) {
      auto it = o.slots.find(k);
      if (it == o.slots.end() || !(it->second.sq_grad == v.sq_grad) ||
          !(it->second.sq_update == v.sq_update))
        return false;
    }
    return true;
  }
};

/// Records a dev score at step t and applies the one-way switch to SGD once
/// t - best_step reaches `patience`. Returns the phase after the update.
inline Phase observe_dev(TrainState& s, double score, std::uint64_t t, std::uint64_t patience) {
  if (score > s.best_dev) {
    s.best_dev = score;
    s.best_step = t;
  }
  if (s.phase == Phase::Adadelta && t >= s.best_step && t - s.best_step >= patience) {
    s.phase = Phase::Sgd;
    s.switched_at = t;
  }
  return s.phase;
}

namespace detail {

inline std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hex_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw Error("checkpoint: bad number '" + s + "'");
  return v;
}

inline const std::string& meta_at(const Checkpoint& c, const std::string& key) {
  auto it = c.meta.find(key);
  if (it == c.meta.end()) throw Error("checkpoint: missing meta key " + key);
  return it->second;
}

}  // namespace detail

/// Writes the train state into `ckpt` (meta entries plus "opt/..." tensors).
inline void store_train_state(Checkpoint& ckpt, const TrainState& s) {
  ckpt.meta["train.step"] = std::to_string(s.step);
  ckpt.meta["train.best_dev"] = detail::hex_double(s.best_dev);
  ckpt.meta["train.best_step"] = std::to_string(s.best_step);
  ckpt.meta["train.phase"] = std::string(phase_name(s.phase));
  ckpt.meta["train.switched_at"] = s.switched_at ? std::to_string(*s.switched_at) : "none";
  std::ostringstream rs;
  rs << s.rng;
  ckpt.meta["train.rng"] = rs.str();
  for (const auto& [name, slot] : s.slots) {
    ckpt.tensors.emplace_back("opt/sq_grad/" + name, slot.sq_grad);
    ckpt.tensors.emplace_back("opt/sq_update/" + name, slot.sq_update);
  }
}

inline TrainState load_train_state(const Checkpoint& ckpt) {
  TrainState s;
  s.step = std::stoull(detail::meta_at(ckpt, "train.step"));
  s.best_dev = detail::parse_hex_double(detail::meta_at(ckpt, "train.best_dev"));
  s.best_step = std::stoull(detail::meta_at(ckpt, "train.best_step"));
  const auto& ph = detail::meta_at(ckpt, "train.phase");
  if (ph != "adadelta" && ph != "sgd") throw Error("checkpoint: unknown phase " + ph);
  s.phase = ph == "sgd" ? Phase::Sgd : Phase::Adadelta;
  const auto& sw = detail::meta_at(ckpt, "train.switched_at");
  if (sw != "none") s.switched_at = std::stoull(sw);
  std::istringstream rs(detail::meta_at(ckpt, "train.rng"));
  rs >> s.rng;
  if (!rs) throw Error("checkpoint: bad rng state");
  const std::string g = "opt/sq_grad/", u = "opt/sq_update/";
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind(g, 0) == 0) s.slots[name.substr(g.size())].sq_grad = t;
    else if (name.rfind(u, 0) == 0) s.slots[name.substr(u.size())].sq_update = t;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Accuracy, data mix, ensembling
// ---------------------------------------------------------------------------

inline double accuracy(const DiinModel& model, std::span<const PairFeatures> data) {
  if (data.empty()) throw Error("accuracy: empty dataset");
  const auto pred = model.predict(data);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) ok += pred[i] == data[i].label;
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

/// MultiNLI training set plus a `fraction` sample of SNLI.
inline std::vector<SentencePair> mix_training_data(const std::vector<SentencePair>& primary,
                                                   const std::vector<SentencePair>& secondary,
                                                   double fraction, std::uint64_t seed) {
  std::vector<SentencePair> out = primary;
  auto extra = sample_fraction(secondary, fraction, seed);
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

using ClassProbs = std::array<double, kNumClasses>;

/// Per-example majority over models; ties go to the tied class with the
/// highest mean probability, then the lowest index.
inline std::vector<int> ensemble_vote(const std::vector<std::vector<ClassProbs>>& runs) {
  if (runs.empty()) throw Error("ensemble_vote: no models");
  const std::size_t n = runs[0].size();
  for (const auto& r : runs)
    if (r.size() != n) throw Error("ensemble_vote: models disagree on example count");
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<int, kNumClasses> votes{};
    ClassProbs mean{};
    for (const auto& r : runs) {
      ++votes[DiinModel::argmax(r[i])];
      for (int c = 0; c < kNumClasses; ++c) mean[c] += r[i][c] / static_cast<double>(runs.size());
    }
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (votes[c] > votes[best] || (votes[c] == votes[best] && mean[c] > mean[best])) best = c;
    out[i] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

struct MetricsRow {
  std::uint64_t step = 0;
  Phase phase = Phase::Adadelta;
  double train_loss = 0.0;
  std::optional<double> dev_matched, dev_mismatched;
  double keep_rate = 1.0;
  double l2_ratio = 0.0;
};

inline std::string metrics_header() {
  return "step,phase,train_loss,dev_acc_matched,dev_acc_mismatched,keep_rate,l2_ratio";
}

inline std::string format_metrics(const MetricsRow& r) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string s = std::to_string(r.step) + "," + std::string(phase_name(r.phase)) + "," + num(r.train_loss) + ",";
  if (r.dev_matched) s += num(*r.dev_matched);
  s += ",";
  if (r.dev_mismatched) s += num(*r.dev_mismatched);
  s += "," + num(r.keep_rate) + "," + num(r.l2_ratio);
  return s;
}

struct TrainOptions {
  std::uint64_t max_steps = 1000;
  /// Train-set accuracy is measured every this many steps (0: never); the
  /// run stops once it reaches `stop_at_train_accuracy`.
  std::uint64_t train_eval_every = 0;
  double stop_at_train_accuracy = 2.0;
  /// Artifacts (metrics.csv, best and last checkpoints, diagnostics). Empty
  /// keeps everything in memory.
  std::filesystem::path out_dir;
};

struct TrainResult {
  std::vector<MetricsRow> metrics;
  std::uint64_t steps = 0;
  std::optional<double> final_train_accuracy;
  std::optional<std::uint64_t> reached_target_at;
  double best_dev = -1.0;
};

/// Runs the optimization loop over padded, shuffled batches.
class Trainer {
 public:
  Trainer(DiinModel& model, const std::vector<PairFeatures>& train,
          const std::vector<PairFeatures>* dev_matched = nullptr,
          const std::vector<PairFeatures>* dev_mismatched = nullptr)
      : model_(model), train_(train), dev_matched_(dev_matched), dev_mismatched_(dev_mismatched),
        batches_(train, model.config().batch_size, model.config().cutoff_p(), model.config().cutoff_h(),
                 model.config().seed) {
    if (train.empty()) throw Error("train: empty training set");
    state_.rng.seed(model.config().seed ^ 0x9e3779b97f4a7c15ULL);
  }

  TrainState& state() { return state_; }
  const TrainState& state() const { return state_; }

  /// One optimization step; returns the metrics row.
  MetricsRow step() {
    const auto& c = model_.config();
    const double t = static_cast<double>(state_.step);
    MetricsRow row;
    row.step = state_.step;
    row.keep_rate = keep_rate(t, c);
    Batch b = batches_.next();

    Graph g(true, &state_.rng);
    auto fwd = model_.forward(g, b.items, row.keep_rate);
    auto loss = total_loss(g, model_, fwd.logits, b.labels, t);
    row.l2_ratio = loss.l2_ratio;
    row.train_loss = loss.total.value()[0];
    model_.params().zero_grad();
    g.backward(loss.total);
    if (!std::isfinite(row.train_loss)) fail(row, loss);

    if (state_.phase == Phase::Adadelta)
      adadelta_step(model_.params(), state_.slots, c.learning_rate, c.rho, c.epsilon);
    else
      sgd_step(model_.params(), c.sgd_learning_rate);
    ++state_.step;
    row.phase = state_.phase;

    if (c.dev_every > 0 && state_.step % c.dev_every == 0 && dev_matched_ && !dev_matched_->empty()) {
      row.dev_matched = accuracy(model_, *dev_matched_);
      if (dev_mismatched_ && !dev_mismatched_->empty()) row.dev_mismatched = accuracy(model_, *dev_mismatched_);
      const double before = state_.best_dev;
      observe_dev(state_, *row.dev_matched, state_.step, c.switch_patience);
      if (state_.best_dev > before) save_best();
      row.phase = state_.phase;
    }
    return row;
  }

  TrainResult run(const TrainOptions& opts) {
    TrainResult res;
    std::ofstream log;
    if (!opts.out_dir.empty()) {
      std::filesystem::create_directories(opts.out_dir);
      out_dir_ = opts.out_dir;
      log.open(opts.out_dir / "metrics.csv");
      if (!log) throw Error("train: cannot write " + (opts.out_dir / "metrics.csv").string());
      log << metrics_header() << '\n';
    }
    while (state_.step < opts.max_steps) {
      MetricsRow row = step();
      if (log) log << format_metrics(row) << '\n';
      res.metrics.push_back(row);
      if (opts.train_eval_every > 0 && state_.step % opts.train_eval_every == 0) {
        res.final_train_accuracy = accuracy(model_, train_);
        if (*res.final_train_accuracy >= opts.stop_at_train_accuracy) {
          res.reached_target_at = state_.step;
          break;
        }
      }
    }
    res.steps = state_.step;
    res.best_dev = state_.best_dev;
    if (!out_dir_.empty()) save_last();
    return res;
  }

  /// Parameters plus train state, for resuming.
  Checkpoint full_checkpoint() const {
    Checkpoint ck = snapshot(model_.params());
    store_train_state(ck, state_);
    return ck;
  }

 private:
  [[noreturn]] void fail(const MetricsRow& row, const LossParts& loss) {
    std::ostringstream os;
    os.precision(17);
    os << "non-finite loss at step " << row.step << "\n"
       << "  keep_rate=" << row.keep_rate << " l2_ratio=" << row.l2_ratio << " phase=" << phase_name(state_.phase)
       << "\n  cross_entropy=" << loss.cross_entropy.value()[0] << " l2=" << loss.l2.value()[0]
       << " difference=" << loss.difference.value()[0] << "\n  grad norms:\n";
    for (const auto& p : model_.params()) {
      double s = 0.0;
      for (double v : p->grad->data) s += v * v;
      os << "    " << p->name << " " << std::sqrt(s) << "\n";
    }
    if (!out_dir_.empty()) std::ofstream(out_dir_ / "diagnostic.txt") << os.str();
    throw NonFiniteLoss(os.str());
  }

  void save_best() const {
    if (out_dir_.empty()) return;
    Checkpoint ck = snapshot(model_.params());
    ck.meta["best.step"] = std::to_string(state_.best_step);
    ck.meta["best.dev"] = detail::hex_double(state_.best_dev);
    write_checkpoint(out_dir_ / "best.manifest", out_dir_ / "best.bin", ck);
  }

  void save_last() const {
    write_checkpoint(out_dir_ / "last.manifest", out_dir_ / "last.bin", full_checkpoint());
  }

  DiinModel& model_;
  const std::vector<PairFeatures>& train_;
  const std::vector<PairFeatures>* dev_matched_;
  const std::vector<PairFeatures>* dev_mismatched_;
  BatchIterator batches_;
  TrainState state_;
  std::filesystem::path out_dir_;
};

}  // namespace diin

#endif  // DIIN_TRAINING_HPP
