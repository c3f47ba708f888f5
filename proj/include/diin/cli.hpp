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

#ifndef DIIN_CLI_HPP
#define DIIN_CLI_HPP

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diin/checkpoint.hpp"
#include "diin/config.hpp"
#include "diin/corpus.hpp"
#include "diin/evaluation.hpp"
#include "diin/features.hpp"
#include "diin/model.hpp"
#include "diin/text.hpp"
#include "diin/training.hpp"

#ifndef DIIN_GIT_DESCRIBE
#define DIIN_GIT_DESCRIBE "unknown"
#endif

namespace diin::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad flags, bad config keys or values. Maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Shared by every subcommand: base config file plus key=value overrides.
struct ConfigArgs {
  std::string path;
  std::vector<std::string> overrides;

  ModelConfig build() const {
    try {
      ModelConfig c = path.empty() ? ModelConfig{} : ModelConfig::load(path);
      c.apply(overrides);
      c.validate();
      return c;
    } catch (const UsageError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
};

struct DataArgs {
  std::string train;
  std::string format;  // empty: from the dataset
  std::string dev_matched;
  std::string dev_mismatched;
  std::string snli;  // mixed into training at snli_mix_fraction
  std::string vectors;
  std::size_t synthetic = 0;
};

struct TrainArgs {
  ConfigArgs config;
  DataArgs data;
  std::uint64_t steps = 1000;
  std::uint64_t train_eval_every = 0;
  std::string out = "runs/train";
};

struct EvalArgs {
  std::string run;
  std::string data;
  std::string format;
  std::string checkpoint;  // best | last; empty: best when present
  std::string out;
};

struct AblateArgs {
  TrainArgs train;
  std::vector<std::string> rows;
};

struct ExportArgs {
  ConfigArgs config;
  std::string run;
  std::string premise;
  std::string hypothesis;
  std::string target = "interaction";
  std::vector<std::size_t> channels{0};
  std::string out = "heatmap";
};

struct CountArgs {
  ConfigArgs config;
  std::vector<std::size_t> dims;
};

/// Relative corpus paths resolve against DIIN_DATA_DIR when it is set.
inline fs::path data_path(const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return path;
  if (const char* root = std::getenv("DIIN_DATA_DIR"); root && *root) return fs::path(root) / path;
  return path;
}

inline CorpusFormat format_for(const std::string& flag, const ModelConfig& c) {
  if (!flag.empty()) {
    try {
      return parse_corpus_format(flag);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  if (c.dataset == "snli") return CorpusFormat::SnliJsonl;
  if (c.dataset == "quora") return CorpusFormat::QuoraTsv;
  return CorpusFormat::MultiNliJsonl;
}

inline std::vector<SentencePair> load_split(const std::string& p, CorpusFormat f, std::ostream& log) {
  std::vector<std::string> warnings;
  auto pairs = load_corpus(data_path(p), f, &warnings);
  for (const auto& w : warnings) log << "warning: " << w << '\n';
  return pairs;
}

inline void require_training_data(const DataArgs& a) {
  if (a.synthetic == 0 && a.train.empty()) throw UsageError("train: --train or --synthetic is required");
}

struct Dataset {
  std::vector<SentencePair> train, dev_matched, dev_mismatched;
};

inline Dataset load_dataset(const DataArgs& a, const ModelConfig& c, std::ostream& log) {
  Dataset d;
  if (a.synthetic > 0) {
    d.train = synthetic_corpus(a.synthetic, c.seed);
    d.dev_matched = synthetic_corpus(std::max<std::size_t>(a.synthetic / 4, 1), c.seed + 1);
    return d;
  }
  require_training_data(a);
  const CorpusFormat f = format_for(a.format, c);
  d.train = load_split(a.train, f, log);
  if (!a.snli.empty()) {
    auto snli = load_split(a.snli, CorpusFormat::SnliJsonl, log);
    d.train = mix_training_data(d.train, snli, c.snli_mix_fraction, c.seed);
  }
  if (!a.dev_matched.empty()) d.dev_matched = load_split(a.dev_matched, f, log);
  if (!a.dev_mismatched.empty()) d.dev_mismatched = load_split(a.dev_mismatched, f, log);
  if (d.train.empty()) throw Error("train: no usable training pairs");
  return d;
}

inline json config_json(const ModelConfig& c) {
  json j = json::object();
  for (const auto& k : ModelConfig::keys()) j[k] = c.get(k);
  return j;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string now_stamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::ostringstream os;
  os << std::put_time(std::gmtime(&t), "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct RunSummary {
  std::uint64_t steps = 0;
  double final_train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> dev_matched, dev_mismatched;
  double best_dev = -1.0;
  std::size_t parameters = 0;
};

/// Full training run into `out`: config.txt, vocabularies, metrics.csv,
/// checkpoints, manifest.json and run.log (the only file with wall-clock times).
inline RunSummary train_into(const ModelConfig& cfg, const DataArgs& data, std::uint64_t steps,
                             std::uint64_t train_eval_every, const fs::path& out, const std::string& command) {
  require_training_data(data);
  fs::create_directories(out);
  std::ofstream log(out / "run.log");
  log << "start " << now_stamp() << '\n';

  Dataset ds = load_dataset(data, cfg, log);
  std::vector<SentencePair> all = ds.train;
  all.insert(all.end(), ds.dev_matched.begin(), ds.dev_matched.end());
  all.insert(all.end(), ds.dev_mismatched.begin(), ds.dev_mismatched.end());
  Vocabularies vocab = build_vocabularies(all, cfg.word_dim, cfg.char_dim);

  Rng rng(cfg.seed);
  const Tensor* vectors = nullptr;
  if (!data.vectors.empty()) {
    const auto hits = load_pretrained_vectors(data_path(data.vectors), vocab.words, rng);
    log << "pretrained hits " << hits << " of " << vocab.words.size() << '\n';
    vectors = &vocab.words.vectors();
  }
  DiinModel model(cfg, vocab.words.size(), vocab.chars.size(), rng, vectors);

  std::ofstream(out / "config.txt") << cfg.to_text();
  vocab.words.save(out / "words.vocab");
  vocab.chars.save(out / "chars.vocab");

  std::size_t unknown_tags = 0;
  auto feats = [&](const std::vector<SentencePair>& p) {
    return featurize_all(p, vocab, cfg.cutoff_p(), cfg.cutoff_h(), cfg.em_exclude_stopwords, &unknown_tags);
  };
  const auto train = feats(ds.train);
  const auto dev_m = feats(ds.dev_matched);
  const auto dev_mm = feats(ds.dev_mismatched);
  log << "train " << train.size() << " dev_matched " << dev_m.size() << " dev_mismatched " << dev_mm.size()
      << " unknown_tags " << unknown_tags << '\n';

  Trainer trainer(model, train, dev_m.empty() ? nullptr : &dev_m, dev_mm.empty() ? nullptr : &dev_mm);
  TrainOptions opts;
  opts.max_steps = steps;
  opts.train_eval_every = train_eval_every;
  opts.out_dir = out;
  TrainResult res;
  try {
    res = trainer.run(opts);
  } catch (const Error& e) {
    log << "error " << e.what() << '\n';
    throw;
  }

  RunSummary s;
  s.steps = res.steps;
  s.final_train_loss = res.metrics.empty() ? 0.0 : res.metrics.back().train_loss;
  s.train_accuracy = accuracy(model, train);
  if (!dev_m.empty()) s.dev_matched = accuracy(model, dev_m);
  if (!dev_mm.empty()) s.dev_mismatched = accuracy(model, dev_mm);
  s.best_dev = res.best_dev;
  s.parameters = count_store(model.params()).total;

  std::set<std::string> genres;
  for (const auto& p : ds.train) genres.insert(p.genre);

  json summary = {{"steps", s.steps},
                  {"final_train_loss", fmt17(s.final_train_loss)},
                  {"train_accuracy", fmt17(s.train_accuracy)},
                  {"best_dev", fmt17(s.best_dev)},
                  {"parameters", s.parameters}};
  if (s.dev_matched) summary["dev_matched"] = fmt17(*s.dev_matched);
  if (s.dev_mismatched) summary["dev_mismatched"] = fmt17(*s.dev_mismatched);
  json manifest = {{"command", command},
                   {"git_describe", DIIN_GIT_DESCRIBE},
                   {"seed", cfg.seed},
                   {"config", config_json(cfg)},
                   {"data",
                    {{"train", data.train},
                     {"format", data.format},
                     {"dev_matched", data.dev_matched},
                     {"dev_mismatched", data.dev_mismatched},
                     {"snli", data.snli},
                     {"vectors", data.vectors},
                     {"synthetic", data.synthetic},
                     {"train_pairs", ds.train.size()}}},
                   {"train_genres", genres},
                   {"summary", summary}};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << '\n';
  log << "end " << now_stamp() << '\n';
  return s;
}

/// Model, vocabularies and config restored from a train output directory.
struct LoadedRun {
  ModelConfig config;
  Vocabularies vocab;
  std::unique_ptr<DiinModel> model;
  std::set<std::string> train_genres;
};

inline LoadedRun load_run(const fs::path& dir, const std::string& which) {
  LoadedRun r;
  r.config = ModelConfig::load(dir / "config.txt");
  r.vocab.words = Vocabulary::load(dir / "words.vocab");
  r.vocab.chars = Vocabulary::load(dir / "chars.vocab");
  Rng rng(r.config.seed);
  r.model = std::make_unique<DiinModel>(r.config, r.vocab.words.size(), r.vocab.chars.size(), rng);
  std::string name = which;
  if (name.empty()) name = fs::exists(dir / "best.manifest") ? "best" : "last";
  if (name != "best" && name != "last") throw UsageError("--checkpoint must be best or last");
  restore(r.model->params(), read_checkpoint(dir / (name + ".manifest"), dir / (name + ".bin")));
  if (std::ifstream in(dir / "manifest.json"); in) {
    const json m = json::parse(in);
    if (m.contains("train_genres"))
      for (const auto& g : m["train_genres"]) r.train_genres.insert(g.get<std::string>());
  }
  return r;
}

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
  const ModelConfig cfg = a.config.build();
  const auto s = train_into(cfg, a.data, a.steps, a.train_eval_every, a.out, "train");
  out << "steps " << s.steps << "  final loss " << fmt17(s.final_train_loss) << "  train acc "
      << fmt17(s.train_accuracy);
  if (s.dev_matched) out << "  dev matched " << fmt17(*s.dev_matched);
  if (s.dev_mismatched) out << "  dev mismatched " << fmt17(*s.dev_mismatched);
  out << "\nwrote " << a.out << '\n';
  return 0;
}

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  LoadedRun run = load_run(a.run, a.checkpoint);
  std::ostringstream sink;
  const auto pairs = load_split(a.data, format_for(a.format, run.config), sink);
  const auto feats = featurize_all(pairs, run.vocab, run.config.cutoff_p(), run.config.cutoff_h(),
                                   run.config.em_exclude_stopwords);
  const std::set<std::string> genres = run.config.dataset == "multinli" ? run.train_genres : std::set<std::string>{};
  const EvalReport rep = evaluate(*run.model, pairs, feats, genres);
  out << format_report(rep);
  const fs::path dest = a.out.empty() ? fs::path(a.run) : fs::path(a.out);
  fs::create_directories(dest);
  std::ofstream(dest / "eval.json") << report_json(rep).dump(2) << '\n';
  return 0;
}

inline int cmd_ablate(const AblateArgs& a, std::ostream& out) {
  const ModelConfig base = a.train.config.build();
  std::vector<std::string> rows = a.rows;
  if (rows.empty())
    for (const auto& r : ablation_rows()) rows.push_back(r.name);
  std::vector<ModelConfig> cfgs;
  for (const auto& r : rows) {
    try {
      cfgs.push_back(with_ablation(base, r));
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
  }
  require_training_data(a.train.data);
  const fs::path root(a.train.out);
  fs::create_directories(root);
  std::ofstream csv(root / "ablation.csv");
  csv << "row,description,parameters,steps,final_train_loss,train_accuracy,dev_matched,dev_mismatched\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto s = train_into(cfgs[i], a.train.data, a.train.steps, a.train.train_eval_every, root / rows[i],
                              "ablate");
    csv << rows[i] << ',' << detail::csv_field(ablation_row(rows[i]).description) << ',' << s.parameters << ','
        << s.steps << ',' << fmt17(s.final_train_loss) << ',' << fmt17(s.train_accuracy) << ','
        << (s.dev_matched ? fmt17(*s.dev_matched) : "") << ',' << (s.dev_mismatched ? fmt17(*s.dev_mismatched) : "")
        << '\n';
    out << rows[i] << ": " << format_count(s.parameters) << " params, loss " << fmt17(s.final_train_loss) << '\n';
  }
  out << "wrote " << (root / "ablation.csv").string() << '\n';
  return 0;
}

inline int cmd_export(const ExportArgs& a, std::ostream& out) {
  ExportTarget target;
  try {
    target = parse_export_target(a.target);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  SentencePair pair;
  pair.premise = tokenize(a.premise);
  pair.hypothesis = tokenize(a.hypothesis);
  if (pair.premise.empty() || pair.hypothesis.empty()) throw UsageError("export-heatmap: empty sentence");

  std::unique_ptr<DiinModel> model;
  ModelConfig cfg;
  Vocabularies vocab;
  if (!a.run.empty()) {
    LoadedRun run = load_run(a.run, "");
    cfg = run.config;
    vocab = std::move(run.vocab);
    model = std::move(run.model);
  } else {
    cfg = a.config.build();
    vocab = build_vocabularies({pair}, cfg.word_dim, cfg.char_dim);
    Rng rng(cfg.seed);
    model = std::make_unique<DiinModel>(cfg, vocab.words.size(), vocab.chars.size(), rng);
  }
  const auto feats = featurize(pair, vocab, cfg.cutoff_p(), cfg.cutoff_h(), cfg.em_exclude_stopwords);
  for (const auto& f : export_activations(*model, feats, target, a.channels, a.out)) out << f.string() << '\n';
  return 0;
}

inline int cmd_count(const CountArgs& a, std::ostream& out) {
  const ModelConfig base = a.config.build();
  const std::vector<std::size_t> dims = a.dims.empty() ? table6_dims() : a.dims;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%6s %12s %10s %12s\n", "d", "parameters", "approx", "embedding");
  out << buf;
  for (std::size_t d : dims) {
    ModelConfig c;
    try {
      c = dimension_config(d, base);
    } catch (const Error& e) {
      throw UsageError(e.what());
    }
    const ParamCount n = count_parameters(c);
    std::snprintf(buf, sizeof buf, "%6zu %12zu %10s %12zu\n", d, n.total, format_count(n.total).c_str(), n.embedding);
    out << buf;
  }
  return 0;
}

inline void add_config_flags(CLI::App* app, ConfigArgs& c) {
  app->add_option("--config", c.path, "Config file (key=value lines)");
  app->add_option("--set", c.overrides, "Override one config key, key=value (repeatable)");
}

inline void add_train_flags(CLI::App* app, TrainArgs& t) {
  add_config_flags(app, t.config);
  app->add_option("--train", t.data.train, "Training corpus (relative paths use DIIN_DATA_DIR)");
  app->add_option("--format", t.data.format, "snli-jsonl | multinli-jsonl | quora-tsv");
  app->add_option("--dev-matched", t.data.dev_matched, "Dev set (matched genres)");
  app->add_option("--dev-mismatched", t.data.dev_mismatched, "Dev set (mismatched genres)");
  app->add_option("--snli", t.data.snli, "SNLI train file sampled into the training set");
  app->add_option("--vectors", t.data.vectors, "Pretrained word vectors, GloVe text format");
  app->add_option("--synthetic", t.data.synthetic, "Train on N template-generated pairs instead");
  app->add_option("--steps", t.steps, "Optimization steps")->capture_default_str();
  app->add_option("--train-eval-every", t.train_eval_every, "Measure train accuracy every N steps");
  app->add_option("--out", t.out, "Output directory")->capture_default_str();
}

/// Entry point. Exit codes: 0 success, 1 runtime failure, 2 usage error.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Densely interactive inference network: train, evaluate and inspect"};
  app.name("diin_cli");
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model");
  add_train_flags(c_train, train);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a trained run on a labeled corpus");
  c_eval->add_option("--run", eval.run, "Train output directory")->required();
  c_eval->add_option("--data", eval.data, "Corpus to score")->required();
  c_eval->add_option("--format", eval.format, "snli-jsonl | multinli-jsonl | quora-tsv");
  c_eval->add_option("--checkpoint", eval.checkpoint, "best | last");
  c_eval->add_option("--out", eval.out, "Where eval.json goes (default: the run directory)");

  AblateArgs ablate;
  auto* c_ablate = app.add_subcommand("ablate", "Train ablation variants and compare");
  add_train_flags(c_ablate, ablate.train);
  c_ablate->add_option("--rows", ablate.rows, "Comma-separated rows (default: all)")->delimiter(',');

  ExportArgs exp;
  auto* c_export = app.add_subcommand("export-heatmap", "Dump interaction or dense-block channels as CSV");
  add_config_flags(c_export, exp.config);
  c_export->add_option("--run", exp.run, "Train output directory (default: fresh model from config)");
  c_export->add_option("--premise", exp.premise, "Premise text")->required();
  c_export->add_option("--hypothesis", exp.hypothesis, "Hypothesis text")->required();
  c_export->add_option("--target", exp.target, "interaction | dense_block_1")->capture_default_str();
  c_export->add_option("--channels", exp.channels, "Comma-separated channel indices")->delimiter(',');
  c_export->add_option("--out", exp.out, "Output directory")->capture_default_str();

  CountArgs count;
  auto* c_count = app.add_subcommand("count-params", "Parameter counts across model widths");
  add_config_flags(c_count, count.config);
  c_count->add_option("--dims", count.dims, "Comma-separated widths (default: the standard ten)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << app.help();
    return 2;
  }

  try {
    if (c_train->parsed()) return cmd_train(train, out);
    if (c_eval->parsed()) return cmd_eval(eval, out);
    if (c_ablate->parsed()) return cmd_ablate(ablate, out);
    if (c_export->parsed()) return cmd_export(exp, out);
    if (c_count->parsed()) return cmd_count(count, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace diin::cli

#endif  // DIIN_CLI_HPP
