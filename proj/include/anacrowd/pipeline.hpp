#pragma once

// Resolve-and-aggregate: aggregate the players on complete documents, train a
// resolver, add its predictions as one more annotator, re-aggregate, retrain,
// and keep the iteration whose resolver scores best on the dev set.

#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "anacrowd/config.hpp"
#include "anacrowd/core.hpp"
#include "anacrowd/corpus_io.hpp"
#include "anacrowd/mpa.hpp"
#include "anacrowd/resolver.hpp"
#include "anacrowd/rng.hpp"
#include "anacrowd/scorer.hpp"

namespace anacrowd {

struct LoopConfig {
  int max_iterations = 4;
  // Stop after the first iteration whose dev CoNLL (singletons excluded) is
  // below the running best.
  bool plateau = true;
  bool resolver_enabled = true;
  CompletionPolicy policy;
  ResolverConfig resolver;
  MpaConfig mpa;
  ObservationOptions observation;
  std::uint64_t seed = 1;
  int jobs = 1;

  void check() const {
    if (max_iterations < 1) throw ConfigError("loop.max_iterations must be >= 1");
    if (jobs < 1) throw ConfigError("loop.jobs must be >= 1");
    policy.check();
    resolver.check();
    mpa.check();
  }
};

// ---------------------------------------------------------------------------
// Config JSON

inline Json to_json(const CompletionPolicy& p) {
  return {{"min_annotations", p.min_annotations},
          {"min_validations_per_interpretation", p.min_validations_per_interpretation},
          {"validate_undisputed", p.validate_undisputed}};
}

inline void read_json(ConfigReader& r, CompletionPolicy& p) {
  r.get("min_annotations", p.min_annotations)
      .get("min_validations_per_interpretation", p.min_validations_per_interpretation)
      .get("validate_undisputed", p.validate_undisputed);
}

// Inside a loop config the resolver seed is derived from the loop seed, so
// `with_seed` is false there.
inline Json to_json(const ResolverConfig& c, bool with_seed = true) {
  Json j = {{"l2", c.l2}, {"epochs", c.epochs}, {"lr", c.lr}, {"window", c.window}};
  if (with_seed) j["seed"] = c.seed;
  return j;
}

inline void read_json(ConfigReader& r, ResolverConfig& c, bool with_seed = true) {
  r.get("l2", c.l2).get("epochs", c.epochs).get("lr", c.lr).get("window", c.window);
  if (with_seed) r.get("seed", c.seed);
}

inline Json to_json(const MpaConfig& c, const ObservationOptions& o) {
  return {{"max_iters", c.max_iters},
          {"tol", c.tol},
          {"smoothing", c.smoothing},
          {"seed", c.seed},
          {"restarts", c.restarts},
          {"annotation_weight", o.annotation_weight},
          {"validation_weight", o.validation_weight}};
}

inline void read_json(ConfigReader& r, MpaConfig& c, ObservationOptions& o) {
  r.get("max_iters", c.max_iters)
      .get("tol", c.tol)
      .get("smoothing", c.smoothing)
      .get("seed", c.seed)
      .get("restarts", c.restarts)
      .get("annotation_weight", o.annotation_weight)
      .get("validation_weight", o.validation_weight);
}

inline Json to_json(const LoopConfig& c) {
  return {{"max_iterations", c.max_iterations},
          {"plateau", c.plateau},
          {"resolver_enabled", c.resolver_enabled},
          {"policy", to_json(c.policy)},
          {"resolver", to_json(c.resolver, false)},
          {"mpa", to_json(c.mpa, c.observation)},
          {"seed", c.seed},
          {"jobs", c.jobs}};
}

inline void read_json(ConfigReader& r, LoopConfig& c) {
  r.get("max_iterations", c.max_iterations)
      .get("plateau", c.plateau)
      .get("resolver_enabled", c.resolver_enabled)
      .nested("policy", [&](ConfigReader& s) { read_json(s, c.policy); })
      .nested("resolver", [&](ConfigReader& s) { read_json(s, c.resolver, false); })
      .nested("mpa", [&](ConfigReader& s) { read_json(s, c.mpa, c.observation); })
      .get("seed", c.seed)
      .get("jobs", c.jobs);
}

inline LoopConfig loop_config_from_json(const Json& j) {
  LoopConfig c;
  ConfigReader r(j, "loop");
  read_json(r, c);
  r.finish();
  c.check();
  return c;
}

// ---------------------------------------------------------------------------
// Helpers

inline std::vector<MarkableKey> markable_keys(const Corpus& corpus) {
  std::vector<MarkableKey> keys;
  for (const Document& d : corpus.documents) {
    for (const Markable& m : d.markables) keys.push_back({d.id, m.id});
  }
  return keys;
}

inline std::map<DocId, JudgmentLog> judgments_by_doc(const JudgmentLog& log) {
  std::map<DocId, JudgmentLog> out;
  for (const Judgment& j : log) out[j.doc].push_back(j);
  return out;
}

// Documents whose labels cover every markable; with `fill_dn`, missing labels
// become discourse-new and every document is kept.
inline CorpusLabels to_corpus_labels(const LabelTable& table, const Corpus& corpus,
                                     bool fill_dn = false) {
  CorpusLabels out;
  for (const Document& d : corpus.documents) {
    LabelMap l = labels_for_document(table, d.id);
    bool total = true;
    for (const Markable& m : d.markables) {
      if (l.count(m.id)) continue;
      total = false;
      if (fill_dn) l.emplace(m.id, make_dn());
    }
    if (total || fill_dn) out.emplace(d.id, std::move(l));
  }
  return out;
}

struct DevScores {
  ScoreReport included;
  ScoreReport excluded;
};

inline DevScores score_corpus(const Corpus& key, const CorpusLabels& response) {
  CorpusScorer inc({true}), exc({false});
  for (const Document& d : key.documents) {
    const LabelMap* gold = key.gold_for(d.id);
    if (!gold) throw ConfigError("document '" + d.id + "' has no gold labels");
    const LabelMap& sys = response.at(d.id);
    inc.add(d, *gold, sys);
    exc.add(d, *gold, sys);
  }
  return {inc.report(), exc.report()};
}

inline Json dev_scores_to_json(const DevScores& s) {
  return {{"singletons_included", score_report_to_json(s.included)},
          {"singletons_excluded", score_report_to_json(s.excluded)}};
}

// ---------------------------------------------------------------------------
// Train Complete

struct TrainComplete {
  LabelTable labels;
  std::set<DocId> documents;
};

inline std::set<DocId> complete_documents(const Corpus& corpus, const JudgmentLog& log,
                                          const CompletionPolicy& policy) {
  policy.check();
  const auto by_doc = judgments_by_doc(log);
  std::set<DocId> out;
  static const JudgmentLog kEmpty;
  for (const Document& d : corpus.documents) {
    auto it = by_doc.find(d.id);
    if (is_complete(d, it == by_doc.end() ? kEmpty : it->second, policy)) out.insert(d.id);
  }
  return out;
}

inline TrainComplete build_train_complete(const Corpus& corpus, const JudgmentLog& log,
                                          const CompletionPolicy& policy,
                                          const MpaConfig& mpa = {},
                                          const ObservationOptions& obs = {}) {
  TrainComplete tc;
  tc.documents = complete_documents(corpus, log, policy);
  if (tc.documents.empty()) {
    throw ConfigError("no complete documents: cannot build an initial training set");
  }
  JudgmentLog sub;
  for (const Judgment& j : log) {
    if (tc.documents.count(j.doc)) sub.push_back(j);
  }
  std::vector<MarkableKey> keys;
  for (const MarkableKey& k : markable_keys(corpus)) {
    if (tc.documents.count(k.doc)) keys.push_back(k);
  }
  tc.labels = decode(em_fit(build_observations(sub, obs, keys), mpa)).labels;
  return tc;
}

// Aggregation of `log` over every markable of `corpus`.
inline Decoded aggregate(const Corpus& corpus, const JudgmentLog& log, const MpaConfig& mpa,
                         const ObservationOptions& obs) {
  return decode(em_fit(build_observations(log, obs, markable_keys(corpus)), mpa));
}

// ---------------------------------------------------------------------------
// The loop

struct IterationReport {
  int iteration = 0;
  DevScores dev;
  FlipStats flips;               // against the player-only labels
  std::size_t system_only = 0;   // markables judged by the system alone
  std::size_t unlabeled = 0;
};

template <class Model>
struct LoopResult {
  LabelTable final_labels;
  int best_iteration = 0;  // 0 when the resolver did not run
  std::vector<IterationReport> iterations;
  std::vector<LabelTable> iteration_labels;  // aligned with iterations
  std::vector<Model> iteration_models;       // aligned with iterations
  Model best_model{};

  LabelTable baseline_labels;  // player-only aggregation
  std::vector<MarkableKey> baseline_unlabeled;
  TrainComplete train_complete;
  Model train_complete_model{};
  DevScores train_complete_dev;  // resolver trained on Train Complete only
  DevScores full_original_dev;   // resolver trained on player-only labels
};

inline Json iteration_report_to_json(const IterationReport& r) {
  return {{"iteration", r.iteration},
          {"dev", dev_scores_to_json(r.dev)},
          {"flip_rate",
           {{"overall", r.flips.overall},
            {"complete", r.flips.complete},
            {"incomplete", r.flips.incomplete},
            {"flipped", r.flips.flipped},
            {"total", r.flips.total}}},
          {"system_only", r.system_only},
          {"unlabeled", r.unlabeled}};
}

template <class Model>
Json loop_report_to_json(const LoopResult<Model>& r) {
  Json iters = Json::array();
  for (const auto& it : r.iterations) iters.push_back(iteration_report_to_json(it));
  return {{"iterations", iters},
          {"best_iteration", r.best_iteration},
          {"complete_documents", r.train_complete.documents.size()},
          {"baseline_unlabeled", r.baseline_unlabeled.size()},
          {"train_complete_dev", dev_scores_to_json(r.train_complete_dev)},
          {"train_full_original_dev", dev_scores_to_json(r.full_original_dev)}};
}

// `Resolver` provides Model, train(corpus, labels, iteration, source, seed),
// predict(model, corpus, jobs) and serialize(model). Training seeds and the
// MPA restart seed descend from config.seed.
template <class Resolver = FeatureResolver>
LoopResult<typename Resolver::Model> resolve_and_aggregate(const Corpus& corpus,
                                                           const JudgmentLog& players,
                                                           const Corpus& dev,
                                                           const LoopConfig& config,
                                                           const Resolver& resolver = Resolver()) {
  config.check();
  for (const Document& d : dev.documents) {
    if (!dev.gold_for(d.id)) throw ConfigError("dev document '" + d.id + "' has no gold labels");
  }
  using Model = typename Resolver::Model;
  LoopResult<Model> out;

  MpaConfig mpa = config.mpa;
  mpa.seed = Rng::substream(config.seed, "mpa").next();
  const auto train_seed = [&](const std::string& source, int i) {
    return Rng::substream(config.seed, "resolver/" + source + "/" + std::to_string(i)).next();
  };

  Decoded base = aggregate(corpus, players, mpa, config.observation);
  out.baseline_labels = base.labels;
  out.baseline_unlabeled = base.unlabeled;
  if (!config.resolver_enabled) {
    out.final_labels = out.baseline_labels;
    return out;
  }

  const auto eval = [&](const Model& m) { return score_corpus(dev, resolver.predict(m, dev, config.jobs)); };

  out.train_complete = build_train_complete(corpus, players, config.policy, mpa, config.observation);
  Model model = resolver.train(corpus, to_corpus_labels(out.train_complete.labels, corpus), 0,
                               "train-complete", train_seed("train-complete", 0));
  out.train_complete_model = model;
  out.train_complete_dev = eval(model);
  out.full_original_dev =
      eval(resolver.train(corpus, to_corpus_labels(out.baseline_labels, corpus, true), 0,
                          "train-full-original", train_seed("train-full-original", 0)));

  std::set<MarkableKey> judged;
  for (const auto& [k, l] : base.labels) judged.insert(k);

  double best = -1.0;
  for (int i = 1; i <= config.max_iterations; ++i) {
    // The previous iteration's system judgments are replaced, not kept.
    JudgmentLog log = players;
    const JudgmentLog sys = as_judgments(resolver.predict(model, corpus, config.jobs), system_player(i));
    log.insert(log.end(), sys.begin(), sys.end());
    Decoded dec = aggregate(corpus, log, mpa, config.observation);

    model = resolver.train(corpus, to_corpus_labels(dec.labels, corpus), i, "iteration",
                           train_seed("iteration", i));
    IterationReport rep;
    rep.iteration = i;
    rep.dev = eval(model);
    LabelTable restricted;
    for (const auto& [k, l] : dec.labels) {
      if (judged.count(k)) restricted.emplace(k, l);
    }
    rep.flips = flip_rate(restricted, out.baseline_labels, &out.train_complete.documents);
    rep.system_only = dec.labels.size() - restricted.size();
    rep.unlabeled = dec.unlabeled.size();

    const double f = rep.dev.excluded.conll;
    out.iterations.push_back(rep);
    out.iteration_labels.push_back(std::move(dec.labels));
    out.iteration_models.push_back(model);
    if (f > best) {
      best = f;
      out.best_iteration = i;
    } else if (config.plateau && f < best) {
      break;
    }
  }
  out.final_labels = out.iteration_labels[out.best_iteration - 1];
  out.best_model = out.iteration_models[out.best_iteration - 1];
  return out;
}

// Run directory: config.json, iter-N/{labels,model}.json, report.json,
// final/labels.json. Iteration 0 holds the Train Complete labels and model.
template <class Model, class Resolver>
void write_run_directory(const std::filesystem::path& dir, const Json& resolved_config,
                         const LoopResult<Model>& r, const Resolver& resolver) {
  namespace fs = std::filesystem;
  const auto dump = [](const Json& j) { return j.dump(2) + "\n"; };
  fs::create_directories(dir);
  write_file((dir / "config.json").string(), dump(resolved_config));
  if (!r.iterations.empty() || r.best_iteration > 0 || !r.train_complete.documents.empty()) {
    fs::create_directories(dir / "iter-0");
    write_file((dir / "iter-0" / "labels.json").string(), dump(label_table_to_json(r.train_complete.labels)));
    write_file((dir / "iter-0" / "model.json").string(), resolver.serialize(r.train_complete_model));
  }
  for (std::size_t i = 0; i < r.iterations.size(); ++i) {
    const fs::path it = dir / ("iter-" + std::to_string(r.iterations[i].iteration));
    fs::create_directories(it);
    write_file((it / "labels.json").string(), dump(label_table_to_json(r.iteration_labels[i])));
    write_file((it / "model.json").string(), resolver.serialize(r.iteration_models[i]));
  }
  write_file((dir / "report.json").string(), dump(loop_report_to_json(r)));
  fs::create_directories(dir / "final");
  write_file((dir / "final" / "labels.json").string(), dump(label_table_to_json(r.final_labels)));
}

// ---------------------------------------------------------------------------
// Speed-up estimate and genre subsets

struct SpeedupInput {
  double avg_judgments = 0.0;
  double target_judgments = 0.0;
  double markables = 0.0;
  double yearly_rate = 0.0;
};

struct SpeedupReport {
  long long extra_judgments = 0;  // rounded to whole judgments
  double years = 0.0;
};

inline SpeedupReport speedup_estimate(const SpeedupInput& in) {
  if (!(in.avg_judgments > 0.0 && in.target_judgments > 0.0 && in.markables > 0.0 &&
        in.yearly_rate > 0.0)) {
    throw ConfigError("speedup inputs must all be positive");
  }
  if (in.target_judgments <= in.avg_judgments) return {};
  SpeedupReport r;
  r.extra_judgments = std::llround((in.target_judgments - in.avg_judgments) * in.markables);
  r.years = static_cast<double>(r.extra_judgments) / in.yearly_rate;
  return r;
}

// "extra=3.08M, years=9.21"
inline std::string format_speedup(const SpeedupReport& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "extra=%.2fM (%lld judgments), years=%.2f",
                static_cast<double>(r.extra_judgments) / 1e6, r.extra_judgments, r.years);
  return buf;
}

inline Corpus genre_subset(const Corpus& corpus, Genre genre,
                           std::vector<std::string>* warnings = nullptr) {
  Corpus out;
  for (const Document& d : corpus.documents) {
    if (d.genre != genre) continue;
    out.documents.push_back(d);
    if (const LabelMap* g = corpus.gold_for(d.id)) out.gold.emplace(d.id, *g);
  }
  if (out.documents.empty() && warnings) {
    warnings->push_back("genre subset '" + std::string(to_string(genre)) + "' is empty");
  }
  return out;
}

}  // namespace anacrowd
