#pragma once

// Command-line front end. Each subcommand reads its section of an optional
// JSON config file (--config, else $ANACROWD_CONFIG); flags override config
// keys, and the resolved config is written next to the outputs.
//
// Exit codes: 0 success, 1 invalid input data, 2 usage or configuration error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "anacrowd/corpus_io.hpp"
#include "anacrowd/mpa.hpp"
#include "anacrowd/pipeline.hpp"
#include "anacrowd/resolver.hpp"
#include "anacrowd/scorer.hpp"
#include "anacrowd/simulator.hpp"

namespace anacrowd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kConfigEnv = "ANACROWD_CONFIG";

namespace fs = std::filesystem;

namespace detail {

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

// The named section of the config file, or an empty object.
inline Json config_section(const std::string& path, const std::string& section) {
  std::string file = path;
  if (file.empty()) {
    if (const char* env = std::getenv(kConfigEnv)) file = env;
  }
  if (file.empty()) return Json::object();
  Json j;
  try {
    j = Json::parse(read_file(file));
  } catch (const Json::parse_error& e) {
    throw ConfigError("config '" + file + "': " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config '" + file + "' must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "simulate" && k != "aggregate" && k != "train" && k != "loop") {
      throw ConfigError("config '" + file + "': unknown section '" + k + "'");
    }
  }
  if (!j.contains(section)) return Json::object();
  if (!j.at(section).is_object()) throw ConfigError("config section '" + section + "' must be an object");
  return j.at(section);
}

template <class T>
void override_key(Json& j, const char* key, const std::optional<T>& v) {
  if (v) j[key] = *v;
}

inline Corpus load_corpus(const std::string& path) { return parse_corpus(read_file(path)); }

inline JudgmentLog load_judgments(const std::string& path, const Corpus& corpus) {
  JudgmentLog log = parse_judgments(read_file(path));
  check_referential_integrity(corpus, log);
  return log;
}

inline void prepare_out(const std::string& out) {
  if (out.empty()) throw ConfigError("--out is required");
  fs::create_directories(out);
}

inline std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Corpus whose gold labels are replaced by `labels` (documents without labels
// keep none).
inline Corpus with_labels(const Corpus& corpus, const CorpusLabels& labels) {
  Corpus out;
  out.documents = corpus.documents;
  for (const auto& [doc, l] : labels) out.gold.emplace(doc, l);
  return out;
}

// A response is either a labels file or a corpus file carrying labels.
inline CorpusLabels load_response(const std::string& path, const Corpus& key) {
  const std::string text = read_file(path);
  try {
    const Json j = Json::parse(text);
    if (j.is_object() && j.value("format", "") == kLabelsFormat) {
      const LabelTable t = label_table_from_json(j);
      return to_corpus_labels(t, key, true);
    }
  } catch (const Json::parse_error&) {
    // Not a single JSON value: a JSONL corpus.
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("labels file: ") + e.what());
  }
  const Corpus resp = parse_corpus(text);
  CorpusLabels out;
  for (const Document& d : key.documents) {
    const LabelMap* l = resp.gold_for(d.id);
    if (!l) throw StructuralError("response has no labels for document '" + d.id + "'");
    out.emplace(d.id, *l);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crowd anaphora aggregation, resolve-and-aggregate and coreference scoring"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file with per-subcommand sections");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic corpus and crowd judgments");
  std::string sim_out;
  std::optional<std::uint64_t> sim_seed;
  std::optional<int> sim_docs, sim_jobs;
  bool replicate = false;
  sim->add_option("--out", sim_out, "Output directory")->required();
  sim->add_option("--seed", sim_seed, "Master seed");
  sim->add_option("--documents", sim_docs, "Number of documents");
  sim->add_flag("--replicate", replicate, "Also run resolve-and-aggregate and write a replication report");
  sim->add_option("--jobs", sim_jobs, "Worker threads for per-document stages");

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Aggregate judgments into silver labels");
  std::string agg_corpus, agg_judgments, agg_out, agg_method = "mpa";
  std::optional<int> agg_iters;
  agg->add_option("--corpus", agg_corpus, "Corpus file")->required();
  agg->add_option("--judgments", agg_judgments, "Judgment log")->required();
  agg->add_option("--out", agg_out, "Output directory")->required();
  agg->add_option("--method", agg_method, "mpa or mv")->check(CLI::IsMember({"mpa", "mv"}));
  agg->add_option("--max-iters", agg_iters, "EM iteration cap");

  // train
  auto* trn = app.add_subcommand("train", "Train the feature resolver");
  std::string trn_corpus, trn_labels, trn_out;
  std::optional<std::uint64_t> trn_seed;
  std::optional<int> trn_epochs;
  bool trn_fill = false;
  trn->add_option("--corpus", trn_corpus, "Corpus file (its gold labels are used without --labels)")->required();
  trn->add_option("--labels", trn_labels, "Labels file from aggregate");
  trn->add_flag("--fill-dn", trn_fill, "Treat unlabeled markables as discourse-new");
  trn->add_option("--out", trn_out, "Output directory")->required();
  trn->add_option("--seed", trn_seed, "Training seed");
  trn->add_option("--epochs", trn_epochs, "Training epochs");

  // resolve
  auto* res = app.add_subcommand("resolve", "Label a corpus with a trained model or the sieve");
  std::string res_model, res_corpus, res_out;
  bool res_sieve = false;
  int res_jobs = 1;
  res->add_option("--model", res_model, "Model file");
  res->add_flag("--sieve", res_sieve, "Use the deterministic sieve instead of a model");
  res->add_option("--corpus", res_corpus, "Corpus file")->required();
  res->add_option("--out", res_out, "Output directory")->required();
  res->add_option("--jobs", res_jobs, "Worker threads")->check(CLI::PositiveNumber);

  // loop
  auto* lp = app.add_subcommand("loop", "Run resolve-and-aggregate");
  std::string lp_corpus, lp_judgments, lp_dev, lp_out;
  std::optional<int> lp_iters, lp_jobs;
  std::optional<std::uint64_t> lp_seed;
  bool lp_no_plateau = false, lp_no_resolver = false;
  lp->add_option("--corpus", lp_corpus, "Corpus file")->required();
  lp->add_option("--judgments", lp_judgments, "Player judgment log")->required();
  lp->add_option("--dev", lp_dev, "Dev corpus with gold labels")->required();
  lp->add_option("--out", lp_out, "Run directory")->required();
  lp->add_option("--max-iters", lp_iters, "Maximum iterations");
  lp->add_option("--seed", lp_seed, "Loop seed");
  lp->add_option("--jobs", lp_jobs, "Worker threads");
  lp->add_flag("--no-plateau", lp_no_plateau, "Run all iterations");
  lp->add_flag("--no-resolver", lp_no_resolver, "Aggregate the players only");

  // score
  auto* sc = app.add_subcommand("score", "Score a response against gold");
  std::string sc_key, sc_resp, sc_mode = "both", sc_out;
  bool sc_span_only = false;
  sc->add_option("--key", sc_key, "Corpus file with gold labels")->required();
  sc->add_option("--response", sc_resp, "Corpus file with labels, or a labels file")->required();
  sc->add_option("--mode", sc_mode, "include-singletons, exclude-singletons or both")
      ->check(CLI::IsMember({"include-singletons", "exclude-singletons", "both"}));
  sc->add_flag("--nr-span-only", sc_span_only, "Match non-referring markables by span only");
  sc->add_option("--out", sc_out, "Directory for score.json");

  // speedup
  auto* sp = app.add_subcommand("speedup", "Extra judgments and years needed to complete the corpus");
  double sp_avg = 0, sp_target = 0, sp_markables = 0, sp_rate = 0;
  sp->add_option("--avg", sp_avg, "Current average judgments per markable")->required();
  sp->add_option("--target", sp_target, "Target average judgments per markable")->required();
  sp->add_option("--markables", sp_markables, "Markables to complete")->required();
  sp->add_option("--rate", sp_rate, "Judgments collected per year")->required();

  // stats
  auto* st = app.add_subcommand("stats", "Corpus summary per genre");
  std::string st_corpus;
  st->add_option("--corpus", st_corpus, "Corpus file")->required();

  std::vector<const char*> argv;
  argv.push_back("anacrowd");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    // A named config must load and validate even for subcommands that ignore it.
    detail::config_section(config_path, "");
    if (sim->parsed()) {
      Json j = detail::config_section(config_path, "simulate");
      detail::override_key(j, "seed", sim_seed);
      detail::override_key(j, "documents", sim_docs);
      const SimConfig cfg = sim_config_from_json(j);
      Json lj = detail::config_section(config_path, "loop");
      detail::override_key(lj, "jobs", sim_jobs);
      const LoopConfig loop = loop_config_from_json(lj);

      detail::prepare_out(sim_out);
      Json resolved = {{"simulate", to_json(cfg)}};
      if (replicate) resolved["loop"] = to_json(loop);
      write_file(detail::path_in(sim_out, "config.json"), detail::dump(resolved));
      const SimResult r = simulate(cfg);
      write_file(detail::path_in(sim_out, "corpus.jsonl"), serialize_corpus(r.corpus));
      write_file(detail::path_in(sim_out, "dev.jsonl"), serialize_corpus(r.dev));
      write_file(detail::path_in(sim_out, "judgments.jsonl"), serialize_judgments(r.log));
      Json players = Json::array();
      for (const Player& p : r.players) {
        players.push_back({{"id", p.id}, {"sensitivity", p.sensitivity}, {"specificity", p.specificity}});
      }
      write_file(detail::path_in(sim_out, "players.json"), detail::dump(players));
      write_file(detail::path_in(sim_out, "completeness.json"), detail::dump(r.complete));
      out << "documents " << r.corpus.documents.size() << ", markables " << r.corpus.markable_count()
          << ", judgments " << r.log.size() << "\n";
      if (replicate) {
        const ReplicationReport rep = run_replication(cfg, loop);
        write_file(detail::path_in(sim_out, "replication-report.json"),
                   detail::dump(replication_report_to_json(rep)));
        const std::string summary = format_replication_summary(rep);
        write_file(detail::path_in(sim_out, "summary.txt"), summary);
        out << summary;
      }
      return kExitOk;
    }

    if (agg->parsed()) {
      Json j = detail::config_section(config_path, "aggregate");
      detail::override_key(j, "max_iters", agg_iters);
      MpaConfig mpa;
      ObservationOptions obs;
      {
        ConfigReader r(j, "aggregate");
        read_json(r, mpa, obs);
        r.finish();
        mpa.check();
      }
      const Corpus corpus = detail::load_corpus(agg_corpus);
      const JudgmentLog log = detail::load_judgments(agg_judgments, corpus);
      const ObservationSet data = build_observations(log, obs, markable_keys(corpus));
      detail::prepare_out(agg_out);
      write_file(detail::path_in(agg_out, "config.json"),
                 detail::dump({{"aggregate", to_json(mpa, obs)}, {"method", agg_method}}));
      Decoded dec;
      if (agg_method == "mv") {
        dec = majority_vote(data);
      } else {
        const AggregationResult fit = em_fit(data, mpa);
        dec = decode(fit);
        write_file(detail::path_in(agg_out, "aggregation-report.json"),
                   detail::dump(aggregation_report_to_json(fit, dec)));
        out << "EM iterations " << fit.iterations << (fit.converged ? " (converged)" : " (cap reached)")
            << "\n";
      }
      write_file(detail::path_in(agg_out, "labels.json"), detail::dump(label_table_to_json(dec.labels)));
      out << "markables " << data.items.size() << ", labeled " << dec.labels.size() << ", unlabeled "
          << dec.unlabeled.size() << "\n";
      return kExitOk;
    }

    if (trn->parsed()) {
      Json j = detail::config_section(config_path, "train");
      detail::override_key(j, "seed", trn_seed);
      detail::override_key(j, "epochs", trn_epochs);
      ResolverConfig rc;
      {
        ConfigReader r(j, "train");
        read_json(r, rc);
        r.finish();
        rc.check();
      }
      const Corpus corpus = detail::load_corpus(trn_corpus);
      CorpusLabels labels;
      std::string source = "gold";
      if (!trn_labels.empty()) {
        labels = to_corpus_labels(label_table_from_json(Json::parse(read_file(trn_labels))), corpus,
                                  trn_fill);
        source = "labels";
      } else {
        labels = corpus.gold;
      }
      detail::prepare_out(trn_out);
      write_file(detail::path_in(trn_out, "config.json"), detail::dump({{"train", to_json(rc)}}));
      ResolverModel m = train(corpus, labels, rc);
      m.source = source;
      write_file(detail::path_in(trn_out, "model.json"), serialize_model(m));
      out << "trained on " << labels.size() << " documents, threshold " << m.threshold
          << ", pronoun threshold " << m.pronoun_threshold << "\n";
      return kExitOk;
    }

    if (res->parsed()) {
      if (res_sieve == !res_model.empty()) throw ConfigError("resolve needs exactly one of --model and --sieve");
      const Corpus corpus = detail::load_corpus(res_corpus);
      CorpusLabels labels;
      if (res_sieve) {
        for (const Document& d : corpus.documents) labels.emplace(d.id, sieve_resolve(d));
      } else {
        labels = predict_corpus(parse_model(read_file(res_model)), corpus, WordLists::defaults(), res_jobs);
      }
      detail::prepare_out(res_out);
      write_file(detail::path_in(res_out, "response.jsonl"), serialize_corpus(detail::with_labels(corpus, labels)));
      out << "labeled " << corpus.markable_count() << " markables in " << corpus.documents.size()
          << " documents\n";
      return kExitOk;
    }

    if (lp->parsed()) {
      Json j = detail::config_section(config_path, "loop");
      detail::override_key(j, "max_iterations", lp_iters);
      detail::override_key(j, "seed", lp_seed);
      detail::override_key(j, "jobs", lp_jobs);
      if (lp_no_plateau) j["plateau"] = false;
      if (lp_no_resolver) j["resolver_enabled"] = false;
      const LoopConfig cfg = loop_config_from_json(j);
      const Corpus corpus = detail::load_corpus(lp_corpus);
      const JudgmentLog log = detail::load_judgments(lp_judgments, corpus);
      const Corpus dev = detail::load_corpus(lp_dev);
      const FeatureResolver resolver(cfg.resolver);
      const auto r = resolve_and_aggregate(corpus, log, dev, cfg, resolver);
      detail::prepare_out(lp_out);
      write_run_directory(lp_out, Json{{"loop", to_json(cfg)}}, r, resolver);
      std::vector<std::pair<std::string, ScoreReport>> rows;
      if (cfg.resolver_enabled) {
        rows.push_back({"train-complete", r.train_complete_dev.excluded});
        rows.push_back({"train-full-original", r.full_original_dev.excluded});
      }
      for (const auto& it : r.iterations) rows.push_back({"iteration " + std::to_string(it.iteration), it.dev.excluded});
      if (!rows.empty()) out << "dev scores, singletons excluded\n" << format_score_table(rows);
      for (const auto& it : r.iterations) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "iteration %d: flip rate %.4f (complete %.4f, incomplete %.4f)\n",
                      it.iteration, it.flips.overall, it.flips.complete, it.flips.incomplete);
        out << buf;
      }
      out << "best iteration " << r.best_iteration << ", final labels " << r.final_labels.size() << "\n";
      return kExitOk;
    }

    if (sc->parsed()) {
      const Corpus key = detail::load_corpus(sc_key);
      for (const Document& d : key.documents) {
        if (!key.gold_for(d.id)) throw ValidationError("key document '" + d.id + "' has no gold labels");
      }
      const CorpusLabels resp = detail::load_response(sc_resp, key);
      std::vector<std::pair<std::string, ScoreReport>> rows;
      Json reports = Json::array();
      for (bool inc : {true, false}) {
        if (sc_mode == "include-singletons" && !inc) continue;
        if (sc_mode == "exclude-singletons" && inc) continue;
        CorpusScorer s({inc, sc_span_only});
        for (const Document& d : key.documents) s.add(d, *key.gold_for(d.id), resp.at(d.id));
        const ScoreReport rep = s.report();
        rows.push_back({inc ? "singletons included" : "singletons excluded", rep});
        reports.push_back(score_report_to_json(rep));
      }
      out << format_score_table(rows);
      if (!sc_out.empty()) {
        fs::create_directories(sc_out);
        write_file(detail::path_in(sc_out, "score.json"), detail::dump(reports));
      }
      return kExitOk;
    }

    if (sp->parsed()) {
      out << format_speedup(speedup_estimate({sp_avg, sp_target, sp_markables, sp_rate})) << "\n";
      return kExitOk;
    }

    if (st->parsed()) {
      out << format_stats_table(corpus_stats(detail::load_corpus(st_corpus)));
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const Json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

inline int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace anacrowd::cli
