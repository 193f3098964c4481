// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every oracle here is computed independently of the code
// under test (brute force, hand-derived constants, or closed forms).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <sstream>

#include "anacrowd/cli.hpp"

using namespace anacrowd;
namespace fs = std::filesystem;

namespace {

// Regression constants, computed once with the simulator at seed 42 and
// frozen. A change in either is a behaviour change, not noise.
constexpr int kFrozenMpaCorrect = 500;  // dense 500 x 20 benchmark, MPA
constexpr int kFrozenMvCorrect = 500;   // same benchmark, majority vote
constexpr double kFrozenIncompleteGain = 0.040260;  // label accuracy with - without resolver

struct Outcome {
  bool pass = true;
  std::string detail;
};

void require(Outcome& o, bool ok, const std::string& what) {
  if (!ok) {
    o.pass = false;
    o.detail += (o.detail.empty() ? "" : "; ") + ("failed: " + what);
  }
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// --- independent oracles ----------------------------------------------------

double overlap(const std::vector<MarkableId>& a, const std::vector<MarkableId>& b) {
  double n = 0;
  for (MarkableId x : a) n += std::count(b.begin(), b.end(), x);
  return n;
}

// Entity similarity 2|K n R| / (|K| + |R|), maximized over every one-to-one
// alignment by enumerating permutations of the larger side.
double brute_ceaf(const Clusters& key, const Clusters& resp) {
  const bool flip = key.size() > resp.size();
  const Clusters& s = flip ? resp : key;
  const Clusters& l = flip ? key : resp;
  std::vector<std::size_t> perm(l.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0;
  do {
    double t = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      t += 2.0 * overlap(s[i], l[perm[i]]) / static_cast<double>(s[i].size() + l[perm[i]].size());
    }
    best = std::max(best, t);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Clusters random_partition(Rng& rng, int n, int max_clusters) {
  const auto k = 1 + rng.index(static_cast<std::size_t>(max_clusters));
  Clusters cs(k);
  for (int m = 1; m <= n; ++m) cs[rng.index(k)].push_back(m);
  cs.erase(std::remove_if(cs.begin(), cs.end(), [](const auto& c) { return c.empty(); }), cs.end());
  return cs;
}

// Fixed-point posterior shared by n items, each with one candidate endorsed
// by all a annotators, under add-one smoothing.
double unanimous_posterior(int n, int a, int iters) {
  double q = 1.0;
  for (int it = 0; it < iters; ++it) {
    const double alpha = (n * q + 1.0) / (n * q + 2.0);
    const double beta = 1.0 / (n * (1.0 - q) + 2.0);
    const double pi = (n * q + 1.0) / (n + 2.0);
    q = 1.0 / (1.0 + (1.0 - pi) / pi * std::pow((1.0 - beta) / alpha, a));
  }
  return q;
}

JudgmentLog random_log(Rng& rng) {
  JudgmentLog log;
  const int items = 10 + static_cast<int>(rng.index(50));
  const int annotators = 4 + static_cast<int>(rng.index(10));
  for (int m = 2; m <= items + 1; ++m) {
    const std::vector<Interpretation> opts = {make_dn(), make_do({m - 1}), make_ex(), make_pr(m - 1)};
    const int per = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(annotators)));
    for (int k = 0; k < per; ++k) {
      const std::string p = "p" + std::to_string(rng.index(static_cast<std::size_t>(annotators)));
      const Interpretation& i = opts[rng.weighted({0.5, 0.3, 0.1, 0.1})];
      if (rng.bernoulli(0.8)) {
        log.push_back({p, "d", m, i, JudgmentKind::Annotation, 1});
      } else {
        log.push_back({p, "d", m, i, JudgmentKind::Validation, rng.bernoulli(0.5) ? 1 : -1});
      }
    }
  }
  return log;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path().string());
  }
  return out;
}

// --- criteria -----------------------------------------------------------------

Outcome scorer_oracle() {
  Outcome o;
  Rng rng(2024);
  double worst = 0;
  for (int t = 0; t < 200; ++t) {
    const int n = 1 + static_cast<int>(rng.index(10));
    const Clusters k = random_partition(rng, n, 8), r = random_partition(rng, n, 8);
    worst = std::max(worst, std::abs(ceaf_e_similarity(k, r) - brute_ceaf(k, r)));
  }
  require(o, worst <= 1e-9, "CEAF-e equals brute force");
  const Clusters key = {{1, 2, 3}, {4, 5}}, resp = {{1, 2}, {3, 4, 5}};
  // Hand-derived: MUC P = R = 2/3; B-cubed P = R = 11/15.
  const Prf m = muc(key, resp), b = b_cubed(key, resp);
  require(o, std::abs(m.f1 - 200.0 / 3.0) < 1e-9 && std::abs(m.precision - m.recall) < 1e-12, "MUC 66.67");
  require(o, std::abs(b.f1 - 1100.0 / 15.0) < 1e-9, "B-cubed 73.33");
  o.detail = fmt("max |CEAF-e - brute| %.1e over 200 instances, MUC %.2f, B3 %.2f", worst, m.f1, b.f1) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome metric_identities() {
  Outcome o;
  const Corpus c = gen_corpus(SimConfig{}, 3, 6, "ident");
  for (const Document& d : c.documents) {
    const LabelMap& g = *c.gold_for(d.id);
    for (bool inc : {true, false}) {
      const ScoreReport r = score(g, g, d, {inc, false});
      for (double f : {r.muc.f1, r.b3.f1, r.ceafe.f1, r.conll}) require(o, std::abs(f - 100.0) < 1e-9, "gold vs gold is 100");
    }
  }
  Rng rng(99);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + static_cast<int>(rng.index(12));
    const Clusters k = random_partition(rng, n, 6), r = random_partition(rng, n, 6);
    using Metric = Prf (*)(const Clusters&, const Clusters&);
    for (Metric metric : {Metric{&muc}, Metric{&b_cubed}, Metric{&ceaf_e}}) {
      const Prf a = metric(k, r), b = metric(r, k);
      require(o, std::abs(a.precision - b.recall) < 1e-9 && std::abs(a.recall - b.precision) < 1e-9,
              "P and R swap with the arguments");
      ++checked;
    }
  }
  o.detail = fmt("%.0f documents x 2 singleton modes at 100.0; %.0f swapped pairs", c.documents.size(), checked) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome em_soundness() {
  Outcome o;
  double worst_drop = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    Rng rng(seed);
    MpaConfig cfg;
    cfg.max_iters = 100;
    cfg.tol = 0.0;
    const auto r = em_fit(build_observations(random_log(rng)), cfg);
    for (std::size_t i = 1; i < r.trace.size(); ++i) worst_drop = std::max(worst_drop, r.trace[i - 1] - r.trace[i]);
  }
  require(o, worst_drop <= 1e-8, "log-likelihood non-decreasing");

  JudgmentLog unanimous;
  for (int m = 1; m <= 20; ++m) {
    for (int a = 0; a < 8; ++a) unanimous.push_back({"p" + std::to_string(a), "d", m, make_dn(), JudgmentKind::Annotation, 1});
  }
  const auto u = em_fit(build_observations(unanimous));
  double lowest = 1.0;
  for (const auto& row : u.posteriors) lowest = std::min(lowest, row[0]);
  require(o, lowest >= 0.99, "unanimous posterior >= 0.99");
  require(o, std::abs(lowest - unanimous_posterior(20, 8, u.iterations)) < 1e-9, "closed form");

  JudgmentLog tie;
  for (int a = 0; a < 4; ++a) tie.push_back({"p" + std::to_string(a), "d", 3, make_do({1}), JudgmentKind::Annotation, 1});
  for (int a = 4; a < 8; ++a) tie.push_back({"p" + std::to_string(a), "d", 3, make_do({2}), JudgmentKind::Annotation, 1});
  const auto t = em_fit(build_observations(tie));
  const double gap = std::abs(t.posteriors[0][0] - t.posteriors[0][1]);
  require(o, gap <= 1e-9, "symmetric tie");
  o.detail = fmt("50 sets, worst drop %.1e; unanimous posterior %.6f; tie gap %.1e", worst_drop, lowest, gap) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome beats_majority_vote() {
  Outcome o;
  const AggregationBenchmark b = aggregation_benchmark(SimConfig{}, 500, 20, 20, 42);
  const int mpa = static_cast<int>(std::lround(b.mpa_accuracy * 500));
  const int mv = static_cast<int>(std::lround(b.majority_accuracy * 500));
  require(o, b.markables == 500, "500 markables");
  require(o, mpa >= mv, "MPA >= majority vote");
  require(o, mpa == kFrozenMpaCorrect && mv == kFrozenMvCorrect, "frozen counts");
  o.detail = fmt("MPA %.0f/500, majority %.0f/500, gap %+.4f (frozen %+.4f)", mpa, mv,
                 b.mpa_accuracy - b.majority_accuracy, (kFrozenMpaCorrect - kFrozenMvCorrect) / 500.0) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome replication() {
  Outcome o;
  const SimConfig cfg;
  const ReplicationReport r = run_replication(cfg, LoopConfig{});
  const auto& loop = r.loop;
  require(o, !loop.iterations.empty() && loop.iterations.size() <= 4, "at most 4 iterations");
  require(o, std::abs(static_cast<double>(r.complete_documents) / r.documents - 0.72) < 0.01, "72% complete");
  double best = 0;
  for (const auto& it : loop.iterations) {
    if (it.iteration == loop.best_iteration) best = it.dev.excluded.conll;
  }
  const double tc = loop.train_complete_dev.excluded.conll;
  const double tf_orig = loop.full_original_dev.excluded.conll;
  require(o, best >= tc, "(a) best iteration >= Train Complete");
  require(o, tf_orig <= best, "(b) Train Full without resolver <= with resolver");
  const auto& first = loop.iterations.front().flips;
  bool flips_ok = true;
  for (const auto& it : loop.iterations) flips_ok = flips_ok && it.flips.complete < it.flips.incomplete;
  require(o, flips_ok, "(c) flip rate complete < incomplete");
  require(o, r.flipped > 0 && r.flipped_accuracy_with > r.flipped_accuracy_without, "(d) flipped labels improve");
  const double gain = r.accuracy_with.incomplete - r.accuracy_without.incomplete;
  require(o, std::abs(gain - kFrozenIncompleteGain) < 5e-7, "frozen incomplete-document gain");
  o.detail = fmt("(a) %.2f >= TC %.2f; (b) TF-orig %.2f <= %.2f", best, tc, tf_orig, best) +
             fmt("; (c) iter-1 flips %.2f%% < %.2f%%", 100 * first.complete, 100 * first.incomplete) +
             fmt("; (d) flipped accuracy %.3f -> %.3f; incomplete gain %+.6f", r.flipped_accuracy_without,
                 r.flipped_accuracy_with, gain) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome speedup() {
  Outcome o;
  const SpeedupReport r = speedup_estimate({7.7, 20.0, 250000.0, 334000.0});
  // (20 - 7.7) * 250000 = 3075000; 3075000 / 334000 years.
  require(o, r.extra_judgments == 3075000, "3075000 extra judgments");
  require(o, r.years == 3075000.0 / 334000.0, "years");
  require(o, fmt("%.2f", r.years) == "9.21", "9.21 years");
  o.detail = "extra " + std::to_string(r.extra_judgments) + ", " + format_speedup(r) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome protocol_fidelity() {
  Outcome o;
  const SimConfig cfg;
  const SimResult sim = simulate(cfg);
  const auto by_doc = judgments_by_doc(sim.log);
  int mismatches = 0;
  std::set<MarkableKey> touched;
  for (const Judgment& j : sim.log) touched.insert({j.doc, j.markable});
  for (const Document& d : sim.corpus.documents) {
    const auto it = by_doc.find(d.id);
    const bool complete = is_complete(d, it == by_doc.end() ? JudgmentLog{} : it->second, cfg.policy);
    mismatches += complete != sim.complete.at(d.id);
  }
  const double coverage = static_cast<double>(touched.size()) / sim.corpus.markable_count();
  require(o, mismatches == 0, "is_complete matches the designation");
  require(o, coverage >= 0.994, "coverage >= 99.4%");
  o.detail = fmt("%.0f documents, %.0f completeness mismatches, coverage %.4f", sim.corpus.documents.size(),
                 mismatches, coverage) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome round_trips() {
  Outcome o;
  int files = 0, degenerate = 0;
  for (const auto& e : fs::directory_iterator(ANACROWD_FIXTURE_DIR)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("bad_", 0) == 0) continue;
    const std::string text = read_file(e.path().string());
    ++files;
    bool ok = true;
    if (name.rfind("corpus_", 0) == 0) {
      const Corpus c = parse_corpus(text);
      const std::string once = serialize_corpus(c);
      ok = serialize_corpus(parse_corpus(once)) == once;
      for (const Document& d : c.documents) degenerate += d.markables.empty() || d.token_count() <= 1;
    } else if (name.rfind("judgments_", 0) == 0) {
      const std::string once = serialize_judgments(parse_judgments(text));
      ok = serialize_judgments(parse_judgments(once)) == once;
    } else if (name.rfind("model_", 0) == 0) {
      ok = serialize_model(parse_model(text)) == text;
    } else if (name.rfind("labels_", 0) == 0) {
      ok = label_table_to_json(label_table_from_json(Json::parse(text))).dump(2) + "\n" == text;
    } else {
      --files;
    }
    require(o, ok, name);
  }
  require(o, files >= 20, "at least 20 fixture files");
  require(o, degenerate >= 2, "degenerate documents present");
  o.detail = fmt("%.0f fixture files, %.0f degenerate documents", files, degenerate) +
             (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "anacrowd_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  write_file((root / "config.json").string(),
             R"({"simulate": {"documents": 16, "dev_documents": 4, "seed": 7}, "loop": {"max_iterations": 2}})");
  const std::string cfg = (root / "config.json").string();
  for (const char* name : {"a", "b"}) {
    const fs::path dir = root / name;
    std::ostringstream out, err;
    const int s = cli::dispatch({"--config", cfg, "simulate", "--out", (dir / "sim").string()}, out, err);
    const int l = cli::dispatch({"--config", cfg, "loop", "--corpus", (dir / "sim/corpus.jsonl").string(),
                                 "--judgments", (dir / "sim/judgments.jsonl").string(), "--dev",
                                 (dir / "sim/dev.jsonl").string(), "--out", (dir / "run").string()},
                                out, err);
    require(o, s == 0 && l == 0, std::string("run ") + name + " exit codes: " + err.str());
  }
  const auto a = tree(root / "a"), b = tree(root / "b");
  std::size_t differing = a.size() == b.size() ? 0 : 1;
  for (const auto& [path, content] : a) {
    const auto it = b.find(path);
    differing += it == b.end() || it->second != content;
  }
  require(o, differing == 0 && a.size() > 10, "byte-identical directories");
  fs::remove_all(root);
  o.detail = fmt("%.0f files compared, %.0f differ", a.size(), differing) + (o.detail.empty() ? "" : " | " + o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;  // 0 for no runtime bound
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "scorer oracle equivalence", 10, scorer_oracle},
      {2, "metric identities", 0, metric_identities},
      {3, "EM soundness", 0, em_soundness},
      {4, "aggregation beats majority vote", 30, beats_majority_vote},
      {5, "resolve-and-aggregate directional replication", 300, replication},
      {6, "speed-up arithmetic", 0, speedup},
      {7, "protocol fidelity", 0, protocol_fidelity},
      {8, "format round-trips", 0, round_trips},
      {9, "determinism", 0, determinism},
  };
  int failed = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && secs >= c.budget_s) {
      o.pass = false;
      o.detail += fmt(" | failed: runtime over %.0f s", c.budget_s);
    }
    failed += !o.pass;
    std::printf("%s [%d] %s (%.2f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }

  // Informational, not a criterion: with sparse assignment the comparison
  // above reverses in this simulator.
  const AggregationBenchmark sparse = aggregation_benchmark(SimConfig{}, 500, 20, 5, 42);
  std::printf("INFO sparse benchmark, 5 of 20 annotators per markable: MPA %.3f, majority %.3f\n",
              sparse.mpa_accuracy, sparse.majority_accuracy);

  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
