#pragma once

// Mention-pair aggregation of crowd judgments. Every (markable, candidate
// interpretation) pair is a binary latent variable; each annotator has a
// per-class sensitivity and specificity; class priors are shared. Parameters
// are fit by EM with add-lambda smoothing (MAP under a symmetric Beta prior).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "anacrowd/core.hpp"
#include "anacrowd/corpus_io.hpp"
#include "anacrowd/errors.hpp"
#include "anacrowd/rng.hpp"

namespace anacrowd {

struct PairObservation {
  std::uint32_t annotator = 0;
  std::uint32_t item = 0;
  std::uint32_t candidate = 0;
  bool endorse = false;
  InterpClass cls = InterpClass::DN;
  double weight = 1.0;
};

struct ObservationOptions {
  double annotation_weight = 1.0;
  double validation_weight = 1.0;
};

// Candidate table plus the binary observations derived from a judgment log.
// Items are sorted by key; candidates within an item are sorted by the
// interpretation ordering; annotators are sorted by id.
struct ObservationSet {
  std::vector<MarkableKey> items;
  std::vector<std::vector<Interpretation>> candidates;
  std::vector<std::string> annotators;
  std::vector<PairObservation> observations;

  std::optional<std::size_t> find_item(const MarkableKey& key) const {
    auto it = std::lower_bound(items.begin(), items.end(), key);
    if (it == items.end() || !(*it == key)) return std::nullopt;
    return static_cast<std::size_t>(it - items.begin());
  }
};

// `extra_items` registers markables that may have no judgments, so that they
// show up in the unlabeled set after decoding.
inline ObservationSet build_observations(const JudgmentLog& judgments,
                                         const ObservationOptions& options = {},
                                         const std::vector<MarkableKey>& extra_items = {}) {
  std::map<MarkableKey, std::set<Interpretation>> cand_sets;
  std::set<std::string> players;
  for (const MarkableKey& k : extra_items) cand_sets[k];
  for (const Judgment& j : judgments) {
    auto& cs = cand_sets[{j.doc, j.markable}];
    players.insert(j.player);
    if (j.polarity > 0) cs.insert(j.interpretation);
  }

  ObservationSet out;
  out.annotators.assign(players.begin(), players.end());
  std::map<MarkableKey, std::uint32_t> item_of;
  for (auto& [key, cs] : cand_sets) {
    item_of.emplace(key, static_cast<std::uint32_t>(out.items.size()));
    out.items.push_back(key);
    out.candidates.emplace_back(cs.begin(), cs.end());
  }
  std::map<std::string, std::uint32_t> annotator_of;
  for (std::size_t a = 0; a < out.annotators.size(); ++a) {
    annotator_of.emplace(out.annotators[a], static_cast<std::uint32_t>(a));
  }

  // Replay each annotator's judgments in log order; the final state of every
  // (annotator, item, candidate) cell is one observation.
  struct Cell {
    bool endorse;
    double weight;
  };
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::map<std::uint32_t, Cell>> state;
  for (const Judgment& j : judgments) {
    const std::uint32_t item = item_of.at({j.doc, j.markable});
    const std::uint32_t a = annotator_of.at(j.player);
    const auto& cands = out.candidates[item];
    const auto pos = std::lower_bound(cands.begin(), cands.end(), j.interpretation);
    const double w = j.kind == JudgmentKind::Annotation ? options.annotation_weight
                                                         : options.validation_weight;
    auto& cells = state[{item, a}];
    if (j.polarity > 0) {
      const auto c = static_cast<std::uint32_t>(pos - cands.begin());
      for (std::uint32_t k = 0; k < cands.size(); ++k) cells[k] = {k == c, w};
    } else if (pos != cands.end() && *pos == j.interpretation) {
      cells[static_cast<std::uint32_t>(pos - cands.begin())] = {false, w};
    }
  }
  for (const auto& [ia, cells] : state) {
    for (const auto& [c, cell] : cells) {
      if (cell.weight <= 0.0) continue;
      out.observations.push_back({ia.second, ia.first, c, cell.endorse,
                                  interpretation_class(out.candidates[ia.first][c]),
                                  cell.weight});
    }
  }
  std::sort(out.observations.begin(), out.observations.end(),
            [](const PairObservation& x, const PairObservation& y) {
              return std::tie(x.item, x.candidate, x.annotator) <
                     std::tie(y.item, y.candidate, y.annotator);
            });
  return out;
}

// ---------------------------------------------------------------------------
// Model

struct AnnotatorProfile {
  std::array<double, kNumClasses> sensitivity{0.5, 0.5, 0.5, 0.5};
  std::array<double, kNumClasses> specificity{0.5, 0.5, 0.5, 0.5};
  bool operator==(const AnnotatorProfile&) const = default;
};

struct MpaParams {
  std::map<std::string, AnnotatorProfile> profiles;
  std::array<double, kNumClasses> priors{0.5, 0.5, 0.5, 0.5};
};

struct MpaConfig {
  int max_iters = 200;
  double tol = 1e-8;
  double smoothing = 1.0;
  std::uint64_t seed = 0;
  int restarts = 0;

  void check() const {
    if (max_iters < 0) throw ConfigError("mpa.max_iters must be >= 0");
    if (!(tol >= 0.0)) throw ConfigError("mpa.tol must be >= 0");
    if (!(smoothing > 0.0)) throw ConfigError("mpa.smoothing must be > 0");
    if (restarts < 0) throw ConfigError("mpa.restarts must be >= 0");
  }
};

struct AggregationResult {
  ObservationSet data;
  std::vector<std::vector<double>> posteriors;  // aligned with data.candidates
  MpaParams params;
  std::vector<double> trace;  // penalized log-likelihood after each iteration
  int iterations = 0;
  bool converged = false;
};

namespace detail {

struct Fitter {
  const ObservationSet& data;
  double lambda;
  std::vector<std::array<double, kNumClasses>> alpha, beta;
  std::array<double, kNumClasses> pi{};

  Fitter(const ObservationSet& d, double l) : data(d), lambda(l) {
    alpha.assign(d.annotators.size(), {0.5, 0.5, 0.5, 0.5});
    beta = alpha;
    pi = {0.5, 0.5, 0.5, 0.5};
  }

  std::vector<std::vector<double>> endorse_fractions() const {
    std::vector<std::vector<double>> num(data.items.size()), den(data.items.size());
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      num[i].assign(data.candidates[i].size(), 0.0);
      den[i].assign(data.candidates[i].size(), 0.0);
    }
    for (const auto& o : data.observations) {
      den[o.item][o.candidate] += o.weight;
      if (o.endorse) num[o.item][o.candidate] += o.weight;
    }
    for (std::size_t i = 0; i < num.size(); ++i) {
      for (std::size_t k = 0; k < num[i].size(); ++k) {
        num[i][k] = den[i][k] > 0.0 ? num[i][k] / den[i][k] : 0.5;
      }
    }
    return num;
  }

  void m_step(const std::vector<std::vector<double>>& q) {
    const std::size_t na = data.annotators.size();
    std::vector<std::array<double, kNumClasses>> a_num(na), a_den(na), b_num(na), b_den(na);
    for (std::size_t a = 0; a < na; ++a) {
      a_num[a].fill(0.0);
      a_den[a].fill(0.0);
      b_num[a].fill(0.0);
      b_den[a].fill(0.0);
    }
    for (const auto& o : data.observations) {
      const double qk = q[o.item][o.candidate];
      const auto c = static_cast<std::size_t>(o.cls);
      a_den[o.annotator][c] += o.weight * qk;
      b_den[o.annotator][c] += o.weight * (1.0 - qk);
      if (o.endorse) {
        a_num[o.annotator][c] += o.weight * qk;
      } else {
        b_num[o.annotator][c] += o.weight * (1.0 - qk);
      }
    }
    for (std::size_t a = 0; a < na; ++a) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        alpha[a][c] = (a_num[a][c] + lambda) / (a_den[a][c] + 2.0 * lambda);
        beta[a][c] = (b_num[a][c] + lambda) / (b_den[a][c] + 2.0 * lambda);
      }
    }
    std::array<double, kNumClasses> p_num{}, p_den{};
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      for (std::size_t k = 0; k < q[i].size(); ++k) {
        const auto c = static_cast<std::size_t>(interpretation_class(data.candidates[i][k]));
        p_num[c] += q[i][k];
        p_den[c] += 1.0;
      }
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      pi[c] = (p_num[c] + lambda) / (p_den[c] + 2.0 * lambda);
    }
  }

  // Writes posteriors into q and returns the penalized log-likelihood of the
  // current parameters.
  double e_step(std::vector<std::vector<double>>& q) const {
    std::vector<std::vector<double>> log_true(data.items.size()), log_false(data.items.size());
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      log_true[i].resize(data.candidates[i].size());
      log_false[i].resize(data.candidates[i].size());
      for (std::size_t k = 0; k < data.candidates[i].size(); ++k) {
        const auto c = static_cast<std::size_t>(interpretation_class(data.candidates[i][k]));
        log_true[i][k] = std::log(pi[c]);
        log_false[i][k] = std::log1p(-pi[c]);
      }
    }
    for (const auto& o : data.observations) {
      const auto c = static_cast<std::size_t>(o.cls);
      const double a = alpha[o.annotator][c], b = beta[o.annotator][c];
      if (o.endorse) {
        log_true[o.item][o.candidate] += o.weight * std::log(a);
        log_false[o.item][o.candidate] += o.weight * std::log1p(-b);
      } else {
        log_true[o.item][o.candidate] += o.weight * std::log1p(-a);
        log_false[o.item][o.candidate] += o.weight * std::log(b);
      }
    }
    double ll = 0.0;
    q.resize(data.items.size());
    for (std::size_t i = 0; i < data.items.size(); ++i) {
      q[i].resize(data.candidates[i].size());
      for (std::size_t k = 0; k < q[i].size(); ++k) {
        const double t = log_true[i][k], f = log_false[i][k];
        const double hi = std::max(t, f);
        ll += hi + std::log(std::exp(t - hi) + std::exp(f - hi));
        q[i][k] = 1.0 / (1.0 + std::exp(f - t));
      }
    }
    return ll + log_prior();
  }

  double log_prior() const {
    double lp = 0.0;
    for (std::size_t a = 0; a < alpha.size(); ++a) {
      for (std::size_t c = 0; c < kNumClasses; ++c) {
        lp += lambda * (std::log(alpha[a][c]) + std::log1p(-alpha[a][c]) +
                        std::log(beta[a][c]) + std::log1p(-beta[a][c]));
      }
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      lp += lambda * (std::log(pi[c]) + std::log1p(-pi[c]));
    }
    return lp;
  }
};

}  // namespace detail

inline AggregationResult em_fit(const ObservationSet& data, const MpaConfig& config = {}) {
  config.check();
  if (data.observations.empty()) throw ConfigError("em_fit: empty observation set");

  const auto run = [&](std::vector<std::vector<double>> q) {
    detail::Fitter fit(data, config.smoothing);
    AggregationResult r;
    for (int it = 0; it < config.max_iters; ++it) {
      fit.m_step(q);
      const double ll = fit.e_step(q);
      r.trace.push_back(ll);
      r.iterations = it + 1;
      if (r.trace.size() >= 2 && r.trace.back() - r.trace[r.trace.size() - 2] < config.tol) {
        r.converged = true;
        break;
      }
    }
    r.posteriors = std::move(q);
    for (std::size_t a = 0; a < data.annotators.size(); ++a) {
      AnnotatorProfile& p = r.params.profiles[data.annotators[a]];
      p.sensitivity = fit.alpha[a];
      p.specificity = fit.beta[a];
    }
    r.params.priors = fit.pi;
    return r;
  };

  detail::Fitter init(data, config.smoothing);
  const auto q0 = init.endorse_fractions();
  AggregationResult best = run(q0);
  Rng rng = Rng::substream(config.seed, "mpa-restarts");
  for (int r = 0; r < config.restarts; ++r) {
    auto q = q0;
    for (auto& row : q) {
      for (double& x : row) x = std::clamp(x + rng.uniform(-0.25, 0.25), 0.01, 0.99);
    }
    AggregationResult cand = run(std::move(q));
    if (!cand.trace.empty() && (best.trace.empty() || cand.trace.back() > best.trace.back())) {
      best = std::move(cand);
    }
  }
  best.data = data;
  return best;
}

// Posteriors for every item under fixed parameters (one E-step). Annotators
// missing from `params` get an uninformative profile.
inline std::vector<std::vector<double>> infer_posteriors(const ObservationSet& data,
                                                         const MpaParams& params) {
  detail::Fitter fit(data, 1.0);
  for (std::size_t a = 0; a < data.annotators.size(); ++a) {
    auto it = params.profiles.find(data.annotators[a]);
    if (it == params.profiles.end()) continue;
    fit.alpha[a] = it->second.sensitivity;
    fit.beta[a] = it->second.specificity;
  }
  fit.pi = params.priors;
  std::vector<std::vector<double>> q;
  fit.e_step(q);
  return q;
}

// ---------------------------------------------------------------------------
// Decoding

struct AggregatedLabel {
  Interpretation interpretation;
  double posterior = 0.0;
  bool operator==(const AggregatedLabel&) const = default;
};

using LabelTable = std::map<MarkableKey, AggregatedLabel>;

struct Decoded {
  LabelTable labels;
  std::vector<MarkableKey> unlabeled;
};

namespace detail {

inline int class_priority(InterpClass c) {
  switch (c) {
    case InterpClass::DO: return 0;
    case InterpClass::DN: return 1;
    case InterpClass::PR: return 2;
    case InterpClass::EX: return 3;
  }
  return 4;
}

// True when candidate a wins a posterior tie against b. A larger antecedent id
// is the nearer antecedent, since ids follow document order in every file this
// toolkit writes.
inline bool tie_prefers(const Interpretation& a, std::size_t ia, const Interpretation& b,
                        std::size_t ib) {
  const int pa = class_priority(interpretation_class(a));
  const int pb = class_priority(interpretation_class(b));
  if (pa != pb) return pa < pb;
  if (const auto* da = as_do(a)) {
    const MarkableId na = da->antecedents.back(), nb = as_do(b)->antecedents.back();
    if (na != nb) return na > nb;
  }
  return ia < ib;
}

inline constexpr double kTieTolerance = 1e-12;

}  // namespace detail

// Index of the winning candidate among `scores`.
inline std::size_t argmax_candidate(const std::vector<Interpretation>& cands,
                                    const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < cands.size(); ++k) {
    if (scores[k] > scores[best] + detail::kTieTolerance ||
        (std::abs(scores[k] - scores[best]) <= detail::kTieTolerance &&
         detail::tie_prefers(cands[k], k, cands[best], best))) {
      best = k;
    }
  }
  return best;
}

inline Decoded decode(const ObservationSet& data,
                      const std::vector<std::vector<double>>& posteriors) {
  Decoded out;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    const auto& cands = data.candidates[i];
    if (cands.empty()) {
      out.unlabeled.push_back(data.items[i]);
      continue;
    }
    const std::size_t k = argmax_candidate(cands, posteriors[i]);
    out.labels.emplace(data.items[i], AggregatedLabel{cands[k], posteriors[i][k]});
  }
  return out;
}

inline Decoded decode(const AggregationResult& r) { return decode(r.data, r.posteriors); }

// Per-markable majority vote over endorsing observations (weighted), with the
// same tie rule as decode. The usual crowd baseline.
inline Decoded majority_vote(const ObservationSet& data) {
  std::vector<std::vector<double>> votes(data.items.size());
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    votes[i].assign(data.candidates[i].size(), 0.0);
  }
  for (const auto& o : data.observations) {
    if (o.endorse) votes[o.item][o.candidate] += o.weight;
  }
  return decode(data, votes);
}

inline LabelMap labels_for_document(const LabelTable& table, const DocId& doc) {
  LabelMap out;
  for (auto it = table.lower_bound({doc, std::numeric_limits<MarkableId>::min()});
       it != table.end() && it->first.doc == doc; ++it) {
    out.emplace(it->first.markable, it->second.interpretation);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flip rate

struct FlipStats {
  double overall = 0.0;
  double complete = 0.0;
  double incomplete = 0.0;
  std::size_t total = 0, flipped = 0;
  std::size_t total_complete = 0, flipped_complete = 0;
  std::size_t total_incomplete = 0, flipped_incomplete = 0;
};

// Fraction of markables whose interpretation differs between `a` and `b`.
// With `complete_docs`, also split by document completeness.
inline FlipStats flip_rate(const LabelTable& a, const LabelTable& b,
                           const std::set<DocId>* complete_docs = nullptr) {
  if (a.size() != b.size()) throw StructuralError("flip_rate: label tables differ in size");
  FlipStats s;
  auto ib = b.begin();
  for (const auto& [key, label] : a) {
    if (!(ib->first == key)) {
      throw StructuralError("flip_rate: markable " + key.doc + "#" + std::to_string(key.markable) +
                            " missing from one side");
    }
    const bool flip = !(label.interpretation == ib->second.interpretation);
    ++s.total;
    s.flipped += flip;
    if (complete_docs) {
      if (complete_docs->count(key.doc)) {
        ++s.total_complete;
        s.flipped_complete += flip;
      } else {
        ++s.total_incomplete;
        s.flipped_incomplete += flip;
      }
    }
    ++ib;
  }
  const auto frac = [](std::size_t n, std::size_t d) {
    return d == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(d);
  };
  s.overall = frac(s.flipped, s.total);
  s.complete = frac(s.flipped_complete, s.total_complete);
  s.incomplete = frac(s.flipped_incomplete, s.total_incomplete);
  return s;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kLabelsFormat = "anacrowd-labels";

inline Json label_table_to_json(const LabelTable& t) {
  Json records = Json::array();
  for (const auto& [key, label] : t) {
    records.push_back({{"doc", key.doc},
                       {"markable", key.markable},
                       {"interpretation", interpretation_to_json(label.interpretation)},
                       {"posterior", label.posterior}});
  }
  return {{"format", kLabelsFormat}, {"version", kFormatVersion}, {"labels", records}};
}

inline LabelTable label_table_from_json(const Json& j) {
  detail::expect_keys(j, {"format", "version", "labels"});
  detail::check_header(j, kLabelsFormat);
  LabelTable t;
  for (const Json& r : j.at("labels")) {
    detail::expect_keys(r, {"doc", "markable", "interpretation", "posterior"});
    t[{detail::get_string(r, "doc"), detail::get_int(r, "markable")}] = {
        interpretation_from_json(r.at("interpretation")), r.at("posterior").get<double>()};
  }
  return t;
}

inline Json profile_to_json(const AnnotatorProfile& p) {
  Json sens, spec;
  for (InterpClass c : kAllClasses) {
    sens[std::string(to_string(c))] = p.sensitivity[static_cast<std::size_t>(c)];
    spec[std::string(to_string(c))] = p.specificity[static_cast<std::size_t>(c)];
  }
  return {{"sensitivity", sens}, {"specificity", spec}};
}

inline Json aggregation_report_to_json(const AggregationResult& r, const Decoded& d) {
  Json items = Json::array();
  for (std::size_t i = 0; i < r.data.items.size(); ++i) {
    Json cands = Json::array();
    for (std::size_t k = 0; k < r.data.candidates[i].size(); ++k) {
      cands.push_back({{"interpretation", interpretation_to_json(r.data.candidates[i][k])},
                       {"posterior", r.posteriors[i][k]}});
    }
    Json item = {{"doc", r.data.items[i].doc},
                 {"markable", r.data.items[i].markable},
                 {"candidates", cands}};
    auto it = d.labels.find(r.data.items[i]);
    item["decoded"] = it == d.labels.end() ? Json(nullptr)
                                           : interpretation_to_json(it->second.interpretation);
    items.push_back(std::move(item));
  }
  Json profiles = Json::object();
  for (const auto& [name, p] : r.params.profiles) profiles[name] = profile_to_json(p);
  Json priors = Json::object();
  for (InterpClass c : kAllClasses) {
    priors[std::string(to_string(c))] = r.params.priors[static_cast<std::size_t>(c)];
  }
  return {{"items", items},
          {"profiles", profiles},
          {"priors", priors},
          {"trace", r.trace},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"unlabeled", d.unlabeled.size()}};
}

}  // namespace anacrowd
