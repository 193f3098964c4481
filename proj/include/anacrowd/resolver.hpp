#pragma once

// Automatic anaphora resolver used as one more annotator: a deterministic
// multi-pass sieve, and a trainable mention-pair scorer with a non-referring
// classifier. Both label every gold markable of a document.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "anacrowd/core.hpp"
#include "anacrowd/corpus_io.hpp"
#include "anacrowd/errors.hpp"
#include "anacrowd/rng.hpp"
#include "anacrowd/wordlists.hpp"

namespace anacrowd {

using CorpusLabels = std::map<DocId, LabelMap>;

// ---------------------------------------------------------------------------
// Surface analysis

struct MentionInfo {
  std::string text;  // case-folded tokens joined by single spaces
  std::string head;  // case-folded head token; last token when no head is given
  int sentence = 0;
  int length = 0;
  bool pronoun = false;
  bool definite = false;
  bool indefinite = false;
  bool proper = false;  // capitalized single token that is not a pronoun
};

struct DocAnalysis {
  std::vector<std::string> lower;
  std::vector<int> sentence_of_token;
  std::vector<MentionInfo> mentions;  // aligned with doc.markables
  std::vector<bool> expletive;        // expletive surface pattern
  std::vector<int> copular_subject;   // markable index of the subject, or -1
};

inline bool spans_overlap(const Span& a, const Span& b) {
  return a.start < b.end && b.start < a.end;
}

inline DocAnalysis analyze(const Document& doc, const WordLists& words) {
  DocAnalysis an;
  const int n = doc.token_count();
  an.lower.reserve(doc.tokens.size());
  for (const auto& t : doc.tokens) an.lower.push_back(to_lower(t));
  an.sentence_of_token.assign(doc.tokens.size(), 0);
  for (std::size_t s = 0; s < doc.sentence_bounds.size(); ++s) {
    for (int t = doc.sentence_bounds[s].start; t < doc.sentence_bounds[s].end; ++t) {
      an.sentence_of_token[t] = static_cast<int>(s);
    }
  }

  const std::size_t nm = doc.markables.size();
  an.mentions.resize(nm);
  an.expletive.assign(nm, false);
  an.copular_subject.assign(nm, -1);
  // Markables by end token, for subject lookup.
  std::multimap<int, std::size_t> by_end;
  for (std::size_t i = 0; i < nm; ++i) {
    const Markable& m = doc.markables[i];
    MentionInfo& mi = an.mentions[i];
    for (int t = m.span.start; t < m.span.end; ++t) {
      if (t > m.span.start) mi.text += ' ';
      mi.text += an.lower[t];
    }
    mi.head = an.lower[m.head ? *m.head : m.span.end - 1];
    mi.sentence = an.sentence_of_token[m.span.start];
    mi.length = m.span.end - m.span.start;
    const std::string& first = an.lower[m.span.start];
    mi.pronoun = mi.length == 1 && words.pronouns.count(first) > 0;
    mi.definite = !mi.pronoun && words.definite.count(first) > 0;
    mi.indefinite = words.indefinite.count(first) > 0;
    const std::string& raw = doc.tokens[m.span.start];
    mi.proper = mi.length == 1 && !mi.pronoun && !raw.empty() && raw[0] >= 'A' && raw[0] <= 'Z';
    by_end.emplace(m.span.end, i);

    // "it rains", "it is <cue>", "there is ..."
    if (mi.length == 1 && (first == "it" || first == "there") && m.span.end < n) {
      const int t = m.span.end;
      if (first == "it" && words.expletive_verbs.count(an.lower[t])) {
        an.expletive[i] = true;
      } else if (words.copulas.count(an.lower[t])) {
        if (first == "there") {
          an.expletive[i] = true;
        } else {
          for (int k = t + 1; k <= t + 3 && k < n; ++k) {
            if (an.sentence_of_token[k] != an.sentence_of_token[t]) break;
            if (words.expletive_cues.count(an.lower[k])) {
              an.expletive[i] = true;
              break;
            }
          }
        }
      }
    }
  }
  // "<subject> is <markable>": the widest non-expletive markable ending right
  // before the copula, in the same sentence.
  for (std::size_t i = 0; i < nm; ++i) {
    const Markable& m = doc.markables[i];
    const int cop = m.span.start - 1;
    if (cop < 1 || an.mentions[i].pronoun || !words.copulas.count(an.lower[cop])) continue;
    if (an.sentence_of_token[cop] != an.mentions[i].sentence) continue;
    int best = -1;
    auto [lo, hi] = by_end.equal_range(cop);
    for (auto it = lo; it != hi; ++it) {
      const std::size_t j = it->second;
      if (an.expletive[j] || an.mentions[j].sentence != an.mentions[i].sentence) continue;
      if (best < 0 || doc.markables[j].span.start < doc.markables[best].span.start ||
          (doc.markables[j].span.start == doc.markables[best].span.start &&
           static_cast<int>(j) < best)) {
        best = static_cast<int>(j);
      }
    }
    an.copular_subject[i] = best;
  }
  return an;
}

// ---------------------------------------------------------------------------
// Sieve

struct SieveOptions {
  // expletive, copular, exact match, head match, pronoun recency
  std::array<bool, 5> passes{true, true, true, true, true};
  int pronoun_sentence_window = 2;
};

inline LabelMap sieve_resolve(const Document& doc, const WordLists& words = WordLists::defaults(),
                              const SieveOptions& opt = {}) {
  const DocAnalysis an = analyze(doc, words);
  const std::size_t nm = doc.markables.size();
  std::vector<std::optional<Interpretation>> label(nm);
  const auto referring = [&](std::size_t j) {
    return !label[j] || !is_non_referring(*label[j]);
  };
  const auto link_back = [&](std::size_t i, auto&& accept) {
    for (std::size_t j = i; j-- > 0;) {
      if (spans_overlap(doc.markables[j].span, doc.markables[i].span) || !referring(j)) continue;
      if (accept(j)) {
        label[i] = make_do({doc.markables[j].id});
        return;
      }
    }
  };

  if (opt.passes[0]) {
    for (std::size_t i = 0; i < nm; ++i) {
      if (an.expletive[i]) label[i] = make_ex();
    }
  }
  if (opt.passes[1]) {
    for (std::size_t i = 0; i < nm; ++i) {
      const int s = an.copular_subject[i];
      if (label[i] || s < 0 || !referring(s)) continue;
      label[i] = make_pr(doc.markables[s].id);
    }
  }
  if (opt.passes[2]) {
    for (std::size_t i = 0; i < nm; ++i) {
      const auto& mi = an.mentions[i];
      if (label[i] || mi.pronoun || mi.indefinite) continue;
      link_back(i, [&](std::size_t j) { return an.mentions[j].text == mi.text; });
    }
  }
  if (opt.passes[3]) {
    for (std::size_t i = 0; i < nm; ++i) {
      const auto& mi = an.mentions[i];
      if (label[i] || mi.pronoun || mi.indefinite) continue;
      link_back(i, [&](std::size_t j) {
        return !an.mentions[j].pronoun && an.mentions[j].head == mi.head;
      });
    }
  }
  if (opt.passes[4]) {
    for (std::size_t i = 0; i < nm; ++i) {
      const auto& mi = an.mentions[i];
      if (label[i] || !mi.pronoun) continue;
      for (std::size_t j = i; j-- > 0;) {
        if (mi.sentence - an.mentions[j].sentence > opt.pronoun_sentence_window) break;
        if (spans_overlap(doc.markables[j].span, doc.markables[i].span) || !referring(j) ||
            an.mentions[j].pronoun) {
          continue;
        }
        label[i] = make_do({doc.markables[j].id});
        break;
      }
    }
  }
  LabelMap out;
  for (std::size_t i = 0; i < nm; ++i) {
    out.emplace(doc.markables[i].id, label[i] ? *label[i] : make_dn());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learned model

inline constexpr std::size_t kPairFeatures = 12;
inline constexpr std::size_t kNrFeatures = 10;
inline constexpr std::size_t kNrClasses = 3;  // referring, EX, PR

inline constexpr const char* kPairFeatureNames[kPairFeatures] = {
    "bias",          "markable_distance", "sentence_distance",
    "exact_match",   "head_match",        "length_difference",
    "anaphor_pronoun", "anaphor_definite", "candidate_pronoun",
    "anaphor_indefinite", "anaphor_proper", "pronoun_distance"};

inline constexpr const char* kNrFeatureNames[kNrFeatures] = {
    "bias",         "token_it",         "token_there",  "next_copula",  "prev_copula",
    "expletive_pattern", "copular_subject", "indefinite", "pronoun", "definite"};

using PairFeatures = std::array<double, kPairFeatures>;
using NrFeatures = std::array<double, kNrFeatures>;

inline PairFeatures pair_features(const DocAnalysis& an, std::size_t i, std::size_t j) {
  const MentionInfo& a = an.mentions[i];
  const MentionInfo& c = an.mentions[j];
  return {1.0,
          std::log1p(static_cast<double>(i - j)),
          std::log1p(static_cast<double>(a.sentence - c.sentence)),
          a.text == c.text ? 1.0 : 0.0,
          a.head == c.head ? 1.0 : 0.0,
          std::log1p(std::abs(a.length - c.length)),
          a.pronoun ? 1.0 : 0.0,
          a.definite ? 1.0 : 0.0,
          c.pronoun ? 1.0 : 0.0,
          a.indefinite ? 1.0 : 0.0,
          a.proper ? 1.0 : 0.0,
          a.pronoun ? std::log1p(static_cast<double>(i - j)) : 0.0};
}

inline NrFeatures nr_features(const Document& doc, const DocAnalysis& an, const WordLists& words,
                              std::size_t i) {
  const Markable& m = doc.markables[i];
  const MentionInfo& mi = an.mentions[i];
  const std::string& first = an.lower[m.span.start];
  const bool next_cop = m.span.end < doc.token_count() && words.copulas.count(an.lower[m.span.end]);
  const bool prev_cop = m.span.start > 0 && words.copulas.count(an.lower[m.span.start - 1]);
  return {1.0,
          mi.length == 1 && first == "it" ? 1.0 : 0.0,
          mi.length == 1 && first == "there" ? 1.0 : 0.0,
          next_cop ? 1.0 : 0.0,
          prev_cop ? 1.0 : 0.0,
          an.expletive[i] ? 1.0 : 0.0,
          an.copular_subject[i] >= 0 ? 1.0 : 0.0,
          mi.indefinite ? 1.0 : 0.0,
          mi.pronoun ? 1.0 : 0.0,
          mi.definite ? 1.0 : 0.0};
}

// Lexical pair keys: a pronoun anaphor paired with the candidate head
// ("p:she|anna"), which lets training pick up gender and animacy.
inline std::vector<std::string> lexical_keys(const DocAnalysis& an, std::size_t i, std::size_t j) {
  const MentionInfo& a = an.mentions[i];
  if (!a.pronoun) return {};
  return {"p:" + a.head + "|" + an.mentions[j].head};
}

struct ResolverConfig {
  double l2 = 1e-4;
  int epochs = 5;
  double lr = 0.1;
  std::uint64_t seed = 1;
  int window = 100;

  void check() const {
    if (epochs < 0) throw ConfigError("resolver.epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("resolver.lr must be > 0");
    if (!(l2 >= 0.0)) throw ConfigError("resolver.l2 must be >= 0");
    if (window < 1) throw ConfigError("resolver.window must be >= 1");
  }
};

struct ResolverModel {
  PairFeatures pair_weights{};
  // Sparse lexical pair weights, keyed as produced by lexical_keys().
  std::map<std::string, double> lexical_weights;
  std::array<NrFeatures, kNrClasses> nr_weights{};
  // A markable links to its best candidate when the pair probability reaches
  // the threshold for its kind. 1.0 is never reached by an untrained model.
  double threshold = 1.0;
  double pronoun_threshold = 1.0;
  int window = 100;
  int iteration = 0;
  std::string source;

  bool operator==(const ResolverModel&) const = default;
};

namespace detail {

template <std::size_t N>
double dot(const std::array<double, N>& w, const std::array<double, N>& x) {
  double s = 0.0;
  for (std::size_t k = 0; k < N; ++k) s += w[k] * x[k];
  return s;
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline std::size_t nr_class_of(const Interpretation& i) {
  switch (interpretation_class(i)) {
    case InterpClass::EX: return 1;
    case InterpClass::PR: return 2;
    default: return 0;
  }
}

inline std::size_t nr_argmax(const ResolverModel& model, const NrFeatures& f) {
  std::size_t best = 0;
  double best_score = dot(model.nr_weights[0], f);
  for (std::size_t c = 1; c < kNrClasses; ++c) {
    const double s = dot(model.nr_weights[c], f);
    if (s > best_score) {
      best = c;
      best_score = s;
    }
  }
  return best;
}

// Best preceding, non-overlapping, referring candidate of markable i; nearest
// wins ties. Returns (index, probability) or (-1, 0).
template <class Referring>
std::pair<int, double> best_candidate(const Document& doc, const DocAnalysis& an,
                                      const ResolverModel& model, std::size_t i,
                                      Referring&& referring) {
  int best = -1;
  double best_z = 0.0;
  const std::size_t lo = i > static_cast<std::size_t>(model.window) ? i - model.window : 0;
  for (std::size_t j = i; j-- > lo;) {
    if (spans_overlap(doc.markables[j].span, doc.markables[i].span) || !referring(j)) continue;
    double z = dot(model.pair_weights, pair_features(an, i, j));
    if (!model.lexical_weights.empty()) {
      for (const auto& k : lexical_keys(an, i, j)) {
        auto it = model.lexical_weights.find(k);
        if (it != model.lexical_weights.end()) z += it->second;
      }
    }
    if (best < 0 || z > best_z) {
      best = static_cast<int>(j);
      best_z = z;
    }
  }
  return {best, best < 0 ? 0.0 : sigmoid(best_z)};
}

// Contiguous view of a weight array (flat, or an array of arrays).
template <std::size_t N>
std::span<double> flat(std::array<double, N>& a) {
  return {a.data(), N};
}
template <std::size_t N, std::size_t M>
std::span<double> flat(std::array<std::array<double, M>, N>& a) {
  static_assert(sizeof(a) == N * M * sizeof(double));
  return {a[0].data(), N * M};
}

}  // namespace detail

inline LabelMap predict(const ResolverModel& model, const Document& doc,
                        const WordLists& words = WordLists::defaults()) {
  const DocAnalysis an = analyze(doc, words);
  const std::size_t nm = doc.markables.size();
  std::vector<std::size_t> nr(nm);
  for (std::size_t i = 0; i < nm; ++i) {
    nr[i] = detail::nr_argmax(model, nr_features(doc, an, words, i));
  }
  LabelMap out;
  for (std::size_t i = 0; i < nm; ++i) {
    const MarkableId id = doc.markables[i].id;
    if (nr[i] == 1) {
      out.emplace(id, make_ex());
      continue;
    }
    if (nr[i] == 2) {
      const int s = an.copular_subject[i];
      out.emplace(id, make_pr(s >= 0 ? std::optional<MarkableId>(doc.markables[s].id)
                                     : std::nullopt));
      continue;
    }
    const auto [j, p] =
        detail::best_candidate(doc, an, model, i, [&](std::size_t k) { return nr[k] == 0; });
    const double t = an.mentions[i].pronoun ? model.pronoun_threshold : model.threshold;
    out.emplace(id, j >= 0 && p >= t ? make_do({doc.markables[j].id}) : make_dn());
  }
  return out;
}

// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline CorpusLabels predict_corpus(const ResolverModel& model, const Corpus& corpus,
                                   const WordLists& words = WordLists::defaults(), int jobs = 1) {
  std::vector<LabelMap> per_doc(corpus.documents.size());
  parallel_for(corpus.documents.size(), jobs,
               [&](std::size_t d) { per_doc[d] = predict(model, corpus.documents[d], words); });
  CorpusLabels out;
  for (std::size_t d = 0; d < per_doc.size(); ++d) {
    out.emplace(corpus.documents[d].id, std::move(per_doc[d]));
  }
  return out;
}

// Fits the pair scorer and the non-referring classifier on the documents of
// `corpus` that have an entry in `labels`.
inline ResolverModel train(const Corpus& corpus, const CorpusLabels& labels,
                           const ResolverConfig& config,
                           const WordLists& words = WordLists::defaults()) {
  config.check();
  ResolverModel model;
  model.window = config.window;

  struct DocData {
    const Document* doc;
    const LabelMap* labels;
    DocAnalysis an;
    std::vector<int> cluster;  // -1 for non-referring
  };
  std::vector<DocData> docs;
  for (const Document& doc : corpus.documents) {
    auto it = labels.find(doc.id);
    if (it == labels.end()) continue;
    for (const Markable& m : doc.markables) {
      if (!it->second.count(m.id)) {
        throw ValidationError("training labels for document '" + doc.id + "' miss markable " +
                              std::to_string(m.id));
      }
    }
    DocData dd{&doc, &it->second, analyze(doc, words), {}};
    const ClusterSet cs = derive_clusters(doc, it->second);
    const MarkableIndex index(doc);
    dd.cluster.assign(doc.markables.size(), -1);
    for (std::size_t c = 0; c < cs.clusters.size(); ++c) {
      for (MarkableId id : cs.clusters[c]) dd.cluster[*index.find(id)] = static_cast<int>(c);
    }
    docs.push_back(std::move(dd));
  }
  if (docs.empty()) throw ConfigError("resolver training set is empty");
  if (config.epochs == 0) return model;

  std::vector<PairFeatures> px;
  std::vector<std::uint8_t> py;
  std::map<std::string, std::size_t> key_ids;
  std::vector<std::size_t> pk, pk_begin;  // lexical key ids of pair k: pk[pk_begin[k] .. pk_begin[k+1])
  std::vector<NrFeatures> nx;
  std::vector<std::uint8_t> ny;
  for (const DocData& dd : docs) {
    const Document& doc = *dd.doc;
    const MarkableIndex index(doc);
    for (std::size_t i = 0; i < doc.markables.size(); ++i) {
      const Interpretation& li = dd.labels->at(doc.markables[i].id);
      nx.push_back(nr_features(doc, dd.an, words, i));
      ny.push_back(static_cast<std::uint8_t>(detail::nr_class_of(li)));
      if (is_non_referring(li) || is_split_antecedent(li)) continue;
      // Nominal anaphors: every preceding mention of the entity is a
      // positive. Pronouns: only the closest one; farther mentions of the same
      // entity are left out.
      const bool is_do = as_do(li) != nullptr;
      const std::size_t lo = i > static_cast<std::size_t>(config.window) ? i - config.window : 0;
      std::size_t closest = i;
      if (is_do && dd.an.mentions[i].pronoun) {
        for (std::size_t j = i; j-- > lo;) {
          if (dd.cluster[j] == dd.cluster[i] &&
              !spans_overlap(doc.markables[j].span, doc.markables[i].span)) {
            closest = j;
            break;
          }
        }
      }
      for (std::size_t j = lo; j < i; ++j) {
        if (spans_overlap(doc.markables[j].span, doc.markables[i].span) ||
            is_non_referring(dd.labels->at(doc.markables[j].id))) {
          continue;
        }
        if (closest < i && j < closest && dd.cluster[j] == dd.cluster[i]) continue;
        px.push_back(pair_features(dd.an, i, j));
        py.push_back(is_do && dd.cluster[j] == dd.cluster[i] ? 1 : 0);
        pk_begin.push_back(pk.size());
        for (auto& k : lexical_keys(dd.an, i, j)) {
          pk.push_back(key_ids.emplace(std::move(k), key_ids.size()).first->second);
        }
      }
    }
  }

  // Averaged SGD: the returned weights are the mean iterate over all steps,
  // which is far less sensitive to the shuffle than the last one.
  Rng rng = Rng::substream(config.seed, "resolver-train");
  std::vector<std::size_t> order;
  const auto schedule = [&](std::size_t n, auto& weights, auto&& step) {
    auto sum = weights;
    for (auto& v : detail::flat(sum)) v = 0.0;
    long steps = 0;
    order.resize(n);
    for (int e = 0; e < config.epochs; ++e) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order);
      const double lr = config.lr / std::sqrt(1.0 + e);
      for (std::size_t k : order) {
        step(k, lr);
        auto w = detail::flat(weights);
        auto acc = detail::flat(sum);
        for (std::size_t f = 0; f < w.size(); ++f) acc[f] += w[f];
        ++steps;
      }
    }
    if (steps == 0) return;
    auto w = detail::flat(weights);
    auto acc = detail::flat(sum);
    for (std::size_t f = 0; f < w.size(); ++f) w[f] = acc[f] / static_cast<double>(steps);
  };

  // Lexical weights are averaged lazily: an update made at step t counts
  // towards all later iterates, so avg = w - u / T with u += (t - 1) * delta.
  pk_begin.push_back(pk.size());
  std::vector<double> lw(key_ids.size(), 0.0), lu(key_ids.size(), 0.0);
  long pair_step = 0;
  schedule(px.size(), model.pair_weights, [&](std::size_t k, double lr) {
    double z = detail::dot(model.pair_weights, px[k]);
    for (std::size_t q = pk_begin[k]; q < pk_begin[k + 1]; ++q) z += lw[pk[q]];
    const double g = detail::sigmoid(z) - py[k];
    for (std::size_t f = 0; f < kPairFeatures; ++f) {
      const double reg = f == 0 ? 0.0 : config.l2 * model.pair_weights[f];
      model.pair_weights[f] -= lr * (g * px[k][f] + reg);
    }
    for (std::size_t q = pk_begin[k]; q < pk_begin[k + 1]; ++q) {
      const double delta = -lr * (g + config.l2 * lw[pk[q]]);
      lw[pk[q]] += delta;
      lu[pk[q]] += static_cast<double>(pair_step) * delta;
    }
    ++pair_step;
  });
  for (const auto& [key, id] : key_ids) {
    const double w = pair_step ? lw[id] - lu[id] / static_cast<double>(pair_step) : 0.0;
    if (w != 0.0) model.lexical_weights.emplace(key, w);
  }

  schedule(nx.size(), model.nr_weights, [&](std::size_t k, double lr) {
    std::array<double, kNrClasses> z{};
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kNrClasses; ++c) {
      z[c] = detail::dot(model.nr_weights[c], nx[k]);
      hi = std::max(hi, z[c]);
    }
    double sum = 0.0;
    for (double& v : z) sum += (v = std::exp(v - hi));
    for (std::size_t c = 0; c < kNrClasses; ++c) {
      const double g = z[c] / sum - (ny[k] == c ? 1.0 : 0.0);
      for (std::size_t f = 0; f < kNrFeatures; ++f) {
        const double reg = f == 0 ? 0.0 : config.l2 * model.nr_weights[c][f];
        model.nr_weights[c][f] -= lr * (g * nx[k][f] + reg);
      }
    }
  });

  // Thresholds maximizing DO/DN decision accuracy on the training labels,
  // separately for pronoun and other anaphors. A DO decision counts as right
  // when the best candidate is in the anaphor's cluster.
  struct Point {
    double p;
    int if_link;  // credit when linking
    int if_new;   // credit when not linking
  };
  std::vector<Point> pts[2];
  for (const DocData& dd : docs) {
    const Document& doc = *dd.doc;
    for (std::size_t i = 0; i < doc.markables.size(); ++i) {
      const Interpretation& li = dd.labels->at(doc.markables[i].id);
      if (is_non_referring(li) || is_split_antecedent(li)) continue;
      const auto [j, p] = detail::best_candidate(doc, dd.an, model, i, [&](std::size_t k) {
        return !is_non_referring(dd.labels->at(doc.markables[k].id));
      });
      if (j < 0) continue;
      const bool is_do = as_do(li) != nullptr;
      pts[dd.an.mentions[i].pronoun ? 1 : 0].push_back(
          {p, is_do && dd.cluster[j] == dd.cluster[i] ? 1 : 0, is_do ? 0 : 1});
    }
  }
  const auto calibrate = [](std::vector<Point>& v) {
    std::sort(v.begin(), v.end(), [](const Point& a, const Point& b) { return a.p > b.p; });
    long correct = 0;
    for (const Point& pt : v) correct += pt.if_new;
    long best = correct;
    double threshold = 1.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
      correct += v[k].if_link - v[k].if_new;
      if (k + 1 < v.size() && v[k + 1].p == v[k].p) continue;
      if (correct > best) {
        best = correct;
        threshold = v[k].p;
      }
    }
    return threshold;
  };
  model.threshold = calibrate(pts[0]);
  model.pronoun_threshold = calibrate(pts[1]);
  return model;
}

// ---------------------------------------------------------------------------
// Judgments and serialization

inline std::string system_player(int iteration) {
  return "system@iter" + std::to_string(iteration);
}

inline JudgmentLog as_judgments(const CorpusLabels& predictions, const std::string& player) {
  JudgmentLog log;
  for (const auto& [doc, labels] : predictions) {
    for (const auto& [m, interp] : labels) {
      log.push_back({player, doc, m, interp, JudgmentKind::Annotation, 1});
    }
  }
  return log;
}

inline constexpr std::string_view kModelFormat = "anacrowd-model";

inline Json model_to_json(const ResolverModel& m) {
  Json pair = Json::object();
  for (std::size_t f = 0; f < kPairFeatures; ++f) pair[kPairFeatureNames[f]] = m.pair_weights[f];
  Json nr = Json::object();
  const char* classes[kNrClasses] = {"referring", "EX", "PR"};
  for (std::size_t c = 0; c < kNrClasses; ++c) {
    Json w = Json::object();
    for (std::size_t f = 0; f < kNrFeatures; ++f) w[kNrFeatureNames[f]] = m.nr_weights[c][f];
    nr[classes[c]] = w;
  }
  return {{"format", kModelFormat},
          {"version", kFormatVersion},
          {"pair_weights", pair},
          {"lexical_weights", m.lexical_weights},
          {"nr_weights", nr},
          {"threshold", m.threshold},
          {"pronoun_threshold", m.pronoun_threshold},
          {"window", m.window},
          {"iteration", m.iteration},
          {"source", m.source}};
}

inline ResolverModel model_from_json(const Json& j) {
  detail::expect_keys(j, {"format", "version", "pair_weights", "lexical_weights", "nr_weights", "threshold", "pronoun_threshold",
                          "window", "iteration", "source"});
  detail::check_header(j, kModelFormat);
  ResolverModel m;
  const auto read_weights = [](const Json& w, const auto& names, auto& into) {
    if (!w.is_object() || w.size() != into.size()) detail::bad_record("malformed weight vector");
    for (std::size_t f = 0; f < into.size(); ++f) into[f] = w.at(names[f]).template get<double>();
  };
  read_weights(j.at("pair_weights"), kPairFeatureNames, m.pair_weights);
  const Json& lex = j.at("lexical_weights");
  if (!lex.is_object()) detail::bad_record("lexical_weights must be an object");
  for (const auto& [k, v] : lex.items()) m.lexical_weights.emplace(k, v.get<double>());
  const char* classes[kNrClasses] = {"referring", "EX", "PR"};
  for (std::size_t c = 0; c < kNrClasses; ++c) {
    read_weights(j.at("nr_weights").at(classes[c]), kNrFeatureNames, m.nr_weights[c]);
  }
  m.threshold = j.at("threshold").get<double>();
  m.pronoun_threshold = j.at("pronoun_threshold").get<double>();
  m.window = detail::get_int(j, "window");
  m.iteration = detail::get_int(j, "iteration");
  m.source = detail::get_string(j, "source");
  return m;
}

inline std::string serialize_model(const ResolverModel& m) { return model_to_json(m).dump(2) + "\n"; }

inline ResolverModel parse_model(std::string_view text) {
  if (find_invalid_utf8(text) != std::string_view::npos) {
    throw ParseError(1, "invalid UTF-8");
  }
  try {
    return model_from_json(Json::parse(text));
  } catch (const Json::parse_error& e) {
    throw ParseError(1, e.what());
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Pluggable backend used by the resolve-and-aggregate loop.

class FeatureResolver {
 public:
  using Model = ResolverModel;

  explicit FeatureResolver(ResolverConfig config = {},
                           const WordLists& words = WordLists::defaults())
      : config_(config), words_(&words) {}

  // `seed` replaces the configured training seed when given.
  Model train(const Corpus& corpus, const CorpusLabels& labels, int iteration,
              const std::string& source, std::optional<std::uint64_t> seed = std::nullopt) const {
    ResolverConfig cfg = config_;
    if (seed) cfg.seed = *seed;
    Model m = anacrowd::train(corpus, labels, cfg, *words_);
    m.iteration = iteration;
    m.source = source;
    return m;
  }

  CorpusLabels predict(const Model& m, const Corpus& corpus, int jobs) const {
    return predict_corpus(m, corpus, *words_, jobs);
  }

  std::string serialize(const Model& m) const { return serialize_model(m); }

 private:
  ResolverConfig config_;
  const WordLists* words_;
};

}  // namespace anacrowd
