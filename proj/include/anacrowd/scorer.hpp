#pragma once

// Coreference evaluation: MUC, B-cubed and entity CEAF (phi4), their CoNLL
// average, and precision/recall/F1 on non-referring markables. Scores can be
// computed per document or micro-averaged over a corpus.

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "anacrowd/core.hpp"
#include "anacrowd/hungarian.hpp"

namespace anacrowd {

// Precision, recall and F1 in percent.
struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_of(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

// Numerators and denominators, kept separate so documents can be summed.
struct MetricCounts {
  double p_num = 0.0, p_den = 0.0, r_num = 0.0, r_den = 0.0;

  MetricCounts& operator+=(const MetricCounts& o) {
    p_num += o.p_num;
    p_den += o.p_den;
    r_num += o.r_num;
    r_den += o.r_den;
    return *this;
  }

  Prf prf() const {
    const double p = 100.0 * safe_ratio(p_num, p_den);
    const double r = 100.0 * safe_ratio(r_num, r_den);
    return {p, r, f1_of(p, r)};
  }
};

namespace detail {

inline std::unordered_map<MarkableId, std::size_t> cluster_of(const Clusters& cs) {
  std::unordered_map<MarkableId, std::size_t> out;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    for (MarkableId m : cs[i]) out[m] = i;
  }
  return out;
}

// Sum over `a` clusters of (|A| - |partition of A by b|) and (|A| - 1).
// Mentions of A missing from b each count as their own part.
inline std::pair<double, double> muc_side(const Clusters& a, const Clusters& b) {
  const auto where = cluster_of(b);
  double num = 0.0, den = 0.0;
  for (const auto& cluster : a) {
    std::vector<std::size_t> parts;
    std::size_t twinless = 0;
    for (MarkableId m : cluster) {
      auto it = where.find(m);
      if (it == where.end()) {
        ++twinless;
      } else {
        parts.push_back(it->second);
      }
    }
    std::sort(parts.begin(), parts.end());
    parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
    const double size = static_cast<double>(cluster.size());
    num += size - static_cast<double>(parts.size() + twinless);
    den += size - 1.0;
  }
  return {num, den};
}

// Sum over mentions of `a` of |A(m) & B(m)| / |A(m)|, and the mention count.
// A mention missing from b earns nothing.
inline std::pair<double, double> b3_side(const Clusters& a, const Clusters& b) {
  const auto where = cluster_of(b);
  double num = 0.0, den = 0.0;
  for (const auto& cluster : a) {
    std::map<std::size_t, std::size_t> overlap;
    for (MarkableId m : cluster) {
      auto it = where.find(m);
      if (it != where.end()) ++overlap[it->second];
    }
    const double size = static_cast<double>(cluster.size());
    for (const auto& [idx, n] : overlap) {
      num += static_cast<double>(n) * static_cast<double>(n) / size;
    }
    den += size;
  }
  return {num, den};
}

}  // namespace detail

inline MetricCounts muc_counts(const Clusters& key, const Clusters& response) {
  const auto [r_num, r_den] = detail::muc_side(key, response);
  const auto [p_num, p_den] = detail::muc_side(response, key);
  return {p_num, p_den, r_num, r_den};
}

inline MetricCounts b_cubed_counts(const Clusters& key, const Clusters& response) {
  const auto [r_num, r_den] = detail::b3_side(key, response);
  const auto [p_num, p_den] = detail::b3_side(response, key);
  return {p_num, p_den, r_num, r_den};
}

inline double phi4(const std::vector<MarkableId>& k, const std::vector<MarkableId>& r) {
  std::size_t common = 0;
  for (MarkableId m : k) {
    if (std::find(r.begin(), r.end(), m) != r.end()) ++common;
  }
  return 2.0 * static_cast<double>(common) / static_cast<double>(k.size() + r.size());
}

// Total phi4 similarity of the best one-to-one alignment. Clusters that share
// no mention have zero similarity, so the alignment is solved separately on
// each connected component of the overlap graph.
inline double ceaf_e_similarity(const Clusters& key, const Clusters& response) {
  if (key.empty() || response.empty()) return 0.0;
  const auto where = detail::cluster_of(response);
  const std::size_t nk = key.size();
  detail::DisjointSets components(nk + response.size());
  std::vector<std::map<std::size_t, std::size_t>> overlap(nk);
  for (std::size_t i = 0; i < nk; ++i) {
    for (MarkableId m : key[i]) {
      if (auto it = where.find(m); it != where.end()) {
        ++overlap[i][it->second];
        components.unite(i, nk + it->second);
      }
    }
  }
  std::map<std::size_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
  for (std::size_t i = 0; i < nk; ++i) {
    if (!overlap[i].empty()) groups[components.find(i)].first.push_back(i);
  }
  for (std::size_t j = 0; j < response.size(); ++j) {
    groups[components.find(nk + j)].second.push_back(j);
  }
  double total = 0.0;
  for (const auto& [root, members] : groups) {
    const auto& [rows, cols] = members;
    if (rows.empty() || cols.empty()) continue;
    std::vector<std::vector<double>> w(rows.size(), std::vector<double>(cols.size(), 0.0));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = 0; b < cols.size(); ++b) {
        auto it = overlap[rows[a]].find(cols[b]);
        if (it == overlap[rows[a]].end()) continue;
        w[a][b] = 2.0 * static_cast<double>(it->second) /
                  static_cast<double>(key[rows[a]].size() + response[cols[b]].size());
      }
    }
    total += max_weight_assignment(w).total;
  }
  return total;
}

inline MetricCounts ceaf_e_counts(const Clusters& key, const Clusters& response) {
  const double sim = ceaf_e_similarity(key, response);
  return {sim, static_cast<double>(response.size()), sim, static_cast<double>(key.size())};
}

inline Prf muc(const Clusters& key, const Clusters& response) {
  return muc_counts(key, response).prf();
}
inline Prf b_cubed(const Clusters& key, const Clusters& response) {
  return b_cubed_counts(key, response).prf();
}
inline Prf ceaf_e(const Clusters& key, const Clusters& response) {
  return ceaf_e_counts(key, response).prf();
}

inline Prf muc(const ClusterSet& key, const ClusterSet& response) {
  return muc(key.clusters, response.clusters);
}
inline Prf b_cubed(const ClusterSet& key, const ClusterSet& response) {
  return b_cubed(key.clusters, response.clusters);
}
inline Prf ceaf_e(const ClusterSet& key, const ClusterSet& response) {
  return ceaf_e(key.clusters, response.clusters);
}

inline Clusters without_singletons(const Clusters& cs) {
  Clusters out;
  for (const auto& c : cs) {
    if (c.size() > 1) out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

struct ScoreMode {
  bool include_singletons = true;
  // Match non-referring markables on span alone instead of span + subtype.
  bool nr_span_only = false;
};

struct ScoreReport {
  Prf muc, b3, ceafe;
  double conll = 0.0;
  Prf non_referring;
  bool include_singletons = true;
};

// Accumulates micro-averaged counts over documents.
class CorpusScorer {
 public:
  explicit CorpusScorer(ScoreMode mode = {}) : mode_(mode) {}

  void add(const Document& doc, const LabelMap& key_labels, const LabelMap& response_labels) {
    const ClusterSet key = derive_clusters(doc, key_labels);
    const ClusterSet response = derive_clusters(doc, response_labels);
    Clusters k = key.clusters, r = response.clusters;
    if (!mode_.include_singletons) {
      k = without_singletons(k);
      r = without_singletons(r);
    }
    muc_ += muc_counts(k, r);
    b3_ += b_cubed_counts(k, r);
    ceafe_ += ceaf_e_counts(k, r);

    using NrKey = std::tuple<int, int, int>;
    const MarkableIndex index(doc);
    const auto nr_keys = [&](const ClusterSet& cs, const LabelMap& labels) {
      std::vector<NrKey> out;
      for (MarkableId id : cs.non_referring) {
        const Markable& m = doc.markables[*index.find(id)];
        const int sub = mode_.nr_span_only
                            ? 0
                            : static_cast<int>(interpretation_class(labels.at(id)));
        out.emplace_back(m.span.start, m.span.end, sub);
      }
      std::sort(out.begin(), out.end());
      return out;
    };
    const auto kn = nr_keys(key, key_labels);
    const auto rn = nr_keys(response, response_labels);
    std::vector<NrKey> common;
    std::set_intersection(kn.begin(), kn.end(), rn.begin(), rn.end(),
                          std::back_inserter(common));
    nr_ += MetricCounts{static_cast<double>(common.size()), static_cast<double>(rn.size()),
                        static_cast<double>(common.size()), static_cast<double>(kn.size())};
  }

  ScoreReport report() const {
    ScoreReport r;
    r.muc = muc_.prf();
    r.b3 = b3_.prf();
    r.ceafe = ceafe_.prf();
    r.conll = (r.muc.f1 + r.b3.f1 + r.ceafe.f1) / 3.0;
    r.non_referring = nr_.prf();
    r.include_singletons = mode_.include_singletons;
    return r;
  }

 private:
  ScoreMode mode_;
  MetricCounts muc_, b3_, ceafe_, nr_;
};

inline ScoreReport score(const LabelMap& key_labels, const LabelMap& response_labels,
                         const Document& doc, ScoreMode mode = {}) {
  CorpusScorer s(mode);
  s.add(doc, key_labels, response_labels);
  return s.report();
}

inline nlohmann::json prf_to_json(const Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

inline nlohmann::json score_report_to_json(const ScoreReport& r) {
  return {{"singletons", r.include_singletons ? "included" : "excluded"},
          {"muc", prf_to_json(r.muc)},
          {"bcub", prf_to_json(r.b3)},
          {"ceafe", prf_to_json(r.ceafe)},
          {"conll_f1", r.conll},
          {"non_referring", prf_to_json(r.non_referring)}};
}

// Fixed-width table, columns MUC, BCUB, CEAFE, Avg. F1, NR; one row per report.
inline std::string format_score_table(
    const std::vector<std::pair<std::string, ScoreReport>>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-20s %-20s %-20s %7s  %-20s\n", "", "MUC", "BCUB",
                "CEAFE", "Avg.", "NR");
  out += buf;
  std::snprintf(buf, sizeof buf, "%-24s", "");
  out += buf;
  for (int k = 0; k < 3; ++k) {
    std::snprintf(buf, sizeof buf, " %6s %6s %6s ", "P", "R", "F1");
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%7s  %6s %6s %6s\n", "F1", "P", "R", "F1");
  out += buf;
  for (const auto& [label, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-24.24s", label.c_str());
    out += buf;
    for (const Prf* p : {&r.muc, &r.b3, &r.ceafe}) {
      std::snprintf(buf, sizeof buf, " %6.1f %6.1f %6.1f ", p->precision, p->recall, p->f1);
      out += buf;
    }
    std::snprintf(buf, sizeof buf, "%7.1f  %6.1f %6.1f %6.1f\n", r.conll,
                  r.non_referring.precision, r.non_referring.recall, r.non_referring.f1);
    out += buf;
  }
  return out;
}

}  // namespace anacrowd
