#pragma once

// Domain model shared by every module: documents, markables, anaphoric
// interpretations, crowd judgments, and the derived entity clustering.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "anacrowd/errors.hpp"

namespace anacrowd {

using MarkableId = int;
using DocId = std::string;

// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start; }
  bool contains(int token) const { return token >= start && token < end; }
  auto operator<=>(const Span&) const = default;
};

enum class Genre : std::uint8_t { Gutenberg, Wikipedia, Other };

inline constexpr Genre kAllGenres[] = {Genre::Gutenberg, Genre::Wikipedia,
                                       Genre::Other};

inline std::string_view to_string(Genre g) {
  switch (g) {
    case Genre::Gutenberg: return "Gutenberg";
    case Genre::Wikipedia: return "Wikipedia";
    case Genre::Other: return "Other";
  }
  return "Other";
}

inline std::optional<Genre> parse_genre(std::string_view s) {
  for (Genre g : kAllGenres) {
    if (to_string(g) == s) return g;
  }
  return std::nullopt;
}

struct Markable {
  MarkableId id = 0;
  Span span;
  std::optional<int> head;

  bool operator==(const Markable&) const = default;
};

struct Document {
  DocId id;
  Genre genre = Genre::Other;
  std::vector<std::string> tokens;
  std::vector<Span> sentence_bounds;
  std::vector<Markable> markables;

  int token_count() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Document&) const = default;
};

// ---------------------------------------------------------------------------
// Interpretations

enum class InterpClass : std::uint8_t { DN = 0, DO = 1, EX = 2, PR = 3 };
inline constexpr std::size_t kNumClasses = 4;
inline constexpr InterpClass kAllClasses[] = {InterpClass::DN, InterpClass::DO,
                                              InterpClass::EX, InterpClass::PR};

inline std::string_view to_string(InterpClass c) {
  switch (c) {
    case InterpClass::DN: return "DN";
    case InterpClass::DO: return "DO";
    case InterpClass::EX: return "EX";
    case InterpClass::PR: return "PR";
  }
  return "DN";
}

inline std::optional<InterpClass> parse_interp_class(std::string_view s) {
  for (InterpClass c : kAllClasses) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

struct DiscourseNew {
  auto operator<=>(const DiscourseNew&) const = default;
};

// Antecedents are kept sorted and unique; more than one is a split-antecedent
// plural.
struct DiscourseOld {
  std::vector<MarkableId> antecedents;
  auto operator<=>(const DiscourseOld&) const = default;
};

struct Expletive {
  auto operator<=>(const Expletive&) const = default;
};

struct Predicative {
  std::optional<MarkableId> anchor;
  auto operator<=>(const Predicative&) const = default;
};

// Alternative order matches InterpClass.
using Interpretation =
    std::variant<DiscourseNew, DiscourseOld, Expletive, Predicative>;

inline Interpretation make_dn() { return DiscourseNew{}; }
inline Interpretation make_ex() { return Expletive{}; }
inline Interpretation make_pr(std::optional<MarkableId> anchor = std::nullopt) {
  return Predicative{anchor};
}

inline Interpretation make_do(std::vector<MarkableId> antecedents) {
  if (antecedents.empty()) {
    throw ValidationError("discourse-old interpretation needs an antecedent");
  }
  std::sort(antecedents.begin(), antecedents.end());
  antecedents.erase(std::unique(antecedents.begin(), antecedents.end()),
                    antecedents.end());
  return DiscourseOld{std::move(antecedents)};
}

inline InterpClass interpretation_class(const Interpretation& i) {
  return static_cast<InterpClass>(i.index());
}

inline const DiscourseOld* as_do(const Interpretation& i) {
  return std::get_if<DiscourseOld>(&i);
}

inline bool is_split_antecedent(const Interpretation& i) {
  const auto* d = as_do(i);
  return d != nullptr && d->antecedents.size() > 1;
}

inline bool is_non_referring(const Interpretation& i) {
  auto c = interpretation_class(i);
  return c == InterpClass::EX || c == InterpClass::PR;
}

// Every markable id an interpretation points at.
inline std::vector<MarkableId> referenced_ids(const Interpretation& i) {
  if (const auto* d = as_do(i)) return d->antecedents;
  if (const auto* p = std::get_if<Predicative>(&i)) {
    if (p->anchor) return {*p->anchor};
  }
  return {};
}

inline std::string to_string(const Interpretation& i) {
  std::string out(to_string(interpretation_class(i)));
  if (const auto* d = as_do(i)) {
    out += '(';
    for (std::size_t k = 0; k < d->antecedents.size(); ++k) {
      if (k) out += ',';
      out += std::to_string(d->antecedents[k]);
    }
    out += ')';
  } else if (const auto* p = std::get_if<Predicative>(&i)) {
    out += '(';
    out += p->anchor ? std::to_string(*p->anchor) : std::string("-");
    out += ')';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judgments

enum class JudgmentKind : std::uint8_t { Annotation, Validation };

struct Judgment {
  std::string player;
  DocId doc;
  MarkableId markable = 0;
  Interpretation interpretation;
  JudgmentKind kind = JudgmentKind::Annotation;
  int polarity = +1;

  bool operator==(const Judgment&) const = default;
};

using JudgmentLog = std::vector<Judgment>;

// Identifies a markable across a corpus.
struct MarkableKey {
  DocId doc;
  MarkableId markable = 0;
  auto operator<=>(const MarkableKey&) const = default;
};

using LabelMap = std::map<MarkableId, Interpretation>;

// ---------------------------------------------------------------------------
// Document validation and indexing

// Position of each markable in document order.
class MarkableIndex {
 public:
  explicit MarkableIndex(const Document& doc) {
    for (std::size_t i = 0; i < doc.markables.size(); ++i) {
      pos_.emplace(doc.markables[i].id, i);
    }
  }

  std::optional<std::size_t> find(MarkableId id) const {
    auto it = pos_.find(id);
    if (it == pos_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(MarkableId id) const { return pos_.count(id) > 0; }

 private:
  std::unordered_map<MarkableId, std::size_t> pos_;
};

// Throws ValidationError naming the document (and markable) on any broken
// structural invariant. Markables must be listed in document order, i.e. with
// non-decreasing start offsets.
inline void validate_document(const Document& doc) {
  const auto fail = [&](const std::string& what) {
    throw ValidationError("document '" + doc.id + "': " + what);
  };
  if (doc.id.empty()) fail("empty document id");
  for (std::size_t t = 0; t < doc.tokens.size(); ++t) {
    const std::string& tok = doc.tokens[t];
    if (tok.empty() || tok.find_first_of("\t\n\r") != std::string::npos) {
      fail("token " + std::to_string(t) + " is empty or contains tab/newline");
    }
  }
  int next = 0;
  for (const Span& s : doc.sentence_bounds) {
    if (s.start != next || s.end <= s.start) {
      fail("sentence bounds do not partition the tokens");
    }
    next = s.end;
  }
  if (next != doc.token_count()) {
    fail("sentence bounds do not partition the tokens");
  }
  std::set<MarkableId> seen;
  int last_start = 0;
  for (const Markable& m : doc.markables) {
    const std::string who = "markable " + std::to_string(m.id) + ": ";
    if (!seen.insert(m.id).second) fail(who + "duplicate id");
    if (m.span.start < 0 || m.span.start >= m.span.end ||
        m.span.end > doc.token_count()) {
      fail(who + "span out of range");
    }
    if (m.head && !m.span.contains(*m.head)) fail(who + "head outside span");
    if (m.span.start < last_start) fail(who + "markables not in document order");
    last_start = m.span.start;
  }
}

// Checks one label of a markable against its document: referenced ids exist
// and discourse-old antecedents precede the markable.
inline void validate_label(const Document& doc, const MarkableIndex& index,
                           MarkableId markable, const Interpretation& label) {
  const auto pos = index.find(markable);
  const std::string who =
      "document '" + doc.id + "', markable " + std::to_string(markable) + ": ";
  if (!pos) throw ValidationError(who + "unknown markable");
  if (const auto* d = as_do(label)) {
    if (d->antecedents.empty()) throw ValidationError(who + "empty antecedent set");
    for (MarkableId a : d->antecedents) {
      const auto apos = index.find(a);
      if (!apos) {
        throw ValidationError(who + "unknown antecedent " + std::to_string(a));
      }
      if (*apos >= *pos) {
        throw ValidationError(who + "antecedent " + std::to_string(a) +
                              " does not precede the markable");
      }
    }
  } else if (const auto* p = std::get_if<Predicative>(&label)) {
    if (p->anchor && !index.contains(*p->anchor)) {
      throw ValidationError(who + "unknown anchor " + std::to_string(*p->anchor));
    }
  }
}

// ---------------------------------------------------------------------------
// Entity clusters

using Clusters = std::vector<std::vector<MarkableId>>;

struct ClusterSet {
  // Each cluster sorted by id; clusters ordered by their smallest id.
  Clusters clusters;
  // EX and PR markables, sorted by id.
  std::vector<MarkableId> non_referring;
  // DO markables with more than one antecedent; these also sit in `clusters`.
  std::vector<MarkableId> split_antecedent;

  bool operator==(const ClusterSet&) const = default;
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Entities are the connected components of single-antecedent DO links.
// Split-antecedent links never merge. EX/PR markables are pulled out into the
// non-referring set after the components are formed, so a DO link through a
// non-referring markable still joins the markables on either side of it.
inline ClusterSet derive_clusters(const Document& doc, const LabelMap& labels) {
  const MarkableIndex index(doc);
  for (const auto& [id, label] : labels) {
    if (!index.contains(id)) {
      throw StructuralError("document '" + doc.id + "': label for unknown markable " +
                            std::to_string(id));
    }
    for (MarkableId ref : referenced_ids(label)) {
      if (!index.contains(ref)) {
        throw StructuralError("document '" + doc.id + "', markable " +
                              std::to_string(id) + ": reference to unknown markable " +
                              std::to_string(ref));
      }
    }
  }
  const std::size_t n = doc.markables.size();
  detail::DisjointSets sets(n);
  ClusterSet out;
  std::vector<const Interpretation*> label_of(n, nullptr);
  for (std::size_t i = 0; i < n; ++i) {
    const MarkableId id = doc.markables[i].id;
    auto it = labels.find(id);
    if (it == labels.end()) {
      throw StructuralError("document '" + doc.id + "': markable " +
                            std::to_string(id) + " has no label");
    }
    label_of[i] = &it->second;
    if (const auto* d = as_do(it->second)) {
      if (d->antecedents.size() == 1) {
        sets.unite(i, *index.find(d->antecedents.front()));
      } else {
        out.split_antecedent.push_back(id);
      }
    }
  }
  std::map<std::size_t, std::vector<MarkableId>> by_root;
  for (std::size_t i = 0; i < n; ++i) {
    const MarkableId id = doc.markables[i].id;
    if (is_non_referring(*label_of[i])) {
      out.non_referring.push_back(id);
    } else {
      by_root[sets.find(i)].push_back(id);
    }
  }
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    out.clusters.push_back(std::move(members));
  }
  std::sort(out.clusters.begin(), out.clusters.end());
  std::sort(out.non_referring.begin(), out.non_referring.end());
  std::sort(out.split_antecedent.begin(), out.split_antecedent.end());
  return out;
}

// ---------------------------------------------------------------------------
// Completeness

struct CompletionPolicy {
  int min_annotations = 8;
  int min_validations_per_interpretation = 4;
  // When false, only markables with two or more distinct annotated
  // interpretations need validations (the game only sends disputed markables
  // to validation).
  bool validate_undisputed = false;

  void check() const {
    if (min_annotations < 1 || min_validations_per_interpretation < 1) {
      throw ConfigError("completion policy thresholds must be >= 1");
    }
  }
};

// Counts distinct players. `judgments` should be restricted to `doc`; records
// for other documents are ignored.
inline bool is_complete(const Document& doc, const JudgmentLog& judgments,
                        const CompletionPolicy& policy) {
  struct Tally {
    std::set<std::string> annotators;
    std::map<Interpretation, std::set<std::string>> validators;
    std::set<Interpretation> annotated;
  };
  std::unordered_map<MarkableId, Tally> tally;
  for (const Judgment& j : judgments) {
    if (j.doc != doc.id) continue;
    Tally& t = tally[j.markable];
    if (j.kind == JudgmentKind::Annotation) {
      t.annotators.insert(j.player);
      t.annotated.insert(j.interpretation);
    } else {
      t.validators[j.interpretation].insert(j.player);
    }
  }
  for (const Markable& m : doc.markables) {
    auto it = tally.find(m.id);
    if (it == tally.end()) return false;
    const Tally& t = it->second;
    if (static_cast<int>(t.annotators.size()) < policy.min_annotations) return false;
    if (!policy.validate_undisputed && t.annotated.size() < 2) continue;
    for (const Interpretation& i : t.annotated) {
      auto v = t.validators.find(i);
      const int count = v == t.validators.end() ? 0 : static_cast<int>(v->second.size());
      if (count < policy.min_validations_per_interpretation) return false;
    }
  }
  return true;
}

}  // namespace anacrowd
