#pragma once

// Readers and writers for the corpus, judgment-log and CoNLL interchange
// formats. Corpus and judgment files are JSON lines: a version header record
// followed by one record per line. Writers emit the canonical form (sorted
// keys, compact separators, documents in id order) so files compare
// byte-for-byte.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "anacrowd/core.hpp"
#include "anacrowd/errors.hpp"

namespace anacrowd {

using Json = nlohmann::json;

inline constexpr std::string_view kCorpusFormat = "anacrowd-corpus";
inline constexpr std::string_view kJudgmentFormat = "anacrowd-judgments";
inline constexpr int kFormatVersion = 1;

struct Corpus {
  std::vector<Document> documents;  // kept in id order
  std::map<DocId, LabelMap> gold;   // documents without gold are absent

  const Document* find(std::string_view id) const {
    auto it = std::lower_bound(
        documents.begin(), documents.end(), id,
        [](const Document& d, std::string_view key) { return d.id < key; });
    if (it == documents.end() || it->id != id) return nullptr;
    return &*it;
  }

  const LabelMap* gold_for(std::string_view id) const {
    auto it = gold.find(DocId(id));
    return it == gold.end() ? nullptr : &it->second;
  }

  std::size_t markable_count() const {
    std::size_t n = 0;
    for (const Document& d : documents) n += d.markables.size();
    return n;
  }

  std::size_t token_count() const {
    std::size_t n = 0;
    for (const Document& d : documents) n += d.tokens.size();
    return n;
  }

  void sort_documents() {
    std::sort(documents.begin(), documents.end(),
              [](const Document& a, const Document& b) { return a.id < b.id; });
  }

  bool operator==(const Corpus&) const = default;
};

// Byte offset of the first invalid UTF-8 sequence, or npos.
inline std::size_t find_invalid_utf8(std::string_view s) {
  std::size_t i = 0;
  const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(s[k]); };
  while (i < s.size()) {
    const unsigned char c = byte(i);
    std::size_t len;
    std::uint32_t cp;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return i;
    }
    if (i + len > s.size()) return i;
    for (std::size_t k = 1; k < len; ++k) {
      if ((byte(i + k) & 0xC0) != 0x80) return i;
      cp = (cp << 6) | (byte(i + k) & 0x3F);
    }
    const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                          (len == 4 && cp < 0x10000);
    if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return i;
    i += len;
  }
  return std::string_view::npos;
}

namespace detail {

// Splits into lines, remembering 1-based line numbers; skips blank lines.
inline std::vector<std::pair<std::size_t, std::string_view>> nonblank_lines(
    std::string_view text) {
  if (auto bad = find_invalid_utf8(text); bad != std::string_view::npos) {
    const auto line = 1 + std::count(text.begin(), text.begin() + bad, '\n');
    throw ParseError(static_cast<std::size_t>(line), "invalid UTF-8");
  }
  std::vector<std::pair<std::size_t, std::string_view>> out;
  std::size_t line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
    ++line;
    std::string_view l = text.substr(pos, end - pos);
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (l.find_first_not_of(" \t") != std::string_view::npos) out.emplace_back(line, l);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

[[noreturn]] inline void bad_record(const std::string& what) {
  throw std::invalid_argument(what);
}

inline void expect_keys(const Json& j, std::initializer_list<std::string_view> required,
                        std::initializer_list<std::string_view> optional = {}) {
  if (!j.is_object()) bad_record("expected a JSON object");
  for (std::string_view k : required) {
    if (!j.contains(std::string(k))) bad_record("missing key '" + std::string(k) + "'");
  }
  for (const auto& [k, v] : j.items()) {
    const bool known =
        std::find(required.begin(), required.end(), k) != required.end() ||
        std::find(optional.begin(), optional.end(), k) != optional.end();
    if (!known) bad_record("unknown key '" + k + "'");
  }
}

inline int get_int(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_number_integer()) bad_record(std::string("'") + key + "' must be an integer");
  return v.get<int>();
}

inline std::string get_string(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (!v.is_string()) bad_record(std::string("'") + key + "' must be a string");
  return v.get<std::string>();
}

inline void check_header(const Json& j, std::string_view format) {
  if (get_string(j, "format") != format) {
    bad_record("expected format '" + std::string(format) + "'");
  }
  if (get_int(j, "version") != kFormatVersion) {
    bad_record("unsupported format version " + j.at("version").dump());
  }
}

inline bool is_header(const Json& j) { return j.is_object() && j.contains("format"); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Interpretation encoding

inline Json interpretation_to_json(const Interpretation& i) {
  Json j;
  j["type"] = std::string(to_string(interpretation_class(i)));
  if (const auto* d = as_do(i)) {
    j["antecedents"] = d->antecedents;
  } else if (const auto* p = std::get_if<Predicative>(&i)) {
    j["anchor"] = p->anchor ? Json(*p->anchor) : Json(nullptr);
  }
  return j;
}

// Throws std::invalid_argument; callers attach line numbers.
inline Interpretation interpretation_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("type")) detail::bad_record("bad interpretation");
  const auto cls = parse_interp_class(detail::get_string(j, "type"));
  if (!cls) detail::bad_record("unknown interpretation type " + j.at("type").dump());
  switch (*cls) {
    case InterpClass::DN:
      detail::expect_keys(j, {"type"});
      return make_dn();
    case InterpClass::EX:
      detail::expect_keys(j, {"type"});
      return make_ex();
    case InterpClass::DO: {
      detail::expect_keys(j, {"type", "antecedents"});
      const Json& a = j.at("antecedents");
      if (!a.is_array() || a.empty()) detail::bad_record("antecedents must be a non-empty array");
      std::vector<MarkableId> ids;
      for (const Json& x : a) {
        if (!x.is_number_integer()) detail::bad_record("antecedent ids must be integers");
        ids.push_back(x.get<int>());
      }
      return make_do(std::move(ids));
    }
    case InterpClass::PR: {
      detail::expect_keys(j, {"type"}, {"anchor"});
      if (!j.contains("anchor") || j.at("anchor").is_null()) return make_pr();
      return make_pr(detail::get_int(j, "anchor"));
    }
  }
  detail::bad_record("bad interpretation");
}

// ---------------------------------------------------------------------------
// Corpus files

inline Json document_to_json(const Document& doc, const LabelMap* gold) {
  Json j;
  j["id"] = doc.id;
  j["genre"] = std::string(to_string(doc.genre));
  j["tokens"] = doc.tokens;
  Json bounds = Json::array();
  for (const Span& s : doc.sentence_bounds) bounds.push_back({s.start, s.end});
  j["sentence_bounds"] = std::move(bounds);
  Json marks = Json::array();
  for (const Markable& m : doc.markables) {
    marks.push_back({{"id", m.id},
                     {"start", m.span.start},
                     {"end", m.span.end},
                     {"head", m.head ? Json(*m.head) : Json(nullptr)}});
  }
  j["markables"] = std::move(marks);
  if (gold) {
    Json g = Json::array();
    for (const auto& [id, interp] : *gold) {
      g.push_back({{"markable", id}, {"interpretation", interpretation_to_json(interp)}});
    }
    j["gold"] = std::move(g);
  }
  return j;
}

inline std::pair<Document, std::optional<LabelMap>> document_from_json(const Json& j) {
  using detail::bad_record;
  detail::expect_keys(j, {"id", "genre", "tokens", "sentence_bounds", "markables"},
                      {"gold"});
  Document doc;
  doc.id = detail::get_string(j, "id");
  const auto genre = parse_genre(detail::get_string(j, "genre"));
  if (!genre) bad_record("unknown genre " + j.at("genre").dump());
  doc.genre = *genre;
  const Json& toks = j.at("tokens");
  if (!toks.is_array()) bad_record("'tokens' must be an array");
  for (const Json& t : toks) {
    if (!t.is_string()) bad_record("tokens must be strings");
    doc.tokens.push_back(t.get<std::string>());
  }
  const Json& bounds = j.at("sentence_bounds");
  if (!bounds.is_array()) bad_record("'sentence_bounds' must be an array");
  for (const Json& b : bounds) {
    if (!b.is_array() || b.size() != 2 || !b[0].is_number_integer() ||
        !b[1].is_number_integer()) {
      bad_record("sentence bounds must be [start, end] integer pairs");
    }
    doc.sentence_bounds.push_back({b[0].get<int>(), b[1].get<int>()});
  }
  const Json& marks = j.at("markables");
  if (!marks.is_array()) bad_record("'markables' must be an array");
  for (const Json& m : marks) {
    detail::expect_keys(m, {"id", "start", "end"}, {"head"});
    Markable mk;
    mk.id = detail::get_int(m, "id");
    mk.span = {detail::get_int(m, "start"), detail::get_int(m, "end")};
    if (m.contains("head") && !m.at("head").is_null()) mk.head = detail::get_int(m, "head");
    doc.markables.push_back(mk);
  }
  std::optional<LabelMap> gold;
  if (j.contains("gold")) {
    const Json& g = j.at("gold");
    if (!g.is_array()) bad_record("'gold' must be an array");
    gold.emplace();
    for (const Json& rec : g) {
      detail::expect_keys(rec, {"markable", "interpretation"});
      const MarkableId id = detail::get_int(rec, "markable");
      if (!gold->emplace(id, interpretation_from_json(rec.at("interpretation"))).second) {
        bad_record("duplicate gold label for markable " + std::to_string(id));
      }
    }
  }
  return {std::move(doc), std::move(gold)};
}

// Validates a document together with its gold labels (when present).
inline void validate_gold(const Document& doc, const LabelMap& gold) {
  const MarkableIndex index(doc);
  for (const auto& [id, label] : gold) validate_label(doc, index, id, label);
  for (const Markable& m : doc.markables) {
    if (!gold.count(m.id)) {
      throw ValidationError("document '" + doc.id + "', markable " +
                            std::to_string(m.id) + ": no gold label");
    }
  }
}

inline Corpus parse_corpus(std::string_view text) {
  Corpus corpus;
  bool first = true;
  for (const auto& [line, content] : detail::nonblank_lines(text)) {
    Json j;
    try {
      j = Json::parse(content);
    } catch (const Json::exception& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    try {
      if (first && detail::is_header(j)) {
        detail::expect_keys(j, {"format", "version"});
        detail::check_header(j, kCorpusFormat);
        first = false;
        continue;
      }
      first = false;
      auto [doc, gold] = document_from_json(j);
      validate_document(doc);
      if (gold) validate_gold(doc, *gold);
      if (corpus.gold.count(doc.id) ||
          std::any_of(corpus.documents.begin(), corpus.documents.end(),
                      [&](const Document& d) { return d.id == doc.id; })) {
        throw ValidationError("duplicate document id '" + doc.id + "'");
      }
      if (gold) corpus.gold.emplace(doc.id, std::move(*gold));
      corpus.documents.push_back(std::move(doc));
    } catch (const std::invalid_argument& e) {
      throw ParseError(line, e.what());
    } catch (const Json::exception& e) {
      throw ParseError(line, e.what());
    }
  }
  corpus.sort_documents();
  return corpus;
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::vector<const Document*> docs;
  for (const Document& d : corpus.documents) docs.push_back(&d);
  std::sort(docs.begin(), docs.end(),
            [](const Document* a, const Document* b) { return a->id < b->id; });
  std::string out;
  out += Json{{"format", kCorpusFormat}, {"version", kFormatVersion}}.dump();
  out += '\n';
  for (const Document* d : docs) {
    out += document_to_json(*d, corpus.gold_for(d->id)).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Judgment logs

inline std::string_view to_string(JudgmentKind k) {
  return k == JudgmentKind::Annotation ? "annotation" : "validation";
}

inline Json judgment_to_json(const Judgment& j) {
  return {{"doc", j.doc},
          {"markable", j.markable},
          {"player", j.player},
          {"kind", std::string(to_string(j.kind))},
          {"polarity", j.polarity},
          {"interpretation", interpretation_to_json(j.interpretation)}};
}

inline JudgmentLog parse_judgments(std::string_view text) {
  JudgmentLog log;
  bool first = true;
  for (const auto& [line, content] : detail::nonblank_lines(text)) {
    Json j;
    try {
      j = Json::parse(content);
    } catch (const Json::exception& e) {
      throw ParseError(line, std::string("malformed JSON: ") + e.what());
    }
    Judgment rec;
    try {
      if (first && detail::is_header(j)) {
        detail::expect_keys(j, {"format", "version"});
        detail::check_header(j, kJudgmentFormat);
        first = false;
        continue;
      }
      first = false;
      detail::expect_keys(j, {"doc", "markable", "player", "kind", "polarity",
                              "interpretation"});
      rec.doc = detail::get_string(j, "doc");
      rec.markable = detail::get_int(j, "markable");
      rec.player = detail::get_string(j, "player");
      const std::string kind = detail::get_string(j, "kind");
      if (kind == "annotation") {
        rec.kind = JudgmentKind::Annotation;
      } else if (kind == "validation") {
        rec.kind = JudgmentKind::Validation;
      } else {
        detail::bad_record("unknown judgment kind '" + kind + "'");
      }
      rec.polarity = detail::get_int(j, "polarity");
      if (rec.polarity != 1 && rec.polarity != -1) {
        detail::bad_record("polarity must be 1 or -1");
      }
      rec.interpretation = interpretation_from_json(j.at("interpretation"));
    } catch (const std::invalid_argument& e) {
      throw ParseError(line, e.what());
    } catch (const ValidationError& e) {
      throw ParseError(line, e.what());
    } catch (const Json::exception& e) {
      throw ParseError(line, e.what());
    }
    if (rec.kind == JudgmentKind::Annotation && rec.polarity != 1) {
      throw ValidationError("line " + std::to_string(line) +
                            ": annotation with negative polarity");
    }
    log.push_back(std::move(rec));
  }
  return log;
}

inline std::string serialize_judgments(const JudgmentLog& log) {
  std::string out;
  out += Json{{"format", kJudgmentFormat}, {"version", kFormatVersion}}.dump();
  out += '\n';
  for (const Judgment& j : log) {
    out += judgment_to_json(j).dump();
    out += '\n';
  }
  return out;
}

// Every judgment names a document and markable of `corpus`, and its
// interpretation is a valid label there.
inline void check_referential_integrity(const Corpus& corpus, const JudgmentLog& log) {
  std::map<DocId, MarkableIndex> indices;
  for (std::size_t k = 0; k < log.size(); ++k) {
    const Judgment& j = log[k];
    const Document* doc = corpus.find(j.doc);
    const std::string where = "judgment " + std::to_string(k + 1) + ": ";
    if (!doc) throw StructuralError(where + "unknown document '" + j.doc + "'");
    auto it = indices.find(j.doc);
    if (it == indices.end()) it = indices.emplace(j.doc, MarkableIndex(*doc)).first;
    try {
      validate_label(*doc, it->second, j.markable, j.interpretation);
    } catch (const ValidationError& e) {
      throw StructuralError(where + e.what());
    }
  }
}

// ---------------------------------------------------------------------------
// CoNLL export

// One line per token: document id, token index, token form, coreference
// column; a blank line closes every sentence. Entities are numbered from 1 in
// cluster order, then each non-referring markable gets its own number with an
// "=EX" or "=PR" suffix on its opening bracket. Markables sharing a span are
// written in id order.
inline std::string export_conll(const Document& doc, const LabelMap& labels) {
  const ClusterSet cs = derive_clusters(doc, labels);
  std::map<MarkableId, int> entity;
  int next = 1;
  for (const auto& c : cs.clusters) {
    for (MarkableId id : c) entity[id] = next;
    ++next;
  }
  for (MarkableId id : cs.non_referring) entity[id] = next++;

  const auto opener = [&](const Markable& m) {
    std::string s = "(" + std::to_string(entity.at(m.id));
    const Interpretation& l = labels.at(m.id);
    if (is_non_referring(l)) s += "=" + std::string(to_string(interpretation_class(l)));
    return s;
  };

  const int n = doc.token_count();
  std::vector<std::vector<const Markable*>> starts(n), ends(n);
  for (const Markable& m : doc.markables) {
    starts[m.span.start].push_back(&m);
    ends[m.span.end - 1].push_back(&m);
  }
  std::string out;
  for (const Span& sentence : doc.sentence_bounds) {
    for (int t = sentence.start; t < sentence.end; ++t) {
      std::vector<std::string> parts;
      auto opens = starts[t];
      std::sort(opens.begin(), opens.end(), [](const Markable* a, const Markable* b) {
        return std::tuple(-a->span.end, a->id) < std::tuple(-b->span.end, b->id);
      });
      for (const Markable* m : opens) {
        parts.push_back(m->span.length() == 1 ? opener(*m) + ")" : opener(*m));
      }
      auto closes = ends[t];
      std::sort(closes.begin(), closes.end(), [](const Markable* a, const Markable* b) {
        return std::tuple(-a->span.start, -a->id) < std::tuple(-b->span.start, -b->id);
      });
      for (const Markable* m : closes) {
        if (m->span.length() > 1) parts.push_back(std::to_string(entity.at(m->id)) + ")");
      }
      std::string col;
      for (std::size_t k = 0; k < parts.size(); ++k) {
        if (k) col += '|';
        col += parts[k];
      }
      if (col.empty()) col = "-";
      out += doc.id + '\t' + std::to_string(t) + '\t' + doc.tokens[t] + '\t' + col + '\n';
    }
    out += '\n';
  }
  return out;
}

struct ConllMention {
  DocId doc;
  Span span;
  int entity = 0;
  std::optional<InterpClass> non_referring;
  auto operator<=>(const ConllMention&) const = default;
};

// Reads back the coreference column written by export_conll. Mentions come
// back sorted.
inline std::vector<ConllMention> parse_conll(std::string_view text) {
  std::vector<ConllMention> out;
  struct Open {
    int start;
    std::optional<InterpClass> nr;
  };
  std::map<std::pair<DocId, int>, std::vector<Open>> open;
  for (const auto& [line, content] : detail::nonblank_lines(text)) {
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = content.find('\t', pos);
      cols.emplace_back(content.substr(pos, tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 4) throw ParseError(line, "expected 4 tab-separated columns");
    const DocId& doc = cols[0];
    int token = 0;
    try {
      token = std::stoi(cols[1]);
    } catch (const std::exception&) {
      throw ParseError(line, "bad token index");
    }
    if (cols[3] == "-") continue;
    std::string_view col = cols[3];
    while (!col.empty()) {
      const std::size_t bar = col.find('|');
      std::string_view part = col.substr(0, bar);
      col = bar == std::string_view::npos ? std::string_view{} : col.substr(bar + 1);
      const bool opens = !part.empty() && part.front() == '(';
      const bool closes = !part.empty() && part.back() == ')';
      if (opens) part.remove_prefix(1);
      if (closes) part.remove_suffix(1);
      std::optional<InterpClass> nr;
      if (const std::size_t eq = part.find('='); eq != std::string_view::npos) {
        nr = parse_interp_class(part.substr(eq + 1));
        if (!nr) throw ParseError(line, "bad non-referring tag");
        part = part.substr(0, eq);
      }
      int e = 0;
      try {
        e = std::stoi(std::string(part));
      } catch (const std::exception&) {
        throw ParseError(line, "bad entity number");
      }
      if (opens && closes) {
        out.push_back({doc, {token, token + 1}, e, nr});
      } else if (opens) {
        open[{doc, e}].push_back({token, nr});
      } else if (closes) {
        auto& stack = open[{doc, e}];
        if (stack.empty()) throw ParseError(line, "unmatched closing bracket");
        out.push_back({doc, {stack.back().start, token + 1}, e, stack.back().nr});
        stack.pop_back();
      } else {
        throw ParseError(line, "bad coreference field");
      }
    }
  }
  for (const auto& [key, stack] : open) {
    if (!stack.empty()) throw ParseError(0, "unclosed bracket for entity " + std::to_string(key.second));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Corpus statistics

struct GenreStats {
  std::size_t documents = 0;
  std::size_t tokens = 0;
  std::size_t markables = 0;
  // Markables in clusters of size > 1 under the gold labels; only counted for
  // documents that carry gold.
  std::size_t non_singleton = 0;

  GenreStats& operator+=(const GenreStats& o) {
    documents += o.documents;
    tokens += o.tokens;
    markables += o.markables;
    non_singleton += o.non_singleton;
    return *this;
  }
};

struct CorpusStats {
  std::map<Genre, GenreStats> by_genre;
  GenreStats total;
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  for (const Document& d : corpus.documents) {
    GenreStats g;
    g.documents = 1;
    g.tokens = d.tokens.size();
    g.markables = d.markables.size();
    if (const LabelMap* gold = corpus.gold_for(d.id)) {
      for (const auto& c : derive_clusters(d, *gold).clusters) {
        if (c.size() > 1) g.non_singleton += c.size();
      }
    }
    st.by_genre[d.genre] += g;
    st.total += g;
  }
  return st;
}

// Docs / Tokens / Markables (non-singletons) per genre plus a total row.
inline std::string format_stats_table(const CorpusStats& st) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %8s %10s %22s\n", "", "Docs", "Tokens", "Markables");
  out += buf;
  const auto row = [&](std::string_view name, const GenreStats& g) {
    const std::string marks =
        std::to_string(g.markables) + " (" + std::to_string(g.non_singleton) + ")";
    std::snprintf(buf, sizeof buf, "%-12.*s %8zu %10zu %22s\n", static_cast<int>(name.size()),
                  name.data(), g.documents, g.tokens, marks.c_str());
    out += buf;
  };
  for (const auto& [genre, g] : st.by_genre) row(to_string(genre), g);
  row("Total", st.total);
  return out;
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

}  // namespace anacrowd
