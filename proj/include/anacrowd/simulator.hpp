#pragma once

// Seeded crowd simulator: planted-gold corpora from a rich-get-richer entity
// process, and game players who annotate and validate under the completion
// protocol. Every draw descends from the master seed via named substreams.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "anacrowd/config.hpp"
#include "anacrowd/core.hpp"
#include "anacrowd/corpus_io.hpp"
#include "anacrowd/mpa.hpp"
#include "anacrowd/pipeline.hpp"
#include "anacrowd/rng.hpp"

namespace anacrowd {

struct SimConfig {
  int documents = 60;
  int dev_documents = 12;
  std::array<double, 3> genre_mix{0.45, 0.40, 0.15};  // Gutenberg, Wikipedia, Other
  int short_min_tokens = 150;
  int short_max_tokens = 1200;
  int long_min_tokens = 2001;
  int long_max_tokens = 3000;
  double long_fraction = 0.345;
  double markable_density = 0.28;  // markables per token
  double concentration = 25.0;     // entity process; larger means shorter chains
  double ex_fraction = 0.02;
  double pr_fraction = 0.03;
  double split_fraction = 0.01;
  double pronoun_rate = 0.5;  // re-mentions within a sentence of the last one
  // Re-mentions pick an entity with weight size * exp(-gap / recency), gap in
  // sentences since its last mention. The chain-length law depends only on
  // the concentration.
  double recency = 8.0;

  int players = 60;
  double sensitivity_min = 0.55, sensitivity_max = 0.9;
  double specificity_min = 0.55, specificity_max = 0.9;
  // Rows: true class DN, DO, EX, PR. Columns: wrong answer class. The DO
  // column on the DO row is a wrong antecedent.
  std::array<std::array<double, kNumClasses>, kNumClasses> confusion{{
      {0.0, 0.85, 0.05, 0.10},
      {0.40, 0.55, 0.02, 0.03},
      {0.5, 0.5, 0.0, 0.0},
      {0.4, 0.6, 0.0, 0.0},
  }};
  double distractor_decay = 0.6;  // weight ratio between consecutive candidates

  double complete_avg = 20.0;
  double incomplete_avg = 7.7;
  double complete_fraction = 0.72;
  double unjudged_fraction = 0.005;  // markables left unplayed in incomplete documents
  CompletionPolicy policy;

  double yearly_rate = 334000.0;
  std::uint64_t seed = 42;

  void check() const {
    const auto frac = [](double x, const char* name) {
      if (!(x >= 0.0 && x <= 1.0)) throw ConfigError(std::string("sim.") + name + " must lie in [0,1]");
    };
    frac(long_fraction, "long_fraction");
    frac(ex_fraction, "ex_fraction");
    frac(pr_fraction, "pr_fraction");
    frac(split_fraction, "split_fraction");
    frac(pronoun_rate, "pronoun_rate");
    frac(complete_fraction, "complete_fraction");
    frac(unjudged_fraction, "unjudged_fraction");
    frac(sensitivity_min, "sensitivity_min");
    frac(sensitivity_max, "sensitivity_max");
    frac(specificity_min, "specificity_min");
    frac(specificity_max, "specificity_max");
    if (ex_fraction + pr_fraction + split_fraction > 0.5) {
      throw ConfigError("sim: EX, PR and split fractions leave too few referring markables");
    }
    if (documents < 0 || dev_documents < 0) throw ConfigError("sim: document counts must be >= 0");
    if (short_min_tokens < 1 || short_max_tokens < short_min_tokens || long_min_tokens < 1 ||
        long_max_tokens < long_min_tokens) {
      throw ConfigError("sim: invalid token ranges");
    }
    if (!(markable_density > 0.0 && markable_density <= 0.45)) {
      throw ConfigError("sim.markable_density must lie in (0, 0.45]");
    }
    if (!(concentration > 0.0)) throw ConfigError("sim.concentration must be > 0");
    if (!(recency > 0.0)) throw ConfigError("sim.recency must be > 0");
    if (!(complete_avg > 0.0 && incomplete_avg > 0.0 && yearly_rate > 0.0)) {
      throw ConfigError("sim: averages and rates must be positive");
    }
    if (sensitivity_min > sensitivity_max || specificity_min > specificity_max) {
      throw ConfigError("sim: skill ranges must have min <= max");
    }
    double mix = 0.0;
    for (double g : genre_mix) {
      if (g < 0.0) throw ConfigError("sim.genre_mix weights must be >= 0");
      mix += g;
    }
    if (!(mix > 0.0)) throw ConfigError("sim.genre_mix must have a positive weight");
    for (const auto& row : confusion) {
      for (double w : row) {
        if (w < 0.0) throw ConfigError("sim.confusion weights must be >= 0");
      }
    }
    policy.check();
    if (players < policy.min_annotations + policy.min_validations_per_interpretation) {
      throw ConfigError("sim.players is too small for the completion thresholds");
    }
  }
};

inline Json to_json(const SimConfig& c) {
  Json confusion = Json::array();
  for (const auto& row : c.confusion) confusion.push_back(row);
  return {{"documents", c.documents},
          {"dev_documents", c.dev_documents},
          {"genre_mix", c.genre_mix},
          {"short_min_tokens", c.short_min_tokens},
          {"short_max_tokens", c.short_max_tokens},
          {"long_min_tokens", c.long_min_tokens},
          {"long_max_tokens", c.long_max_tokens},
          {"long_fraction", c.long_fraction},
          {"markable_density", c.markable_density},
          {"concentration", c.concentration},
          {"ex_fraction", c.ex_fraction},
          {"pr_fraction", c.pr_fraction},
          {"split_fraction", c.split_fraction},
          {"pronoun_rate", c.pronoun_rate},
          {"recency", c.recency},
          {"players", c.players},
          {"sensitivity_min", c.sensitivity_min},
          {"sensitivity_max", c.sensitivity_max},
          {"specificity_min", c.specificity_min},
          {"specificity_max", c.specificity_max},
          {"confusion", confusion},
          {"distractor_decay", c.distractor_decay},
          {"complete_avg", c.complete_avg},
          {"incomplete_avg", c.incomplete_avg},
          {"complete_fraction", c.complete_fraction},
          {"unjudged_fraction", c.unjudged_fraction},
          {"policy", to_json(c.policy)},
          {"yearly_rate", c.yearly_rate},
          {"seed", c.seed}};
}

inline void read_json(ConfigReader& r, SimConfig& c) {
  r.get("documents", c.documents)
      .get("dev_documents", c.dev_documents)
      .get("genre_mix", c.genre_mix)
      .get("short_min_tokens", c.short_min_tokens)
      .get("short_max_tokens", c.short_max_tokens)
      .get("long_min_tokens", c.long_min_tokens)
      .get("long_max_tokens", c.long_max_tokens)
      .get("long_fraction", c.long_fraction)
      .get("markable_density", c.markable_density)
      .get("concentration", c.concentration)
      .get("ex_fraction", c.ex_fraction)
      .get("pr_fraction", c.pr_fraction)
      .get("split_fraction", c.split_fraction)
      .get("pronoun_rate", c.pronoun_rate)
      .get("recency", c.recency)
      .get("players", c.players)
      .get("sensitivity_min", c.sensitivity_min)
      .get("sensitivity_max", c.sensitivity_max)
      .get("specificity_min", c.specificity_min)
      .get("specificity_max", c.specificity_max)
      .get("confusion", c.confusion)
      .get("distractor_decay", c.distractor_decay)
      .get("complete_avg", c.complete_avg)
      .get("incomplete_avg", c.incomplete_avg)
      .get("complete_fraction", c.complete_fraction)
      .get("unjudged_fraction", c.unjudged_fraction)
      .nested("policy", [&](ConfigReader& s) { read_json(s, c.policy); })
      .get("yearly_rate", c.yearly_rate)
      .get("seed", c.seed);
}

inline SimConfig sim_config_from_json(const Json& j) {
  SimConfig c;
  ConfigReader r(j, "sim");
  read_json(r, c);
  r.finish();
  c.check();
  return c;
}

// ---------------------------------------------------------------------------
// Corpus generation

namespace detail {

// Synthetic given names, built from syllable pairs; even entries are
// male, odd entries female. Gender is visible only through the pronouns that
// refer back to a name, so a resolver has to learn it from data.
inline const std::vector<std::string>& name_pool() {
  static const std::vector<std::string> pool = [] {
    const char* onsets = "bdfgklmnprstvz";
    const char* vowels = "aeiou";
    std::vector<std::string> syl;
    for (const char* o = onsets; *o; ++o) {
      for (const char* v = vowels; *v; ++v) syl.push_back(std::string{*o, *v});
    }
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (std::size_t k = 0; out.size() < 400; ++k) {
      std::string n = syl[(k * 7) % syl.size()] + syl[(k * 13 + k / syl.size()) % syl.size()];
      n += out.size() % 2 ? "na" : "ro";
      n[0] = static_cast<char>(n[0] - 'a' + 'A');
      if (seen.insert(n).second) out.push_back(n);
    }
    return out;
  }();
  return pool;
}

struct NounEntry {
  const char* noun;
  char gender;  // 'm', 'f' or 'n' (inanimate)
};

inline constexpr NounEntry kNouns[] = {
    {"king", 'm'},     {"queen", 'f'},    {"father", 'm'},   {"mother", 'f'},   {"monk", 'm'},
    {"nun", 'f'},      {"prince", 'm'},   {"princess", 'f'}, {"uncle", 'm'},    {"aunt", 'f'},
    {"duke", 'm'},     {"duchess", 'f'},  {"brother", 'm'},  {"sister", 'f'},   {"husband", 'm'},
    {"wife", 'f'},     {"boy", 'm'},      {"girl", 'f'},     {"waiter", 'm'},   {"waitress", 'f'},
    {"knight", 'm'},   {"maid", 'f'},     {"baron", 'm'},    {"widow", 'f'},    {"gentleman", 'm'},
    {"lady", 'f'},     {"son", 'm'},      {"daughter", 'f'}, {"actor", 'm'},    {"actress", 'f'},
    {"castle", 'n'},   {"river", 'n'},    {"letter", 'n'},   {"ship", 'n'},     {"garden", 'n'},
    {"village", 'n'},  {"window", 'n'},   {"church", 'n'},   {"bridge", 'n'},   {"island", 'n'},
    {"forest", 'n'},   {"lamp", 'n'},     {"road", 'n'},     {"city", 'n'},     {"tower", 'n'},
    {"book", 'n'},     {"market", 'n'},   {"mountain", 'n'}, {"engine", 'n'},   {"bottle", 'n'},
    {"storm", 'n'},    {"valley", 'n'},   {"clock", 'n'},    {"coat", 'n'},     {"table", 'n'},
    {"door", 'n'},     {"wagon", 'n'},    {"harbour", 'n'},  {"mill", 'n'},     {"chapel", 'n'},
    {"fountain", 'n'}, {"cart", 'n'},     {"barrel", 'n'},   {"lantern", 'n'},  {"gate", 'n'},
    {"well", 'n'},     {"hall", 'n'},     {"boat", 'n'},     {"fence", 'n'},    {"ladder", 'n'},
    {"carpet", 'n'},   {"mirror", 'n'},   {"basket", 'n'},   {"candle", 'n'},   {"sword", 'n'},
    {"train", 'n'},    {"kettle", 'n'},   {"statue", 'n'},   {"meadow", 'n'},   {"cellar", 'n'}};

inline constexpr const char* kPredicateNouns[] = {"teacher", "doctor", "sailor", "farmer",
                                                  "painter", "soldier", "lawyer", "merchant",
                                                  "judge",   "priest",  "ruin",   "landmark"};

inline constexpr const char* kAdjectives[] = {"old",   "young", "small", "large", "quiet",
                                              "dark",  "bright", "poor", "rich",  "strange",
                                              "tall",  "red",   "green", "broken", "famous"};

inline constexpr const char* kVerbs[] = {"slept",  "smiled", "left",    "waited",  "laughed",
                                         "ran",    "spoke",  "returned", "stayed", "arrived",
                                         "fell",   "sang",   "worked",  "shouted", "listened"};

inline constexpr const char* kFillers[] = {"quietly", "again", "later", "slowly", "today",
                                           "often",   "away",  "home",  "then",   "soon"};

inline constexpr const char* kCues[] = {"late", "cold", "dark", "early", "clear", "obvious"};

template <class T, std::size_t N>
const T& pick(Rng& rng, const T (&arr)[N]) {
  return arr[rng.index(N)];
}

struct Entity {
  char gender = 'n';  // 'm', 'f' or 'n'
  bool named = false;
  std::string name;  // person name or noun
  std::string adjective;
  int size = 0;
  MarkableId last_mention = 0;
  int last_sentence = -1;
};

// Repeats `pick` (up to 20 times) to avoid keys already in `used`.
template <class Pick>
auto pick_unused(std::set<std::string>& used, Pick&& pick) {
  auto e = pick();
  for (int tries = 0; tries < 20 && used.count(std::string(e.first)); ++tries) e = pick();
  used.insert(std::string(e.first));
  return e;
}

}  // namespace detail

struct GeneratedDocument {
  Document doc;
  LabelMap gold;
};

inline GeneratedDocument gen_document(Rng& rng, const DocId& id, Genre genre, int target_tokens,
                                      const SimConfig& cfg) {
  using namespace detail;
  GeneratedDocument g;
  Document& d = g.doc;
  d.id = id;
  d.genre = genre;
  std::vector<Entity> entities;
  int referring = 0;  // referring mentions drawn so far
  std::set<std::string> used;

  const auto add_markable = [&](const std::vector<std::string>& toks, Interpretation label) {
    const int start = d.token_count();
    for (const auto& t : toks) d.tokens.push_back(t);
    const MarkableId mid = static_cast<MarkableId>(d.markables.size()) + 1;
    d.markables.push_back({mid, {start, d.token_count()}, d.token_count() - 1});
    g.gold.emplace(mid, std::move(label));
    return mid;
  };

  // One referring mention drawn from the entity process.
  const auto mention = [&](int sentence) {
    const double p_new = cfg.concentration / (cfg.concentration + referring);
    ++referring;
    if (entities.empty() || rng.bernoulli(p_new)) {
      Entity e;
      std::vector<std::string> toks;
      if (rng.bernoulli(0.4)) {
        const auto& pool = name_pool();
        const auto [name, k] = pick_unused(used, [&] {
          const std::size_t k = rng.index(pool.size());
          return std::pair<std::string, std::size_t>(pool[k], k);
        });
        e.named = true;
        e.name = name;
        e.gender = k % 2 ? 'f' : 'm';
        toks = {e.name};
      } else {
        const auto [noun, gender] = pick_unused(used, [&] {
          const NounEntry& n = pick(rng, kNouns);
          return std::pair<std::string, char>(n.noun, n.gender);
        });
        e.name = noun;
        e.gender = gender;
        if (rng.bernoulli(0.5)) e.adjective = pick(rng, kAdjectives);
        toks = {"a"};
        if (!e.adjective.empty()) toks.push_back(e.adjective);
        toks.push_back(e.name);
      }
      e.size = 1;
      e.last_mention = add_markable(toks, make_dn());
      e.last_sentence = sentence;
      entities.push_back(std::move(e));
      return;
    }
    std::vector<double> w;
    for (const Entity& e : entities) {
      w.push_back(e.size * std::exp(-(sentence - e.last_sentence) / cfg.recency));
    }
    Entity& e = entities[rng.weighted(w)];
    std::vector<std::string> toks;
    // Pronouns only for the most recently mentioned entity of their gender,
    // so they are ambiguous only to a reader who does not know the gender.
    bool latest = true;
    for (const Entity& o : entities) {
      if (&o != &e && o.gender == e.gender && o.last_mention > e.last_mention) latest = false;
    }
    if (latest && sentence - e.last_sentence <= 1 && rng.bernoulli(cfg.pronoun_rate)) {
      toks = {e.gender == 'f' ? "she" : e.gender == 'm' ? "he" : "it"};
    } else if (e.named) {
      toks = {e.name};
    } else {
      toks = {"the"};
      if (!e.adjective.empty() && rng.bernoulli(0.5)) toks.push_back(e.adjective);
      toks.push_back(e.name);
    }
    e.last_mention = add_markable(toks, make_do({e.last_mention}));
    e.last_sentence = sentence;
    ++e.size;
  };

  int sentence = 0;
  while (d.token_count() < target_tokens) {
    const int start = d.token_count();
    const std::size_t first_markable = d.markables.size();
    const int clauses = 1 + static_cast<int>(rng.index(3));
    for (int c = 0; c < clauses; ++c) {
      if (c > 0) d.tokens.push_back(rng.bernoulli(0.5) ? "and" : ",");
      const double r = rng.uniform();
      if (r < cfg.ex_fraction) {
        add_markable({"it"}, make_ex());
        d.tokens.push_back("is");
        d.tokens.push_back(pick(rng, kCues));
      } else if (r < cfg.ex_fraction + cfg.pr_fraction) {
        mention(sentence);
        const MarkableId subject = static_cast<MarkableId>(d.markables.size());
        d.tokens.push_back("was");
        add_markable({"a", pick(rng, kPredicateNouns)}, make_pr(subject));
      } else if (r < cfg.ex_fraction + cfg.pr_fraction + cfg.split_fraction &&
                 entities.size() >= 2) {
        const std::size_t a = rng.index(entities.size());
        std::size_t b = rng.index(entities.size() - 1);
        if (b >= a) ++b;
        add_markable({"they"}, make_do({entities[a].last_mention, entities[b].last_mention}));
        d.tokens.push_back(pick(rng, kVerbs));
      } else {
        mention(sentence);
        d.tokens.push_back(pick(rng, kVerbs));
      }
    }
    // Filler adverbs bring the sentence to the configured density.
    const int marks = static_cast<int>(d.markables.size() - first_markable);
    const int tokens = d.token_count() - start + 1;
    const int fill = std::max(0, static_cast<int>(std::lround(marks / cfg.markable_density)) - tokens);
    for (int f = 0; f < fill; ++f) d.tokens.push_back(pick(rng, kFillers));
    d.tokens.push_back(".");
    d.sentence_bounds.push_back({start, d.token_count()});
    ++sentence;
  }
  return g;
}

inline Genre draw_genre(Rng& rng, const SimConfig& cfg) {
  return kAllGenres[rng.weighted({cfg.genre_mix[0], cfg.genre_mix[1], cfg.genre_mix[2]})];
}

inline Corpus gen_corpus(const SimConfig& cfg, std::uint64_t seed, int documents,
                         const std::string& prefix = "doc") {
  cfg.check();
  Rng rng = Rng::substream(seed, "corpus/" + prefix);
  Corpus c;
  for (int k = 0; k < documents; ++k) {
    char id[32];
    std::snprintf(id, sizeof id, "%s-%04d", prefix.c_str(), k + 1);
    const Genre genre = draw_genre(rng, cfg);
    const bool is_long = rng.bernoulli(cfg.long_fraction);
    const int tokens = static_cast<int>(is_long ? rng.integer(cfg.long_min_tokens, cfg.long_max_tokens)
                                                : rng.integer(cfg.short_min_tokens, cfg.short_max_tokens));
    Rng doc_rng = rng.substream(id);
    GeneratedDocument g = gen_document(doc_rng, id, genre, tokens, cfg);
    c.gold.emplace(g.doc.id, std::move(g.gold));
    c.documents.push_back(std::move(g.doc));
  }
  c.sort_documents();
  return c;
}

inline Corpus gen_corpus(const SimConfig& cfg, std::uint64_t seed) {
  return gen_corpus(cfg, seed, cfg.documents);
}

// Expected number of entities after n draws from the entity process.
inline double expected_entities(double concentration, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += concentration / (concentration + i);
  return s;
}

// ---------------------------------------------------------------------------
// Correctness against planted gold

// Cluster index per markable id (-1 for non-referring and split plurals).
inline std::map<MarkableId, int> gold_cluster_ids(const Document& doc, const LabelMap& gold) {
  std::map<MarkableId, int> out;
  const ClusterSet cs = derive_clusters(doc, gold);
  for (std::size_t c = 0; c < cs.clusters.size(); ++c) {
    for (MarkableId id : cs.clusters[c]) out[id] = static_cast<int>(c);
  }
  for (MarkableId id : cs.non_referring) out[id] = -1;
  return out;
}

// A discourse-old label is right when its single antecedent lies in the
// anaphor's gold entity; split plurals need the exact antecedent set;
// predicative labels are judged by class.
inline bool label_correct(MarkableId m, const Interpretation& gold, const Interpretation& got,
                          const std::map<MarkableId, int>& clusters) {
  if (interpretation_class(gold) != interpretation_class(got)) return false;
  const auto* g = as_do(gold);
  if (!g) return true;
  if (g->antecedents.size() > 1 || as_do(got)->antecedents.size() > 1) return gold == got;
  auto a = clusters.find(as_do(got)->antecedents.front());
  return a != clusters.end() && a->second >= 0 && a->second == clusters.at(m);
}

// ---------------------------------------------------------------------------
// Players

struct Player {
  std::string id;
  std::array<double, kNumClasses> sensitivity{};
  std::array<double, kNumClasses> specificity{};
};

inline std::vector<Player> gen_players(const SimConfig& cfg, std::uint64_t seed) {
  Rng rng = Rng::substream(seed, "players");
  std::vector<Player> out;
  for (int p = 0; p < cfg.players; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "player-%03d", p + 1);
    Player pl{id, {}, {}};
    for (auto& s : pl.sensitivity) s = rng.uniform(cfg.sensitivity_min, cfg.sensitivity_max);
    for (auto& s : pl.specificity) s = rng.uniform(cfg.specificity_min, cfg.specificity_max);
    out.push_back(std::move(pl));
  }
  return out;
}

// The longest documents (by tokens, ties by id) are designated incomplete.
inline std::map<DocId, bool> designate_complete(const Corpus& corpus, double complete_fraction) {
  std::vector<const Document*> docs;
  for (const Document& d : corpus.documents) docs.push_back(&d);
  std::sort(docs.begin(), docs.end(), [](const Document* a, const Document* b) {
    return a->token_count() != b->token_count() ? a->token_count() > b->token_count() : a->id < b->id;
  });
  const auto n_complete = static_cast<std::size_t>(std::lround(complete_fraction * docs.size()));
  std::map<DocId, bool> out;
  for (std::size_t k = 0; k < docs.size(); ++k) out[docs[k]->id] = k >= docs.size() - n_complete;
  return out;
}

namespace detail {

class DocScheduler {
 public:
  DocScheduler(const Document& doc, const LabelMap& gold, const std::vector<Player>& players,
               const SimConfig& cfg, Rng& rng, JudgmentLog& log)
      : doc_(doc), gold_(gold), players_(players), cfg_(cfg), rng_(rng), log_(log),
        index_(doc), clusters_(gold_cluster_ids(doc, gold)) {
    const std::size_t nm = doc.markables.size();
    judged_.assign(nm, std::vector<char>(players.size(), 0));
    annotated_.resize(nm);
    validators_.resize(nm);
  }

  void annotate(std::size_t i, std::size_t p) {
    const MarkableId id = doc_.markables[i].id;
    Interpretation ans = answer(i, players_[p]);
    log_.push_back({players_[p].id, doc_.id, id, ans, JudgmentKind::Annotation, 1});
    annotated_[i][ans].push_back(p);
    judged_[i][p] = 1;
    ++count_;
  }

  void validate(std::size_t i, std::size_t p, const Interpretation& v) {
    const MarkableId id = doc_.markables[i].id;
    const Player& pl = players_[p];
    const auto c = static_cast<std::size_t>(interpretation_class(v));
    const bool right = label_correct(id, gold_.at(id), v, clusters_);
    const bool agree = right ? rng_.bernoulli(pl.sensitivity[c]) : !rng_.bernoulli(pl.specificity[c]);
    log_.push_back({pl.id, doc_.id, id, v, JudgmentKind::Validation, agree ? 1 : -1});
    validators_[i][v].push_back(p);
    judged_[i][p] = 1;
    ++count_;
  }

  // A player who has not judged markable i yet, or -1.
  int fresh_player(std::size_t i) {
    std::vector<std::size_t> free;
    for (std::size_t p = 0; p < players_.size(); ++p) {
      if (!judged_[i][p]) free.push_back(p);
    }
    return free.empty() ? -1 : static_cast<int>(free[rng_.index(free.size())]);
  }

  // Tops up every annotated interpretation of i to `need` distinct
  // validators. Validators of other interpretations are reused only when no
  // fresh player is left; annotators of i never validate it.
  void top_up_validations(std::size_t i, int need) {
    for (auto& [interp, who] : annotated_[i]) {
      (void)who;
      auto& vals = validators_[i][interp];
      while (static_cast<int>(vals.size()) < need) {
        int p = fresh_player(i);
        if (p < 0) {
          std::vector<std::size_t> reuse;
          for (std::size_t q = 0; q < players_.size(); ++q) {
            if (is_annotator(i, q) || std::count(vals.begin(), vals.end(), q)) continue;
            reuse.push_back(q);
          }
          if (reuse.empty()) throw ConfigError("player pool exhausted while scheduling validations");
          p = static_cast<int>(reuse[rng_.index(reuse.size())]);
        }
        validate(i, static_cast<std::size_t>(p), interp);
      }
    }
  }

  bool is_annotator(std::size_t i, std::size_t p) const {
    for (const auto& [interp, who] : annotated_[i]) {
      if (std::count(who.begin(), who.end(), p)) return true;
    }
    return false;
  }

  bool disputed(std::size_t i) const { return annotated_[i].size() >= 2; }

  std::size_t count() const { return count_; }

  const std::map<Interpretation, std::vector<std::size_t>>& annotations(std::size_t i) const {
    return annotated_[i];
  }

 private:
  Interpretation answer(std::size_t i, const Player& p) {
    const MarkableId id = doc_.markables[i].id;
    const Interpretation& g = gold_.at(id);
    const auto c = static_cast<std::size_t>(interpretation_class(g));
    if (rng_.bernoulli(p.sensitivity[c])) return g;
    std::vector<double> row(cfg_.confusion[c].begin(), cfg_.confusion[c].end());
    row[c] = c == static_cast<std::size_t>(InterpClass::DO) ? row[c] : 0.0;
    double total = 0.0;
    for (double w : row) total += w;
    if (!(total > 0.0)) return g;
    switch (static_cast<InterpClass>(rng_.weighted(row))) {
      case InterpClass::DN: return make_dn();
      case InterpClass::EX: return make_ex();
      case InterpClass::PR:
        return make_pr(i > 0 ? std::optional<MarkableId>(doc_.markables[i - 1].id) : std::nullopt);
      case InterpClass::DO: break;
    }
    // Wrong antecedent: a nearby preceding markable outside the anaphor's
    // entity, nearer ones more likely.
    const int own = clusters_.count(id) ? clusters_.at(id) : -1;
    std::vector<MarkableId> cands;
    std::vector<double> w;
    double weight = 1.0;
    for (std::size_t j = i; j-- > 0 && cands.size() < 10;) {
      const MarkableId cj = doc_.markables[j].id;
      const int cl = clusters_.at(cj);
      if (cl < 0 || (own >= 0 && cl == own)) continue;
      if (doc_.markables[j].span.end > doc_.markables[i].span.start) continue;
      cands.push_back(cj);
      w.push_back(weight);
      weight *= cfg_.distractor_decay;
    }
    if (cands.empty()) return interpretation_class(g) == InterpClass::DN ? make_ex() : make_dn();
    return make_do({cands[rng_.weighted(w)]});
  }

  const Document& doc_;
  const LabelMap& gold_;
  const std::vector<Player>& players_;
  const SimConfig& cfg_;
  Rng& rng_;
  JudgmentLog& log_;
  MarkableIndex index_;
  std::map<MarkableId, int> clusters_;
  std::vector<std::vector<char>> judged_;
  std::vector<std::map<Interpretation, std::vector<std::size_t>>> annotated_;
  std::vector<std::map<Interpretation, std::vector<std::size_t>>> validators_;
  std::size_t count_ = 0;
};

inline std::vector<std::size_t> sample_players(Rng& rng, std::size_t pool, std::size_t k) {
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t a = 0; a < k; ++a) std::swap(idx[a], idx[a + rng.index(pool - a)]);
  idx.resize(k);
  return idx;
}

inline void schedule_complete(DocScheduler& s, const Document& doc, const SimConfig& cfg, Rng& rng) {
  const std::size_t nm = doc.markables.size();
  const auto& pol = cfg.policy;
  for (std::size_t i = 0; i < nm; ++i) {
    for (std::size_t p : sample_players(rng, cfg.players, pol.min_annotations)) s.annotate(i, p);
  }
  for (std::size_t i = 0; i < nm; ++i) {
    if (s.disputed(i) || pol.validate_undisputed) {
      s.top_up_validations(i, pol.min_validations_per_interpretation);
    }
  }
  // Further play up to the configured average, then repair any
  // interpretation that extra annotations introduced.
  const auto budget = static_cast<std::size_t>(std::lround(cfg.complete_avg * nm));
  for (int misses = 0; s.count() < budget && misses < 1000;) {
    const std::size_t i = rng.index(nm);
    const int p = s.fresh_player(i);
    if (p < 0) {
      ++misses;
      continue;
    }
    if (rng.bernoulli(0.3)) {
      s.annotate(i, static_cast<std::size_t>(p));
    } else {
      const auto& ann = s.annotations(i);
      auto it = ann.begin();
      std::advance(it, static_cast<long>(rng.index(ann.size())));
      s.validate(i, static_cast<std::size_t>(p), it->first);
    }
  }
  for (std::size_t i = 0; i < nm; ++i) {
    if (s.disputed(i) || pol.validate_undisputed) {
      s.top_up_validations(i, pol.min_validations_per_interpretation);
    }
  }
}

inline void schedule_incomplete(DocScheduler& s, const Document& doc, const SimConfig& cfg, Rng& rng) {
  const std::size_t nm = doc.markables.size();
  if (nm == 0) return;
  std::vector<std::size_t> judged;
  for (std::size_t i = 0; i < nm; ++i) {
    if (!rng.bernoulli(cfg.unjudged_fraction)) judged.push_back(i);
  }
  const int cap = cfg.policy.min_annotations - 1;
  if (cap < 1 && judged.size() == nm) judged.pop_back();  // someone must stay below threshold
  if (judged.empty()) return;
  const double budget = cfg.incomplete_avg * static_cast<double>(nm);
  const double per = budget / static_cast<double>(judged.size());
  const int lo = std::clamp(static_cast<int>(std::floor(0.4 * per)), 1, std::max(cap, 1));
  const int hi = std::clamp(static_cast<int>(std::ceil(0.8 * per)), lo, std::max(cap, 1));
  for (std::size_t i : judged) {
    const int k = cap < 1 ? 0 : static_cast<int>(rng.integer(lo, hi));
    for (std::size_t p : sample_players(rng, cfg.players, static_cast<std::size_t>(k))) {
      s.annotate(i, p);
    }
  }
  const auto target = static_cast<std::size_t>(std::lround(budget));
  for (int misses = 0; s.count() < target && misses < 1000;) {
    const std::size_t i = judged[rng.index(judged.size())];
    const int p = s.fresh_player(i);
    const auto& ann = s.annotations(i);
    if (p < 0 || ann.empty()) {
      ++misses;
      continue;
    }
    auto it = ann.begin();
    std::advance(it, static_cast<long>(rng.index(ann.size())));
    s.validate(i, static_cast<std::size_t>(p), it->first);
  }
}

}  // namespace detail

struct SimResult {
  Corpus corpus;  // with gold
  Corpus dev;     // with gold
  JudgmentLog log;
  std::vector<Player> players;
  std::map<DocId, bool> complete;  // designated completeness
};

inline JudgmentLog simulate_players(const Corpus& corpus, const std::vector<Player>& players,
                                    const std::map<DocId, bool>& complete, const SimConfig& cfg,
                                    std::uint64_t seed) {
  cfg.check();
  if (players.size() != static_cast<std::size_t>(cfg.players)) {
    throw ConfigError("player roster does not match sim.players");
  }
  JudgmentLog log;
  for (const Document& d : corpus.documents) {
    const LabelMap* gold = corpus.gold_for(d.id);
    if (!gold) throw ConfigError("simulate_players needs gold for document '" + d.id + "'");
    Rng rng = Rng::substream(seed, "schedule/" + d.id);
    detail::DocScheduler s(d, *gold, players, cfg, rng, log);
    if (complete.at(d.id)) {
      detail::schedule_complete(s, d, cfg, rng);
    } else {
      detail::schedule_incomplete(s, d, cfg, rng);
    }
  }
  return log;
}

inline SimResult simulate(const SimConfig& cfg) {
  cfg.check();
  SimResult r;
  r.corpus = gen_corpus(cfg, cfg.seed, cfg.documents, "doc");
  r.dev = gen_corpus(cfg, cfg.seed, cfg.dev_documents, "dev");
  r.players = gen_players(cfg, cfg.seed);
  r.complete = designate_complete(r.corpus, cfg.complete_fraction);
  r.log = simulate_players(r.corpus, r.players, r.complete, cfg, cfg.seed);
  return r;
}

// ---------------------------------------------------------------------------
// Aggregation benchmark

struct AggregationBenchmark {
  std::size_t markables = 0, judgments = 0;
  double mpa_accuracy = 0.0, majority_accuracy = 0.0;
};

// Annotation-only crowd over the first `markables` markables of a generated
// corpus: `annotators` players (skills from cfg), each markable annotated by
// `per_markable` of them. Unlabeled markables count as wrong.
inline AggregationBenchmark aggregation_benchmark(const SimConfig& cfg, int markables, int annotators,
                                                  int per_markable, std::uint64_t seed,
                                                  const MpaConfig& mpa = {}) {
  if (markables < 1 || annotators < 1 || per_markable < 1 || per_markable > annotators) {
    throw ConfigError("aggregation benchmark: need 1 <= per_markable <= annotators and markables >= 1");
  }
  SimConfig roster = cfg;
  roster.players = annotators;
  const std::vector<Player> players = gen_players(roster, seed);
  Rng rng = Rng::substream(seed, "benchmark");

  Corpus corpus;
  for (int batch = 0; static_cast<int>(corpus.markable_count()) < markables; ++batch) {
    Corpus more = gen_corpus(cfg, seed, 4, "bench" + std::to_string(batch));
    for (Document& d : more.documents) {
      corpus.gold.emplace(d.id, std::move(more.gold.at(d.id)));
      corpus.documents.push_back(std::move(d));
    }
  }

  JudgmentLog log;
  std::vector<MarkableKey> keys;
  for (const Document& d : corpus.documents) {
    detail::DocScheduler s(d, *corpus.gold_for(d.id), players, cfg, rng, log);
    for (std::size_t i = 0; i < d.markables.size() && static_cast<int>(keys.size()) < markables; ++i) {
      keys.push_back({d.id, d.markables[i].id});
      for (std::size_t p : detail::sample_players(rng, players.size(), per_markable)) s.annotate(i, p);
    }
  }

  const ObservationSet data = build_observations(log, {}, keys);
  const auto accuracy = [&](const Decoded& dec) {
    std::size_t hit = 0;
    for (const MarkableKey& k : keys) {
      auto it = dec.labels.find(k);
      if (it == dec.labels.end()) continue;
      const Document& d = *corpus.find(k.doc);
      const LabelMap& gold = *corpus.gold_for(k.doc);
      hit += label_correct(k.markable, gold.at(k.markable), it->second.interpretation,
                           gold_cluster_ids(d, gold));
    }
    return static_cast<double>(hit) / static_cast<double>(keys.size());
  };
  AggregationBenchmark r;
  r.markables = keys.size();
  r.judgments = log.size();
  r.mpa_accuracy = accuracy(decode(em_fit(data, mpa)));
  r.majority_accuracy = accuracy(majority_vote(data));
  return r;
}

// ---------------------------------------------------------------------------
// Replication

struct AccuracySplit {
  double overall = 0.0, complete = 0.0, incomplete = 0.0;
};

struct ReplicationReport {
  LoopResult<ResolverModel> loop;
  std::size_t documents = 0, complete_documents = 0, markables = 0, judgments = 0;
  double coverage = 0.0;  // markables with at least one judgment
  double avg_judgments_complete = 0.0, avg_judgments_incomplete = 0.0;
  std::size_t incomplete_markables = 0;
  AccuracySplit accuracy_without, accuracy_with;  // player-only vs final labels
  std::size_t flipped = 0;
  double flipped_accuracy_without = 0.0, flipped_accuracy_with = 0.0;
  SpeedupInput speedup_input;
  SpeedupReport speedup;
};

inline AccuracySplit label_accuracy(const Corpus& corpus, const LabelTable& labels,
                                    const std::set<DocId>& complete) {
  std::size_t n[2] = {0, 0}, hit[2] = {0, 0};
  for (const Document& d : corpus.documents) {
    const LabelMap& gold = *corpus.gold_for(d.id);
    const auto clusters = gold_cluster_ids(d, gold);
    const int side = complete.count(d.id) ? 0 : 1;
    for (const Markable& m : d.markables) {
      ++n[side];
      auto it = labels.find({d.id, m.id});
      if (it != labels.end() && label_correct(m.id, gold.at(m.id), it->second.interpretation, clusters)) {
        ++hit[side];
      }
    }
  }
  const auto frac = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / b : 0.0; };
  return {frac(hit[0] + hit[1], n[0] + n[1]), frac(hit[0], n[0]), frac(hit[1], n[1])};
}

inline ReplicationReport run_replication(const SimConfig& cfg, const LoopConfig& loop) {
  const SimResult sim = simulate(cfg);
  ReplicationReport r;
  r.loop = resolve_and_aggregate(sim.corpus, sim.log, sim.dev, loop, FeatureResolver(loop.resolver));

  std::set<DocId> designated;
  for (const auto& [id, c] : sim.complete) {
    if (c) designated.insert(id);
  }
  r.documents = sim.corpus.documents.size();
  r.complete_documents = designated.size();
  r.markables = sim.corpus.markable_count();
  r.judgments = sim.log.size();
  std::set<MarkableKey> touched;
  std::size_t j_complete = 0, j_incomplete = 0, m_complete = 0;
  for (const Judgment& j : sim.log) {
    touched.insert({j.doc, j.markable});
    (designated.count(j.doc) ? j_complete : j_incomplete) += 1;
  }
  for (const Document& d : sim.corpus.documents) {
    if (designated.count(d.id)) m_complete += d.markables.size();
  }
  r.incomplete_markables = r.markables - m_complete;
  r.coverage = r.markables ? static_cast<double>(touched.size()) / r.markables : 0.0;
  r.avg_judgments_complete = m_complete ? static_cast<double>(j_complete) / m_complete : 0.0;
  r.avg_judgments_incomplete =
      r.incomplete_markables ? static_cast<double>(j_incomplete) / r.incomplete_markables : 0.0;

  r.accuracy_without = label_accuracy(sim.corpus, r.loop.baseline_labels, designated);
  r.accuracy_with = label_accuracy(sim.corpus, r.loop.final_labels, designated);

  std::size_t right_without = 0, right_with = 0;
  for (const auto& [key, before] : r.loop.baseline_labels) {
    const auto& after = r.loop.final_labels.at(key);
    if (after.interpretation == before.interpretation) continue;
    ++r.flipped;
    const Document& d = *sim.corpus.find(key.doc);
    const LabelMap& gold = *sim.corpus.gold_for(key.doc);
    const auto clusters = gold_cluster_ids(d, gold);
    right_without += label_correct(key.markable, gold.at(key.markable), before.interpretation, clusters);
    right_with += label_correct(key.markable, gold.at(key.markable), after.interpretation, clusters);
  }
  if (r.flipped) {
    r.flipped_accuracy_without = static_cast<double>(right_without) / r.flipped;
    r.flipped_accuracy_with = static_cast<double>(right_with) / r.flipped;
  }

  r.speedup_input = {r.avg_judgments_incomplete, cfg.complete_avg,
                     static_cast<double>(r.incomplete_markables), cfg.yearly_rate};
  if (r.incomplete_markables > 0 && r.avg_judgments_incomplete > 0.0) {
    r.speedup = speedup_estimate(r.speedup_input);
  }
  return r;
}

inline Json replication_report_to_json(const ReplicationReport& r) {
  const auto acc = [](const AccuracySplit& a) {
    return Json{{"overall", a.overall}, {"complete", a.complete}, {"incomplete", a.incomplete}};
  };
  return {{"corpus",
           {{"documents", r.documents},
            {"complete_documents", r.complete_documents},
            {"markables", r.markables},
            {"judgments", r.judgments},
            {"coverage", r.coverage},
            {"avg_judgments_complete", r.avg_judgments_complete},
            {"avg_judgments_incomplete", r.avg_judgments_incomplete}}},
          {"loop", loop_report_to_json(r.loop)},
          {"label_accuracy", {{"without_resolver", acc(r.accuracy_without)}, {"with_resolver", acc(r.accuracy_with)}}},
          {"flipped",
           {{"count", r.flipped},
            {"accuracy_without_resolver", r.flipped_accuracy_without},
            {"accuracy_with_resolver", r.flipped_accuracy_with}}},
          {"speedup",
           {{"avg_judgments", r.speedup_input.avg_judgments},
            {"target_judgments", r.speedup_input.target_judgments},
            {"incomplete_markables", r.speedup_input.markables},
            {"yearly_rate", r.speedup_input.yearly_rate},
            {"extra_judgments", r.speedup.extra_judgments},
            {"years", r.speedup.years}}}};
}

inline std::string format_replication_summary(const ReplicationReport& r) {
  std::string out;
  char buf[200];
  const auto line = [&](const char* fmt, auto... args) {
    std::snprintf(buf, sizeof buf, fmt, args...);
    out += buf;
  };
  line("documents %zu (complete %zu), markables %zu, judgments %zu, coverage %.4f\n",
       r.documents, r.complete_documents, r.markables, r.judgments, r.coverage);
  line("judgments per markable: complete %.2f, incomplete %.2f\n", r.avg_judgments_complete,
       r.avg_judgments_incomplete);
  line("\n%-10s %12s %12s %10s %10s %10s\n", "iteration", "dev CoNLL", "dev CoNLL-s", "flip",
       "flip-c", "flip-i");
  line("%-10s %12.2f %12.2f\n", "TC", r.loop.train_complete_dev.excluded.conll,
       r.loop.train_complete_dev.included.conll);
  line("%-10s %12.2f %12.2f\n", "TF-orig", r.loop.full_original_dev.excluded.conll,
       r.loop.full_original_dev.included.conll);
  for (const auto& it : r.loop.iterations) {
    line("%-10d %12.2f %12.2f %9.2f%% %9.2f%% %9.2f%%\n", it.iteration, it.dev.excluded.conll,
         it.dev.included.conll, 100 * it.flips.overall, 100 * it.flips.complete,
         100 * it.flips.incomplete);
  }
  line("best iteration %d\n\n", r.loop.best_iteration);
  line("label accuracy without resolver: %.4f (complete %.4f, incomplete %.4f)\n",
       r.accuracy_without.overall, r.accuracy_without.complete, r.accuracy_without.incomplete);
  line("label accuracy with resolver:    %.4f (complete %.4f, incomplete %.4f)\n",
       r.accuracy_with.overall, r.accuracy_with.complete, r.accuracy_with.incomplete);
  line("flipped labels %zu: accuracy without %.4f, with %.4f\n", r.flipped,
       r.flipped_accuracy_without, r.flipped_accuracy_with);
  line("speed-up: %s\n", format_speedup(r.speedup).c_str());
  return out;
}

}  // namespace anacrowd
