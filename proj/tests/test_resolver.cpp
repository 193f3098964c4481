#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "anacrowd/resolver.hpp"
#include "test_util.hpp"

using namespace anacrowd;
using anacrowd::testing::random_doc;

namespace {

// Whitespace-tokenized single-paragraph document; sentences end at ".".
// Markables are given as (start, end) pairs and numbered from 1.
Document text_doc(const std::string& text, const std::vector<std::pair<int, int>>& spans) {
  Document d;
  d.id = "t";
  std::istringstream in(text);
  std::string tok;
  int start = 0;
  while (in >> tok) {
    d.tokens.push_back(tok);
    if (tok == ".") {
      d.sentence_bounds.push_back({start, d.token_count()});
      start = d.token_count();
    }
  }
  if (start < d.token_count()) d.sentence_bounds.push_back({start, d.token_count()});
  int id = 1;
  for (auto [s, e] : spans) d.markables.push_back({id++, {s, e}, e - 1});
  validate_document(d);
  return d;
}

Corpus random_corpus(Rng& rng, int docs) {
  Corpus c;
  for (int k = 0; k < docs; ++k) {
    c.documents.push_back(random_doc(rng, "r" + std::to_string(k), 6 + static_cast<int>(rng.index(10))));
  }
  c.sort_documents();
  return c;
}

}  // namespace

TEST_CASE("sieve examples", "[resolver]") {
  SECTION("repeated string links back") {
    const Document d = text_doc("the king smiled . the king left .", {{0, 2}, {4, 6}});
    const LabelMap l = sieve_resolve(d);
    CHECK(l.at(1) == make_dn());
    CHECK(l.at(2) == make_do({1}));
  }
  SECTION("expletive it") {
    const Document d = text_doc("It is five o'clock .", {{0, 1}, {2, 4}});
    const LabelMap l = sieve_resolve(d);
    CHECK(l.at(1) == make_ex());
    CHECK(l.at(2) == make_dn());
    const Document rain = text_doc("It rained .", {{0, 1}});
    CHECK(sieve_resolve(rain).at(1) == make_ex());
    const Document there = text_doc("There is a dog .", {{0, 1}, {2, 4}});
    CHECK(sieve_resolve(there).at(1) == make_ex());
    CHECK(sieve_resolve(there).at(2) == make_dn());
  }
  SECTION("predicative after a copula") {
    const Document d = text_doc("John is a teacher .", {{0, 1}, {2, 4}});
    const LabelMap l = sieve_resolve(d);
    CHECK(l.at(1) == make_dn());
    CHECK(l.at(2) == make_pr(1));
  }
  SECTION("head match and pronoun recency") {
    const Document d = text_doc("the old king slept . the king woke . he ate . it fell .",
                                {{0, 3}, {5, 7}, {9, 10}, {12, 13}});
    const LabelMap l = sieve_resolve(d);
    CHECK(l.at(2) == make_do({1}));
    CHECK(l.at(3) == make_do({2}));
    // The nearest non-pronoun is two sentences back.
    CHECK(l.at(4) == make_do({2}));
  }
  SECTION("pronoun beyond the window") {
    const Document d = text_doc("the dog ran . x . y . z . it fell .", {{0, 2}, {10, 11}});
    CHECK(sieve_resolve(d).at(2) == make_dn());
  }
  SECTION("document-initial markable and empty document") {
    const Document d = text_doc("he ran .", {{0, 1}});
    CHECK(sieve_resolve(d).at(1) == make_dn());
    CHECK(sieve_resolve(text_doc("x .", {})).empty());
  }
}

TEST_CASE("disabling a later sieve pass never changes earlier decisions",
          "[resolver][property]") {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const Document d = random_doc(rng, "p", 8);
    const LabelMap full = sieve_resolve(d);
    for (std::size_t k = 0; k < 5; ++k) {
      SieveOptions opt;
      for (std::size_t off = k; off < 5; ++off) opt.passes[off] = false;
      const LabelMap prefix = sieve_resolve(d, WordLists::defaults(), opt);
      SieveOptions without;
      without.passes[k] = false;
      const LabelMap partial = sieve_resolve(d, WordLists::defaults(), without);
      for (const auto& [m, l] : prefix) {
        // Everything decided by passes before k keeps its label.
        if (!(l == make_dn())) REQUIRE(partial.at(m) == l);
      }
    }
    // Totality and backward links.
    REQUIRE(full.size() == d.markables.size());
    const MarkableIndex index(d);
    for (const auto& [m, l] : full) REQUIRE_NOTHROW(validate_label(d, index, m, l));
  }
}

TEST_CASE("untrained model predicts discourse-new everywhere", "[resolver]") {
  Rng rng(1);
  const Corpus c = random_corpus(rng, 3);
  CorpusLabels labels;
  for (const auto& d : c.documents) labels[d.id] = sieve_resolve(d);
  ResolverConfig cfg;
  cfg.epochs = 0;
  const ResolverModel m = train(c, labels, cfg);
  CHECK(m.threshold == 1.0);
  for (const auto& d : c.documents) {
    for (const auto& [id, l] : predict(m, d)) CHECK(l == make_dn());
  }
}

TEST_CASE("training reproduces the sieve better than chance", "[resolver]") {
  Rng rng(2);
  const Corpus train_c = random_corpus(rng, 40);
  const Corpus test_c = random_corpus(rng, 20);
  CorpusLabels labels;
  for (const auto& d : train_c.documents) labels[d.id] = sieve_resolve(d);
  const ResolverModel m = train(train_c, labels, {});

  int agree = 0, all_dn = 0, total = 0;
  for (const auto& d : test_c.documents) {
    const LabelMap gold = sieve_resolve(d);
    const LabelMap sys = predict(m, d);
    for (const auto& [id, l] : gold) {
      agree += sys.at(id) == l;
      all_dn += l == make_dn();
      ++total;
    }
  }
  INFO("agree " << agree << " all-DN " << all_dn << " of " << total);
  CHECK(agree > all_dn);
}

TEST_CASE("training and prediction are deterministic and total", "[resolver]") {
  Rng rng(4);
  const Corpus c = random_corpus(rng, 10);
  CorpusLabels labels;
  for (const auto& d : c.documents) labels[d.id] = sieve_resolve(d);
  const ResolverModel a = train(c, labels, {});
  const ResolverModel b = train(c, labels, {});
  CHECK(a == b);
  CHECK(serialize_model(a) == serialize_model(b));

  const CorpusLabels p1 = predict_corpus(a, c);
  CHECK(p1 == predict_corpus(a, c, WordLists::defaults(), 3));
  for (const auto& d : c.documents) {
    const LabelMap& l = p1.at(d.id);
    REQUIRE(l.size() == d.markables.size());
    const MarkableIndex index(d);
    for (const auto& [m, interp] : l) REQUIRE_NOTHROW(validate_label(d, index, m, interp));
  }

  ResolverConfig other;
  other.seed = 99;
  CHECK_FALSE(train(c, labels, other) == a);
}

TEST_CASE("training input errors", "[resolver]") {
  Rng rng(5);
  const Corpus c = random_corpus(rng, 2);
  CHECK_THROWS_AS(train(c, {}, {}), ConfigError);
  CorpusLabels partial;
  partial[c.documents[0].id] = {};
  if (!c.documents[0].markables.empty()) {
    CHECK_THROWS_AS(train(c, partial, {}), ValidationError);
  }
  ResolverConfig bad;
  bad.window = 0;
  CHECK_THROWS_AS(bad.check(), ConfigError);
}

TEST_CASE("as_judgments emits one system annotation per markable", "[resolver]") {
  const Document d = anacrowd::testing::line_doc("j", 10);
  const CorpusLabels preds = {{"j", sieve_resolve(d)}};
  const JudgmentLog log = as_judgments(preds, system_player(3));
  REQUIRE(log.size() == 10);
  for (const auto& j : log) {
    CHECK(j.player == "system@iter3");
    CHECK(j.kind == JudgmentKind::Annotation);
    CHECK(j.polarity == 1);
  }
  CHECK(parse_judgments(serialize_judgments(log)) == log);
}

TEST_CASE("model files round-trip bit-exactly", "[resolver]") {
  Rng rng(6);
  const Corpus c = random_corpus(rng, 8);
  CorpusLabels labels;
  for (const auto& d : c.documents) labels[d.id] = sieve_resolve(d);
  ResolverModel m = FeatureResolver().train(c, labels, 2, "unit");
  const std::string text = serialize_model(m);
  const ResolverModel back = parse_model(text);
  CHECK(back == m);
  CHECK(serialize_model(back) == text);
  CHECK(back.iteration == 2);

  CHECK_THROWS_AS(parse_model("{"), ParseError);
  CHECK_THROWS_AS(parse_model(R"({"format":"anacrowd-model","version":1})"), ValidationError);
}

TEST_CASE("shipped word lists equal the built-in defaults", "[resolver]") {
  CHECK(WordLists::load(ANACROWD_DATA_DIR "/wordlists") == WordLists::defaults());
  CHECK_THROWS_AS(WordLists::load("/nonexistent"), ConfigError);
}
