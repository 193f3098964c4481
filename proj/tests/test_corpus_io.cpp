#include <string>

#include <catch2/catch_amalgamated.hpp>

#include "anacrowd/corpus_io.hpp"
#include "test_util.hpp"

using namespace anacrowd;
using anacrowd::testing::line_doc;
using anacrowd::testing::random_labels;

namespace {

const char* kMinimal =
    R"({"format":"anacrowd-corpus","version":1})"
    "\n"
    R"({"genre":"Gutenberg","id":"alice","markables":[{"end":1,"head":0,"id":1,"start":0}],"sentence_bounds":[[0,3]],"tokens":["Alice","was","tired"]})"
    "\n";

Corpus sample_corpus() {
  Corpus c;
  Rng rng(3);
  for (const char* id : {"b", "a", "c"}) {
    Document d = line_doc(id, 6);
    d.sentence_bounds = {{0, 2}, {2, 6}};
    c.gold[id] = random_labels(d, rng);
    c.documents.push_back(std::move(d));
  }
  c.documents.push_back(line_doc("nogold", 2));
  c.sort_documents();
  return c;
}

}  // namespace

TEST_CASE("parse_corpus reads a minimal document", "[corpus_io]") {
  const Corpus c = parse_corpus(kMinimal);
  REQUIRE(c.documents.size() == 1);
  CHECK(c.documents[0].token_count() == 3);
  CHECK(c.documents[0].genre == Genre::Gutenberg);
  CHECK(c.documents[0].markables[0].head == 0);
  CHECK(c.gold.empty());
  CHECK(serialize_corpus(c) == kMinimal);
}

TEST_CASE("parse_corpus reports errors with context", "[corpus_io]") {
  SECTION("span beyond the tokens is a validation error") {
    const std::string text =
        R"({"genre":"Other","id":"x","markables":[{"end":4,"id":1,"start":0}],"sentence_bounds":[[0,3]],"tokens":["a","b","c"]})";
    CHECK_THROWS_AS(parse_corpus(text), ValidationError);
  }
  SECTION("malformed JSON carries the line number") {
    const std::string text = std::string(kMinimal) + "{not json}\n";
    try {
      parse_corpus(text);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
  }
  SECTION("unknown keys are rejected") {
    const std::string text =
        R"({"genre":"Other","id":"x","markables":[],"sentence_bounds":[],"tokens":[],"extra":1})";
    CHECK_THROWS_AS(parse_corpus(text), ParseError);
  }
  SECTION("gold must cover all markables") {
    const std::string text =
        R"({"genre":"Other","gold":[],"id":"x","markables":[{"end":1,"id":1,"start":0}],"sentence_bounds":[[0,1]],"tokens":["a"]})";
    CHECK_THROWS_AS(parse_corpus(text), ValidationError);
  }
  SECTION("forward antecedents are rejected") {
    const std::string text =
        R"({"genre":"Other","gold":[{"interpretation":{"antecedents":[2],"type":"DO"},"markable":1},{"interpretation":{"type":"DN"},"markable":2}],"id":"x","markables":[{"end":1,"id":1,"start":0},{"end":2,"id":2,"start":1}],"sentence_bounds":[[0,2]],"tokens":["a","b"]})";
    CHECK_THROWS_AS(parse_corpus(text), ValidationError);
  }
  SECTION("duplicate document ids") {
    const std::string line =
        R"({"genre":"Other","id":"x","markables":[],"sentence_bounds":[],"tokens":[]})";
    CHECK_THROWS_AS(parse_corpus(line + "\n" + line + "\n"), ValidationError);
  }
  SECTION("wrong version header") {
    CHECK_THROWS_AS(parse_corpus(R"({"format":"anacrowd-corpus","version":2})"), ParseError);
  }
  SECTION("invalid UTF-8") {
    std::string text = kMinimal;
    text.insert(text.find("Alice"), "\xC3\x28");
    CHECK_THROWS_AS(parse_corpus(text), ParseError);
  }
}

TEST_CASE("serialize_corpus is canonical", "[corpus_io]") {
  const Corpus c = sample_corpus();
  const std::string text = serialize_corpus(c);
  CHECK(parse_corpus(text) == c);
  CHECK(serialize_corpus(parse_corpus(text)) == text);
  CHECK(serialize_corpus(c) == text);

  // Record order does not matter: reversing the documents serializes to the
  // same bytes as sorting them first.
  Corpus reversed = c;
  std::reverse(reversed.documents.begin(), reversed.documents.end());
  Corpus sorted = reversed;
  sorted.sort_documents();
  CHECK(serialize_corpus(reversed) == serialize_corpus(sorted));
  CHECK(serialize_corpus(reversed) == text);
}

TEST_CASE("parse_judgments decodes the judgment log", "[corpus_io]") {
  SECTION("annotation") {
    const auto log = parse_judgments(
        R"({"doc":"d","interpretation":{"antecedents":[2],"type":"DO"},"kind":"annotation","markable":5,"player":"p1","polarity":1})");
    REQUIRE(log.size() == 1);
    CHECK(log[0].kind == JudgmentKind::Annotation);
    CHECK(log[0].polarity == 1);
    CHECK(log[0].markable == 5);
    CHECK(log[0].interpretation == make_do({2}));
  }
  SECTION("negative validation") {
    const auto log = parse_judgments(
        R"({"doc":"d","interpretation":{"type":"DN"},"kind":"validation","markable":5,"player":"p1","polarity":-1})");
    REQUIRE(log.size() == 1);
    CHECK(log[0].kind == JudgmentKind::Validation);
    CHECK(log[0].polarity == -1);
  }
  SECTION("negative annotation is a validation error") {
    CHECK_THROWS_AS(
        parse_judgments(
            R"({"doc":"d","interpretation":{"type":"DN"},"kind":"annotation","markable":5,"player":"p1","polarity":-1})"),
        ValidationError);
  }
  SECTION("unknown kind and polarity are parse errors") {
    CHECK_THROWS_AS(
        parse_judgments(
            R"({"doc":"d","interpretation":{"type":"DN"},"kind":"vote","markable":5,"player":"p1","polarity":1})"),
        ParseError);
    CHECK_THROWS_AS(
        parse_judgments(
            R"({"doc":"d","interpretation":{"type":"DN"},"kind":"validation","markable":5,"player":"p1","polarity":0})"),
        ParseError);
  }
  SECTION("round trip keeps file order") {
    JudgmentLog log = {
        {"z", "d", 3, make_pr(1), JudgmentKind::Annotation, 1},
        {"a", "d", 2, make_do({1, 2}), JudgmentKind::Validation, -1},
        {"m", "c", 1, make_ex(), JudgmentKind::Annotation, 1},
    };
    const std::string text = serialize_judgments(log);
    CHECK(parse_judgments(text) == log);
    CHECK(serialize_judgments(parse_judgments(text)) == text);
  }
}

TEST_CASE("referential integrity of a judgment log", "[corpus_io]") {
  const Corpus c = sample_corpus();
  JudgmentLog ok = {{"p", "a", 2, make_do({1}), JudgmentKind::Annotation, 1}};
  CHECK_NOTHROW(check_referential_integrity(c, ok));
  JudgmentLog bad_doc = {{"p", "zz", 2, make_dn(), JudgmentKind::Annotation, 1}};
  CHECK_THROWS_AS(check_referential_integrity(c, bad_doc), StructuralError);
  JudgmentLog bad_markable = {{"p", "a", 99, make_dn(), JudgmentKind::Annotation, 1}};
  CHECK_THROWS_AS(check_referential_integrity(c, bad_markable), StructuralError);
}

TEST_CASE("export_conll writes bracket notation", "[corpus_io][conll]") {
  Document d;
  d.id = "doc";
  d.tokens = {"The", "king", "smiled", ".", "He", "left", ".", "It", "rained", "."};
  d.sentence_bounds = {{0, 4}, {4, 7}, {7, 10}};
  d.markables = {{1, {0, 2}, 1}, {2, {4, 5}, 4}, {3, {7, 8}, 7}};
  const LabelMap labels = {{1, make_dn()}, {2, make_do({1})}, {3, make_ex()}};
  const std::string out = export_conll(d, labels);
  CHECK(out ==
        "doc\t0\tThe\t(1\n"
        "doc\t1\tking\t1)\n"
        "doc\t2\tsmiled\t-\n"
        "doc\t3\t.\t-\n"
        "\n"
        "doc\t4\tHe\t(1)\n"
        "doc\t5\tleft\t-\n"
        "doc\t6\t.\t-\n"
        "\n"
        "doc\t7\tIt\t(2=EX)\n"
        "doc\t8\trained\t-\n"
        "doc\t9\t.\t-\n"
        "\n");

  const auto mentions = parse_conll(out);
  REQUIRE(mentions.size() == 3);
  CHECK(mentions[0] == ConllMention{"doc", {0, 2}, 1, std::nullopt});
  CHECK(mentions[1] == ConllMention{"doc", {4, 5}, 1, std::nullopt});
  CHECK(mentions[2] == ConllMention{"doc", {7, 8}, 2, InterpClass::EX});
}

TEST_CASE("export_conll nests and orders identical spans by id", "[corpus_io][conll]") {
  Document d;
  d.id = "n";
  d.tokens = {"the", "king", "'s", "men", "they"};
  d.sentence_bounds = {{0, 5}};
  d.markables = {{1, {0, 4}, 3}, {2, {0, 2}, 1}, {3, {0, 2}, 1}, {4, {4, 5}, 4}};
  const LabelMap labels = {{1, make_dn()}, {2, make_dn()}, {3, make_pr(2)}, {4, make_do({1})}};
  const std::string out = export_conll(d, labels);
  CHECK(out.find("n\t0\tthe\t(1|(2|(3=PR\n") != std::string::npos);
  CHECK(out.find("n\t1\tking\t3)|2)\n") != std::string::npos);
  CHECK(out.find("n\t3\tmen\t1)\n") != std::string::npos);

  const auto mentions = parse_conll(out);
  CHECK(mentions.size() == 4);
}

TEST_CASE("export_conll emits one line per token plus sentence separators",
          "[corpus_io][conll][property]") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Document d = line_doc("t", 1 + static_cast<int>(rng.index(30)));
    const int n = d.token_count();
    d.sentence_bounds.clear();
    for (int s = 0; s < n;) {
      const int e = std::min(n, s + 1 + static_cast<int>(rng.index(5)));
      d.sentence_bounds.push_back({s, e});
      s = e;
    }
    const LabelMap labels = random_labels(d, rng);
    const std::string out = export_conll(d, labels);
    std::size_t lines = 0, blanks = 0;
    std::size_t pos = 0;
    while (pos < out.size()) {
      const std::size_t nl = out.find('\n', pos);
      (nl == pos ? blanks : lines) += 1;
      pos = nl + 1;
    }
    REQUIRE(lines == static_cast<std::size_t>(n));
    REQUIRE(blanks == d.sentence_bounds.size());
    REQUIRE(parse_conll(out).size() == d.markables.size());
  }
}

TEST_CASE("corpus_stats counts documents, tokens and non-singleton markables", "[corpus_io]") {
  const Corpus c = parse_corpus(serialize_corpus(sample_corpus()));
  const CorpusStats st = corpus_stats(c);
  CHECK(st.total.documents == 4);
  CHECK(st.total.tokens == 20);
  CHECK(st.total.markables == 20);
  std::size_t expected = 0;
  for (const auto& [id, gold] : c.gold) {
    for (const auto& cl : derive_clusters(*c.find(id), gold).clusters) {
      if (cl.size() > 1) expected += cl.size();
    }
  }
  CHECK(st.total.non_singleton == expected);
  CHECK(format_stats_table(st).find("Total") != std::string::npos);
}

TEST_CASE("a release-sized corpus file reproduces the release totals", "[corpus_io][slow]") {
  // 805 documents, 1,378,503 tokens and 383,558 markables as in the
  // published release summary; the file is synthetic, only the shape matters.
  const int docs = 805;
  const long tokens = 1378503, markables = 383558;
  Corpus c;
  long tok_left = tokens, mk_left = markables;
  for (int i = 0; i < docs; ++i) {
    const int left = docs - i;
    const int nt = static_cast<int>(tok_left / left);
    const int nm = static_cast<int>(mk_left / left);
    tok_left -= nt;
    mk_left -= nm;
    Document d;
    char id[16];
    std::snprintf(id, sizeof id, "doc%04d", i);
    d.id = id;
    d.genre = i % 4 == 0 ? Genre::Gutenberg : Genre::Wikipedia;
    d.tokens.assign(nt, "w");
    d.sentence_bounds = {{0, nt}};
    for (int m = 0; m < nm; ++m) d.markables.push_back({m + 1, {m, m + 1}, std::nullopt});
    c.documents.push_back(std::move(d));
  }
  const Corpus parsed = parse_corpus(serialize_corpus(c));
  const CorpusStats st = corpus_stats(parsed);
  CHECK(st.total.documents == 805);
  CHECK(st.total.tokens == 1378503);
  CHECK(st.total.markables == 383558);
}
