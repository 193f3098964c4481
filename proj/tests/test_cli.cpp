#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <catch2/catch_amalgamated.hpp>

#include "anacrowd/cli.hpp"

using namespace anacrowd;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::string fixture(const std::string& name) { return (fs::path(ANACROWD_FIXTURE_DIR) / name).string(); }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anacrowd_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return read_file(p.string()); }

void spit(const fs::path& p, const std::string& s) { write_file(p.string(), s); }

const char* kSmallConfig = R"({
  "simulate": {"documents": 8, "dev_documents": 3, "short_min_tokens": 60, "short_max_tokens": 160,
               "long_min_tokens": 2001, "long_max_tokens": 2050, "seed": 3},
  "loop": {"max_iterations": 2}
})";

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

struct EnvGuard {
  explicit EnvGuard(const std::string& v) { ::setenv(cli::kConfigEnv, v.c_str(), 1); }
  ~EnvGuard() { ::unsetenv(cli::kConfigEnv); }
};

}  // namespace

TEST_CASE("speedup prints the extra judgments and years", "[cli]") {
  const Run r = run({"speedup", "--avg", "7.7", "--target", "20", "--markables", "250000", "--rate", "334000"});
  CHECK(r.code == 0);
  CHECK(r.out == "extra=3.08M (3075000 judgments), years=9.21\n");
  CHECK(run({"speedup", "--avg", "0", "--target", "20", "--markables", "1", "--rate", "1"}).code == 2);
}

TEST_CASE("usage errors exit with 2", "[cli]") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"stats"}).code == 2);
  CHECK(run({"score", "--key", "a", "--response", "b", "--mode", "sideways"}).code == 2);
  const Run help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
}

TEST_CASE("missing files are configuration errors, bad data is invalid input", "[cli]") {
  const Run missing = run({"stats", "--corpus", "/nonexistent/corpus.jsonl"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("cannot open") != std::string::npos);
  CHECK(run({"stats", "--corpus", fixture("bad_corpus_malformed.jsonl")}).code == 1);
  CHECK(run({"stats", "--corpus", fixture("bad_corpus_forward_antecedent.jsonl")}).code == 1);
  CHECK(run({"stats", "--corpus", fixture("bad_corpus_utf8.jsonl")}).code == 1);
  const fs::path d = scratch("bad");
  CHECK(run({"aggregate", "--corpus", fixture("corpus_canonical.jsonl"), "--judgments",
             fixture("bad_judgments_kind.jsonl"), "--out", (d / "a").string()})
            .code == 1);
  // Judgments that point at markables the corpus does not have.
  CHECK(run({"aggregate", "--corpus", fixture("corpus_canonical.jsonl"), "--judgments",
             fixture("judgments_mixed.jsonl"), "--out", (d / "b").string()})
            .code == 1);
}

TEST_CASE("stats reports every genre and a total", "[cli]") {
  const Run r = run({"stats", "--corpus", fixture("corpus_multi_genre.jsonl")});
  REQUIRE(r.code == 0);
  for (const char* g : {"Gutenberg", "Wikipedia", "Other", "Total"}) CHECK(r.out.find(g) != std::string::npos);
}

TEST_CASE("config sections are strict", "[cli]") {
  const fs::path d = scratch("config");
  spit(d / "section.json", R"({"simulate": {}, "plot": {}})");
  spit(d / "key.json", R"({"train": {"epochs": 2, "learning_speed": 1}})");
  spit(d / "broken.json", "{");
  const std::string corpus = fixture("corpus_all_classes.jsonl");
  for (const char* f : {"section.json", "key.json", "broken.json"}) {
    INFO(f);
    CHECK(run({"--config", (d / f).string(), "train", "--corpus", corpus, "--out", (d / "m").string()}).code == 2);
  }
  CHECK(run({"--config", (d / "missing.json").string(), "stats", "--corpus", corpus}).code == 2);
}

TEST_CASE("flags override the config file, which may come from the environment", "[cli]") {
  const fs::path d = scratch("override");
  spit(d / "cfg.json", R"({"train": {"epochs": 2, "seed": 11}})");
  const std::string corpus = fixture("corpus_multi_genre.jsonl");
  {
    EnvGuard env((d / "cfg.json").string());
    REQUIRE(run({"train", "--corpus", corpus, "--out", (d / "env").string()}).code == 0);
    REQUIRE(run({"train", "--corpus", corpus, "--out", (d / "flag").string(), "--seed", "12"}).code == 0);
  }
  const Json env_cfg = Json::parse(slurp(d / "env" / "config.json"));
  CHECK(env_cfg["train"]["epochs"] == 2);
  CHECK(env_cfg["train"]["seed"] == 11);
  const Json flag_cfg = Json::parse(slurp(d / "flag" / "config.json"));
  CHECK(flag_cfg["train"]["epochs"] == 2);
  CHECK(flag_cfg["train"]["seed"] == 12);
  // Without the variable the defaults apply.
  REQUIRE(run({"train", "--corpus", corpus, "--out", (d / "plain").string()}).code == 0);
  CHECK(Json::parse(slurp(d / "plain" / "config.json"))["train"]["epochs"] == ResolverConfig{}.epochs);
}

TEST_CASE("train, resolve and score", "[cli][integration]") {
  const fs::path d = scratch("trs");
  const std::string corpus = fixture("corpus_multi_genre.jsonl");
  REQUIRE(run({"train", "--corpus", corpus, "--out", (d / "m").string()}).code == 0);
  CHECK(parse_model(slurp(d / "m" / "model.json")).source == "gold");
  REQUIRE(run({"resolve", "--model", (d / "m" / "model.json").string(), "--corpus", corpus, "--out",
               (d / "r").string()})
              .code == 0);
  const Corpus resp = parse_corpus(slurp(d / "r" / "response.jsonl"));
  CHECK(resp.gold.size() == 3);
  CHECK(run({"resolve", "--sieve", "--model", (d / "m" / "model.json").string(), "--corpus", corpus, "--out",
             (d / "x").string()})
            .code == 2);
  CHECK(run({"resolve", "--corpus", corpus, "--out", (d / "x").string()}).code == 2);

  // A key scored against itself is perfect.
  const Run self = run({"score", "--key", corpus, "--response", corpus, "--mode", "include-singletons", "--out",
                        (d / "s").string()});
  REQUIRE(self.code == 0);
  const Json rep = Json::parse(slurp(d / "s" / "score.json"));
  REQUIRE(rep.size() == 1);
  CHECK(rep[0]["conll_f1"].get<double>() == Catch::Approx(100.0));
  CHECK(rep[0]["singletons"] == "included");
  CHECK(run({"score", "--key", corpus, "--response", (d / "r" / "response.jsonl").string()}).code == 0);
  // A key without gold cannot be scored.
  CHECK(run({"score", "--key", fixture("corpus_no_gold.jsonl"), "--response", corpus}).code == 1);
}

TEST_CASE("aggregate writes labels for both methods", "[cli]") {
  const fs::path d = scratch("agg");
  for (const char* method : {"mpa", "mv"}) {
    INFO(method);
    const fs::path out = d / method;
    REQUIRE(run({"aggregate", "--corpus", fixture("corpus_canonical.jsonl"), "--judgments",
                 fixture("judgments_canonical.jsonl"), "--out", out.string(), "--method", method})
                .code == 0);
    CHECK(fs::exists(out / "labels.json"));
    CHECK(fs::exists(out / "config.json"));
    CHECK(fs::exists(out / "aggregation-report.json") == (std::string(method) == "mpa"));
  }
}

TEST_CASE("simulate and loop produce byte-identical outputs", "[cli][integration]") {
  const fs::path d = scratch("repro");
  spit(d / "cfg.json", kSmallConfig);
  const std::string cfg = (d / "cfg.json").string();
  for (const char* name : {"a", "b"}) {
    const fs::path root = d / name;
    REQUIRE(run({"--config", cfg, "simulate", "--out", (root / "sim").string()}).code == 0);
    const Run loop = run({"--config", cfg, "loop", "--corpus", (root / "sim" / "corpus.jsonl").string(),
                          "--judgments", (root / "sim" / "judgments.jsonl").string(), "--dev",
                          (root / "sim" / "dev.jsonl").string(), "--out", (root / "run").string()});
    REQUIRE(loop.code == 0);
    CHECK(loop.out.find("best iteration") != std::string::npos);
  }
  const auto a = tree(d / "a"), b = tree(d / "b");
  CHECK(a.size() >= 10);
  REQUIRE(a.size() == b.size());
  for (const auto& [path, content] : a) {
    INFO(path);
    CHECK(b.at(path) == content);
  }
  const Json resolved = Json::parse(a.at("sim/config.json"));
  CHECK(resolved["simulate"]["documents"] == 8);
  CHECK(parse_corpus(a.at("sim/corpus.jsonl")).documents.size() == 8);

  // A different seed changes the corpus.
  REQUIRE(run({"--config", cfg, "simulate", "--out", (d / "c").string(), "--seed", "4"}).code == 0);
  CHECK(slurp(d / "c" / "corpus.jsonl") != a.at("sim/corpus.jsonl"));
}

TEST_CASE("the sample config is accepted", "[cli]") {
  const std::string cfg = (fs::path(ANACROWD_FIXTURE_DIR) / ".." / ".." / "samples" / "config.json").string();
  const fs::path d = scratch("sample");
  CHECK(run({"--config", cfg, "stats", "--corpus", fixture("corpus_canonical.jsonl")}).code == 0);
  REQUIRE(run({"--config", cfg, "train", "--corpus", fixture("corpus_multi_genre.jsonl"), "--out", d.string()}).code == 0);
  CHECK(Json::parse(slurp(d / "config.json"))["train"]["epochs"] == 8);
}
