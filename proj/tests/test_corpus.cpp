#include "recomb/corpus.hpp"

#include "support.hpp"

#include <doctest.h>

#include <fmt/format.h>

#include <fstream>
#include <sstream>

using namespace recomb;

namespace {

TokenizedCorpus corpus_of(std::vector<std::vector<std::string>> docs, int slices = 1,
                          std::vector<Source> sources = {}) {
  TokenizedCorpus c;
  c.slices = {2000, 2000 + slices - 1, 1};
  for (std::size_t i = 0; i < docs.size(); ++i)
    c.docs.push_back({static_cast<std::int32_t>(i % static_cast<std::size_t>(slices)),
                      sources.empty() ? Source::news : sources[i], std::move(docs[i])});
  return c;
}

std::vector<DocumentRecord> mini_documents() {
  std::ifstream in(std::string(RECOMB_DATA_DIR) + "/mini/corpus.jsonl");
  REQUIRE(in);
  return read_documents(in);
}

}  // namespace

TEST_CASE("tokenize applies lowercase, punctuation and number rules") {
  TokenRules rules;
  CHECK(tokenize("The Telescope, 1608!", rules) == std::vector<std::string>{"telescope", "1608"});
  rules.strip_numbers = true;
  CHECK(tokenize("The Telescope, 1608!", rules) == std::vector<std::string>{"telescope"});
  CHECK(tokenize("", rules).empty());
  CHECK(tokenize("the of and", rules).empty());
}

TEST_CASE("tokenize joins configured bigrams before stopword removal") {
  TokenRules rules;
  rules.bigrams = {{"machine", "learning"}};
  CHECK(tokenize("Machine learning for the machine", rules) ==
        std::vector<std::string>{"machine_learning", "machine"});
}

TEST_CASE("tokenize keeps punctuation when not stripping") {
  TokenRules rules;
  rules.strip_punctuation = false;
  rules.lowercase = false;
  CHECK(tokenize("Hello, World!", rules) == std::vector<std::string>{"Hello,", "World!"});
}

TEST_CASE("mini corpus document #3 tokenizes to the recorded list") {
  const auto docs = mini_documents();
  REQUIRE(docs.size() > 3);
  CHECK(docs[2].id == "d2014-002");
  const std::vector<std::string> golden = {"film",  "studio", "media", "streaming",     "video", "studio",
                                           "entertainment", "media", "music", "film", "entertainment", "series"};
  CHECK(tokenize(docs[2].text, TokenRules{}) == golden);
}

TEST_CASE("read_documents parses fields and reports bad lines") {
  std::istringstream ok(R"({"id":"x","year":2001,"source":"patent","text":"hi"}

{"id":"y","year":2002,"text":"there"})");
  const auto docs = read_documents(ok);
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].source == Source::patent);
  CHECK(docs[1].source == Source::other);
  std::istringstream bad("{\"id\":\"x\",\"year\":2001,\"text\":\"a\"}\nnot json\n");
  try {
    read_documents(bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("documents outside the slice range or empty are skipped and counted") {
  const std::vector<DocumentRecord> docs = {
      {"a", 1999, Source::news, "early text"}, {"b", 2000, Source::news, "kept text"}, {"c", 2000, Source::news, "  "}};
  const auto c = tokenize_corpus(docs, TokenRules{}, {2000, 2001, 1});
  CHECK(c.docs.size() == 1);
  CHECK(c.skipped_out_of_range == 1);
  CHECK(c.skipped_empty == 1);
}

TEST_CASE("build_vocab thresholds per slice and orders ids") {
  auto c = corpus_of({{"alpha", "alpha", "alpha", "alpha", "alpha", "beta"}});
  auto v = build_vocab(c, 2);
  CHECK(v.words() == std::vector<std::string>{"alpha"});
  v = build_vocab(c, 1);
  CHECK(v.words() == std::vector<std::string>{"alpha", "beta"});
  CHECK(v.global_count(0) == 5);
  CHECK(v.slice_total(0) == 6);

  auto ties = corpus_of({{"pear", "apple", "fig", "fig"}});
  CHECK(build_vocab(ties, 1).words() == std::vector<std::string>{"fig", "apple", "pear"});

  // Count in one slice suffices even if the global total is spread thin.
  auto spread = corpus_of({{"x", "x", "y"}, {"y", "z"}}, 2);
  CHECK(build_vocab(spread, 2).words() == std::vector<std::string>{"x"});
  CHECK_THROWS_WITH_AS(build_vocab(corpus_of({{"a"}}), 2), "empty vocabulary", Error);
}

TEST_CASE("mini corpus vocabulary size matches a naive count") {
  const auto docs = mini_documents();
  const SliceSpec slices{2014, 2016, 1};
  const auto c = tokenize_corpus(docs, TokenRules{}, slices);
  for (auto [min_count, golden] : {std::pair{3, 102}, std::pair{50, 25}}) {
    std::map<std::string, std::map<int, int>> counts;
    for (const auto& d : docs) {
      if (slices.slice_of(d.year) < 0) continue;
      for (const auto& t : tokenize(d.text, TokenRules{})) ++counts[t][d.year];
    }
    int naive = 0;
    for (const auto& [w, per] : counts) {
      int best = 0;
      for (const auto& [y, n] : per) best = std::max(best, n);
      naive += best >= min_count;
    }
    CHECK(naive == golden);
    CHECK(build_vocab(c, min_count).size() == golden);
  }
}

TEST_CASE("vocabulary tsv round trip") {
  auto c = corpus_of({{"a", "b", "a"}, {"c", "a"}}, 2);
  const auto v = build_vocab(c, 1);
  std::stringstream ss;
  v.write_tsv(ss);
  CHECK(Vocabulary::read_tsv(ss) == v);
}

TEST_CASE("co-occurrence of the smallest document") {
  const auto c = corpus_of({{"a", "b"}});
  const auto v = build_vocab(c, 1);
  auto counts = count_cooccurrence(c, v, {1, false}, SourceWeights{});
  REQUIRE(counts.size() == 1);
  const auto a = *v.id("a"), b = *v.id("b");
  CHECK(counts[0].counts.at(a, b) == 1.0);
  CHECK(counts[0].counts.at(b, a) == 1.0);
  CHECK(counts[0].marginals[a] == 1.0);
  CHECK(counts[0].marginals[b] == 1.0);
  CHECK(counts[0].total == 2.0);

  SourceWeights heavy;
  heavy.news = 2.0;
  counts = count_cooccurrence(c, v, {1, false}, heavy);
  CHECK(counts[0].counts.at(a, b) == 2.0);
  CHECK(counts[0].marginals[a] == 2.0);
  CHECK(counts[0].total == 4.0);
}

TEST_CASE("window of two counts every pair in a three-token document once") {
  const auto c = corpus_of({{"a", "b", "c"}});
  const auto v = build_vocab(c, 1);
  const auto counts = count_cooccurrence(c, v, {2, false}, SourceWeights{});
  const auto& m = counts[0].counts;
  const auto a = *v.id("a"), b = *v.id("b"), cc = *v.id("c");
  CHECK(m.at(a, b) == 1.0);
  CHECK(m.at(a, cc) == 1.0);
  CHECK(m.at(b, cc) == 1.0);
  CHECK(m.at(a, a) == 0.0);
  CHECK(counts[0].total == 6.0);
}

TEST_CASE("co-occurrence equals brute-force pair enumeration") {
  std::mt19937_64 rng(21);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f", "g"};
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<std::string>> docs;
    std::vector<Source> sources;
    for (int d = 0; d < 30; ++d) {
      std::vector<std::string> toks;
      for (int i = testing::uniform_int(rng, 0, 9); i > 0; --i) toks.push_back(alphabet[testing::uniform_int(rng, 0, 6)]);
      docs.push_back(toks);
      sources.push_back(d % 3 == 0 ? Source::patent : Source::news);
    }
    const auto c = corpus_of(docs, 2, sources);
    const auto v = build_vocab(c, 1);
    const int window = testing::uniform_int(rng, 1, 3);
    SourceWeights w{1.0, 2.5, 1.0};
    const auto counts = count_cooccurrence(c, v, {window, false}, w);

    std::vector<std::map<std::pair<int, int>, double>> oracle(2);
    for (const auto& d : c.docs) {
      const double wt = w.of(d.source);
      for (std::size_t i = 0; i < d.tokens.size(); ++i)
        for (std::size_t j = i + 1; j < d.tokens.size() && j <= i + static_cast<std::size_t>(window); ++j) {
          const int x = *v.id(d.tokens[i]), y = *v.id(d.tokens[j]);
          if (x == y) continue;
          oracle[d.slice][{x, y}] += wt;
          oracle[d.slice][{y, x}] += wt;
        }
    }
    for (int t = 0; t < 2; ++t) {
      double total = 0.0;
      for (std::int32_t x = 0; x < v.size(); ++x) {
        double row = 0.0;
        for (std::int32_t y = 0; y < v.size(); ++y) {
          const auto it = oracle[t].find({x, y});
          const double expect = it == oracle[t].end() ? 0.0 : it->second;
          CHECK(counts[t].counts.at(x, y) == doctest::Approx(expect).epsilon(1e-15));
          row += expect;
        }
        CHECK(counts[t].marginals[x] == doctest::Approx(row).epsilon(1e-15));
        total += row;
      }
      CHECK(counts[t].total == doctest::Approx(total).epsilon(1e-15));
    }
  }
}

TEST_CASE("ppmi follows the shifted positive pmi formula") {
  SliceCooccurrence s;
  const Triplet upper[] = {{0, 1, 2.0}};
  s.counts = CsrMatrix::from_upper(2, upper);
  s.marginals = {4.0, 2.0};
  s.total = 8.0;
  auto p = build_ppmi(s, 1.0);
  CHECK(p.values.at(0, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(p.values.at(0, 1) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(p.values.at(1, 0) == p.values.at(0, 1));
  CHECK(p.values.at(0, 0) == 0.0);
  p = build_ppmi(s, std::exp(1.0));
  CHECK(p.values.nnz() == 0);
  CHECK_THROWS_AS(build_ppmi(s, 0.5), ConfigError);

  s.marginals = {0.0, 2.0};
  CHECK_THROWS_AS(build_ppmi(s, 1.0), Error);
}

TEST_CASE("ppmi is symmetric, nonnegative and invariant to weight scaling") {
  std::mt19937_64 rng(22);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f"};
  std::vector<std::vector<std::string>> docs;
  std::vector<Source> sources;
  for (int d = 0; d < 40; ++d) {
    std::vector<std::string> toks;
    for (int i = testing::uniform_int(rng, 2, 10); i > 0; --i) toks.push_back(alphabet[testing::uniform_int(rng, 0, 5)]);
    docs.push_back(toks);
    sources.push_back(d % 2 ? Source::patent : Source::news);
  }
  const auto c = corpus_of(docs, 1, sources);
  const auto v = build_vocab(c, 1);
  const SourceWeights base{1.0, 3.0, 1.0};
  const SourceWeights scaled{7.5, 22.5, 7.5};
  const auto p1 = build_ppmi(count_cooccurrence(c, v, {3, false}, base)[0]);
  const auto p2 = build_ppmi(count_cooccurrence(c, v, {3, false}, scaled)[0]);
  for (std::int32_t i = 0; i < v.size(); ++i)
    for (std::int32_t j = 0; j < v.size(); ++j) {
      CHECK(p1.values.at(i, j) == p1.values.at(j, i));
      CHECK(p1.values.at(i, j) >= 0.0);
      CHECK(std::isfinite(p1.values.at(i, j)));
      CHECK(std::abs(p1.values.at(i, j) - p2.values.at(i, j)) <= 1e-12);
    }
}

TEST_CASE("ppmi text format round trips exactly") {
  std::mt19937_64 rng(23);
  const PpmiMatrix m{3, testing::random_symmetric(rng, 12, 0.4)};
  std::stringstream ss;
  write_ppmi(ss, m);
  std::string header;
  std::getline(std::istringstream(ss.str()), header);
  CHECK(header == fmt::format("3 12 {}", m.values.upper_triplets().size()));
  const auto back = read_ppmi(ss);
  CHECK(back.slice == 3);
  CHECK(back.values == m.values);
}

TEST_CASE("encode_corpus rejects nonpositive weights") {
  const auto c = corpus_of({{"a", "b"}});
  const auto v = build_vocab(c, 1);
  CHECK_THROWS(encode_corpus(c, v, SourceWeights{0.0, 1.0, 1.0}));
}
