#include <doctest.h>

#include <algorithm>
#include <set>

#include "alt/corpus.hpp"
#include "alt/errors.hpp"
#include "alt/rng.hpp"
#include "helpers.hpp"

using namespace alt;

TEST_CASE("vocabulary layout") {
  const auto v = build_vocabulary({"hi", "sun"}, {"grr"}, 5);
  CHECK(v.size() == 11);
  REQUIRE(v.toxic_lexicon().size() == 1);
  CHECK(v.toxic_lexicon()[0] == v.id("grr"));

  const auto w = build_vocabulary({"hi", "sun", "dog"}, {"grr", "ugh"}, 5);
  CHECK(w.token(0) == "hi");
  CHECK(w.token(1) == "sun");
  CHECK(w.token(2) == "dog");
  CHECK(w.token(3) == "grr");
  CHECK(w.token(4) == "ugh");
  CHECK(w.special().pad == 5);
  CHECK(w.special().eos == 6);
  CHECK(w.special().separator == 7);
  CHECK(w.special().quantile == std::vector<TokenId>{8, 9, 10, 11, 12});
  for (TokenId id = 5; id < 13; ++id) CHECK(w.is_special(id));
  CHECK_FALSE(w.is_special(4));
  CHECK(w.is_toxic(3));
  CHECK_FALSE(w.is_toxic(0));
}

TEST_CASE("vocabulary rejects overlap and duplicates") {
  CHECK_THROWS_AS(build_vocabulary({"a"}, {"a"}, 5), ValidationError);
  CHECK_THROWS_AS(build_vocabulary({"a", "a"}, {"b"}, 5), ValidationError);
  CHECK_THROWS_AS(build_vocabulary({}, {"b"}, 5), ValidationError);
  CHECK_THROWS_AS(build_vocabulary({"a b"}, {"c"}, 5), ValidationError);
}

TEST_CASE("tokenize and detokenize") {
  const auto v = build_vocabulary({"hi", "sun", ","}, {"grr"}, 2, {"Lowest"});
  const auto ids = v.tokenize("hi,  sun grr , Lowest");
  CHECK(ids == TokenSeq{v.id("hi"), v.id(","), v.id("sun"), v.id("grr"), v.id(","), v.id("Lowest")});
  CHECK(v.detokenize(std::vector<TokenId>{v.id("hi"), v.id("sun")}) == "hi sun");
  CHECK_THROWS_AS(v.tokenize("hi moon"), ValidationError);
  CHECK(v.control_words().size() == 1);
}

TEST_CASE("vocabulary json round trip") {
  const auto v = build_vocabulary({"hi", "sun"}, {"grr"}, 3, {"Lowest"});
  CHECK(Vocabulary::from_json(v.to_json()) == v);
}

TEST_CASE("corpus with zero toxic rate has no toxic tokens") {
  const auto v = testutil::tiny_vocab();
  CorpusSpec spec;
  spec.toxic_rate_levels = {0.0};
  spec.num_documents = 200;
  for (std::uint64_t seed : {1u, 2u, 99u}) {
    spec.seed = seed;
    for (const auto& d : generate_corpus(v, spec)) {
      for (auto id : d.tokens) CHECK_FALSE(v.is_toxic(id));
    }
  }
}

TEST_CASE("corpus with toxic rate one is all toxic") {
  const auto v = testutil::tiny_vocab();
  CorpusSpec spec;
  spec.toxic_rate_levels = {1.0};
  spec.num_documents = 50;
  for (const auto& d : generate_corpus(v, spec)) {
    REQUIRE(!d.tokens.empty());
    CHECK(d.tokens.back() == v.special().eos);
    for (std::size_t i = 0; i + 1 < d.tokens.size(); ++i) CHECK(v.is_toxic(d.tokens[i]));
  }
}

TEST_CASE("corpus generation is deterministic") {
  const auto v = testutil::tiny_vocab();
  CorpusSpec spec;
  spec.num_documents = 300;
  const auto a = generate_corpus(v, spec);
  const auto b = generate_corpus(v, spec);
  CHECK(a == b);
  testutil::TempDir dir("corpus");
  save_corpus(dir.str("a.jsonl"), a);
  save_corpus(dir.str("b.jsonl"), b);
  CHECK(testutil::slurp(dir.str("a.jsonl")) == testutil::slurp(dir.str("b.jsonl")));
  CHECK(load_corpus(dir.str("a.jsonl")) == a);

  spec.seed = 8;
  CHECK_FALSE(generate_corpus(v, spec) == a);
}

TEST_CASE("corpus documents have the configured length and levels") {
  const auto v = testutil::tiny_vocab();
  CorpusSpec spec;
  spec.num_documents = 100;
  spec.doc_length = 10;
  spec.toxic_rate_levels = {0.0, 0.3, 0.6};
  std::set<double> seen;
  for (const auto& d : generate_corpus(v, spec)) {
    CHECK(static_cast<int>(d.tokens.size()) == spec.doc_length);
    seen.insert(d.toxic_rate);
  }
  CHECK(seen == std::set<double>{0.0, 0.3, 0.6});
}

TEST_CASE("extract_prompts") {
  CorpusSpec spec;
  spec.doc_length = 4;
  spec.prompt_length = 2;
  std::vector<Document> docs{{{3, 1, 4, 6}, 0.0}};
  auto ps = extract_prompts(docs, spec);
  REQUIRE(ps.prompts.size() == 1);
  CHECK(ps.prompts[0] == TokenSeq{3, 1});
  CHECK_FALSE(ps.degenerate);

  spec.prompt_length = 0;
  ps = extract_prompts(docs, spec);
  CHECK(ps.degenerate);
  CHECK(ps.prompts[0].empty());

  const auto v = testutil::tiny_vocab();
  CorpusSpec big;
  big.num_documents = 100;
  const auto corpus = generate_corpus(v, big);
  const auto all = extract_prompts(corpus, big);
  REQUIRE(all.prompts.size() == 100);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(std::equal(all.prompts[i].begin(), all.prompts[i].end(), corpus[i].tokens.begin()));
  }
}

TEST_CASE("rng streams") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
  }
  CHECK(a.next_u64() != c.next_u64());

  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(r.below(7) < 7);
  }
  CHECK(mix_seed({1, 2}) != mix_seed({2, 1}));
  CHECK(mix_seed({1, 2, 3}) == mix_seed({1, 2, 3}));
}

TEST_CASE("rng below is roughly uniform") {
  Rng r(5);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[r.below(5)];
  for (int c : counts) CHECK(std::abs(c - n / 5) < 600);
}
