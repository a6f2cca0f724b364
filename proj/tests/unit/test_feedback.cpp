#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "alt/config.hpp"
#include "alt/errors.hpp"
#include "alt/feedback.hpp"
#include "alt/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace alt;
using namespace alt::feedback;

TEST_CASE("toxicity_score") {
  const auto v = testutil::tiny_vocab();
  const auto grr = v.id("grr"), ugh = v.id("ugh"), hi = v.id("hi");
  CHECK(toxicity_score(v, TokenSeq{grr, hi, ugh, hi}) == 0.5);
  CHECK(toxicity_score(v, TokenSeq{hi, hi}) == 0.0);
  CHECK(toxicity_score(v, TokenSeq{grr, ugh}) == 1.0);
  CHECK(toxicity_score(v, TokenSeq{}) == 0.0);
  // Special tokens are not counted.
  CHECK(toxicity_score(v, TokenSeq{grr, hi, v.special().eos}) == 0.5);
  CHECK(toxicity_score(v, TokenSeq{v.special().eos}) == 0.0);
}

TEST_CASE("toxicity_score is permutation invariant") {
  const auto v = testutil::tiny_vocab();
  Rng rng(4);
  for (int c = 0; c < 500; ++c) {
    TokenSeq g(rng.below(12) + 1);
    for (auto& t : g) t = static_cast<TokenId>(rng.below(7));
    const double s = toxicity_score(v, g);
    rng.shuffle(std::span<TokenId>(g));
    CHECK(toxicity_score(v, g) == s);
  }
}

TEST_CASE("quantile examples") {
  const std::vector<double> r{.9, .8, .7, .6, .5, .4, .3, .2, .1, 0};
  CHECK(map_rewards_to_quantiles(r, 5) == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4});

  const std::vector<double> same(10, 0.3);
  CHECK(map_rewards_to_quantiles(same, 5) == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3, 4, 4});

  const std::vector<double> seven{.1, .2, .3, .4, .5, .6, .7};
  const auto c = map_rewards_to_quantiles(seven, 5);
  std::map<int, int> sizes;
  for (int x : c) ++sizes[x];
  CHECK(sizes == std::map<int, int>{{0, 2}, {1, 2}, {2, 1}, {3, 1}, {4, 1}});
  CHECK(c == std::vector<int>{4, 3, 2, 1, 1, 0, 0});

  CHECK(map_rewards_to_quantiles(std::vector<double>{.5, .1}, 5) == std::vector<int>{0, 1});
  CHECK_THROWS_AS(map_rewards_to_quantiles(std::vector<double>{}, 5), ValidationError);
  CHECK_THROWS_AS(map_rewards_to_quantiles(std::vector<double>{1.0}, 0), ValidationError);
}

TEST_CASE("quantile mapper properties on random rewards") {
  Rng rng(2024);
  for (int c = 0; c < 3000; ++c) {
    const int n = 1 + static_cast<int>(rng.below(24));
    const int k = 1 + static_cast<int>(rng.below(6));
    std::vector<double> r(static_cast<std::size_t>(n));
    const bool coarse = rng.below(2) == 0;  // many ties
    for (auto& x : r) x = coarse ? static_cast<double>(rng.below(4)) / 4.0 : rng.uniform();
    const auto cat = map_rewards_to_quantiles(r, k);
    REQUIRE(cat == oracle::quantiles(r, k));

    std::map<int, int> sizes;
    for (int x : cat) {
      CHECK((x >= 0 && x < k));
      ++sizes[x];
    }
    int lo = n, hi = 0;
    for (int g = 0; g < std::min(n, k); ++g) {
      lo = std::min(lo, sizes[g]);
      hi = std::max(hi, sizes[g]);
    }
    CHECK(hi - lo <= 1);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (r[i] > r[j]) CHECK(cat[i] <= cat[j]);
      }
    }
  }
}

TEST_CASE("permuting distinct rewards keeps the (reward, category) pairs") {
  Rng rng(77);
  for (int c = 0; c < 500; ++c) {
    const int n = 2 + static_cast<int>(rng.below(20));
    std::vector<double> r(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) r[i] = i + rng.uniform() * 0.5;
    auto perm = r;
    rng.shuffle(std::span<double>(perm));
    const auto a = map_rewards_to_quantiles(r, 5), b = map_rewards_to_quantiles(perm, 5);
    std::set<std::pair<double, int>> sa, sb;
    for (int i = 0; i < n; ++i) {
      sa.insert({r[i], a[i]});
      sb.insert({perm[i], b[i]});
    }
    CHECK(sa == sb);
  }
}

TEST_CASE("scheme labels") {
  CHECK(label_for_category(toxicity_scheme(), 0).text == "Lowest Toxicity");
  CHECK(label_for_category(toxicity_scheme(), 4).text == "Maximum Toxicity");
  CHECK(label_for_category(summarization_scheme(), 2).text == "Mediocre");
  CHECK(label_for_category(toxicity_alt_scheme(), 0).text == "nontoxic");
  CHECK(label_for_category(toxicity_alt_scheme(), 4).text == "very toxic");
  CHECK(dialogue_scheme().k() == 4);
  CHECK_THROWS_AS(label_for_category(toxicity_scheme(), 5), ValidationError);
  CHECK_THROWS_AS(scheme_by_name("nope"), ValidationError);
  for (const auto& name : scheme_names()) {
    const auto s = scheme_by_name(name);
    CHECK(QuantileScheme::from_json(s.to_json()).to_json() == s.to_json());
  }
}

TEST_CASE("steerlm mapping") {
  const auto d = dialogue_scheme();
  const std::map<std::string, std::string> table{{"Harmless and very helpful", "harmful:0,helpful:2"},
                                                 {"Harmless and helpful", "harmful:0,helpful:1"},
                                                 {"Harmless and not helpful", "harmful:0,helpful:0"},
                                                 {"Harmful", "harmful:1,helpful:0"}};
  std::set<std::string> images;
  for (const auto& l : d.labels) {
    CHECK(steerlm_linearize(l) == table.at(l.text));
    images.insert(steerlm_linearize(l));
  }
  CHECK(images.size() == 4);
  CHECK_THROWS_AS(steerlm_linearize(FeedbackLabel{"Excellent", 0}), ValidationError);
}

TEST_CASE("feedback encodings") {
  const auto vocab = cfg::desk_vocabulary(5);
  const auto tox = toxicity_scheme();
  const Feedback best = label_for_category(tox, 0);
  CHECK(encode_feedback(best, tox, vocab) == vocab.tokenize("Lowest Toxicity"));

  auto quark = tox;
  quark.encoding = Encoding::quantile_token;
  CHECK(encode_feedback(best, quark, vocab) == TokenSeq{vocab.special().quantile[0]});
  CHECK(encode_feedback(label_for_category(quark, 3), quark, vocab) == TokenSeq{vocab.special().quantile[3]});

  auto steer = dialogue_scheme();
  steer.encoding = Encoding::linearized;
  CHECK(render_feedback(label_for_category(steer, 0), steer) == "harmful:0,helpful:2");
  CHECK(encode_feedback(label_for_category(steer, 0), steer, vocab) == vocab.tokenize("harmful:0,helpful:2"));

  const auto summ = summarization_scheme();
  CHECK(render_feedback(label_for_category(summ, 0), summ) == "Excellent input:");
  const Feedback free = UnconstrainedFeedback{"ok", "Accurate and concise", 3};
  CHECK(render_feedback(free, summ) == "Accurate and concise input:");
  CHECK(feedback_category(free) == 0);
  CHECK(score_class(UnconstrainedFeedback{"", "x", 1}) == 2);

  // Every shipped label must be expressible in the desk vocabulary.
  for (const auto& name : scheme_names()) {
    const auto s = scheme_by_name(name);
    for (const auto& l : s.labels) CHECK_NOTHROW(encode_feedback(Feedback{l}, s, vocab));
  }
  for (const auto& l : steer.labels) CHECK_NOTHROW(encode_feedback(Feedback{l}, steer, vocab));
}
