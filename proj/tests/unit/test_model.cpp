#include <doctest.h>

#include <cmath>

#include "alt/checkpoint.hpp"
#include "alt/errors.hpp"
#include "alt/model.hpp"
#include "alt/sampling.hpp"
#include "helpers.hpp"

using namespace alt;
using namespace alt::lm;

TEST_CASE("init_params is deterministic and shaped") {
  const auto cfg = testutil::tiny_model(11);
  const auto a = init_params(cfg, 3);
  const auto b = init_params(cfg, 3);
  CHECK(a.values == b.values);
  CHECK_FALSE(init_params(cfg, 4).values == a.values);
  const auto& emb = a.layout.find("tok_emb");
  CHECK(emb.shape == std::vector<std::size_t>{11, 8});

  auto bad = cfg;
  bad.n_heads = 3;
  CHECK_THROWS_AS(init_params(bad, 1), ValidationError);
  bad = cfg;
  bad.prompt_position = bad.max_seq_len;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("forward gives normalized distributions") {
  const auto cfg = testutil::tiny_model(13, 8, 2, 2, 16, 12);
  const auto p = testutil::random_params(cfg, 7);
  const TokenSeq toks{1, 5, 2, 9, 0, 12, 3};
  const auto out = forward(p, std::span<const TokenId>(toks));
  REQUIRE(out.length == 7);
  for (int t = 0; t < out.length; ++t) {
    const auto probs = softmax(out.at(t));
    double s = 0.0;
    for (double x : probs) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("forward is causal") {
  const auto cfg = testutil::tiny_model(13, 8, 2, 2, 16, 12);
  const auto p = testutil::random_params(cfg, 9);
  TokenSeq toks{1, 5, 2, 9, 0, 12, 3};
  const auto base = forward(p, std::span<const TokenId>(toks));
  for (int t = 0; t < 7; ++t) {
    auto changed = toks;
    changed[static_cast<std::size_t>(t)] = (changed[static_cast<std::size_t>(t)] + 1) % 13;
    const auto out = forward(p, std::span<const TokenId>(changed));
    for (int s = 0; s < t; ++s) {
      for (int v = 0; v < 13; ++v) CHECK(out.at(s)[static_cast<std::size_t>(v)] == base.at(s)[static_cast<std::size_t>(v)]);
    }
    bool differs = false;
    for (int v = 0; v < 13; ++v) differs |= out.at(t)[static_cast<std::size_t>(v)] != base.at(t)[static_cast<std::size_t>(v)];
    CHECK(differs);
  }
}

TEST_CASE("single-token vocabulary is certain") {
  const auto cfg = testutil::tiny_model(1);
  const auto p = testutil::random_params(cfg, 1);
  const TokenSeq toks{0, 0, 0, 0};
  const auto out = forward(p, std::span<const TokenId>(toks));
  for (int t = 0; t < 4; ++t) CHECK(softmax(out.at(t))[0] == 1.0);
  for (double lp : sequence_logprob(p, TokenSeq{0}, TokenSeq{0, 0, 0})) CHECK(lp == 0.0);
}

TEST_CASE("forward rejects overlong or invalid input") {
  const auto cfg = testutil::tiny_model(5, 8, 1, 2, 16, 4);
  const auto p = init_params(cfg, 1);
  CHECK_THROWS_AS(forward(p, std::span<const TokenId>(TokenSeq{0, 1, 2, 3, 4})), ValidationError);
  CHECK_THROWS_AS(forward(p, std::span<const TokenId>(TokenSeq{0, 7})), ValidationError);
  CHECK_THROWS_AS(forward<float>(p, std::span<const TokenId>(TokenSeq{0, 1}), nullptr, nullptr, 3), ValidationError);
  CHECK_NOTHROW(forward<float>(p, std::span<const TokenId>(TokenSeq{0, 1}), nullptr, nullptr, 2));
}

TEST_CASE("decoder matches forward at every position and offset") {
  const auto cfg = testutil::tiny_model(13, 8, 2, 2, 16, 16);
  const auto p = testutil::random_params(cfg, 11);
  const TokenSeq toks{4, 4, 1, 0, 7, 12, 2, 3};
  for (int offset : {0, 3, 8}) {
    const auto out = forward<float>(p, std::span<const TokenId>(toks), nullptr, nullptr, offset);
    Decoder<float> dec(p, offset);
    for (int t = 0; t < 8; ++t) {
      const auto logits = dec.push(toks[static_cast<std::size_t>(t)]);
      for (int v = 0; v < 13; ++v) CHECK(logits[static_cast<std::size_t>(v)] == out.at(t)[static_cast<std::size_t>(v)]);
    }
  }
}

TEST_CASE("position offset changes the logits") {
  const auto cfg = testutil::tiny_model(13, 8, 1, 2, 16, 16);
  const auto p = testutil::random_params(cfg, 2);
  const TokenSeq toks{4, 5};
  const auto a = forward<float>(p, std::span<const TokenId>(toks), nullptr, nullptr, 0);
  const auto b = forward<float>(p, std::span<const TokenId>(toks), nullptr, nullptr, 1);
  CHECK_FALSE(a.logits == b.logits);
}

TEST_CASE("backward leaves unused position embeddings untouched") {
  const auto cfg = testutil::tiny_model(7, 8, 1, 2, 16, 12);
  const auto p = testutil::random_params(cfg, 4).cast<double>();
  const TokenSeq toks{1, 2, 3};
  ForwardCache<double> cache;
  const auto out = forward<double>(p, std::span<const TokenId>(toks), &cache, nullptr, 5);
  std::vector<double> dlogits(out.logits.size(), 1.0);
  std::vector<double> grads(p.values.size(), 0.0);
  backward(p, cache, std::span<const double>(dlogits), grads);
  const auto& pe = p.layout.find("pos_emb");
  for (int pos = 0; pos < 12; ++pos) {
    double norm = 0.0;
    for (int i = 0; i < 8; ++i) norm += std::abs(grads[pe.offset + static_cast<std::size_t>(pos) * 8 + static_cast<std::size_t>(i)]);
    if (pos >= 5 && pos < 8) {
      CHECK(norm > 0.0);
    } else {
      CHECK(norm == 0.0);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  auto cfg = testutil::tiny_model(13);
  cfg.prompt_position = 3;
  Checkpoint ck;
  ck.params = testutil::random_params(cfg, 5);
  ck.step = 17;
  ck.meta = {{"iteration", 2}, {"note", "x"}};
  ck.extra.push_back({"adam.m/tok_emb", {13, 8}, std::vector<float>(104, 0.25f)});
  testutil::TempDir dir("ckpt");
  save_checkpoint(dir.str("a.ckpt"), ck);
  const auto back = load_checkpoint(dir.str("a.ckpt"));
  CHECK(back.params.config == cfg);
  CHECK(back.params.values == ck.params.values);
  CHECK(back.step == 17);
  CHECK(back.meta == ck.meta);
  REQUIRE(back.extra.size() == 1);
  CHECK(back.extra[0] == ck.extra[0]);
  save_checkpoint(dir.str("b.ckpt"), back);
  CHECK(testutil::slurp(dir.str("a.ckpt")) == testutil::slurp(dir.str("b.ckpt")));
  const auto info = inspect_checkpoint(dir.str("a.ckpt"));
  CHECK(info.at("step") == 17);

  {
    std::ofstream out(dir.str("junk.ckpt"), std::ios::binary);
    out << "not a checkpoint";
  }
  CHECK_THROWS(load_checkpoint(dir.str("junk.ckpt")));
}
