#include <doctest.h>

#include <cmath>

#include "alt/errors.hpp"
#include "alt/loss.hpp"
#include "alt/sequence.hpp"
#include "helpers.hpp"

using namespace alt;
using namespace alt::train;

namespace {

SpecialTokens specials8() {
  SpecialTokens s;
  s.pad = 5;
  s.eos = 6;
  s.separator = 7;
  return s;
}

lm::Parameters<double> biased_model(int vocab, const std::vector<double>& bias) {
  lm::Parameters<double> p(testutil::tiny_model(vocab));
  auto b = p.tensor("head.b");
  for (std::size_t i = 0; i < bias.size(); ++i) b[i] = bias[i];
  return p;
}

TrainBatch single(int vocab_token_target, TokenSeq prompt = {1}) {
  SpecialTokens s;
  s.pad = 0;
  s.eos = 0;
  s.separator = 0;
  const std::vector<TrainExample> ex{{std::nullopt, std::move(prompt), TokenSeq{vocab_token_target}}};
  return make_batch(ex, s, 16);
}

std::vector<TrainExample> mixed_examples() {
  return {{TokenSeq{1, 2}, TokenSeq{3}, TokenSeq{4, 0, 6}},
          {TokenSeq{2}, TokenSeq{1, 1}, TokenSeq{3}},
          {std::nullopt, TokenSeq{4}, TokenSeq{2, 2}},
          {TokenSeq{3}, TokenSeq{}, TokenSeq{1, 6}},
          {std::nullopt, TokenSeq{}, TokenSeq{0, 4}}};
}

double max_rel_grad_error(const lm::Parameters<double>& params, const lm::Parameters<double>* ref,
                          const TrainBatch& batch, const LossConfig& cfg) {
  const auto analytic = loss_and_grads<double>(params, ref, batch, cfg).grads;
  auto probe = params;
  double worst = 0.0;
  const double h = 1e-5;
  for (std::size_t i = 0; i < probe.values.size(); ++i) {
    const double orig = probe.values[i];
    probe.values[i] = orig + h;
    const double up = loss_and_grads<double>(probe, ref, batch, cfg, false).terms.total;
    probe.values[i] = orig - h;
    const double down = loss_and_grads<double>(probe, ref, batch, cfg, false).terms.total;
    probe.values[i] = orig;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("per-position kernels by hand") {
  CHECK(token_nll(std::vector<double>{2, 0, 0, 0}, 0) == doctest::Approx(std::log(std::exp(2.0) + 3.0) - 2.0));
  CHECK(token_nll(std::vector<double>{0, 0, 0, 0}, 2) == doctest::Approx(std::log(4.0)));
  CHECK(kl_divergence(std::vector<double>{std::log(.5), std::log(.5)}, std::vector<double>{std::log(.9), std::log(.1)}) ==
        doctest::Approx(0.5108).epsilon(1e-4));
  CHECK(entropy(std::vector<double>{std::log(.9), std::log(.1)}) == doctest::Approx(0.3251).epsilon(1e-4));
  CHECK(entropy(std::vector<double>{0, -800, -800}) == doctest::Approx(0.0));
  CHECK(kl_divergence(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 0.0);
}

TEST_CASE("batch terms by hand") {
  const auto uniform = biased_model(4, {});
  const auto b = single(2);
  CHECK(nll_term(uniform, b) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(entropy_term(uniform, b) == doctest::Approx(-std::log(4.0)).epsilon(1e-12));

  const auto peaked = biased_model(4, {2, 0, 0, 0});
  CHECK(nll_term(peaked, single(0)) == doctest::Approx(std::log(std::exp(2.0) + 3.0) - 2.0));

  const auto ref = biased_model(2, {});
  const auto pol = biased_model(2, {std::log(.9), std::log(.1)});
  const auto b2 = single(1);
  CHECK(kl_ref_term(pol, ref, b2) == doctest::Approx(0.5108).epsilon(1e-4));
  CHECK(entropy_term(pol, b2) == doctest::Approx(-0.3251).epsilon(1e-4));
  CHECK(kl_ref_term(pol, ref, b2, KlDirection::PolicyToRef) ==
        doctest::Approx(.9 * std::log(.9 / .5) + .1 * std::log(.1 / .5)));

  const auto one = biased_model(1, {});
  CHECK(nll_term(one, single(0, {0})) == 0.0);
}

TEST_CASE("term identities on a random model") {
  const auto cfg = testutil::tiny_model(8, 8, 1, 2, 16, 16);
  const auto p = testutil::random_params(cfg, 5).cast<double>();
  const auto ref = testutil::random_params(cfg, 6).cast<double>();
  const auto batch = make_batch(mixed_examples(), specials8(), 16, 3);
  for (const auto dir : {KlDirection::RefToPolicy, KlDirection::PolicyToRef}) {
    const LossConfig lc{0.05, 0.06, dir};
    const auto t = loss_and_grads<double>(p, &ref, batch, lc).terms;
    const double nll = nll_term(p, batch), kl = kl_ref_term(p, ref, batch, dir), h = entropy_term(p, batch);
    CHECK(testutil::rel_err(t.total, nll + 0.05 * kl + 0.06 * h) <= 1e-12);
    CHECK(t.nll == nll);
    CHECK(kl > 0.0);
  }
  const auto plain = loss_and_grads<double>(p, &ref, batch, LossConfig{0.0, 0.0}).terms;
  CHECK(plain.total == plain.nll);

  // Same model, rows without feedback: the stripped reference input equals
  // the policy input, so the divergence vanishes.
  std::vector<TrainExample> nofb;
  for (auto e : mixed_examples()) {
    e.feedback.reset();
    nofb.push_back(e);
  }
  const auto b0 = make_batch(nofb, specials8(), 16, 3);
  CHECK(std::abs(kl_ref_term(p, p, b0)) <= 1e-12);
  CHECK(std::abs(kl_ref_term(p, p, b0, KlDirection::PolicyToRef)) <= 1e-12);
}

TEST_CASE("kl is non-negative on random models") {
  const auto cfg = testutil::tiny_model(8, 8, 1, 2, 16, 16);
  const auto batch = make_batch(mixed_examples(), specials8(), 16, 3);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto p = testutil::random_params(cfg, s).cast<double>();
    const auto q = testutil::random_params(cfg, s + 100).cast<double>();
    CHECK(kl_ref_term(p, q, batch) >= 0.0);
    CHECK(kl_ref_term(p, q, batch, KlDirection::PolicyToRef) >= 0.0);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  const auto batch = make_batch(mixed_examples(), specials8(), 16, 3);
  int cfg_index = 0;
  for (const auto& mc : {testutil::tiny_model(8, 8, 1, 2, 16, 16), testutil::tiny_model(8, 4, 1, 1, 8, 16),
                         testutil::tiny_model(8, 8, 1, 4, 12, 16)}) {
    auto c = mc;
    c.prompt_position = 3;
    const auto p = testutil::random_params(c, 40 + cfg_index).cast<double>();
    const auto ref = testutil::random_params(c, 80 + cfg_index).cast<double>();
    std::vector<TrainRow> rows;
    for (std::size_t i = 0; i < mixed_examples().size(); ++i) rows.push_back(build_row(mixed_examples()[i], specials8(), 16, 3, i));
    const auto positioned = assemble_batch(rows, specials8());
    for (const auto dir : {KlDirection::RefToPolicy, KlDirection::PolicyToRef}) {
      CHECK(max_rel_grad_error(p, &ref, batch, LossConfig{0.05, 0.06, dir}) < 1e-3);
      CHECK(max_rel_grad_error(p, &ref, positioned, LossConfig{0.5, 0.2, dir}) < 1e-3);
    }
    ++cfg_index;
  }
}

TEST_CASE("logit gradients vanish off the generation") {
  const auto cfg = testutil::tiny_model(8, 8, 1, 2, 16, 16);
  const auto p = testutil::random_params(cfg, 3).cast<double>();
  const auto ref = testutil::random_params(cfg, 4).cast<double>();
  const auto batch = make_batch(mixed_examples(), specials8(), 16, 3);
  const auto out = loss_and_grads<double>(p, &ref, batch, LossConfig{0.05, 0.06}, true, true);
  REQUIRE(out.logit_grads.size() == batch.rows.size());
  for (std::size_t r = 0; r < batch.rows.size(); ++r) {
    int gen_off = 0, pos = 0;
    const auto input = policy_input(batch.rows[r], batch.start_token, &gen_off, &pos);
    const auto& g = out.logit_grads[r];
    REQUIRE(g.size() == input.size() * 8);
    for (std::size_t t = 0; t < input.size(); ++t) {
      // Position t predicts token t + 1.
      const int target = static_cast<int>(t) + 1;
      const bool predicts_generation = target >= gen_off && target < gen_off + batch.rows[r].gen_len;
      double norm = 0.0;
      for (int v = 0; v < 8; ++v) norm += std::abs(g[t * 8 + static_cast<std::size_t>(v)]);
      if (predicts_generation) {
        CHECK(norm > 0.0);
      } else {
        CHECK(norm == 0.0);
      }
    }
  }
}

TEST_CASE("loss errors") {
  const auto cfg = testutil::tiny_model(8);
  const auto p = testutil::random_params(cfg, 1).cast<double>();
  TrainBatch empty;
  CHECK_THROWS_AS(loss_and_grads<double>(p, nullptr, empty, LossConfig{}), ValidationError);
  const std::vector<TrainExample> no_gen{{std::nullopt, TokenSeq{1}, TokenSeq{}}};
  CHECK_THROWS_AS(loss_and_grads<double>(p, nullptr, make_batch(no_gen, specials8(), 16, 3), LossConfig{}),
                  ValidationError);

  auto broken = p;
  broken.values[0] = std::nan("");
  for (auto& v : broken.tensor("head.b")) v = std::nan("");
  const auto batch = make_batch(mixed_examples(), specials8(), 16, 3);
  try {
    loss_and_grads<double>(broken, nullptr, batch, LossConfig{});
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.index() == 0);
  }
  CHECK_THROWS_AS(LossConfig::from_json({{"beta", -1}}), ValidationError);
  CHECK_THROWS_AS(LossConfig::from_json({{"kl_direction", "sideways"}}), ValidationError);
}
