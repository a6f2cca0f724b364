#include <doctest.h>

#include "alt/alt_loop.hpp"
#include "alt/config.hpp"
#include "alt/errors.hpp"
#include "helpers.hpp"

using namespace alt;
using namespace alt::loop;

namespace {

const Vocabulary& vocab() {
  static const Vocabulary v = cfg::desk_vocabulary(5);
  return v;
}

RunSetup tiny_setup(const std::string& variant, const std::string& run_dir, int n_iterations = 2) {
  RunSetup s;
  s.config = variant_profile(variant);
  s.config.n_iterations = n_iterations;
  s.config.prompts_per_iteration = 2;
  s.config.generations_per_prompt = 3;
  s.config.train_per_category = 1;
  s.config.sampler.max_new_tokens = 5;
  s.config.trainer.batch_size = 4;
  s.config.trainer.epochs = 1;
  s.vocab = &vocab();
  s.prompts = {{vocab().id("sun")}, {vocab().id("tree"), vocab().id("grr")}, {}};
  auto mc = testutil::tiny_model(vocab().size(), 8, 1, 2, 16, 40);
  mc.prompt_position = 12;
  s.p0 = testutil::random_params(mc, 17, 0.3);
  // Make short, finished generations common so every iteration has data.
  s.p0.tensor("head.b")[static_cast<std::size_t>(vocab().special().eos)] += 3.0f;
  s.run_dir = run_dir;
  s.config_hash = "hash-" + variant;
  return s;
}

}  // namespace

TEST_CASE("sampling prefix") {
  const auto sp = vocab().special();
  const TokenSeq prompt{vocab().id("sun")};
  const TokenSeq fb{vocab().id("Lowest"), vocab().id("Toxicity")};
  CHECK(sampling_prefix(1, prompt, fb, sp) == prompt);
  CHECK(sampling_prefix(2, prompt, fb, sp) == TokenSeq{fb[0], fb[1], sp.separator, prompt[0]});
  CHECK(sampling_prefix(3, prompt, std::nullopt, sp) == prompt);
  CHECK(sampling_prefix(1, {}, fb, sp) == TokenSeq{sp.eos});
}

TEST_CASE("variant profiles") {
  for (const auto& name : variant_names()) {
    const auto c = variant_profile(name);
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(exemplar_feedback(c));
  }
  CHECK(variant_profile("quark").scheme.encoding == feedback::Encoding::quantile_token);
  CHECK(variant_profile("steerlm").scheme.encoding == feedback::Encoding::linearized);
  CHECK(variant_profile("alt_lmc").loss.beta == 0.0);
  try {
    variant_profile("dpo");
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("alt_lmu") != std::string::npos);
  }
  auto bad = variant_profile("alt_rm");
  bad.exemplar = "Somewhat Fine";
  CHECK_THROWS_AS(exemplar_feedback(bad), ValidationError);
}

TEST_CASE("pool growth and iteration tags") {
  testutil::TempDir dir("loop");
  const auto r = run(tiny_setup("alt_rm", dir.str("run")));
  CHECK(r.completed_iterations == 2);
  CHECK(r.pool.size() == 12);
  CHECK(r.pool.iteration(1).size() == 6);
  CHECK(r.pool.iteration(2).size() == 6);
  const auto& rows = r.manifest.at("iterations");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].at("added") == 6);
  CHECK(rows[1].at("pool_size") == 12);
  CHECK(std::filesystem::exists(checkpoint_path(dir.str("run"), 1)));
  CHECK(std::filesystem::exists(checkpoint_path(dir.str("run"), 2)));
  CHECK(std::filesystem::exists(pool_path(dir.str("run"))));
  CHECK(rows[0].at("optimizer_steps").get<int>() > 0);
  CHECK(r.params.values != tiny_setup("alt_rm", "").p0.values);
}

TEST_CASE("single iteration run") {
  const auto r = run(tiny_setup("quark", "", 1));
  CHECK(r.completed_iterations == 1);
  CHECK(r.pool.size() == 6);
}

TEST_CASE("resume is bit-identical to an uninterrupted run") {
  testutil::TempDir dir("resume");
  const auto full = run(tiny_setup("alt_rm", dir.str("full"), 3));

  auto first = tiny_setup("alt_rm", dir.str("split"), 3);
  first.stop_after = 1;
  CHECK(run(first).completed_iterations == 1);
  const auto rest = resume(tiny_setup("alt_rm", dir.str("split"), 3));
  CHECK(rest.completed_iterations == 3);
  CHECK(rest.params.values == full.params.values);
  CHECK(rest.pool.entries() == full.pool.entries());
  CHECK(testutil::slurp(checkpoint_path(dir.str("split"), 3)) == testutil::slurp(checkpoint_path(dir.str("full"), 3)));

  const auto again = resume(tiny_setup("alt_rm", dir.str("split"), 3));
  CHECK(again.completed_iterations == 3);
  CHECK(again.params.values == full.params.values);

  auto other = tiny_setup("alt_rm", dir.str("split"), 3);
  other.config_hash = "something-else";
  CHECK_THROWS_AS(resume(other), ValidationError);
  CHECK_THROWS_AS(resume(tiny_setup("alt_rm", dir.str("missing"), 3)), ValidationError);
}

TEST_CASE("setup checks") {
  auto s = tiny_setup("alt_rm", "");
  s.p0 = testutil::random_params(testutil::tiny_model(vocab().size(), 8, 1, 2, 16, 16), 1);
  CHECK_THROWS_AS(run(s), ValidationError);

  auto no_prompts = tiny_setup("alt_rm", "");
  no_prompts.prompts.clear();
  CHECK_THROWS_AS(run(no_prompts), ValidationError);
}

TEST_CASE("llm-feedback variants run on the mock transport") {
  for (const char* name : {"alt_lmc", "alt_lmu", "steerlm"}) {
    CAPTURE(std::string(name));
    const auto r = run(tiny_setup(name, ""));
    CHECK(r.completed_iterations == 2);
    const auto& rows = r.manifest.at("iterations");
    for (const auto& row : rows) {
      CHECK(row.at("added").get<int>() + row.at("dropped_unparseable").get<int>() +
                row.at("dropped_untokenizable").get<int>() ==
            6);
    }
  }
}
