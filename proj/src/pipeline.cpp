#include "alt/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>

#include "alt/errors.hpp"
#include "alt/pretrain.hpp"
#include "alt/rng.hpp"

namespace alt::pipeline {

TaskData make_task(const cfg::RunConfig& rc) {
  TaskData t{cfg::desk_vocabulary(rc.k_quantiles), {}, {}, {}, {}};
  auto docs = generate_corpus(t.vocab, rc.corpus);
  const auto held = static_cast<std::size_t>(rc.pretrain.heldout_documents);
  if (held >= docs.size()) throw ValidationError("heldout_documents must be smaller than num_documents");
  t.heldout_docs.assign(docs.end() - static_cast<std::ptrdiff_t>(held), docs.end());
  docs.resize(docs.size() - held);
  t.train_docs = std::move(docs);
  t.train_prompts = extract_prompts(t.train_docs, rc.corpus).prompts;
  t.heldout_prompts = extract_prompts(t.heldout_docs, rc.corpus).prompts;
  return t;
}

std::uint64_t component_seed(const cfg::RunConfig& rc, std::uint64_t component) {
  return mix_seed({rc.seed, component});
}

lm::Checkpoint pretrain_base(const cfg::RunConfig& rc, const TaskData& task) {
  auto pc = rc.pretrain;
  pc.seed = component_seed(rc, rc.pretrain.seed);
  auto model = rc.model;
  model.vocab_size = static_cast<int>(task.vocab.size());
  const auto res = pre::pretrain(task.vocab, rc.corpus, task.train_docs, task.heldout_docs, model, pc);
  lm::Checkpoint ck;
  ck.params = res.params;
  ck.step = res.steps.size();
  ck.meta = {{"kind", "base"},
             {"vocab", task.vocab.to_json()},
             {"corpus", rc.corpus.to_json()},
             {"k_quantiles", rc.k_quantiles},
             {"pretrain", rc.pretrain.to_json()},
             {"seed", rc.seed},
             {"report", res.to_json()}};
  return ck;
}

Vocabulary checkpoint_vocabulary(const lm::Checkpoint& ckpt) {
  if (!ckpt.meta.contains("vocab")) throw ValidationError("checkpoint has no vocabulary in its metadata");
  return Vocabulary::from_json(ckpt.meta.at("vocab"));
}

void check_base_matches(const cfg::RunConfig& rc, const lm::Checkpoint& base) {
  if (base.meta.contains("corpus") && base.meta.at("corpus") != rc.corpus.to_json()) {
    throw ValidationError("base checkpoint was pretrained on a different corpus spec");
  }
  auto want = rc.model;
  want.vocab_size = base.params.config.vocab_size;
  if (!(want == base.params.config)) throw ValidationError("base checkpoint model shape differs from the config");
  if (checkpoint_vocabulary(base).to_json() != cfg::desk_vocabulary(rc.k_quantiles).to_json()) {
    throw ValidationError("base checkpoint vocabulary differs from the configured one");
  }
}

loop::RunSetup make_setup(const cfg::RunConfig& rc, const TaskData& task, const lm::Checkpoint& base,
                          const std::string& run_dir, const std::string& base_path) {
  check_base_matches(rc, base);
  loop::RunSetup s;
  s.config = rc.loop;
  s.config.seed = component_seed(rc, rc.loop.seed);
  s.vocab = &task.vocab;
  s.prompts = task.train_prompts;
  s.p0 = base.params;
  s.run_dir = run_dir;
  s.config_hash = rc.hash();
  s.resolved_config = {{"run", rc.to_json()}, {"base_checkpoint", base_path}};
  s.workers = rc.runtime.workers;
  return s;
}

std::string default_run_dir(const cfg::RunConfig& rc) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return (std::filesystem::path(rc.runtime.runs_dir) / (std::string(buf) + "-" + rc.hash())).string();
}

}  // namespace alt::pipeline
