#pragma once

// Glue shared by the command-line tool and the acceptance suite: the desk
// task data derived from a RunConfig, base-model pretraining into a
// checkpoint, and alignment-run setup.

#include <string>
#include <vector>

#include <json.hpp>

#include "alt/alt_loop.hpp"
#include "alt/checkpoint.hpp"
#include "alt/config.hpp"

namespace alt::pipeline {

struct TaskData {
  Vocabulary vocab;
  std::vector<Document> train_docs;
  std::vector<Document> heldout_docs;
  std::vector<TokenSeq> train_prompts;
  std::vector<TokenSeq> heldout_prompts;
};

TaskData make_task(const cfg::RunConfig& rc);

/// Seed for one component, mixed with the run's global seed.
std::uint64_t component_seed(const cfg::RunConfig& rc, std::uint64_t component);

/// Pretrains the base model. The checkpoint meta carries the vocabulary, the
/// corpus spec and the pretraining report.
lm::Checkpoint pretrain_base(const cfg::RunConfig& rc, const TaskData& task);

/// Vocabulary stored in a checkpoint's meta.
Vocabulary checkpoint_vocabulary(const lm::Checkpoint& ckpt);

/// Refuses a base checkpoint pretrained on a different corpus or model shape.
void check_base_matches(const cfg::RunConfig& rc, const lm::Checkpoint& base);

loop::RunSetup make_setup(const cfg::RunConfig& rc, const TaskData& task, const lm::Checkpoint& base,
                          const std::string& run_dir, const std::string& base_path);

/// <runs_dir>/<YYYYmmdd-HHMMSS>-<config hash>
std::string default_run_dir(const cfg::RunConfig& rc);

}  // namespace alt::pipeline
