#pragma once

// The alignment loop: N rounds of sample -> annotate -> conditional SFT.
// Iteration 1 samples from the prompt alone; later iterations prepend the
// exemplar feedback and separator. Every iteration ends with a checkpoint,
// the pool file and a manifest row, so a run can be resumed at any boundary.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/datapool.hpp"
#include "alt/feedback.hpp"
#include "alt/loss.hpp"
#include "alt/model.hpp"
#include "alt/optim.hpp"
#include "alt/providers.hpp"
#include "alt/sampling.hpp"
#include "alt/trainer.hpp"

namespace alt::loop {

struct LoopConfig {
  int n_iterations = 10;
  int prompts_per_iteration = 64;  // drawn with replacement
  int generations_per_prompt = 16;
  int train_per_category = 2;
  /// Also train on the selections of all earlier iterations.
  bool replay = false;
  /// The single feedback string used to condition sampling from iteration 2 on.
  std::string exemplar = "Lowest Toxicity";
  feedback::QuantileScheme scheme = feedback::toxicity_scheme();
  providers::ProviderConfig provider;
  lm::SamplerConfig sampler;
  train::LossConfig loss;
  train::AdamConfig adam;
  train::TrainerConfig trainer;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static LoopConfig from_json(const nlohmann::json& j);
};

std::vector<std::string> variant_names();
/// alt_rm | quark | steerlm | alt_lmc | alt_lmu. Throws ValidationError listing
/// the known names otherwise.
LoopConfig variant_profile(const std::string& name);

/// Exemplar feedback for categorical schemes; must be one of the labels.
feedback::Feedback exemplar_feedback(const LoopConfig& cfg);

/// Model input used to sample at iteration k (1-based).
TokenSeq sampling_prefix(int k, const TokenSeq& prompt, const std::optional<TokenSeq>& feedback_tokens,
                         const SpecialTokens& special);

using IterationEval = std::function<nlohmann::json(int iteration, const lm::Parameters<float>& params)>;

struct RunSetup {
  LoopConfig config;
  const Vocabulary* vocab = nullptr;
  std::vector<TokenSeq> prompts;
  lm::Parameters<float> p0;
  std::string run_dir;
  std::string config_hash;
  nlohmann::json resolved_config = nlohmann::json::object();
  int workers = 1;
  /// Optional evaluation after every iteration; its result lands in the manifest.
  IterationEval iteration_eval;
  /// Stop after this iteration even if n_iterations is larger (for tests of resume).
  std::optional<int> stop_after;
  /// Injected provider; built from config.provider when null.
  std::shared_ptr<providers::FeedbackProvider> provider;
};

struct RunResult {
  lm::Parameters<float> params;
  pool::DataPool pool;
  nlohmann::json manifest;
  int completed_iterations = 0;
};

std::string checkpoint_path(const std::string& run_dir, int iteration);
std::string pool_path(const std::string& run_dir);
std::string manifest_path(const std::string& run_dir);

RunResult run(RunSetup setup);

/// Continues a run from its last completed iteration. Refuses when the
/// manifest's config hash differs from setup.config_hash.
RunResult resume(RunSetup setup);

}  // namespace alt::loop
