#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/loss.hpp"
#include "alt/optim.hpp"
#include "alt/sequence.hpp"

namespace alt::train {

struct TrainerConfig {
  int batch_size = 32;
  int epochs = 2;
  /// Fraction of each iteration's optimizer steps spent in linear warmup.
  double warmup_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainerConfig from_json(const nlohmann::json& j);
};

struct StepMetrics {
  std::int64_t step = 0;  // global optimizer step
  double lr = 0.0;
  double loss = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;

  nlohmann::json to_json() const;
};

std::int64_t steps_per_iteration(std::size_t n_examples, const TrainerConfig& cfg);

/// Runs cfg.epochs passes over `examples` (non-empty) in seeded shuffled mini-batches.
/// Adam moments and the step counter live in `opt` and carry over between
/// calls; the learning-rate schedule restarts with every call.
std::vector<StepMetrics> train_iteration(lm::Parameters<float>& params, const lm::Parameters<float>* ref,
                                         std::span<const TrainExample> examples, const LossConfig& loss,
                                         AdamState& opt, const AdamConfig& adam, const TrainerConfig& cfg,
                                         const SpecialTokens& special,
                                         const std::function<void(const StepMetrics&)>& on_step = {});

/// Appends one JSON object per step.
void append_step_log_jsonl(const std::string& path, std::span<const StepMetrics> steps);
/// Appends CSV rows, writing the header when the file is new.
void append_step_log_csv(const std::string& path, std::span<const StepMetrics> steps);

}  // namespace alt::train
