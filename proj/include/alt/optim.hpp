#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "alt/checkpoint.hpp"
#include "alt/model.hpp"

namespace alt::train {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clipping; 0 disables it.
  double max_grad_norm = 0.0;

  void validate() const;
  nlohmann::json to_json() const;
  static AdamConfig from_json(const nlohmann::json& j);
};

/// Linear warmup from 0 to 1 over `warmup_steps`, then linear decay to 0 at
/// `total_steps`. Steps are 1-based; factor(0) is 0.
struct LinearWarmupSchedule {
  std::int64_t warmup_steps = 0;
  std::int64_t total_steps = 1;

  void validate() const;
  double factor(std::int64_t step) const;
};

struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
  std::int64_t t = 0;

  void resize(std::size_t n);
  /// Stored next to the weights in a checkpoint as "adam.m/<tensor>" and "adam.v/<tensor>".
  std::vector<lm::NamedTensor> to_tensors(const lm::ParamLayout& layout) const;
  static AdamState from_tensors(const lm::ParamLayout& layout, const std::vector<lm::NamedTensor>& extra, std::int64_t t);
};

double grad_norm(std::span<const float> grads);

/// One bias-corrected Adam update at step state.t + 1. Returns the learning
/// rate used. Throws NumericError (index = step) on a non-finite gradient.
double adam_step(AdamState& state, std::span<float> params, std::span<const float> grads, const AdamConfig& cfg,
                 const LinearWarmupSchedule& schedule);
/// Same update with an explicit learning rate (cfg.lr is ignored).
void adam_step(AdamState& state, std::span<float> params, std::span<const float> grads, const AdamConfig& cfg,
               double lr);

}  // namespace alt::train
