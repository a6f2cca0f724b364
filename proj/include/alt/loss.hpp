#pragma once

// Conditional training objective:
//   total = NLL + beta * KL + alpha * L_H
// where every term is a per-token mean over generation positions, averaged
// over rows. L_H is the negative mean entropy of the policy, so minimizing it
// with alpha > 0 pushes entropy up.

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/model.hpp"
#include "alt/sequence.hpp"

namespace alt::train {

enum class KlDirection {
  RefToPolicy,  // KL(p0 || p_theta), the default
  PolicyToRef,  // KL(p_theta || p0)
};

KlDirection kl_direction_from_string(const std::string& s);
std::string to_string(KlDirection d);

struct LossConfig {
  double beta = 0.05;
  double alpha = 0.0;
  KlDirection kl_direction = KlDirection::RefToPolicy;

  void validate() const;
  nlohmann::json to_json() const;
  static LossConfig from_json(const nlohmann::json& j);
};

struct LossTerms {
  double total = 0.0;
  double nll = 0.0;
  double kl = 0.0;
  double entropy = 0.0;  // L_H, i.e. minus the mean entropy
};

template <typename T>
struct LossAndGrads {
  LossTerms terms;
  std::vector<T> grads;
  /// d(total)/d(logits) per row, [policy input length][vocab]; only filled
  /// when requested.
  std::vector<std::vector<T>> logit_grads;
};

// Per-position kernels on raw logits, in double precision.
double token_nll(std::span<const double> logits, int target);
/// KL(softmax(p) || softmax(q)).
double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits);
double entropy(std::span<const double> logits);

/// Loss and parameter gradients for a batch. `ref` may be null, in which case
/// the KL term is reported as 0 and contributes nothing. Throws NumericError
/// carrying the row index on a non-finite value and ValidationError when a row
/// has no generation tokens.
template <typename T>
LossAndGrads<T> loss_and_grads(const lm::Parameters<T>& params, const lm::Parameters<T>* ref,
                               const TrainBatch& batch, const LossConfig& cfg, bool want_grads = true,
                               bool keep_logit_grads = false);

template <typename T>
double nll_term(const lm::Parameters<T>& params, const TrainBatch& batch);
template <typename T>
double kl_ref_term(const lm::Parameters<T>& params, const lm::Parameters<T>& ref, const TrainBatch& batch,
                   KlDirection direction = KlDirection::RefToPolicy);
template <typename T>
double entropy_term(const lm::Parameters<T>& params, const TrainBatch& batch);

}  // namespace alt::train
