#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"
#include "alt/model.hpp"

namespace alt::lm {

struct SamplerConfig {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_new_tokens = 20;
  std::uint64_t seed = 0;
  bool greedy = false;  // when set, temperature and top_p are ignored

  void validate() const;
  nlohmann::json to_json() const;
  static SamplerConfig from_json(const nlohmann::json& j);
  static SamplerConfig from_json(const nlohmann::json& j, SamplerConfig defaults);
};

/// softmax(logits / temperature) in double precision.
std::vector<double> softmax(std::span<const float> logits, double temperature = 1.0);
std::vector<double> log_softmax(std::span<const float> logits);

/// Smallest prefix of the vocabulary sorted by probability (descending, ties
/// by lower id) whose cumulative mass reaches top_p. top_p >= 1 keeps everything.
std::vector<TokenId> nucleus_support(std::span<const double> probs, double top_p);

/// The distribution sample() draws the next token from: zero outside the
/// nucleus, renormalized inside. Greedy yields a one-hot vector.
std::vector<double> next_token_distribution(std::span<const float> logits, const SamplerConfig& cfg);

struct SampleResult {
  TokenSeq tokens;  // includes the terminating eos when one was emitted
  bool truncated = true;
};

/// Autoregressive decoding from `prefix` (must be non-empty). Stops after eos
/// or max_new_tokens. Fully determined by (params, prefix, cfg).
/// prefix[prompt_index] lands on the model's prompt_position.
SampleResult sample(const Parameters<float>& params, std::span<const TokenId> prefix, const SamplerConfig& cfg,
                    TokenId eos, int prompt_index = 0);

/// log p(continuation[t] | context, continuation[<t]) for every t. An empty
/// context is replaced by `start_token` (the eos id by convention). The
/// context starts at the model's prompt_position.
std::vector<double> sequence_logprob(const Parameters<float>& params, std::span<const TokenId> context,
                                     std::span<const TokenId> continuation,
                                     std::optional<TokenId> start_token = std::nullopt);

}  // namespace alt::lm
