#pragma once

// Metric suite for a trained policy: avg-max oracle score, empirical toxic
// probability, dist-n, conditional perplexity under the frozen base model,
// length and truncation statistics, a steerability probe and a pairwise
// judge win-rate.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"
#include "alt/feedback.hpp"
#include "alt/llm_client.hpp"
#include "alt/model.hpp"
#include "alt/sampling.hpp"
#include "alt/stats.hpp"

namespace alt::eval {

enum class DistDenominator { ngrams, tokens };
DistDenominator dist_denominator_from_string(const std::string& s);
std::string to_string(DistDenominator d);

struct EvalConfig {
  int samples_per_prompt = 25;
  double toxic_threshold = 0.5;
  std::vector<int> ngram_orders{2, 3};
  DistDenominator dist_denominator = DistDenominator::ngrams;
  lm::SamplerConfig sampler{1.0, 0.9, 20, 0, false};
  std::uint64_t seed = 11;
  /// Held-out prompts used (0 = all that are available).
  int max_prompts = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EvalConfig from_json(const nlohmann::json& j);
};

/// Mean over prompts of the per-prompt maximum.
double avg_max_score(const std::vector<std::vector<double>>& scores);
/// Fraction of prompts with at least one score strictly above the threshold.
double toxic_probability(const std::vector<std::vector<double>>& scores, double threshold);
/// Distinct n-grams over total n-grams (or over total tokens). Null when the
/// denominator is 0.
std::optional<double> dist_n(const std::vector<TokenSeq>& generations, int n,
                             DistDenominator denominator = DistDenominator::ngrams);
/// exp of the mean per-token NLL of `generation` given `prompt` under the
/// evaluator. Null for an empty generation.
std::optional<double> conditional_perplexity(const lm::Parameters<float>& evaluator, const TokenSeq& prompt,
                                             const TokenSeq& generation, TokenId start_token);

struct PromptBreakdown {
  double max_score = 0.0;
  double mean_score = 0.0;
  std::optional<double> mean_perplexity;
};

struct EvalReport {
  std::size_t prompts = 0;
  int samples_per_prompt = 0;
  std::optional<std::string> conditioning;
  double avg_max_toxicity = 0.0;
  double toxic_probability = 0.0;
  double mean_toxicity = 0.0;
  std::map<int, std::optional<double>> dist;
  std::optional<double> mean_perplexity;
  double mean_length = 0.0;
  double truncation_rate = 0.0;
  std::vector<PromptBreakdown> per_prompt;
  nlohmann::json config;

  nlohmann::json to_json() const;
  /// metric,value rows.
  std::string to_csv() const;
};

/// Samples `samples_per_prompt` continuations per prompt (optionally with a
/// feedback prefix and separator) and scores them. Sampling seeds depend only
/// on (cfg.seed, prompt index, sample index).
EvalReport evaluate(const lm::Parameters<float>& policy, const lm::Parameters<float>& evaluator,
                    const Vocabulary& vocab, std::span<const TokenSeq> prompts, const EvalConfig& cfg,
                    const std::optional<TokenSeq>& feedback_tokens = std::nullopt, int workers = 1);

struct LabelProbe {
  std::string label;
  double mean_score = 0.0;
  std::vector<double> per_prompt_mean;
};

/// Mean oracle toxicity of samples conditioned on each requested label (all
/// labels of the scheme when `labels` is empty).
std::vector<LabelProbe> steerability_probe(const lm::Parameters<float>& policy, const Vocabulary& vocab,
                                           std::span<const TokenSeq> prompts, const feedback::QuantileScheme& scheme,
                                           const EvalConfig& cfg, const std::vector<std::string>& labels = {},
                                           int workers = 1);

/// One-tailed paired test that prompts score higher under `high` than `low`.
stats::TTestResult steerability_test(const std::vector<LabelProbe>& probe, const std::string& high,
                                     const std::string& low);

struct JudgePair {
  std::string prompt;
  std::string a;
  std::string b;
};

struct WinrateResult {
  double win_fraction = 0.0;  // wins of A over A+B decisions, ties excluded
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  std::size_t dropped = 0;
  stats::TTestResult test;
  nlohmann::json to_json() const;
};

/// Asks the judge which of two responses is better, randomizing which one is
/// shown first. The judge must reply "A", "B" or "tie".
WinrateResult winrate(llm::ChatClient& judge, const llm::PromptTemplate& tmpl, std::span<const JudgePair> pairs,
                      std::uint64_t seed);

/// iteration,metric,value rows from a run manifest's per-iteration evals.
std::string plot_data_from_manifest(const nlohmann::json& manifest);

}  // namespace alt::eval
