#pragma once

// Base-model pretraining on the synthetic corpus: plain next-token NLL over
// whole documents, no feedback and no reference term.

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"
#include "alt/model.hpp"
#include "alt/trainer.hpp"

namespace alt::pre {

struct PretrainConfig {
  int epochs = 4;
  int batch_size = 32;
  double lr = 3e-3;
  double warmup_fraction = 0.05;
  /// Documents at the end of the corpus kept out of training; their prompts
  /// are the held-out evaluation prompts.
  int heldout_documents = 300;
  std::uint64_t seed = 3;

  void validate() const;
  nlohmann::json to_json() const;
  static PretrainConfig from_json(const nlohmann::json& j);
};

/// Perplexity of the exact unigram token distribution the corpus generator
/// induces over predicted positions (every word but the first, and the closing
/// eos), i.e. exp of its entropy.
double unigram_baseline_perplexity(const Vocabulary& vocab, const CorpusSpec& spec);

/// exp of the mean per-token NLL of every document token after the first,
/// given the tokens before it.
double corpus_perplexity(const lm::Parameters<float>& params, std::span<const Document> docs, TokenId start_token);

struct PretrainResult {
  lm::Parameters<float> params;
  std::vector<train::StepMetrics> steps;
  double heldout_perplexity = 0.0;
  double unigram_perplexity = 0.0;
  nlohmann::json to_json() const;  // everything but the parameters
};

/// Trains from init_params(model, cfg.seed). Throws NumericError on divergence.
PretrainResult pretrain(const Vocabulary& vocab, const CorpusSpec& spec, std::span<const Document> train_docs,
                        std::span<const Document> heldout_docs, const lm::ModelConfig& model,
                        const PretrainConfig& cfg);

}  // namespace alt::pre
