#pragma once

// Feedback providers annotate all generations for one prompt at a time, so
// quantiles can be computed locally over that prompt's samples.

#include <atomic>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "alt/corpus.hpp"
#include "alt/feedback.hpp"
#include "alt/llm_client.hpp"

namespace alt::providers {

struct Annotation {
  feedback::Feedback feedback;
  std::optional<double> reward;
};

struct AnnotationResult {
  /// One slot per generation; empty when the sample was dropped.
  std::vector<std::optional<Annotation>> items;
  std::size_t unparseable = 0;
  /// Parsed fine but the feedback text has words outside the vocabulary.
  std::size_t untokenizable = 0;
};

class FeedbackProvider {
 public:
  virtual ~FeedbackProvider() = default;
  virtual std::string kind() const = 0;
  virtual AnnotationResult annotate(const TokenSeq& prompt, std::span<const TokenSeq> generations) = 0;
};

/// Toxicity oracle rewards (1 - toxicity) mapped to the scheme's labels by
/// per-prompt quantiles.
class QuantileProvider : public FeedbackProvider {
 public:
  QuantileProvider(const Vocabulary& vocab, feedback::QuantileScheme scheme);
  std::string kind() const override { return "quantile"; }
  AnnotationResult annotate(const TokenSeq& prompt, std::span<const TokenSeq> generations) override;

 private:
  const Vocabulary& vocab_;
  feedback::QuantileScheme scheme_;
};

/// Asks a chat model to pick one of the scheme's labels.
class LlmCategoricalProvider : public FeedbackProvider {
 public:
  LlmCategoricalProvider(const Vocabulary& vocab, feedback::QuantileScheme scheme,
                         std::shared_ptr<llm::ChatClient> client, llm::PromptTemplate tmpl);
  std::string kind() const override { return "llm_categorical"; }
  AnnotationResult annotate(const TokenSeq& prompt, std::span<const TokenSeq> generations) override;

 private:
  const Vocabulary& vocab_;
  feedback::QuantileScheme scheme_;
  std::shared_ptr<llm::ChatClient> client_;
  llm::PromptTemplate template_;
};

/// Asks a chat model for free-form feedback with a 0..3 score.
class LlmUnconstrainedProvider : public FeedbackProvider {
 public:
  LlmUnconstrainedProvider(const Vocabulary& vocab, std::shared_ptr<llm::ChatClient> client,
                           llm::PromptTemplate tmpl);
  std::string kind() const override { return "llm_unconstrained"; }
  AnnotationResult annotate(const TokenSeq& prompt, std::span<const TokenSeq> generations) override;

 private:
  const Vocabulary& vocab_;
  std::shared_ptr<llm::ChatClient> client_;
  llm::PromptTemplate template_;
};

struct ProviderConfig {
  std::string kind = "quantile";  // quantile | llm_categorical | llm_unconstrained
  std::string template_id;
  std::string template_dir;  // empty = shipped templates
  llm::ClientConfig client;

  void validate() const;
  nlohmann::json to_json() const;
  static ProviderConfig from_json(const nlohmann::json& j);
};

std::unique_ptr<FeedbackProvider> make_provider(const ProviderConfig& cfg, const Vocabulary& vocab,
                                                const feedback::QuantileScheme& scheme);

/// Text sent to a feedback model for a token sequence; special tokens are left out.
std::string render_text(const Vocabulary& vocab, std::span<const TokenId> tokens);

}  // namespace alt::providers
