#include "alt/providers.hpp"

#include "alt/errors.hpp"
#include "alt/parallel.hpp"

namespace alt::providers {

std::string render_text(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  TokenSeq kept;
  for (auto t : tokens) {
    if (!vocab.is_special(t)) kept.push_back(t);
  }
  return vocab.detokenize(kept);
}

QuantileProvider::QuantileProvider(const Vocabulary& vocab, feedback::QuantileScheme scheme)
    : vocab_(vocab), scheme_(std::move(scheme)) {
  scheme_.validate();
}

AnnotationResult QuantileProvider::annotate(const TokenSeq&, std::span<const TokenSeq> generations) {
  AnnotationResult out;
  if (generations.empty()) return out;
  std::vector<double> rewards;
  rewards.reserve(generations.size());
  for (const auto& g : generations) rewards.push_back(1.0 - feedback::toxicity_score(vocab_, g));
  const auto cats = feedback::map_rewards_to_quantiles(rewards, scheme_.k());
  for (std::size_t i = 0; i < generations.size(); ++i) {
    out.items.push_back(Annotation{feedback::label_for_category(scheme_, cats[i]), rewards[i]});
  }
  return out;
}

namespace {

// Runs `call(i)` for every generation under the client's concurrency limit and
// sorts failures into the two drop counters.
template <typename Call>
AnnotationResult annotate_with(std::size_t n, int concurrency, Call&& call) {
  AnnotationResult out;
  out.items.resize(n);
  std::vector<int> status(n, 0);  // 0 ok, 1 unparseable, 2 untokenizable
  parallel_for(n, concurrency, [&](std::size_t i) {
    try {
      out.items[i] = call(i);
    } catch (const UnparseableResponse&) {
      status[i] = 1;
    } catch (const ValidationError&) {
      status[i] = 2;
    }
  });
  for (int s : status) {
    if (s == 1) ++out.unparseable;
    if (s == 2) ++out.untokenizable;
  }
  return out;
}

}  // namespace

LlmCategoricalProvider::LlmCategoricalProvider(const Vocabulary& vocab, feedback::QuantileScheme scheme,
                                               std::shared_ptr<llm::ChatClient> client, llm::PromptTemplate tmpl)
    : vocab_(vocab), scheme_(std::move(scheme)), client_(std::move(client)), template_(std::move(tmpl)) {
  scheme_.validate();
}

AnnotationResult LlmCategoricalProvider::annotate(const TokenSeq& prompt, std::span<const TokenSeq> generations) {
  const std::string prompt_text = render_text(vocab_, prompt);
  return annotate_with(generations.size(), client_->config().concurrency, [&](std::size_t i) {
    auto label = llm::llm_categorical(*client_, template_, prompt_text, render_text(vocab_, generations[i]),
                                      scheme_.labels);
    feedback::Feedback fb = label;
    feedback::encode_feedback(fb, scheme_, vocab_);
    return Annotation{std::move(fb), std::nullopt};
  });
}

LlmUnconstrainedProvider::LlmUnconstrainedProvider(const Vocabulary& vocab, std::shared_ptr<llm::ChatClient> client,
                                                   llm::PromptTemplate tmpl)
    : vocab_(vocab), client_(std::move(client)), template_(std::move(tmpl)) {}

AnnotationResult LlmUnconstrainedProvider::annotate(const TokenSeq& prompt, std::span<const TokenSeq> generations) {
  const std::string prompt_text = render_text(vocab_, prompt);
  return annotate_with(generations.size(), client_->config().concurrency, [&](std::size_t i) {
    auto parsed = llm::llm_unconstrained(*client_, template_, prompt_text, render_text(vocab_, generations[i]));
    vocab_.tokenize(parsed.feedback);
    return Annotation{feedback::Feedback{std::move(parsed)}, std::nullopt};
  });
}

void ProviderConfig::validate() const {
  if (kind != "quantile" && kind != "llm_categorical" && kind != "llm_unconstrained") {
    throw ValidationError("provider kind must be quantile, llm_categorical or llm_unconstrained, got '" + kind + "'");
  }
  if (kind != "quantile") {
    if (template_id.empty()) throw ValidationError("LLM providers need a template_id");
    client.validate();
  }
}

nlohmann::json ProviderConfig::to_json() const {
  return {{"kind", kind}, {"template_id", template_id}, {"template_dir", template_dir}, {"client", client.to_json()}};
}

ProviderConfig ProviderConfig::from_json(const nlohmann::json& j) {
  ProviderConfig c;
  c.kind = j.value("kind", c.kind);
  c.template_id = j.value("template_id", c.template_id);
  c.template_dir = j.value("template_dir", c.template_dir);
  if (j.contains("client")) c.client = llm::ClientConfig::from_json(j.at("client"));
  c.validate();
  return c;
}

std::unique_ptr<FeedbackProvider> make_provider(const ProviderConfig& cfg, const Vocabulary& vocab,
                                                const feedback::QuantileScheme& scheme) {
  cfg.validate();
  if (cfg.kind == "quantile") return std::make_unique<QuantileProvider>(vocab, scheme);
  const auto dir = cfg.template_dir.empty() ? llm::default_template_dir() : cfg.template_dir;
  auto tmpl = llm::load_template(cfg.template_id, dir);
  auto client = std::make_shared<llm::ChatClient>(cfg.client);
  if (cfg.kind == "llm_categorical") {
    return std::make_unique<LlmCategoricalProvider>(vocab, scheme, std::move(client), std::move(tmpl));
  }
  return std::make_unique<LlmUnconstrainedProvider>(vocab, std::move(client), std::move(tmpl));
}

}  // namespace alt::providers
