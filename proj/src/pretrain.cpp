#include "alt/pretrain.hpp"

#include <cmath>

#include "alt/errors.hpp"
#include "alt/sampling.hpp"

namespace alt::pre {

void PretrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("pretrain epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("pretrain batch_size must be >= 1");
  if (!(lr > 0)) throw ValidationError("pretrain lr must be > 0");
  if (warmup_fraction < 0 || warmup_fraction > 1) throw ValidationError("pretrain warmup_fraction must be in [0, 1]");
  if (heldout_documents < 1) throw ValidationError("heldout_documents must be >= 1");
}

nlohmann::json PretrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"lr", lr},
          {"warmup_fraction", warmup_fraction},
          {"heldout_documents", heldout_documents},
          {"seed", seed}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
  PretrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.heldout_documents = j.value("heldout_documents", c.heldout_documents);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double unigram_baseline_perplexity(const Vocabulary& vocab, const CorpusSpec& spec) {
  spec.validate();
  const double L = spec.doc_length;
  const double n_tox = static_cast<double>(vocab.toxic_lexicon().size());
  const double n_neu = static_cast<double>(vocab.neutral_lexicon().size());
  double rate = 0.0;
  for (double r : spec.toxic_rate_levels) rate += r;
  rate /= static_cast<double>(spec.toxic_rate_levels.size());
  // Predicted tokens per document: the L - 1 words after the first, then eos.
  const double p_eos = 1.0 / L;
  const double p_tox = (1.0 - p_eos) * rate / n_tox;
  const double p_neu = (1.0 - p_eos) * (1.0 - rate) / n_neu;
  double h = -p_eos * std::log(p_eos);
  if (p_tox > 0) h -= n_tox * p_tox * std::log(p_tox);
  if (p_neu > 0) h -= n_neu * p_neu * std::log(p_neu);
  return std::exp(h);
}

double corpus_perplexity(const lm::Parameters<float>& params, std::span<const Document> docs, TokenId start_token) {
  double nll = 0.0;
  std::size_t n = 0;
  for (const auto& d : docs) {
    if (d.tokens.size() < 2) continue;
    const std::span<const TokenId> toks(d.tokens);
    for (double lp : lm::sequence_logprob(params, toks.first(1), toks.subspan(1), start_token)) {
      nll -= lp;
      ++n;
    }
  }
  if (n == 0) throw ValidationError("perplexity over an empty document set");
  return std::exp(nll / static_cast<double>(n));
}

nlohmann::json PretrainResult::to_json() const {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& s : steps) curve.push_back(s.to_json());
  return {{"heldout_perplexity", heldout_perplexity},
          {"unigram_baseline_perplexity", unigram_perplexity},
          {"optimizer_steps", steps.size()},
          {"final_loss", steps.empty() ? 0.0 : steps.back().loss}};
}

PretrainResult pretrain(const Vocabulary& vocab, const CorpusSpec& spec, std::span<const Document> train_docs,
                        std::span<const Document> heldout_docs, const lm::ModelConfig& model,
                        const PretrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (train_docs.empty()) throw ValidationError("pretraining needs at least one document");
  std::vector<train::TrainExample> examples;
  examples.reserve(train_docs.size());
  // The first word acts as context so token positions match the
  // prompt-first layout used during alignment.
  for (const auto& d : train_docs) {
    if (d.tokens.size() < 2) throw ValidationError("documents need at least two tokens");
    examples.push_back({std::nullopt, TokenSeq(d.tokens.begin(), d.tokens.begin() + 1),
                        TokenSeq(d.tokens.begin() + 1, d.tokens.end())});
  }

  PretrainResult out;
  out.params = lm::init_params(model, cfg.seed);
  train::AdamState opt;
  train::AdamConfig adam;
  adam.lr = cfg.lr;
  train::TrainerConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.warmup_fraction = cfg.warmup_fraction;
  tc.seed = cfg.seed;
  out.steps = train::train_iteration(out.params, nullptr, examples, train::LossConfig{0.0, 0.0}, opt, adam, tc,
                                     vocab.special());
  if (!out.params.all_finite()) throw NumericError("pretraining diverged", out.steps.size());
  out.heldout_perplexity = corpus_perplexity(out.params, heldout_docs, vocab.special().eos);
  out.unigram_perplexity = unigram_baseline_perplexity(vocab, spec);
  return out;
}

}  // namespace alt::pre
