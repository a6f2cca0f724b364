#include "alt/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "alt/errors.hpp"
#include "alt/rng.hpp"

namespace alt::lm {

void SamplerConfig::validate() const {
  if (greedy) {
    if (max_new_tokens < 0) throw ValidationError("sampler.max_new_tokens must be >= 0");
    return;
  }
  if (!(temperature > 0.0)) throw ValidationError("sampler.temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ValidationError("sampler.top_p must lie in (0,1]");
  if (max_new_tokens < 0) throw ValidationError("sampler.max_new_tokens must be >= 0");
}

nlohmann::json SamplerConfig::to_json() const {
  return {{"temperature", temperature},
          {"top_p", top_p},
          {"max_new_tokens", max_new_tokens},
          {"seed", seed},
          {"greedy", greedy}};
}

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j) { return from_json(j, SamplerConfig{}); }

SamplerConfig SamplerConfig::from_json(const nlohmann::json& j, SamplerConfig d) {
  d.temperature = j.value("temperature", d.temperature);
  d.top_p = j.value("top_p", d.top_p);
  d.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  d.seed = j.value("seed", d.seed);
  d.greedy = j.value("greedy", d.greedy);
  return d;
}

std::vector<double> softmax(std::span<const float> logits, double temperature) {
  std::vector<double> p(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = static_cast<double>(logits[i]) / temperature;
    mx = std::max(mx, p[i]);
  }
  double sum = 0.0;
  for (auto& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : p) v /= sum;
  return p;
}

std::vector<double> log_softmax(std::span<const float> logits) {
  std::vector<double> out(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (const float v : logits) mx = std::max(mx, static_cast<double>(v));
  double sum = 0.0;
  for (const float v : logits) sum += std::exp(static_cast<double>(v) - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = static_cast<double>(logits[i]) - lse;
  return out;
}

std::vector<TokenId> nucleus_support(std::span<const double> probs, double top_p) {
  std::vector<TokenId> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&probs](TokenId a, TokenId b) { return probs[a] > probs[b]; });
  if (top_p >= 1.0) return order;
  double cum = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cum += probs[order[keep]];
    ++keep;
    if (cum >= top_p) break;
  }
  order.resize(keep);
  return order;
}

namespace {

TokenId argmax(std::span<const float> logits) {
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

TokenId draw(std::span<const float> logits, const SamplerConfig& cfg, Rng& rng) {
  if (cfg.greedy) return argmax(logits);
  const auto probs = softmax(logits, cfg.temperature);
  const auto support = nucleus_support(probs, cfg.top_p);
  double mass = 0.0;
  for (const auto id : support) mass += probs[id];
  const double u = rng.uniform() * mass;
  double cum = 0.0;
  for (const auto id : support) {
    cum += probs[id];
    if (u < cum) return id;
  }
  return support.back();
}

}  // namespace

std::vector<double> next_token_distribution(std::span<const float> logits, const SamplerConfig& cfg) {
  std::vector<double> out(logits.size(), 0.0);
  if (cfg.greedy) {
    out[static_cast<std::size_t>(argmax(logits))] = 1.0;
    return out;
  }
  const auto probs = softmax(logits, cfg.temperature);
  const auto support = nucleus_support(probs, cfg.top_p);
  double mass = 0.0;
  for (const auto id : support) mass += probs[id];
  for (const auto id : support) out[id] = probs[id] / mass;
  return out;
}

SampleResult sample(const Parameters<float>& params, std::span<const TokenId> prefix, const SamplerConfig& cfg,
                    TokenId eos, int prompt_index) {
  cfg.validate();
  if (prefix.empty()) throw ValidationError("sampling prefix must be non-empty");
  const int offset = params.config.offset_for(prompt_index);
  if (static_cast<std::size_t>(offset) + prefix.size() + static_cast<std::size_t>(cfg.max_new_tokens) >
      static_cast<std::size_t>(params.config.max_seq_len)) {
    throw ValidationError("prefix length " + std::to_string(prefix.size()) + " at position " + std::to_string(offset) +
                          " plus max_new_tokens " + std::to_string(cfg.max_new_tokens) + " exceeds max_seq_len");
  }
  Decoder<float> dec(params, offset);
  std::span<const float> logits;
  for (const auto id : prefix) logits = dec.push(id);
  Rng rng(cfg.seed);
  SampleResult result;
  for (int step = 0; step < cfg.max_new_tokens; ++step) {
    const TokenId next = draw(logits, cfg, rng);
    result.tokens.push_back(next);
    if (next == eos) {
      result.truncated = false;
      break;
    }
    if (step + 1 < cfg.max_new_tokens) logits = dec.push(next);
  }
  return result;
}

std::vector<double> sequence_logprob(const Parameters<float>& params, std::span<const TokenId> context,
                                     std::span<const TokenId> continuation, std::optional<TokenId> start_token) {
  if (continuation.empty()) return {};
  TokenSeq seq;
  if (context.empty()) {
    if (!start_token) throw ValidationError("empty context requires a start token");
    seq.push_back(*start_token);
  } else {
    seq.assign(context.begin(), context.end());
  }
  const auto ctx_len = seq.size();
  seq.insert(seq.end(), continuation.begin(), continuation.end());
  // The final token is a target only; it never needs to be fed.
  seq.pop_back();
  const auto out = forward<float>(params, std::span<const TokenId>(seq), nullptr, nullptr, params.config.prompt_position);
  std::vector<double> lp(continuation.size());
  for (std::size_t t = 0; t < continuation.size(); ++t) {
    const auto ls = log_softmax(out.at(static_cast<int>(ctx_len + t - 1)));
    lp[t] = ls[static_cast<std::size_t>(continuation[t])];
  }
  return lp;
}

}  // namespace alt::lm
