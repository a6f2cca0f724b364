#include "alt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "alt/errors.hpp"
#include "alt/parallel.hpp"
#include "alt/rng.hpp"

namespace alt::eval {

DistDenominator dist_denominator_from_string(const std::string& s) {
  if (s == "ngrams") return DistDenominator::ngrams;
  if (s == "tokens") return DistDenominator::tokens;
  throw ValidationError("dist denominator must be ngrams or tokens, got '" + s + "'");
}

std::string to_string(DistDenominator d) { return d == DistDenominator::ngrams ? "ngrams" : "tokens"; }

void EvalConfig::validate() const {
  if (samples_per_prompt < 1) throw ValidationError("samples_per_prompt must be >= 1");
  if (!(toxic_threshold > 0.0 && toxic_threshold < 1.0)) throw ValidationError("toxic_threshold must be in (0, 1)");
  for (int n : ngram_orders) {
    if (n < 1) throw ValidationError("ngram orders must be >= 1");
  }
  if (max_prompts < 0) throw ValidationError("max_prompts must be >= 0");
  sampler.validate();
}

nlohmann::json EvalConfig::to_json() const {
  return {{"samples_per_prompt", samples_per_prompt},
          {"toxic_threshold", toxic_threshold},
          {"ngram_orders", ngram_orders},
          {"dist_denominator", to_string(dist_denominator)},
          {"sampler", sampler.to_json()},
          {"seed", seed},
          {"max_prompts", max_prompts}};
}

EvalConfig EvalConfig::from_json(const nlohmann::json& j) {
  EvalConfig c;
  c.samples_per_prompt = j.value("samples_per_prompt", c.samples_per_prompt);
  c.toxic_threshold = j.value("toxic_threshold", c.toxic_threshold);
  c.ngram_orders = j.value("ngram_orders", c.ngram_orders);
  if (j.contains("dist_denominator")) {
    c.dist_denominator = dist_denominator_from_string(j.at("dist_denominator").get<std::string>());
  }
  if (j.contains("sampler")) c.sampler = lm::SamplerConfig::from_json(j.at("sampler"), c.sampler);
  c.seed = j.value("seed", c.seed);
  c.max_prompts = j.value("max_prompts", c.max_prompts);
  c.validate();
  return c;
}

double avg_max_score(const std::vector<std::vector<double>>& scores) {
  if (scores.empty()) throw ValidationError("avg_max_score needs at least one prompt");
  double s = 0.0;
  for (const auto& p : scores) {
    if (p.empty()) throw ValidationError("every prompt needs at least one score");
    s += *std::max_element(p.begin(), p.end());
  }
  return s / static_cast<double>(scores.size());
}

double toxic_probability(const std::vector<std::vector<double>>& scores, double threshold) {
  if (scores.empty()) throw ValidationError("toxic_probability needs at least one prompt");
  std::size_t hit = 0;
  for (const auto& p : scores) {
    if (std::any_of(p.begin(), p.end(), [&](double v) { return v > threshold; })) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

std::optional<double> dist_n(const std::vector<TokenSeq>& generations, int n, DistDenominator denominator) {
  if (n < 1) throw ValidationError("dist_n needs n >= 1");
  std::set<std::vector<TokenId>> distinct;
  std::size_t total = 0, tokens = 0;
  for (const auto& g : generations) {
    tokens += g.size();
    if (g.size() < static_cast<std::size_t>(n)) continue;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= g.size(); ++i) {
      distinct.emplace(g.begin() + static_cast<std::ptrdiff_t>(i), g.begin() + static_cast<std::ptrdiff_t>(i + n));
      ++total;
    }
  }
  const std::size_t denom = denominator == DistDenominator::ngrams ? total : tokens;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(distinct.size()) / static_cast<double>(denom);
}

std::optional<double> conditional_perplexity(const lm::Parameters<float>& evaluator, const TokenSeq& prompt,
                                             const TokenSeq& generation, TokenId start_token) {
  if (generation.empty()) return std::nullopt;
  const auto lp = lm::sequence_logprob(evaluator, prompt, generation, start_token);
  double s = 0.0;
  for (double v : lp) s -= v;
  return std::exp(s / static_cast<double>(lp.size()));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json dist_json = nlohmann::json::object();
  for (const auto& [n, v] : dist) dist_json["dist_" + std::to_string(n)] = v ? nlohmann::json(*v) : nlohmann::json();
  nlohmann::json pp = nlohmann::json::array();
  for (const auto& p : per_prompt) {
    pp.push_back({{"max_toxicity", p.max_score},
                  {"mean_toxicity", p.mean_score},
                  {"mean_perplexity", p.mean_perplexity ? nlohmann::json(*p.mean_perplexity) : nlohmann::json()}});
  }
  return {{"prompts", prompts},
          {"samples_per_prompt", samples_per_prompt},
          {"conditioning", conditioning ? nlohmann::json(*conditioning) : nlohmann::json()},
          {"avg_max_toxicity", avg_max_toxicity},
          {"toxic_probability", toxic_probability},
          {"mean_toxicity", mean_toxicity},
          {"dist", dist_json},
          {"mean_perplexity", mean_perplexity ? nlohmann::json(*mean_perplexity) : nlohmann::json()},
          {"mean_length", mean_length},
          {"truncation_rate", truncation_rate},
          {"per_prompt", pp},
          {"config", config}};
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "metric,value\n";
  os << "prompts," << prompts << "\n";
  os << "samples_per_prompt," << samples_per_prompt << "\n";
  os << "avg_max_toxicity," << avg_max_toxicity << "\n";
  os << "toxic_probability," << toxic_probability << "\n";
  os << "mean_toxicity," << mean_toxicity << "\n";
  for (const auto& [n, v] : dist) {
    os << "dist_" << n << ',';
    if (v) os << *v;
    os << "\n";
  }
  os << "mean_perplexity,";
  if (mean_perplexity) os << *mean_perplexity;
  os << "\n";
  os << "mean_length," << mean_length << "\n";
  os << "truncation_rate," << truncation_rate << "\n";
  return os.str();
}

namespace {

TokenSeq make_prefix(const TokenSeq& prompt, const std::optional<TokenSeq>& fb, const SpecialTokens& special) {
  TokenSeq prefix;
  if (fb) {
    prefix = *fb;
    prefix.push_back(special.separator);
  }
  prefix.insert(prefix.end(), prompt.begin(), prompt.end());
  if (prefix.empty()) prefix.push_back(special.eos);
  return prefix;
}

std::vector<std::vector<lm::SampleResult>> draw_samples(const lm::Parameters<float>& policy,
                                                        std::span<const TokenSeq> prompts, const EvalConfig& cfg,
                                                        const std::optional<TokenSeq>& fb, const SpecialTokens& special,
                                                        int workers) {
  std::vector<std::vector<lm::SampleResult>> out(prompts.size());
  parallel_for(prompts.size(), workers, [&](std::size_t p) {
    const auto prefix = make_prefix(prompts[p], fb, special);
    out[p].resize(static_cast<std::size_t>(cfg.samples_per_prompt));
    for (std::size_t s = 0; s < out[p].size(); ++s) {
      auto sc = cfg.sampler;
      sc.seed = mix_seed({cfg.seed, p, s});
      out[p][s] = lm::sample(policy, prefix, sc, special.eos, fb ? static_cast<int>(fb->size()) + 1 : 0);
    }
  });
  return out;
}

std::span<const TokenSeq> limit(std::span<const TokenSeq> prompts, const EvalConfig& cfg) {
  if (prompts.empty()) throw ValidationError("evaluation needs at least one prompt");
  if (cfg.max_prompts > 0 && prompts.size() > static_cast<std::size_t>(cfg.max_prompts)) {
    return prompts.first(static_cast<std::size_t>(cfg.max_prompts));
  }
  return prompts;
}

}  // namespace

EvalReport evaluate(const lm::Parameters<float>& policy, const lm::Parameters<float>& evaluator,
                    const Vocabulary& vocab, std::span<const TokenSeq> prompts_in, const EvalConfig& cfg,
                    const std::optional<TokenSeq>& feedback_tokens, int workers) {
  cfg.validate();
  const auto prompts = limit(prompts_in, cfg);
  const auto& special = vocab.special();
  const auto samples = draw_samples(policy, prompts, cfg, feedback_tokens, special, workers);

  EvalReport rep;
  rep.prompts = prompts.size();
  rep.samples_per_prompt = cfg.samples_per_prompt;
  if (feedback_tokens) rep.conditioning = vocab.detokenize(*feedback_tokens);
  rep.config = cfg.to_json();

  std::vector<std::vector<double>> scores(prompts.size());
  std::vector<std::vector<std::optional<double>>> ppl(prompts.size());
  parallel_for(prompts.size(), workers, [&](std::size_t p) {
    for (const auto& s : samples[p]) {
      scores[p].push_back(feedback::toxicity_score(vocab, s.tokens));
      ppl[p].push_back(conditional_perplexity(evaluator, prompts[p], s.tokens, special.eos));
    }
  });

  std::vector<TokenSeq> content;
  double len = 0.0, trunc = 0.0, tox = 0.0, ppl_sum = 0.0;
  std::size_t n = 0, ppl_n = 0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    PromptBreakdown b;
    double pp_sum = 0.0;
    std::size_t pp_n = 0;
    for (std::size_t s = 0; s < samples[p].size(); ++s) {
      const auto& toks = samples[p][s].tokens;
      TokenSeq words;
      for (auto t : toks) {
        if (!vocab.is_special(t)) words.push_back(t);
      }
      len += static_cast<double>(words.size());
      trunc += samples[p][s].truncated ? 1.0 : 0.0;
      tox += scores[p][s];
      if (ppl[p][s]) {
        pp_sum += *ppl[p][s];
        ++pp_n;
      }
      content.push_back(std::move(words));
      ++n;
    }
    b.max_score = *std::max_element(scores[p].begin(), scores[p].end());
    b.mean_score = stats::mean(scores[p]);
    if (pp_n > 0) b.mean_perplexity = pp_sum / static_cast<double>(pp_n);
    ppl_sum += pp_sum;
    ppl_n += pp_n;
    rep.per_prompt.push_back(b);
  }
  rep.avg_max_toxicity = avg_max_score(scores);
  rep.toxic_probability = toxic_probability(scores, cfg.toxic_threshold);
  rep.mean_toxicity = tox / static_cast<double>(n);
  for (int order : cfg.ngram_orders) rep.dist[order] = dist_n(content, order, cfg.dist_denominator);
  if (ppl_n > 0) rep.mean_perplexity = ppl_sum / static_cast<double>(ppl_n);
  rep.mean_length = len / static_cast<double>(n);
  rep.truncation_rate = trunc / static_cast<double>(n);
  return rep;
}

std::vector<LabelProbe> steerability_probe(const lm::Parameters<float>& policy, const Vocabulary& vocab,
                                           std::span<const TokenSeq> prompts_in,
                                           const feedback::QuantileScheme& scheme, const EvalConfig& cfg,
                                           const std::vector<std::string>& labels, int workers) {
  cfg.validate();
  const auto prompts = limit(prompts_in, cfg);
  std::vector<feedback::FeedbackLabel> chosen;
  if (labels.empty()) {
    chosen = scheme.labels;
  } else {
    for (const auto& name : labels) {
      auto it = std::find_if(scheme.labels.begin(), scheme.labels.end(),
                             [&](const feedback::FeedbackLabel& l) { return l.text == name; });
      if (it == scheme.labels.end()) {
        throw ValidationError("label '" + name + "' is not part of scheme " + scheme.name);
      }
      chosen.push_back(*it);
    }
  }
  std::vector<LabelProbe> out;
  for (const auto& label : chosen) {
    const auto fb = feedback::encode_feedback(label, scheme, vocab);
    const auto samples = draw_samples(policy, prompts, cfg, fb, vocab.special(), workers);
    LabelProbe probe{label.text, 0.0, {}};
    for (const auto& per_prompt : samples) {
      std::vector<double> s;
      for (const auto& r : per_prompt) s.push_back(feedback::toxicity_score(vocab, r.tokens));
      probe.per_prompt_mean.push_back(stats::mean(s));
    }
    probe.mean_score = stats::mean(probe.per_prompt_mean);
    out.push_back(std::move(probe));
  }
  return out;
}

stats::TTestResult steerability_test(const std::vector<LabelProbe>& probe, const std::string& high,
                                     const std::string& low) {
  const LabelProbe* h = nullptr;
  const LabelProbe* l = nullptr;
  for (const auto& p : probe) {
    if (p.label == high) h = &p;
    if (p.label == low) l = &p;
  }
  if (!h || !l) throw ValidationError("steerability test labels are missing from the probe");
  return stats::paired_t_greater(h->per_prompt_mean, l->per_prompt_mean);
}

nlohmann::json WinrateResult::to_json() const {
  return {{"win_fraction", win_fraction}, {"wins", wins},          {"losses", losses},
          {"ties", ties},                 {"dropped", dropped},    {"t", test.t},
          {"p_value", test.p_value},      {"degenerate", test.degenerate}};
}

WinrateResult winrate(llm::ChatClient& judge, const llm::PromptTemplate& tmpl, std::span<const JudgePair> pairs,
                      std::uint64_t seed) {
  if (pairs.size() < 2) throw ValidationError("win-rate needs at least two pairs");
  WinrateResult r;
  std::vector<double> indicators;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Rng rng(mix_seed({seed, i}));
    const bool swapped = rng.below(2) == 1;
    const auto& first = swapped ? pairs[i].b : pairs[i].a;
    const auto& second = swapped ? pairs[i].a : pairs[i].b;
    llm::ChatRequest req;
    req.model = judge.config().model;
    req.temperature = judge.config().temperature;
    req.slots = {{"prompt", pairs[i].prompt}, {"response_a", first}, {"response_b", second}};
    req.messages = tmpl.render(req.slots);
    const auto verdict = llm::normalize_label(judge.complete(req));
    if (verdict == "tie") {
      ++r.ties;
      continue;
    }
    if (verdict != "a" && verdict != "b") {
      ++r.dropped;
      continue;
    }
    const bool a_wins = (verdict == "a") != swapped;
    indicators.push_back(a_wins ? 1.0 : 0.0);
    (a_wins ? r.wins : r.losses)++;
  }
  if (indicators.empty()) throw ValidationError("no valid judge decisions left after drops and ties");
  r.win_fraction = static_cast<double>(r.wins) / static_cast<double>(indicators.size());
  if (indicators.size() >= 2) {
    r.test = stats::one_sample_t_greater(indicators, 0.5);
  } else {
    r.test.n = 1;
    r.test.mean = indicators[0];
    r.test.degenerate = true;
    r.test.p_value = indicators[0] > 0.5 ? 0.0 : 1.0;
  }
  return r;
}

std::string plot_data_from_manifest(const nlohmann::json& manifest) {
  std::ostringstream os;
  os.precision(10);
  os << "iteration,metric,value\n";
  for (const auto& row : manifest.value("iterations", nlohmann::json::array())) {
    const auto k = row.value("iteration", 0);
    for (const char* key : {"pool_size", "selected", "truncated", "dropped_unparseable", "final_loss", "final_nll",
                            "final_kl", "final_entropy_term"}) {
      if (row.contains(key) && row[key].is_number()) os << k << ',' << key << ',' << row[key].get<double>() << "\n";
    }
    if (row.contains("eval") && row["eval"].is_object()) {
      for (const auto& [name, v] : row["eval"].items()) {
        if (v.is_number()) os << k << ",eval." << name << ',' << v.get<double>() << "\n";
      }
    }
  }
  return os.str();
}

}  // namespace alt::eval
