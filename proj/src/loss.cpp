#include "alt/loss.hpp"

#include <algorithm>
#include <cmath>

#include "alt/errors.hpp"

namespace alt::train {

KlDirection kl_direction_from_string(const std::string& s) {
  if (s == "ref_to_policy") return KlDirection::RefToPolicy;
  if (s == "policy_to_ref") return KlDirection::PolicyToRef;
  throw ValidationError("kl_direction must be ref_to_policy or policy_to_ref, got '" + s + "'");
}

std::string to_string(KlDirection d) { return d == KlDirection::RefToPolicy ? "ref_to_policy" : "policy_to_ref"; }

void LossConfig::validate() const {
  if (!std::isfinite(beta) || beta < 0) throw ValidationError("beta must be finite and >= 0");
  if (!std::isfinite(alpha) || alpha < 0) throw ValidationError("alpha must be finite and >= 0");
}

nlohmann::json LossConfig::to_json() const {
  return {{"beta", beta}, {"alpha", alpha}, {"kl_direction", to_string(kl_direction)}};
}

LossConfig LossConfig::from_json(const nlohmann::json& j) {
  LossConfig c;
  c.beta = j.value("beta", c.beta);
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("kl_direction")) c.kl_direction = kl_direction_from_string(j.at("kl_direction").get<std::string>());
  c.validate();
  return c;
}

namespace {

void log_softmax_into(std::span<const double> z, std::vector<double>& out) {
  out.resize(z.size());
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] - lse;
}

template <typename T>
void log_softmax_row(std::span<const T> z, std::vector<double>& out) {
  std::vector<double> tmp(z.begin(), z.end());
  log_softmax_into(tmp, out);
}

}  // namespace

double token_nll(std::span<const double> logits, int target) {
  std::vector<double> lp;
  log_softmax_into(logits, lp);
  return -lp.at(static_cast<std::size_t>(target));
}

double kl_divergence(std::span<const double> p_logits, std::span<const double> q_logits) {
  std::vector<double> lp, lq;
  log_softmax_into(p_logits, lp);
  log_softmax_into(q_logits, lq);
  double kl = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
  return kl;
}

double entropy(std::span<const double> logits) {
  std::vector<double> lp;
  log_softmax_into(logits, lp);
  double h = 0.0;
  for (double v : lp) h -= std::exp(v) * v;
  return h;
}

template <typename T>
LossAndGrads<T> loss_and_grads(const lm::Parameters<T>& params, const lm::Parameters<T>* ref,
                               const TrainBatch& batch, const LossConfig& cfg, bool want_grads,
                               bool keep_logit_grads) {
  LossAndGrads<T> out;
  want_grads = want_grads || keep_logit_grads;
  if (batch.rows.empty()) throw ValidationError("empty training batch");
  if (want_grads) out.grads.assign(params.values.size(), T(0));
  const int V = params.config.vocab_size;
  const double B = static_cast<double>(batch.rows.size());
  std::vector<double> lp, lq, g(static_cast<std::size_t>(V));

  for (std::size_t r = 0; r < batch.rows.size(); ++r) {
    const TrainRow& row = batch.rows[r];
    if (row.gen_len <= 0) throw ValidationError("training row " + std::to_string(r) + " has no generation tokens");
    int gen_off = 0, ref_off = 0, pos = 0, ref_pos = 0;
    const TokenSeq input = policy_input(row, batch.start_token, &gen_off, &pos);
    lm::ForwardCache<T> cache;
    const auto fwd = lm::forward<T>(params, input, want_grads ? &cache : nullptr, nullptr, pos);
    lm::ForwardOutput<T> ref_fwd;
    if (ref) {
      const TokenSeq ref_input = reference_input(row, batch.start_token, &ref_off, &ref_pos);
      ref_fwd = lm::forward<T>(*ref, ref_input, nullptr, nullptr, ref_pos);
    }

    std::vector<T> dlogits;
    if (want_grads) dlogits.assign(fwd.logits.size(), T(0));
    const double w = 1.0 / (static_cast<double>(row.gen_len) * B);
    double row_nll = 0.0, row_kl = 0.0, row_ent = 0.0;

    for (int i = 0; i < row.gen_len; ++i) {
      const int pos = gen_off + i - 1;
      const int target = input[static_cast<std::size_t>(gen_off + i)];
      log_softmax_row(fwd.at(pos), lp);
      double h = 0.0;
      for (double v : lp) h -= std::exp(v) * v;
      row_nll -= lp[static_cast<std::size_t>(target)];
      row_ent -= h;
      for (int k = 0; k < V; ++k) {
        const double p = std::exp(lp[k]);
        g[k] = p - (k == target ? 1.0 : 0.0) + cfg.alpha * p * (lp[k] + h);
      }
      if (ref) {
        log_softmax_row(ref_fwd.at(ref_off + i - 1), lq);
        if (cfg.kl_direction == KlDirection::RefToPolicy) {
          double kl = 0.0;
          for (int k = 0; k < V; ++k) {
            const double q = std::exp(lq[k]);
            kl += q * (lq[k] - lp[k]);
            g[k] += cfg.beta * (std::exp(lp[k]) - q);
          }
          row_kl += kl;
        } else {
          double kl = 0.0;
          for (int k = 0; k < V; ++k) kl += std::exp(lp[k]) * (lp[k] - lq[k]);
          for (int k = 0; k < V; ++k) g[k] += cfg.beta * std::exp(lp[k]) * ((lp[k] - lq[k]) - kl);
          row_kl += kl;
        }
      }
      if (want_grads) {
        T* d = dlogits.data() + static_cast<std::size_t>(pos) * static_cast<std::size_t>(V);
        for (int k = 0; k < V; ++k) d[k] = static_cast<T>(w * g[k]);
      }
    }
    if (!std::isfinite(row_nll) || !std::isfinite(row_kl) || !std::isfinite(row_ent)) {
      throw NumericError("non-finite loss in training row " + std::to_string(r), r);
    }
    out.terms.nll += row_nll * w;
    out.terms.kl += row_kl * w;
    out.terms.entropy += row_ent * w;
    if (want_grads) lm::backward(params, cache, std::span<const T>(dlogits), out.grads);
    if (keep_logit_grads) out.logit_grads.push_back(std::move(dlogits));
  }
  out.terms.total = out.terms.nll + cfg.beta * out.terms.kl + cfg.alpha * out.terms.entropy;
  return out;
}

template <typename T>
double nll_term(const lm::Parameters<T>& params, const TrainBatch& batch) {
  return loss_and_grads<T>(params, nullptr, batch, LossConfig{0.0, 0.0}, false).terms.nll;
}

template <typename T>
double kl_ref_term(const lm::Parameters<T>& params, const lm::Parameters<T>& ref, const TrainBatch& batch,
                   KlDirection direction) {
  LossConfig cfg{0.0, 0.0, direction};
  return loss_and_grads<T>(params, &ref, batch, cfg, false).terms.kl;
}

template <typename T>
double entropy_term(const lm::Parameters<T>& params, const TrainBatch& batch) {
  return loss_and_grads<T>(params, nullptr, batch, LossConfig{0.0, 0.0}, false).terms.entropy;
}

#define ALT_INSTANTIATE(T)                                                                                     \
  template LossAndGrads<T> loss_and_grads<T>(const lm::Parameters<T>&, const lm::Parameters<T>*,               \
                                             const TrainBatch&, const LossConfig&, bool, bool);                \
  template double nll_term<T>(const lm::Parameters<T>&, const TrainBatch&);                                   \
  template double kl_ref_term<T>(const lm::Parameters<T>&, const lm::Parameters<T>&, const TrainBatch&,      \
                                 KlDirection);                                                                 \
  template double entropy_term<T>(const lm::Parameters<T>&, const TrainBatch&);

ALT_INSTANTIATE(float)
ALT_INSTANTIATE(double)

}  // namespace alt::train
