#pragma once

// Slow, obviously-correct reference implementations used to check the
// library's metrics and quantile mapping.

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "alt/corpus.hpp"
#include "alt/model.hpp"

namespace oracle {

/// Rank by counting: entries with a strictly higher reward, plus equal
/// rewards that come earlier in the input. Group g holds ranks
/// [sum of earlier sizes, + n/k + (g < n%k)).
inline std::vector<int> quantiles(const std::vector<double>& r, int k) {
  const int n = static_cast<int>(r.size());
  std::vector<int> bounds;
  int end = 0;
  for (int g = 0; g < k; ++g) {
    end += n / k + (g < n % k ? 1 : 0);
    bounds.push_back(end);
  }
  std::vector<int> out(r.size());
  for (int i = 0; i < n; ++i) {
    int rank = 0;
    for (int j = 0; j < n; ++j) rank += r[j] > r[i] || (r[j] == r[i] && j < i);
    out[i] = static_cast<int>(std::upper_bound(bounds.begin(), bounds.end(), rank) - bounds.begin());
  }
  return out;
}

inline double avg_max(const std::vector<std::vector<double>>& scores) {
  double total = 0.0;
  for (const auto& row : scores) {
    double best = -INFINITY;
    for (double s : row) best = s > best ? s : best;
    total += best;
  }
  return total / static_cast<double>(scores.size());
}

inline double toxic_probability(const std::vector<std::vector<double>>& scores, double threshold) {
  int hits = 0;
  for (const auto& row : scores) {
    bool any = false;
    for (double s : row) any = any || s > threshold;
    hits += any;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

/// Distinct n-grams over total n-grams, or over total tokens.
inline std::optional<double> dist_n(const std::vector<alt::TokenSeq>& gens, int n, bool over_tokens) {
  std::set<std::vector<alt::TokenId>> seen;
  std::size_t grams = 0, tokens = 0;
  for (const auto& g : gens) {
    tokens += g.size();
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= g.size(); ++i) {
      seen.insert(std::vector<alt::TokenId>(g.begin() + static_cast<long>(i), g.begin() + static_cast<long>(i) + n));
      ++grams;
    }
  }
  const std::size_t denom = over_tokens ? tokens : grams;
  if (denom == 0) return std::nullopt;
  return static_cast<double>(seen.size()) / static_cast<double>(denom);
}

/// Re-runs the full model on every prefix and reads the next-token
/// log-probability from its last row.
inline std::optional<double> perplexity(const alt::lm::Parameters<float>& p, const alt::TokenSeq& prompt,
                                        const alt::TokenSeq& gen, alt::TokenId start_token) {
  if (gen.empty()) return std::nullopt;
  alt::TokenSeq ctx = prompt.empty() ? alt::TokenSeq{start_token} : prompt;
  const int V = p.config.vocab_size;
  double nll = 0.0;
  for (const auto tok : gen) {
    const auto out = alt::lm::forward<float>(p, ctx, nullptr, nullptr, p.config.prompt_position);
    const auto last = out.at(static_cast<int>(ctx.size()) - 1);
    double mx = -INFINITY;
    for (int v = 0; v < V; ++v) mx = std::max(mx, static_cast<double>(last[v]));
    double z = 0.0;
    for (int v = 0; v < V; ++v) z += std::exp(static_cast<double>(last[v]) - mx);
    nll -= static_cast<double>(last[tok]) - mx - std::log(z);
    ctx.push_back(tok);
  }
  return std::exp(nll / static_cast<double>(gen.size()));
}

/// P(T > t) for Student's t with `df` degrees of freedom, by Simpson
/// integration of the density from 0 to |t|.
inline double student_t_upper_tail(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const double a = std::abs(t);
  const int n = 20000;
  const double h = a / n;
  double s = pdf(0) + pdf(a);
  for (int i = 1; i < n; ++i) s += pdf(i * h) * (i % 2 ? 4 : 2);
  const double half = s * h / 3;
  return t >= 0 ? 0.5 - half : 0.5 + half;
}

}  // namespace oracle
