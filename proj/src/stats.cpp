#include "alt/stats.hpp"

#include <cmath>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "alt/errors.hpp"

namespace alt::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ValidationError("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

TTestResult one_sample_t_greater(std::span<const double> xs, double mu0) {
  if (xs.size() < 2) throw ValidationError("t-test needs at least two observations");
  TTestResult r;
  r.n = xs.size();
  r.mean = mean(xs);
  const double var = sample_variance(xs);
  if (var <= 0.0) {
    r.degenerate = true;
    r.t = r.mean > mu0 ? INFINITY : (r.mean < mu0 ? -INFINITY : 0.0);
    r.p_value = r.mean > mu0 ? 0.0 : (r.mean < mu0 ? 1.0 : 0.5);
    return r;
  }
  r.t = (r.mean - mu0) / std::sqrt(var / static_cast<double>(r.n));
  boost::math::students_t dist(static_cast<double>(r.n - 1));
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

TTestResult paired_t_greater(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("paired t-test needs samples of equal size");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return one_sample_t_greater(d, 0.0);
}

}  // namespace alt::stats
