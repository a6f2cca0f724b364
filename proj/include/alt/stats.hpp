#pragma once

#include <span>

namespace alt::stats {

double mean(std::span<const double> xs);
/// Unbiased sample variance; 0 for fewer than two values.
double sample_variance(std::span<const double> xs);

struct TTestResult {
  double t = 0.0;
  double p_value = 1.0;  // one-tailed
  double mean = 0.0;     // of the tested quantity (differences for the paired test)
  std::size_t n = 0;
  /// Zero variance: p is 0, 0.5 or 1 depending on the sign of mean - mu0.
  bool degenerate = false;
};

/// H0: mean <= mu0 against H1: mean > mu0.
TTestResult one_sample_t_greater(std::span<const double> xs, double mu0);
/// One-tailed paired test of H1: mean(a - b) > 0.
TTestResult paired_t_greater(std::span<const double> a, std::span<const double> b);

}  // namespace alt::stats
