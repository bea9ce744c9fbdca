#pragma once

#include <vector>

#include "nettmle/core.hpp"

namespace nettmle {

/// Standard normal quantile.
double normal_quantile(double p);
double normal_cdf(double x);

struct KsResult {
  double statistic = 0.0;  // sup |F_n - Phi|
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against N(0,1), asymptotic p-value
/// with Stephens' small-sample correction.
KsResult ks_test_normal(std::vector<double> sample);

/// Kolmogorov distribution survival function, P(K > x).
double kolmogorov_survival(double x);

double mean(const std::vector<double>& x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(const std::vector<double>& x);

}  // namespace nettmle
