#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "nettmle/core.hpp"
#include "nettmle/graph.hpp"
#include "nettmle/tmle.hpp"

namespace nettmle {

enum class VarianceMethod { Iid, Dependent, Bootstrap };

std::string to_string(VarianceMethod m);
VarianceMethod parse_variance_method(const std::string& text);
/// Comma-separated list or `all`.
std::vector<VarianceMethod> parse_variance_methods(const std::string& text);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  bool clipped = false;  // an end was moved onto [0,1]
};

/// psi +- z_{(1+level)/2} sqrt(variance), clipped to [0,1] when bounded.
Interval confidence_interval(double psi, double variance, double level = 0.95, bool bounded = true);

struct VarianceReport {
  VarianceMethod method = VarianceMethod::Iid;
  double variance = 0.0;
  Interval ci;
  Index pairs = 0;       // dependent: ordered pairs summed
  Index replicates = 0;  // bootstrap
  Index failures = 0;    // bootstrap replicates that failed
  std::vector<std::string> warnings;
};

/// (1/n^2) sum_i f_i^2
VarianceReport var_iid(const Vector& ic, double psi, double level = 0.95);
/// (1/n^2) sum_i sum_{j in D_i} f_i f_j, floored at 0 with a warning.
VarianceReport var_dependent(const Vector& ic, const DependencyStructure& dep, double psi, double level = 0.95);

struct BootstrapConfig {
  Index replicates = 1000;
  Index draws = 20;              // counterfactual draws per replicate
  double max_failure_rate = 0.05;
  int workers = 1;
};

/// Parametric bootstrap: resample C, draw X from g and Y from m, recompute
/// the summaries, reuse the density ratio, refit the fluctuation only.
/// Fits g from `data` when the estimate did not need one.
VarianceReport var_bootstrap(const Dataset& data, const TmleResult& fit, const Intervention& iv,
                             const BootstrapConfig& config, std::uint64_t seed, double level = 0.95);

struct OrthogonalDecomposition {
  Vector f_Y;
  Vector f_X;
  Vector f_C;
  Vector centered;  // f_i - E[f_i]
  double sigma2_Y = 0.0;
  double sigma2_X = 0.0;
  double sigma2_C = 0.0;
  double mc_se_X = 0.0;  // largest per-unit Monte Carlo standard error of E[f_i | C]
  double mc_se_C = 0.0;  // same for E[f_i]
  Index draws = 0;

  double total() const { return sigma2_Y + sigma2_X + sigma2_C; }
};

/// f_Y = f - E[f|X,C], f_X = E[f|X,C] - E[f|C], f_C = E[f|C] - E[f] under
/// the fitted laws. E[f|X,C] is exact (f is linear in Y); the other two are
/// averages over `draws` resimulations of X, and of (C, X) with C rows
/// resampled. Variances are summed over dependent pairs and scaled by 1/n^2.
OrthogonalDecomposition orthogonal_decomposition(const Dataset& data, const TmleResult& fit, const Intervention& iv,
                                                 const DependencyStructure& dep, Index draws, Index inner_draws,
                                                 std::uint64_t seed);

/// Copy of `fit` with a treatment model fitted from `data` when absent.
TmleResult with_treatment_model(const Dataset& data, const TmleResult& fit);

void to_json(nlohmann::json& j, const VarianceReport& r);

}  // namespace nettmle
