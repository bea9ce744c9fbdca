#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nettmle/core.hpp"
#include "nettmle/interventions.hpp"
#include "nettmle/nuisance.hpp"
#include "nettmle/sem.hpp"

namespace nettmle {

enum class EstimandKind { Marginal, Conditional };

EstimandKind parse_estimand(const std::string& text);
std::string to_string(EstimandKind k);

struct EstimatorConfig {
  HbarMethod hbar = HbarMethod::PooledEmpirical;
  Index draws = 100;       // counterfactual draws for random interventions
  Index hbar_draws = 100;  // treatment draws for the pooled-model density
  std::optional<std::vector<std::string>> m_features;  // default: every V column
  std::optional<std::vector<std::string>> g_features;  // default: every W column
  std::optional<double> weight_cap;
  bool positivity_override = false;
  Index centering_draws = 50;  // C resamples for the per-node mean of Ytilde*; 0 centers at psi
  EstimandKind estimand = EstimandKind::Marginal;
  LogisticOptions logistic;
};

struct NuisanceSnapshot {
  LogisticModel m;
  std::optional<LogisticModel> g;
  HbarMethod method = HbarMethod::PooledEmpirical;
  PooledDensity hbar;
  PooledDensity hbar_star;
  CleverWeights weights;
  std::vector<std::string> v_names;
  std::vector<std::string> w_names;

  /// Throws MissingModel when g was not fitted.
  TreatmentModel g_model() const;
};

struct TmleResult {
  std::string intervention;
  EstimandKind kind = EstimandKind::Marginal;
  double psi = 0.0;
  double psi_initial = 0.0;  // plug-in of the initial m fit
  double epsilon = 0.0;
  double score = 0.0;        // sum_i H_i (Y_i - m_eps(V_i))
  Vector y_tilde_star;       // per-node E[m_eps(V*_i) | C]
  Vector m_eps;              // updated fit at the observed V_i
  Vector ic_full;            // f_i for D'
  Vector ic_conditional;     // f_i for D_C
  Vector ic_centered;        // f_i for D' with Ytilde*_i centered at its own mean; empty if disabled
  Index draws = 1;
  std::uint64_t draw_seed = 0;
  PositivityReport positivity;
  NuisanceSnapshot nuisance;
  std::vector<std::string> warnings;

  /// Contributions the variance estimators use: D_C for the conditional
  /// estimand, otherwise the per-node centered D' when available.
  const Vector& ic() const {
    if (kind == EstimandKind::Conditional) return ic_conditional;
    return ic_centered.size() > 0 ? ic_centered : ic_full;
  }
};

/// Root of sum_i H_i (y_i - expit(logit m_i + eps)); m is clipped first.
double tmle_fluctuation(const Vector& y, const Vector& m_hat, const Vector& H);
double fluctuation_score(const Vector& y, const Vector& m_hat, const Vector& H, double epsilon);

/// Fits m and g, builds the densities and weights, targets, and averages the
/// updated fit over the counterfactual draws. Throws Positivity unless the
/// diagnostic passes or the override is set, and Numeric if the score
/// equation is not solved to 1e-8.
TmleResult tmle_estimate(const Dataset& data, const Intervention& iv, const EstimatorConfig& config,
                         std::uint64_t seed);

/// (1/n) sum_i mean_d m(V*_id).
double conditional_estimand(const LogisticModel& m, const std::vector<std::string>& v_names,
                            const std::vector<Table>& v_star);

/// Influence contributions evaluated at arbitrary (C, X, Y) with the fits of
/// one TMLE run held fixed. Weights off the estimated support are 0.
class InfluenceModel {
 public:
  InfluenceModel(const Dataset& data, const TmleResult& result, const Intervention& iv);

  Index size() const { return network_->size(); }
  const NetworkPtr& network() const { return network_; }
  double epsilon() const { return epsilon_; }

  double weight(std::span<const double> v) const;
  Vector weights(const Table& V) const;
  /// Clipped logit of the initial fit at each row of V.
  Vector m_logit(const Table& V) const;
  Vector m_eps(const Table& V) const;
  Vector treatment_probabilities(const Table& W) const;
  Table w_summaries(const CovariateTable& C) const;
  Table v_summaries(const CovariateTable& C, const Vector& X) const;

  /// mean over draws of m_eps(V*_i) under covariates C; with fluctuation
  /// `eps` in place of the fitted one when given.
  Vector expected_star(const CovariateTable& C, Index draws, std::uint64_t seed,
                       std::optional<double> eps = std::nullopt) const;

  /// f_i(C, X, Y) given a precomputed expected_star(C).
  Vector contributions(const CovariateTable& C, const Vector& X, const Vector& Y, const Vector& y_star, double psi,
                       EstimandKind kind) const;

 private:
  NetworkPtr network_;
  SummarySpec summaries_;
  Intervention iv_;
  LogisticModel m_;
  std::optional<TreatmentModel> g_;
  PooledDensity hbar_;
  PooledDensity hbar_star_;
  std::optional<double> cap_;
  std::vector<std::string> v_names_;
  double epsilon_;
  SummaryProgram w_prog_;
  SummaryProgram v_prog_;
};

/// Recomputes the per-unit contributions from the data and fits.
Vector eif_evaluate(const Dataset& data, const TmleResult& fits, const Intervention& iv, double psi,
                    EstimandKind kind);

void to_json(nlohmann::json& j, const PositivityReport& r);
/// Estimate, fluctuation, diagnostics and nuisance fits (not per-unit vectors).
void to_json(nlohmann::json& j, const TmleResult& r);

}  // namespace nettmle
