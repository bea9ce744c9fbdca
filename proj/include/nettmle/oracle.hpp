#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "nettmle/core.hpp"
#include "nettmle/graph.hpp"
#include "nettmle/interventions.hpp"
#include "nettmle/nuisance.hpp"
#include "nettmle/sem.hpp"

namespace nettmle {

/// Largest configuration count the enumeration oracle accepts.
inline constexpr std::uint64_t kEnumerationCap = std::uint64_t{1} << 24;

/// Number of (C, X*) configurations psi_exact_enumeration would visit.
std::uint64_t enumeration_size(const Network& net, const SemSpec& spec, const Intervention& iv);

/// Exact E[Ybar*] by summing over every covariate and treatment
/// configuration with the true laws. Throws TooLarge past the cap and
/// Specification for latent models or random network families.
double psi_exact_enumeration(const Network& net, const SemSpec& spec, const SummarySpec& summaries,
                             const Intervention& iv);

struct TruthEstimate {
  double psi = 0.0;
  double mc_se = 0.0;
  Index replicates = 0;
};

/// Average of Ybar* over R independent draws of the intervened system.
/// Within a draw Ybar* is replaced by its mean given (C, U, X*), which has
/// the same expectation.
TruthEstimate psi_monte_carlo_truth(const Network& net, const SemSpec& spec, const SummarySpec& summaries,
                                    const Intervention& iv, Index R, std::uint64_t seed, int workers = 1);

/// E[Ybar* | C] for fixed covariates, averaging over X* and the latent
/// variables. Throws Specification when the latent variables also drive C.
TruthEstimate psi_conditional_truth(const NetworkPtr& net, const SemSpec& spec, const SummarySpec& summaries,
                                    const Intervention& iv, const CovariateTable& C, Index R, std::uint64_t seed);

/// Exact pooled density of V* given C: (1/n) sum_i sum_x 1{V*_i(x) = v} P(x),
/// for at most 2^16 treatment configurations.
PooledDensity exact_hbar_star(const NetworkPtr& net, const CovariateTable& C, const SummarySpec& summaries,
                              const Intervention& iv, const TreatmentModel* g);

/// Hex digest identifying a truth instance.
std::string instance_key(const std::string& description);

struct TruthTable {
  struct Entry {
    double psi = 0.0;
    double mc_se = 0.0;
    Index replicates = 0;
    std::string description;
  };
  std::map<std::string, Entry> entries;

  const Entry* find(const std::string& key) const {
    auto it = entries.find(key);
    return it == entries.end() ? nullptr : &it->second;
  }
};

/// Tab-separated `key psi mc_se replicates description` with a header row.
void write_truth_table(std::ostream& out, const TruthTable& table);
TruthTable read_truth_table(std::istream& in);

}  // namespace nettmle
