#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nettmle/core.hpp"
#include "nettmle/graph.hpp"
#include "nettmle/random.hpp"
#include "nettmle/summaries.hpp"

namespace nettmle {

/// Discrete law for one covariate column; columns are drawn independently.
struct CovariateColumn {
  std::string name;
  std::vector<double> values;
  std::vector<double> probs;

  bool binary() const { return values.size() == 2 && values[0] == 0.0 && values[1] == 1.0; }
};

/// intercept + sum of coefficient * named feature.
struct LinearPredictor {
  double intercept = 0.0;
  std::vector<std::pair<std::string, double>> terms;
};

struct TreatmentLaw {
  enum class Kind { Logit, FixedFraction };
  Kind kind = Kind::Logit;
  LinearPredictor predictor;  // over W features
  double fraction = 0.25;     // FixedFraction: exactly floor(fraction * n) treated
};

struct OutcomeLaw {
  LinearPredictor predictor;  // over V features
  bool deterministic = false; // Y = 1{eta > 0}
};

/// U_i ~ N(0,1) per node. U_i enters node i's linear predictor with
/// loading_own and each neighbor's with loading_friends. The covariate
/// loadings act the same way on the logit of binary covariate columns.
struct LatentConfig {
  double loading_own = 0.0;
  double loading_friends = 0.0;
  double covariate_loading_own = 0.0;
  double covariate_loading_friends = 0.0;
};

struct SemSpec {
  std::vector<CovariateColumn> covariates;
  TreatmentLaw treatment;
  OutcomeLaw outcome;
  std::optional<LatentConfig> latent;

  std::vector<std::string> covariate_names() const;
};

/// Checks that the laws only reference features their summaries produce.
void validate(const SemSpec& spec, const SummarySpec& summaries);

/// A LinearPredictor bound to column positions of a summary table.
class CompiledPredictor {
 public:
  CompiledPredictor() = default;
  CompiledPredictor(const LinearPredictor& lp, const std::vector<std::string>& feature_names);
  double eval(const Table& t, Index row) const;
  Vector eval(const Table& t) const;

 private:
  double intercept_ = 0.0;
  std::vector<std::pair<Index, double>> terms_;
};

struct Dataset {
  NetworkPtr network;
  CovariateTable C;
  Vector X;
  Vector Y;  // in [0,1]
  Table W;
  Table V;
  SummarySpec summaries;

  Index size() const { return X.size(); }
  std::vector<std::string> w_names() const { return feature_names(summaries.w); }
  std::vector<std::string> v_names() const { return feature_names(summaries.v); }
};

/// Builds a dataset, computing W and V from (C, X, A).
Dataset make_dataset(NetworkPtr net, CovariateTable C, Vector X, Vector Y, SummarySpec summaries);

// SEM building blocks, shared by simulation and the oracles.
Vector draw_latent(Index n, Rng& rng);
CovariateTable draw_covariates(const SemSpec& spec, const Network& net, Rng& rng, const Vector* latent);
void draw_treatment(const TreatmentLaw& law, const Vector& probabilities, Rng& rng, Vector& x);
Vector treatment_probabilities(const TreatmentLaw& law, const Table& W, const std::vector<std::string>& w_names);
/// P(Y_i = 1 | V_i [, latent]) under the true outcome law.
Vector outcome_probabilities(const SemSpec& spec, const Table& V, const std::vector<std::string>& v_names,
                             const Network& net, const Vector* latent);

/// Sequential draw of C, then X, then Y on the network.
Dataset simulate(NetworkPtr net, const SemSpec& spec, const SummarySpec& summaries, std::uint64_t seed);

struct Preset {
  std::string name;
  SemSpec sem;
  SummarySpec summaries;
};

/// Gym-membership scenario with dependence through direct transmission only.
/// Coefficients are repo-chosen.
Preset preset_transmission();
/// preset_transmission plus latent-variable dependence in the outcome.
Preset preset_latent();
/// preset_transmission with treatment randomized to exactly 25% of nodes.
Preset preset_randomized();
Preset preset_by_name(const std::string& name);

/// Columnar text: header `id,<covariates...>,X,Y`, one row per node.
void write_dataset(std::ostream& out, const Dataset& data, const std::vector<std::string>* labels = nullptr);

struct RawData {
  std::vector<std::string> ids;
  CovariateTable C;
  Vector X;
  Vector Y;
};

RawData read_dataset(std::istream& in);
RawData read_dataset_file(const std::string& path);
/// Reorders raw rows to match network labels; throws Io on missing or extra ids.
RawData align_to_labels(const RawData& raw, const std::vector<std::string>& labels);
/// Maps Y from [lower, upper] onto [0,1]; throws InvalidParameter if out of bounds.
Vector rescale_outcome(const Vector& y, double lower, double upper);

}  // namespace nettmle
