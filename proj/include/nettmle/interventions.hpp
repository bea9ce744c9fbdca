#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nettmle/core.hpp"
#include "nettmle/graph.hpp"
#include "nettmle/random.hpp"
#include "nettmle/sem.hpp"
#include "nettmle/summaries.hpp"

namespace nettmle {

struct Intervention;

/// Sets X to a user-given vector.
struct Deterministic {
  Vector x;
};

/// Treatment as a deterministic function of covariates and the network.
struct Dynamic {
  std::string description;
  std::function<bool(const Network&, const CovariateTable&, Index)> rule;
};

/// X*_i ~ g(. | W*_i) with W* = s*_X(C) and V* = s*_Y(C, X*). Empty
/// overrides keep the observed summaries, which gives the natural
/// (identity) treatment mechanism.
struct Stochastic {
  std::optional<std::vector<Feature>> w_star;
  std::optional<std::vector<Feature>> v_star;
};

/// Replaces A with a fixed A*, or with a draw from a family of networks.
struct NetworkRewire {
  std::string description;
  NetworkPtr target;
  std::function<Network(const Network&, const CovariateTable&, Rng&)> family;
};

/// Each node treated independently with probability p.
struct BernoulliP {
  double p = 0.0;
};

/// Treats floor(fraction * n) nodes of highest observed degree; ties go to
/// the lowest id.
struct TopDegree {
  double fraction = 0.0;
};

/// Every node with fewer than max_degree ties gains one tie to the
/// highest-degree node with `column` == 1 that is not already a neighbor
/// (ties to lowest id).
struct AddActiveFriend {
  Index max_degree = 10;
  std::string column = "PA";
};

/// Interventions on centrality measures are not identified; any use throws.
struct CentralityTarget {
  std::string measure;
};

/// Combination: the last treatment-setting part sets X, the last topology
/// part sets A*. Without a treatment part the observed mechanism g applies.
struct Compose {
  std::vector<Intervention> parts;
};

struct Intervention {
  using Kind = std::variant<Deterministic, Dynamic, Stochastic, NetworkRewire, BernoulliP, TopDegree,
                            AddActiveFriend, CentralityTarget, Compose>;
  Kind kind;
  std::string label;
};

Intervention make_observed(const Vector& x);  // Deterministic(x* = observed X)
Intervention make_natural();                  // Stochastic with s* = s
Intervention make_bernoulli(double p);
Intervention make_top_degree(double fraction);
Intervention make_add_active_friend(Index max_degree, const std::string& column);
Intervention make_dynamic_own(const std::string& column, double threshold);
Intervention make_dynamic_peer(const std::string& column, double threshold);
Intervention make_compose(std::vector<Intervention> parts);

/// Named interventions: g1 = bernoulli:0.35, g2 = top_degree:0.1,
/// g3 = add_active_friend:10:PA, g4 = g2+g3, natural, bernoulli:<p>,
/// top_degree:<f>, add_active_friend:<k>:<col>, dynamic_own:<col>:<t>,
/// dynamic_peer:<col>:<t>, centrality:<measure>, and `a+b` compositions.
Intervention parse_intervention(const std::string& text);

/// True when X* is drawn from the treatment mechanism g (no treatment part,
/// or a Stochastic one).
bool needs_treatment_model(const Intervention& iv);

/// P(X_i = 1 | W_i) for a treatment mechanism, true or fitted. Columns of W
/// are in the order of `w_names`.
class TreatmentModel {
 public:
  using ProbabilityFn = std::function<Vector(const Table& W)>;

  TreatmentModel(std::vector<std::string> w_names, ProbabilityFn fn)
      : w_names_(std::move(w_names)), fn_(std::move(fn)) {}

  static TreatmentModel from_law(const TreatmentLaw& law, std::vector<std::string> w_names);

  Vector probabilities(const Table& W) const { return fn_(W); }
  bool fixed_fraction() const { return fixed_fraction_; }
  double fraction() const { return fraction_; }
  const std::vector<std::string>& w_names() const { return w_names_; }

 private:
  std::vector<std::string> w_names_;
  ProbabilityFn fn_;
  bool fixed_fraction_ = false;
  double fraction_ = 0.0;
};

struct TreatmentPlan {
  enum class Kind { Fixed, Independent, FixedFraction };
  Kind kind = Kind::Fixed;
  Vector value;      // Fixed: x*; Independent: P(X*_i = 1); FixedFraction: zeros of length n
  Index treated = 0; // FixedFraction: number treated
};

/// An intervention bound to a network, covariates and summaries; produces
/// counterfactual draws of (X*, V*).
class CounterfactualEngine {
 public:
  CounterfactualEngine(NetworkPtr net, const CovariateTable& C, const SummarySpec& summaries,
                       const Intervention& iv, const TreatmentModel* g);

  /// False when every draw is identical (deterministic treatment and network).
  bool random() const { return random_network_ || plan_.kind != TreatmentPlan::Kind::Fixed; }
  bool random_network() const { return random_network_; }
  bool uses_treatment_model() const { return model_treatment_; }

  /// Draw d under `seed`; identical (seed, d) gives identical output.
  void draw(std::uint64_t seed, Index d, Table& v_star, Vector& x_star) const;

  /// Effective network and treatment plan; for random network families this
  /// is the plan for draw d.
  std::pair<NetworkPtr, TreatmentPlan> resolve(std::uint64_t seed, Index d) const;

  const std::vector<std::string>& v_names() const { return v_prog_.names(); }
  /// V* for a given treatment vector on a given (effective) network.
  void summarize(const Network& net, const Vector& x_star, Table& v_star) const {
    v_prog_.evaluate(net, C_.values, &x_star, v_star);
  }

 private:
  TreatmentPlan plan_for(const Network& net) const;

  NetworkPtr base_;
  NetworkPtr effective_;
  CovariateTable C_;
  std::function<Network(const Network&, const CovariateTable&, Rng&)> family_;
  bool random_network_ = false;
  bool model_treatment_ = false;
  const TreatmentModel* g_ = nullptr;  // not owned; must outlive the engine
  std::optional<Vector> fixed_x_;
  std::optional<double> bernoulli_p_;
  std::optional<Dynamic> dynamic_;
  SummaryProgram w_prog_;
  SummaryProgram v_prog_;
  TreatmentPlan plan_;
};

void sample_treatment(const TreatmentPlan& plan, Rng& rng, Vector& x);

/// draws x (n x |V|) tables; a deterministic intervention yields one table.
std::vector<Table> counterfactual_summaries(const Dataset& data, const Intervention& iv, const TreatmentModel* g_hat,
                                            Index draws, std::uint64_t seed);

struct UnsupportedValue {
  std::vector<double> value;
  Index node = -1;          // first node whose V* took this value
  double stratum = 0.0;
  Index count = 0;          // occurrences across nodes and draws
};

struct PositivityReport {
  bool pass = true;
  std::vector<UnsupportedValue> unsupported;  // first `kMaxListed` distinct values
  Index unsupported_distinct = 0;
  double unsupported_mass = 0.0;  // share of V* draws outside the observed support
  double min_frequency = 0.0;     // min over V* support of observed relative frequency
  Index star_support = 0;

  static constexpr Index kMaxListed = 100;
};

/// Streaming form of positivity_diagnostic for use inside estimation loops.
class PositivityAccumulator {
 public:
  PositivityAccumulator(const Table& v_obs, const std::vector<double>* strata = nullptr);
  void add(const Table& v_star);
  PositivityReport finish() const;

 private:
  Index key_dims_;
  const std::vector<double>* strata_;
  std::vector<double> key_;
  class Impl;
  std::shared_ptr<Impl> impl_;
};

/// Every value in the support of V* absent from observed V (per stratum when
/// strata are given) is listed; pass iff there is none.
PositivityReport positivity_diagnostic(const Table& v_obs, const std::vector<Table>& v_star,
                                       const std::vector<double>* strata = nullptr);

}  // namespace nettmle
