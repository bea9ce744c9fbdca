#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "nettmle/core.hpp"
#include "nettmle/interventions.hpp"
#include "nettmle/sem.hpp"
#include "nettmle/tuple_index.hpp"

namespace nettmle {

struct LogisticOptions {
  double tolerance = 1e-10;        // on the score, divided by the total weight
  int max_iterations = 100;
  double separation_bound = 20.0;  // max |coefficient| before declaring separation
};

/// Logistic (quasi-binomial for fractional y) regression on a design matrix.
/// Aliased columns keep a zero coefficient and are flagged.
struct LogisticFit {
  Vector coefficients;
  std::vector<bool> aliased;
  int iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
  std::vector<std::string> warnings;

  template <typename Derived>
  Vector linear_predictor(const Eigen::MatrixBase<Derived>& X) const {
    return X * coefficients;
  }
};

/// Throws Separation when the coefficients diverge or y is constant.
LogisticFit fit_logistic(const Matrix& X, const Vector& y, const Vector* weights = nullptr,
                         const Vector* offset = nullptr, const LogisticOptions& options = {});

/// Selects named columns of a summary table, plus an optional intercept.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::vector<std::string> features, bool intercept) : features_(std::move(features)), intercept_(intercept) {}

  /// Resolves feature positions against the column names of a table.
  std::vector<Index> bind(const std::vector<std::string>& table_names) const;
  Matrix design(const Table& t, const std::vector<Index>& columns) const;
  Matrix design(const Table& t, const std::vector<std::string>& table_names) const {
    return design(t, bind(table_names));
  }

  const std::vector<std::string>& features() const { return features_; }
  bool intercept() const { return intercept_; }
  Index width() const { return static_cast<Index>(features_.size()) + (intercept_ ? 1 : 0); }
  /// Coefficient labels, intercept first.
  std::vector<std::string> labels() const;

 private:
  std::vector<std::string> features_;
  bool intercept_ = true;
};

/// A fitted logistic model over named summary features.
struct LogisticModel {
  FeatureMap map;
  LogisticFit fit;

  /// Predictions on a table whose columns are named `table_names`.
  Vector predict(const Table& t, const std::vector<std::string>& table_names) const;
  Vector linear_predictor(const Table& t, const std::vector<std::string>& table_names) const;

  /// Single-row evaluation with pre-bound columns; no allocation.
  double linear_predictor(const double* row, const std::vector<Index>& columns) const {
    double eta = 0.0;
    Index k = 0;
    if (map.intercept()) eta += fit.coefficients[k++];
    for (Index c : columns) eta += fit.coefficients[k++] * row[c];
    return eta;
  }
};

/// `features` == nullopt uses every column of the table.
LogisticModel fit_logistic_model(const Table& t, const std::vector<std::string>& table_names, const Vector& y,
                                 const std::optional<std::vector<std::string>>& features = std::nullopt,
                                 const LogisticOptions& options = {});

/// Wraps a fitted treatment model as a TreatmentModel over W.
TreatmentModel treatment_model(const LogisticModel& g_fit, const std::vector<std::string>& w_names);

/// Relative frequencies over a finite set of summary tuples.
class PooledDensity {
 public:
  PooledDensity() = default;
  PooledDensity(TupleIndex support, std::vector<double> mass) : support_(std::move(support)), mass_(std::move(mass)) {}

  /// 0 off the support.
  double operator()(std::span<const double> v) const {
    const Index id = support_.find(v);
    return id < 0 ? 0.0 : mass_[id];
  }
  Index size() const { return support_.size(); }
  Index dims() const { return support_.dims(); }
  std::span<const double> value(Index id) const { return support_.row(id); }
  double mass(Index id) const { return mass_[id]; }
  const TupleIndex& support() const { return support_; }
  double total() const;

 private:
  TupleIndex support_;
  std::vector<double> mass_;
};

/// Streaming counts of summary tuples, pooled over nodes and draws.
class DensityAccumulator {
 public:
  explicit DensityAccumulator(Index dims) : index_(dims) {}
  void add(const Table& v);
  void add(std::span<const double> row, double weight = 1.0);
  PooledDensity finish() const;
  double total() const { return total_; }

 private:
  TupleIndex index_;
  std::vector<double> counts_;
  double total_ = 0.0;
};

enum class HbarMethod { PooledEmpirical, PooledModel };

HbarMethod parse_hbar_method(const std::string& text);
std::string to_string(HbarMethod m);

/// Pooled-empirical density of the observed V.
PooledDensity estimate_hbar(const Table& V);
/// Pooled-model density: V recomputed under X ~ g_hat(. | W) and pooled
/// over `draws` treatment draws with the observed covariates, plus the
/// observed V as one more draw.
PooledDensity estimate_hbar_model(const Dataset& data, const TreatmentModel& g_hat, Index draws, std::uint64_t seed);
PooledDensity estimate_hbar_star(const std::vector<Table>& v_star);

struct CleverWeights {
  Vector H;
  Index truncated = 0;
  std::optional<double> cap;
  double max = 0.0;
  bool large = false;  // max H above sqrt(n)
};

/// H_i = hbar_star(V_i) / hbar(V_i). A zero hbar at an observed V_i throws
/// Positivity naming the node.
CleverWeights clever_weights(const PooledDensity& hbar, const PooledDensity& hbar_star, const Table& V,
                             std::optional<double> cap = std::nullopt);

void to_json(nlohmann::json& j, const LogisticModel& m);
void from_json(const nlohmann::json& j, LogisticModel& m);
void to_json(nlohmann::json& j, const PooledDensity& d);
void from_json(const nlohmann::json& j, PooledDensity& d);

}  // namespace nettmle
