#pragma once

#include <string>
#include <vector>

#include "nettmle/core.hpp"
#include "nettmle/graph.hpp"

namespace nettmle {

/// Name reserved for the treatment column inside summary expressions.
inline constexpr const char* kTreatmentColumn = "X";

enum class FeatureOp { Own, NbrSum, NbrMean, NbrMax, Degree, Product };

/// One named summary feature, e.g. `nX = nbr_sum(X)` or `nXnPA = product(nX, nPA)`.
/// Reductions over an empty neighbor set are 0.
struct Feature {
  std::string name;
  FeatureOp op = FeatureOp::Own;
  std::string source;  // column for Own/Nbr*; unused for Degree/Product
  std::string lhs;     // Product operands: earlier feature names
  std::string rhs;
};

/// Parses `own(C)`, `nbr_sum(C)`, `nbr_mean(C)`, `nbr_max(C)`, `degree()`,
/// `product(a, b)`.
Feature parse_feature(const std::string& name, const std::string& expression);
std::string to_expression(const Feature& f);

/// s_X produces W from covariates; s_Y produces V from covariates and treatment.
struct SummarySpec {
  std::vector<Feature> w;
  std::vector<Feature> v;
};

std::vector<std::string> feature_names(const std::vector<Feature>& features);

struct CovariateTable {
  std::vector<std::string> names;
  Matrix values;  // n x p

  Index rows() const { return values.rows(); }
  /// -1 when absent.
  Index column(const std::string& name) const;
};

/// A feature list compiled against covariate column positions.
class SummaryProgram {
 public:
  SummaryProgram() = default;
  /// Throws Specification on unknown columns/operands or, when
  /// allow_treatment is false, on any reference to the treatment column.
  SummaryProgram(const std::vector<Feature>& features, const std::vector<std::string>& covariate_names,
                 bool allow_treatment);

  void evaluate(const Network& net, const Matrix& C, const Vector* X, Table& out) const;
  Table evaluate(const Network& net, const Matrix& C, const Vector* X) const;

  const std::vector<std::string>& names() const { return names_; }
  Index size() const { return static_cast<Index>(ops_.size()); }
  bool uses_treatment() const { return uses_treatment_; }

 private:
  struct Op {
    FeatureOp op;
    Index column;  // covariate index, or -1 for treatment
    Index lhs;
    Index rhs;
  };
  std::vector<Op> ops_;
  std::vector<std::string> names_;
  bool uses_treatment_ = false;
};

struct Summaries {
  Table W;
  Table V;
};

Summaries apply_summaries(const Network& net, const SummarySpec& spec, const CovariateTable& C,
                          const Vector& X);

}  // namespace nettmle
