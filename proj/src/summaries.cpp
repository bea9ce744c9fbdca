#include "nettmle/summaries.hpp"

#include <algorithm>
#include <cctype>

namespace nettmle {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

}  // namespace

Feature parse_feature(const std::string& name, const std::string& expression) {
  const std::string expr = trim(expression);
  const auto open = expr.find('(');
  const auto close = expr.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open || close + 1 != expr.size())
    throw Error(ErrorKind::Specification, "feature '" + name + "': cannot parse '" + expression + "'");
  const std::string fn = trim(expr.substr(0, open));
  const std::string arg = trim(expr.substr(open + 1, close - open - 1));
  Feature f;
  f.name = name;
  if (fn == "own") f.op = FeatureOp::Own;
  else if (fn == "nbr_sum") f.op = FeatureOp::NbrSum;
  else if (fn == "nbr_mean") f.op = FeatureOp::NbrMean;
  else if (fn == "nbr_max") f.op = FeatureOp::NbrMax;
  else if (fn == "degree") f.op = FeatureOp::Degree;
  else if (fn == "product") f.op = FeatureOp::Product;
  else throw Error(ErrorKind::Specification, "feature '" + name + "': unknown reduction '" + fn + "'");

  if (f.op == FeatureOp::Degree) {
    if (!arg.empty()) throw Error(ErrorKind::Specification, "degree() takes no argument");
  } else if (f.op == FeatureOp::Product) {
    const auto comma = arg.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorKind::Specification, "product needs two operands in '" + expression + "'");
    f.lhs = trim(arg.substr(0, comma));
    f.rhs = trim(arg.substr(comma + 1));
  } else {
    if (arg.empty()) throw Error(ErrorKind::Specification, "feature '" + name + "' needs a column");
    f.source = arg;
  }
  return f;
}

std::string to_expression(const Feature& f) {
  switch (f.op) {
    case FeatureOp::Own: return "own(" + f.source + ")";
    case FeatureOp::NbrSum: return "nbr_sum(" + f.source + ")";
    case FeatureOp::NbrMean: return "nbr_mean(" + f.source + ")";
    case FeatureOp::NbrMax: return "nbr_max(" + f.source + ")";
    case FeatureOp::Degree: return "degree()";
    case FeatureOp::Product: return "product(" + f.lhs + ", " + f.rhs + ")";
  }
  return "";
}

std::vector<std::string> feature_names(const std::vector<Feature>& features) {
  std::vector<std::string> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

Index CovariateTable::column(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  return it == names.end() ? -1 : static_cast<Index>(it - names.begin());
}

SummaryProgram::SummaryProgram(const std::vector<Feature>& features,
                               const std::vector<std::string>& covariate_names, bool allow_treatment) {
  for (const auto& f : features) {
    if (std::find(names_.begin(), names_.end(), f.name) != names_.end())
      throw Error(ErrorKind::Specification, "duplicate feature name '" + f.name + "'");
    Op op{f.op, -1, -1, -1};
    if (f.op == FeatureOp::Product) {
      auto find = [&](const std::string& operand) {
        auto it = std::find(names_.begin(), names_.end(), operand);
        if (it == names_.end())
          throw Error(ErrorKind::Specification,
                      "feature '" + f.name + "': operand '" + operand + "' is not an earlier feature");
        return static_cast<Index>(it - names_.begin());
      };
      op.lhs = find(f.lhs);
      op.rhs = find(f.rhs);
    } else if (f.op != FeatureOp::Degree) {
      if (f.source == kTreatmentColumn) {
        if (!allow_treatment)
          throw Error(ErrorKind::Specification,
                      "feature '" + f.name + "': treatment summaries may not use the treatment column");
        uses_treatment_ = true;
      } else {
        auto it = std::find(covariate_names.begin(), covariate_names.end(), f.source);
        if (it == covariate_names.end())
          throw Error(ErrorKind::Specification,
                      "feature '" + f.name + "': unknown column '" + f.source + "'");
        op.column = static_cast<Index>(it - covariate_names.begin());
      }
    }
    ops_.push_back(op);
    names_.push_back(f.name);
  }
}

void SummaryProgram::evaluate(const Network& net, const Matrix& C, const Vector* X, Table& out) const {
  const Index n = net.size();
  if (C.rows() != n) throw Error(ErrorKind::InvalidParameter, "covariate rows do not match network size");
  if (uses_treatment_ && (X == nullptr || X->size() != n))
    throw Error(ErrorKind::InvalidParameter, "treatment vector does not match network size");
  out.resize(n, size());
  for (Index k = 0; k < size(); ++k) {
    const Op& op = ops_[k];
    auto value = [&](Index j) { return op.column < 0 ? (*X)[j] : C(j, op.column); };
    switch (op.op) {
      case FeatureOp::Own:
        for (Index i = 0; i < n; ++i) out(i, k) = value(i);
        break;
      case FeatureOp::NbrSum:
      case FeatureOp::NbrMean:
        for (Index i = 0; i < n; ++i) {
          double s = 0.0;
          for (Node j : net.neighbors(i)) s += value(j);
          const Index d = net.degree(i);
          out(i, k) = (op.op == FeatureOp::NbrMean && d > 0) ? s / static_cast<double>(d) : s;
        }
        break;
      case FeatureOp::NbrMax:
        for (Index i = 0; i < n; ++i) {
          auto nb = net.neighbors(i);
          double m = 0.0;
          if (!nb.empty()) {
            m = value(nb[0]);
            for (Node j : nb) m = std::max(m, value(j));
          }
          out(i, k) = m;
        }
        break;
      case FeatureOp::Degree:
        for (Index i = 0; i < n; ++i) out(i, k) = static_cast<double>(net.degree(i));
        break;
      case FeatureOp::Product:
        for (Index i = 0; i < n; ++i) out(i, k) = out(i, op.lhs) * out(i, op.rhs);
        break;
    }
  }
}

Table SummaryProgram::evaluate(const Network& net, const Matrix& C, const Vector* X) const {
  Table out;
  evaluate(net, C, X, out);
  return out;
}

Summaries apply_summaries(const Network& net, const SummarySpec& spec, const CovariateTable& C,
                          const Vector& X) {
  SummaryProgram w(spec.w, C.names, false);
  SummaryProgram v(spec.v, C.names, true);
  return {w.evaluate(net, C.values, nullptr), v.evaluate(net, C.values, &X)};
}

}  // namespace nettmle
