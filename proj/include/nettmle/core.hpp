#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace nettmle {

using Index = Eigen::Index;
using Node = std::int32_t;

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// Row-major so that a node's summary tuple is contiguous.
using Table = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorKind {
  InvalidParameter,
  Specification,
  Io,
  EmptyInput,
  EmptySubnetwork,
  MissingModel,
  NotIdentified,
  Separation,
  Positivity,
  DegenerateWeights,
  TooLarge,
  Bootstrap,
  Numeric,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParameter: return "invalid parameter";
    case ErrorKind::Specification: return "specification error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::EmptyInput: return "empty input";
    case ErrorKind::EmptySubnetwork: return "empty subnetwork";
    case ErrorKind::MissingModel: return "missing model";
    case ErrorKind::NotIdentified: return "not identified";
    case ErrorKind::Separation: return "separation";
    case ErrorKind::Positivity: return "positivity violation";
    case ErrorKind::DegenerateWeights: return "degenerate weights";
    case ErrorKind::TooLarge: return "too large";
    case ErrorKind::Bootstrap: return "bootstrap failure";
    case ErrorKind::Numeric: return "numeric failure";
  }
  return "error";
}

template <typename Scalar>
Scalar expit(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar logit(Scalar p) {
  return std::log(p / (Scalar(1) - p));
}

/// Predictions are clipped into [kClipLow, kClipHigh] before taking logits.
inline constexpr double kClipLow = 1e-6;
inline constexpr double kClipHigh = 1.0 - 1e-6;

template <typename Scalar>
Scalar clip_probability(Scalar p) {
  return std::min(std::max(p, Scalar(kClipLow)), Scalar(kClipHigh));
}

template <typename Derived>
Vector expit_all(const Eigen::MatrixBase<Derived>& eta) {
  return eta.unaryExpr([](double x) { return expit(x); });
}

}  // namespace nettmle
