#include "nettmle/nuisance.hpp"

#include <algorithm>
#include <cmath>

namespace nettmle {

namespace {

// Weighted Bernoulli log-likelihood in terms of the linear predictor.
double log_likelihood(const Vector& eta, const Vector& y, const Vector& w) {
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    const double log1pexp = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += w[i] * (y[i] * e - log1pexp);
  }
  return ll;
}

}  // namespace

LogisticFit fit_logistic(const Matrix& X, const Vector& y, const Vector* weights, const Vector* offset,
                         const LogisticOptions& options) {
  const Index n = X.rows();
  const Index p = X.cols();
  if (n == 0) throw Error(ErrorKind::EmptyInput, "logistic regression on no rows");
  if (y.size() != n) throw Error(ErrorKind::InvalidParameter, "outcome length does not match design");
  if (!X.allFinite()) throw Error(ErrorKind::InvalidParameter, "design has non-finite entries");
  for (Index i = 0; i < n; ++i)
    if (!(y[i] >= 0.0 && y[i] <= 1.0)) throw Error(ErrorKind::InvalidParameter, "outcome outside [0,1]");
  const Vector w = weights ? *weights : Vector::Ones(n);
  const Vector off = offset ? *offset : Vector::Zero(n);
  if (w.size() != n || off.size() != n) throw Error(ErrorKind::InvalidParameter, "weights/offset length mismatch");
  if ((w.array() < 0.0).any() || !w.allFinite()) throw Error(ErrorKind::InvalidParameter, "negative weight");
  const double wsum = w.sum();
  if (wsum <= 0.0) throw Error(ErrorKind::InvalidParameter, "all weights are zero");

  const double ybar = w.dot(y) / wsum;
  if (ybar <= 0.0 || ybar >= 1.0)
    throw Error(ErrorKind::Separation, "outcome is constant; the likelihood has no finite maximum");

  LogisticFit fit;
  fit.coefficients = Vector::Zero(p);
  fit.aliased.assign(static_cast<std::size_t>(p), false);

  // Drop aliased columns, keeping the pivot order's leading independent set.
  std::vector<Index> keep;
  if (p > 0) {
    const Matrix scaled = w.cwiseSqrt().asDiagonal() * X;
    Eigen::ColPivHouseholderQR<Matrix> qr(scaled);
    qr.setThreshold(1e-10);
    const Index rank = qr.rank();
    for (Index k = 0; k < rank; ++k) keep.push_back(qr.colsPermutation().indices()[k]);
    std::sort(keep.begin(), keep.end());
    if (rank < p) {
      for (Index k = 0; k < p; ++k)
        if (!std::binary_search(keep.begin(), keep.end(), k)) fit.aliased[k] = true;
      fit.warnings.push_back("dropped " + std::to_string(p - rank) + " aliased column(s)");
    }
  }
  const Index r = static_cast<Index>(keep.size());
  Matrix Xk(n, r);
  for (Index k = 0; k < r; ++k) Xk.col(k) = X.col(keep[k]);

  Vector beta = Vector::Zero(r);
  Vector eta = off;
  double ll = log_likelihood(eta, y, w);
  for (fit.iterations = 0;; ++fit.iterations) {
    const Vector mu = expit_all(eta);
    const Vector resid = w.cwiseProduct(y - mu);
    const Vector score = Xk.transpose() * resid;
    fit.gradient_norm = r == 0 ? 0.0 : score.cwiseAbs().maxCoeff() / wsum;
    if (fit.gradient_norm < options.tolerance) {
      fit.converged = true;
      break;
    }
    if (fit.iterations >= options.max_iterations) break;

    const Vector v = w.cwiseProduct(mu.cwiseProduct((1.0 - mu.array()).matrix()));
    Matrix info = Xk.transpose() * v.asDiagonal() * Xk;
    Eigen::LDLT<Matrix> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0) {
      info.diagonal().array() += 1e-8;
      ldlt.compute(info);
    }
    Vector step = ldlt.solve(score);
    if (!step.allFinite()) throw Error(ErrorKind::Numeric, "logistic regression step is not finite");

    // Step halving keeps the likelihood nondecreasing.
    Vector trial_beta = beta + step;
    Vector trial_eta = Xk * trial_beta + off;
    double trial_ll = log_likelihood(trial_eta, y, w);
    for (int h = 0; h < 30 && trial_ll < ll - 1e-12 * std::abs(ll); ++h) {
      step *= 0.5;
      trial_beta = beta + step;
      trial_eta = Xk * trial_beta + off;
      trial_ll = log_likelihood(trial_eta, y, w);
    }
    beta = trial_beta;
    eta = trial_eta;
    ll = trial_ll;
    if (r > 0 && beta.cwiseAbs().maxCoeff() > options.separation_bound)
      throw Error(ErrorKind::Separation, "coefficients diverge (|beta| > " +
                                             std::to_string(options.separation_bound) + "); the classes are separated");
  }
  if (!fit.converged)
    fit.warnings.push_back("no convergence after " + std::to_string(options.max_iterations) + " iterations");
  for (Index k = 0; k < r; ++k) fit.coefficients[keep[k]] = beta[k];
  return fit;
}

std::vector<Index> FeatureMap::bind(const std::vector<std::string>& table_names) const {
  std::vector<Index> cols;
  cols.reserve(features_.size());
  for (const auto& f : features_) {
    auto it = std::find(table_names.begin(), table_names.end(), f);
    if (it == table_names.end()) throw Error(ErrorKind::Specification, "model feature '" + f + "' not in table");
    cols.push_back(static_cast<Index>(it - table_names.begin()));
  }
  return cols;
}

Matrix FeatureMap::design(const Table& t, const std::vector<Index>& columns) const {
  Matrix X(t.rows(), width());
  Index k = 0;
  if (intercept_) X.col(k++).setOnes();
  for (Index c : columns) X.col(k++) = t.col(c);
  return X;
}

std::vector<std::string> FeatureMap::labels() const {
  std::vector<std::string> out;
  if (intercept_) out.emplace_back("(intercept)");
  out.insert(out.end(), features_.begin(), features_.end());
  return out;
}

Vector LogisticModel::linear_predictor(const Table& t, const std::vector<std::string>& table_names) const {
  return fit.linear_predictor(map.design(t, table_names));
}

Vector LogisticModel::predict(const Table& t, const std::vector<std::string>& table_names) const {
  return expit_all(linear_predictor(t, table_names));
}

LogisticModel fit_logistic_model(const Table& t, const std::vector<std::string>& table_names, const Vector& y,
                                 const std::optional<std::vector<std::string>>& features,
                                 const LogisticOptions& options) {
  LogisticModel m;
  m.map = FeatureMap(features ? *features : table_names, true);
  m.fit = fit_logistic(m.map.design(t, table_names), y, nullptr, nullptr, options);
  return m;
}

TreatmentModel treatment_model(const LogisticModel& g_fit, const std::vector<std::string>& w_names) {
  const auto columns = g_fit.map.bind(w_names);
  return TreatmentModel(w_names, [g_fit, columns](const Table& W) {
    return expit_all(g_fit.fit.linear_predictor(g_fit.map.design(W, columns)));
  });
}

double PooledDensity::total() const {
  double s = 0.0;
  for (double m : mass_) s += m;
  return s;
}

void DensityAccumulator::add(std::span<const double> row, double weight) {
  const Index id = index_.insert(row);
  if (id == static_cast<Index>(counts_.size())) counts_.push_back(0.0);
  counts_[id] += weight;
  total_ += weight;
}

void DensityAccumulator::add(const Table& v) {
  if (v.cols() != index_.dims()) throw Error(ErrorKind::InvalidParameter, "summary width mismatch");
  for (Index i = 0; i < v.rows(); ++i) add(row_span(v, i));
}

PooledDensity DensityAccumulator::finish() const {
  if (total_ <= 0.0) throw Error(ErrorKind::EmptyInput, "density of an empty sample");
  std::vector<double> mass(counts_.size());
  for (std::size_t k = 0; k < counts_.size(); ++k) mass[k] = counts_[k] / total_;
  return PooledDensity(index_, std::move(mass));
}

HbarMethod parse_hbar_method(const std::string& text) {
  if (text == "pooled-empirical" || text == "empirical") return HbarMethod::PooledEmpirical;
  if (text == "pooled-model" || text == "model") return HbarMethod::PooledModel;
  throw Error(ErrorKind::Specification, "unknown density method '" + text + "'");
}

std::string to_string(HbarMethod m) {
  return m == HbarMethod::PooledEmpirical ? "pooled-empirical" : "pooled-model";
}

PooledDensity estimate_hbar(const Table& V) {
  if (V.rows() == 0) throw Error(ErrorKind::EmptyInput, "no observed summaries");
  DensityAccumulator acc(V.cols());
  acc.add(V);
  return acc.finish();
}

PooledDensity estimate_hbar_model(const Dataset& data, const TreatmentModel& g_hat, Index draws, std::uint64_t seed) {
  if (data.size() == 0) throw Error(ErrorKind::EmptyInput, "no observed summaries");
  CounterfactualEngine engine(data.network, data.C, data.summaries, make_natural(), &g_hat);
  DensityAccumulator acc(data.V.cols());
  Table v;
  Vector x(data.size());
  if (!engine.random()) {
    engine.draw(seed, 0, v, x);
    acc.add(v);
    return acc.finish();
  }
  // The observed treatment is one draw from the same law given C; pooling
  // it in keeps every observed summary on the support.
  acc.add(data.V);
  for (Index d = 0; d < draws; ++d) {
    engine.draw(seed, d, v, x);
    acc.add(v);
  }
  return acc.finish();
}

PooledDensity estimate_hbar_star(const std::vector<Table>& v_star) {
  if (v_star.empty()) throw Error(ErrorKind::EmptyInput, "no counterfactual draws");
  DensityAccumulator acc(v_star.front().cols());
  for (const auto& t : v_star) acc.add(t);
  return acc.finish();
}

CleverWeights clever_weights(const PooledDensity& hbar, const PooledDensity& hbar_star, const Table& V,
                             std::optional<double> cap) {
  const Index n = V.rows();
  CleverWeights cw;
  cw.cap = cap;
  cw.H.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto v = row_span(V, i);
    const double den = hbar(v);
    if (den <= 0.0)
      throw Error(ErrorKind::Positivity, "estimated density of the observed summary is zero at node " +
                                             std::to_string(i));
    double h = hbar_star(v) / den;
    if (cap && h > *cap) {
      h = *cap;
      ++cw.truncated;
    }
    cw.H[i] = h;
  }
  cw.max = n > 0 ? cw.H.maxCoeff() : 0.0;
  cw.large = cw.max > std::sqrt(static_cast<double>(n));
  return cw;
}

void to_json(nlohmann::json& j, const LogisticModel& m) {
  j = nlohmann::json{{"features", m.map.features()},
                     {"intercept", m.map.intercept()},
                     {"coefficients", std::vector<double>(m.fit.coefficients.data(),
                                                          m.fit.coefficients.data() + m.fit.coefficients.size())},
                     {"aliased", m.fit.aliased},
                     {"iterations", m.fit.iterations},
                     {"gradient_norm", m.fit.gradient_norm},
                     {"converged", m.fit.converged},
                     {"warnings", m.fit.warnings}};
}

void from_json(const nlohmann::json& j, LogisticModel& m) {
  m.map = FeatureMap(j.at("features").get<std::vector<std::string>>(), j.at("intercept").get<bool>());
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  if (static_cast<Index>(coef.size()) != m.map.width())
    throw Error(ErrorKind::Io, "coefficient count does not match features");
  m.fit.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Index>(coef.size()));
  m.fit.aliased = j.at("aliased").get<std::vector<bool>>();
  m.fit.iterations = j.at("iterations").get<int>();
  m.fit.gradient_norm = j.at("gradient_norm").get<double>();
  m.fit.converged = j.at("converged").get<bool>();
  m.fit.warnings = j.value("warnings", std::vector<std::string>{});
}

void to_json(nlohmann::json& j, const PooledDensity& d) {
  nlohmann::json support = nlohmann::json::array();
  std::vector<double> mass;
  for (Index k = 0; k < d.size(); ++k) {
    const auto v = d.value(k);
    support.push_back(std::vector<double>(v.begin(), v.end()));
    mass.push_back(d.mass(k));
  }
  j = nlohmann::json{{"dims", d.dims()}, {"support", support}, {"mass", mass}};
}

void from_json(const nlohmann::json& j, PooledDensity& d) {
  const Index dims = j.at("dims").get<Index>();
  TupleIndex index(dims);
  auto mass = j.at("mass").get<std::vector<double>>();
  const auto& support = j.at("support");
  if (support.size() != mass.size()) throw Error(ErrorKind::Io, "density support and mass differ in length");
  for (const auto& row : support) {
    const auto v = row.get<std::vector<double>>();
    if (static_cast<Index>(v.size()) != dims) throw Error(ErrorKind::Io, "density tuple has the wrong width");
    index.insert(v);
  }
  if (index.size() != static_cast<Index>(mass.size())) throw Error(ErrorKind::Io, "duplicate density tuples");
  d = PooledDensity(std::move(index), std::move(mass));
}

}  // namespace nettmle
