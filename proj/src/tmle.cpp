#include "nettmle/tmle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nettmle {

namespace {

const double kEtaLow = logit(kClipLow);
const double kEtaHigh = logit(kClipHigh);

// Same as clipping the prediction into [kClipLow, kClipHigh] before the logit.
inline double clamp_eta(double eta) { return std::clamp(eta, kEtaLow, kEtaHigh); }

Vector offsets(const Vector& m_hat) {
  return m_hat.unaryExpr([](double p) { return logit(clip_probability(p)); });
}

}  // namespace

EstimandKind parse_estimand(const std::string& text) {
  if (text == "marginal") return EstimandKind::Marginal;
  if (text == "conditional") return EstimandKind::Conditional;
  throw Error(ErrorKind::Specification, "unknown estimand '" + text + "'");
}

std::string to_string(EstimandKind k) { return k == EstimandKind::Marginal ? "marginal" : "conditional"; }

TreatmentModel NuisanceSnapshot::g_model() const {
  if (!g) throw Error(ErrorKind::MissingModel, "no fitted treatment model");
  return treatment_model(*g, w_names);
}

double fluctuation_score(const Vector& y, const Vector& m_hat, const Vector& H, double epsilon) {
  const Vector o = offsets(m_hat);
  double s = 0.0;
  for (Index i = 0; i < y.size(); ++i) s += H[i] * (y[i] - expit(o[i] + epsilon));
  return s;
}

double tmle_fluctuation(const Vector& y, const Vector& m_hat, const Vector& H) {
  const Index n = y.size();
  if (m_hat.size() != n || H.size() != n) throw Error(ErrorKind::InvalidParameter, "fluctuation inputs differ in length");
  if ((H.array() < 0.0).any() || !H.allFinite()) throw Error(ErrorKind::InvalidParameter, "negative clever weight");
  if (H.sum() <= 0.0) throw Error(ErrorKind::DegenerateWeights, "all clever weights are zero");
  if (H.dot(y) <= 0.0 || H.dot((1.0 - y.array()).matrix()) <= 0.0)
    throw Error(ErrorKind::Numeric, "weighted outcomes are all 0 or all 1; the fluctuation has no finite root");

  const Vector o = offsets(m_hat);
  auto eval = [&](double eps, double& slope) {
    double s = 0.0;
    slope = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double p = expit(o[i] + eps);
      s += H[i] * (y[i] - p);
      slope -= H[i] * p * (1.0 - p);
    }
    return s;
  };

  double slope = 0.0;
  double lo = -1.0;
  double hi = 1.0;
  while (eval(lo, slope) < 0.0) {
    lo *= 2.0;
    if (lo < -1e4) throw Error(ErrorKind::Numeric, "fluctuation root below -1e4");
  }
  while (eval(hi, slope) > 0.0) {
    hi *= 2.0;
    if (hi > 1e4) throw Error(ErrorKind::Numeric, "fluctuation root above 1e4");
  }

  // Newton, falling back to bisection whenever a step leaves the bracket.
  double eps = std::clamp(0.0, lo, hi);
  double best = eps;
  double best_abs = INFINITY;
  for (int iter = 0; iter < 500; ++iter) {
    const double s = eval(eps, slope);
    if (std::abs(s) < best_abs) {
      best_abs = std::abs(s);
      best = eps;
    }
    if (s == 0.0 || best_abs < 1e-12) break;
    if (s > 0.0) lo = eps;
    else hi = eps;
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(eps))) break;
    double next = slope < 0.0 ? eps - s / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    eps = next;
  }
  return best;
}

double conditional_estimand(const LogisticModel& m, const std::vector<std::string>& v_names,
                            const std::vector<Table>& v_star) {
  if (v_star.empty()) throw Error(ErrorKind::EmptyInput, "no counterfactual draws");
  const auto cols = m.map.bind(v_names);
  double total = 0.0;
  Index count = 0;
  for (const auto& t : v_star) {
    for (Index i = 0; i < t.rows(); ++i) total += expit(m.linear_predictor(t.row(i).data(), cols));
    count += t.rows();
  }
  return total / static_cast<double>(count);
}

namespace {

// E[Ytilde*_i] over the covariate law, with C rows resampled from the data.
// Node means differ with network position, so centering every node at psi
// leaves sum over dependent pairs of (mu_i - psi)(mu_j - psi) in the variance.
Vector node_means(const Dataset& data, const TmleResult& r, const Intervention& iv, Index resamples,
                  std::uint64_t seed) {
  const InfluenceModel model(data, r, iv);
  const Index n = data.size();
  Vector mu = Vector::Zero(n);
  CovariateTable Cb{data.C.names, Matrix(n, data.C.values.cols())};
  for (Index b = 0; b < resamples; ++b) {
    const std::uint64_t sb = derive_seed(seed, static_cast<std::uint64_t>(b));
    Rng rng(sb);
    for (Index i = 0; i < n; ++i) Cb.values.row(i) = data.C.values.row(rng.index(n));
    mu += model.expected_star(Cb, 1, derive_seed(sb, Stream::Draw, 0));
  }
  return mu / static_cast<double>(resamples);
}

}  // namespace

TmleResult tmle_estimate(const Dataset& data, const Intervention& iv, const EstimatorConfig& config,
                         std::uint64_t seed) {
  const Index n = data.size();
  if (n == 0) throw Error(ErrorKind::EmptyInput, "empty dataset");
  if (config.draws < 1) throw Error(ErrorKind::InvalidParameter, "draws must be >= 1");

  TmleResult r;
  r.intervention = iv.label;
  r.kind = config.estimand;
  auto& nz = r.nuisance;
  nz.v_names = data.v_names();
  nz.w_names = data.w_names();
  nz.method = config.hbar;

  nz.m = fit_logistic_model(data.V, nz.v_names, data.Y, config.m_features, config.logistic);
  for (const auto& w : nz.m.fit.warnings) r.warnings.push_back("outcome model: " + w);
  std::optional<TreatmentModel> g;
  if (needs_treatment_model(iv) || config.hbar == HbarMethod::PooledModel) {
    nz.g = fit_logistic_model(data.W, nz.w_names, data.X, config.g_features, config.logistic);
    for (const auto& w : nz.g->fit.warnings) r.warnings.push_back("treatment model: " + w);
    g = treatment_model(*nz.g, nz.w_names);
  }

  CounterfactualEngine engine(data.network, data.C, data.summaries, iv, g ? &*g : nullptr);
  if (engine.v_names() != nz.v_names)
    throw Error(ErrorKind::Specification, "intervened V summaries must keep the observed feature names");
  r.draw_seed = derive_seed(seed, Stream::Estimate, 0);
  r.draws = engine.random() ? config.draws : 1;

  // One pass over the draws: density of V*, positivity, and m at V*.
  const auto cols = nz.m.map.bind(nz.v_names);
  Matrix L(n, r.draws);
  DensityAccumulator star(data.V.cols());
  PositivityAccumulator positivity(data.V);
  Table v_star;
  Vector x_star(n);
  for (Index d = 0; d < r.draws; ++d) {
    engine.draw(r.draw_seed, d, v_star, x_star);
    star.add(v_star);
    positivity.add(v_star);
    for (Index i = 0; i < n; ++i) L(i, d) = clamp_eta(nz.m.linear_predictor(v_star.row(i).data(), cols));
  }
  r.positivity = positivity.finish();
  if (!r.positivity.pass) {
    std::ostringstream msg;
    msg << r.positivity.unsupported_distinct << " counterfactual summary value(s) never observed"
        << " (first at node " << r.positivity.unsupported.front().node << ", mass "
        << r.positivity.unsupported_mass << ")";
    if (!config.positivity_override) throw Error(ErrorKind::Positivity, msg.str());
    r.warnings.push_back("positivity: " + msg.str());
  }

  nz.hbar = config.hbar == HbarMethod::PooledEmpirical
                ? estimate_hbar(data.V)
                : estimate_hbar_model(data, *g, config.hbar_draws, derive_seed(seed, Stream::Estimate, 1));
  nz.hbar_star = star.finish();
  nz.weights = clever_weights(nz.hbar, nz.hbar_star, data.V, config.weight_cap);
  if (nz.weights.large) {
    std::ostringstream msg;
    msg << "max clever weight " << nz.weights.max << " exceeds sqrt(n)";
    r.warnings.push_back(msg.str());
  }
  const Vector& H = nz.weights.H;

  Vector eta(n);
  for (Index i = 0; i < n; ++i) eta[i] = clamp_eta(nz.m.linear_predictor(data.V.row(i).data(), cols));
  const Vector m_hat = expit_all(eta);
  r.epsilon = tmle_fluctuation(data.Y, m_hat, H);
  r.score = fluctuation_score(data.Y, m_hat, H, r.epsilon);
  if (!(std::abs(r.score) < 1e-8)) {
    std::ostringstream msg;
    msg << "score equation not solved: |sum H (Y - m_eps)| = " << std::abs(r.score);
    throw Error(ErrorKind::Numeric, msg.str());
  }
  const Vector o = offsets(m_hat);
  r.m_eps = (o.array() + r.epsilon).matrix().unaryExpr([](double e) { return expit(e); });

  r.y_tilde_star.resize(n);
  double initial = 0.0;
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index d = 0; d < r.draws; ++d) {
      s += expit(L(i, d) + r.epsilon);
      initial += expit(L(i, d));
    }
    r.y_tilde_star[i] = s / static_cast<double>(r.draws);
  }
  r.psi = r.y_tilde_star.mean();
  r.psi_initial = initial / static_cast<double>(n * r.draws);

  r.ic_conditional = H.cwiseProduct(data.Y - r.m_eps);
  r.ic_full = (r.y_tilde_star.array() - r.psi).matrix() + r.ic_conditional;
  if (config.estimand == EstimandKind::Marginal && config.centering_draws > 0)
    r.ic_centered = r.y_tilde_star - node_means(data, r, iv, config.centering_draws, derive_seed(seed, Stream::Estimate, 2)) +
                    r.ic_conditional;
  return r;
}

InfluenceModel::InfluenceModel(const Dataset& data, const TmleResult& result, const Intervention& iv)
    : network_(data.network),
      summaries_(data.summaries),
      iv_(iv),
      m_(result.nuisance.m),
      hbar_(result.nuisance.hbar),
      hbar_star_(result.nuisance.hbar_star),
      cap_(result.nuisance.weights.cap),
      v_names_(result.nuisance.v_names),
      epsilon_(result.epsilon),
      w_prog_(data.summaries.w, data.C.names, false),
      v_prog_(data.summaries.v, data.C.names, true) {
  if (result.nuisance.g) g_ = result.nuisance.g_model();
}

double InfluenceModel::weight(std::span<const double> v) const {
  const double den = hbar_(v);
  if (den <= 0.0) return 0.0;
  const double h = hbar_star_(v) / den;
  return cap_ ? std::min(h, *cap_) : h;
}

Vector InfluenceModel::weights(const Table& V) const {
  Vector H(V.rows());
  for (Index i = 0; i < V.rows(); ++i) H[i] = weight(row_span(V, i));
  return H;
}

Vector InfluenceModel::m_logit(const Table& V) const {
  const auto cols = m_.map.bind(v_names_);
  Vector eta(V.rows());
  for (Index i = 0; i < V.rows(); ++i) eta[i] = clamp_eta(m_.linear_predictor(V.row(i).data(), cols));
  return eta;
}

Vector InfluenceModel::m_eps(const Table& V) const {
  return (m_logit(V).array() + epsilon_).matrix().unaryExpr([](double e) { return expit(e); });
}

Vector InfluenceModel::treatment_probabilities(const Table& W) const {
  if (!g_) throw Error(ErrorKind::MissingModel, "no fitted treatment model");
  return g_->probabilities(W);
}

Table InfluenceModel::w_summaries(const CovariateTable& C) const {
  return w_prog_.evaluate(*network_, C.values, nullptr);
}

Table InfluenceModel::v_summaries(const CovariateTable& C, const Vector& X) const {
  return v_prog_.evaluate(*network_, C.values, &X);
}

Vector InfluenceModel::expected_star(const CovariateTable& C, Index draws, std::uint64_t seed,
                                     std::optional<double> eps) const {
  const double e = eps.value_or(epsilon_);
  CounterfactualEngine engine(network_, C, summaries_, iv_, g_ ? &*g_ : nullptr);
  const auto cols = m_.map.bind(engine.v_names());
  const Index n = size();
  const Index count = engine.random() ? draws : 1;
  Vector acc = Vector::Zero(n);
  Table v;
  Vector x(n);
  for (Index d = 0; d < count; ++d) {
    engine.draw(seed, d, v, x);
    for (Index i = 0; i < n; ++i) acc[i] += expit(clamp_eta(m_.linear_predictor(v.row(i).data(), cols)) + e);
  }
  return acc / static_cast<double>(count);
}

Vector InfluenceModel::contributions(const CovariateTable& C, const Vector& X, const Vector& Y, const Vector& y_star,
                                     double psi, EstimandKind kind) const {
  const Table V = v_summaries(C, X);
  Vector f = weights(V).cwiseProduct(Y - m_eps(V));
  if (kind == EstimandKind::Marginal) f += (y_star.array() - psi).matrix();
  return f;
}

Vector eif_evaluate(const Dataset& data, const TmleResult& fits, const Intervention& iv, double psi,
                    EstimandKind kind) {
  InfluenceModel model(data, fits, iv);
  const Vector y_star = kind == EstimandKind::Marginal ? model.expected_star(data.C, fits.draws, fits.draw_seed)
                                                       : Vector::Zero(data.size());
  return model.contributions(data.C, data.X, data.Y, y_star, psi, kind);
}

void to_json(nlohmann::json& j, const PositivityReport& r) {
  nlohmann::json listed = nlohmann::json::array();
  for (const auto& u : r.unsupported)
    listed.push_back({{"value", u.value}, {"node", u.node}, {"stratum", u.stratum}, {"count", u.count}});
  j = nlohmann::json{{"pass", r.pass},
                     {"unsupported_distinct", r.unsupported_distinct},
                     {"unsupported_mass", r.unsupported_mass},
                     {"min_frequency", r.min_frequency},
                     {"star_support", r.star_support},
                     {"unsupported", listed}};
}

void to_json(nlohmann::json& j, const TmleResult& r) {
  nlohmann::json nuisance{{"outcome_model", r.nuisance.m},
                          {"density_method", to_string(r.nuisance.method)},
                          {"hbar", r.nuisance.hbar},
                          {"hbar_star", r.nuisance.hbar_star},
                          {"v_names", r.nuisance.v_names},
                          {"w_names", r.nuisance.w_names}};
  if (r.nuisance.g) nuisance["treatment_model"] = *r.nuisance.g;
  const auto& w = r.nuisance.weights;
  j = nlohmann::json{{"intervention", r.intervention},
                     {"estimand", to_string(r.kind)},
                     {"psi", r.psi},
                     {"psi_initial", r.psi_initial},
                     {"epsilon", r.epsilon},
                     {"score", r.score},
                     {"draws", r.draws},
                     {"positivity", r.positivity},
                     {"weights", {{"max", w.max}, {"truncated", w.truncated}, {"above_sqrt_n", w.large}}},
                     {"nuisance", nuisance},
                     {"warnings", r.warnings}};
  if (w.cap) j["weights"]["cap"] = *w.cap;
}

}  // namespace nettmle
