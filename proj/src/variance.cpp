#include "nettmle/variance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

#include "nettmle/stats.hpp"

namespace nettmle {

std::string to_string(VarianceMethod m) {
  switch (m) {
    case VarianceMethod::Iid: return "iid";
    case VarianceMethod::Dependent: return "dependent";
    case VarianceMethod::Bootstrap: return "bootstrap";
  }
  return "";
}

VarianceMethod parse_variance_method(const std::string& text) {
  if (text == "iid") return VarianceMethod::Iid;
  if (text == "dependent" || text == "dependent-ic") return VarianceMethod::Dependent;
  if (text == "bootstrap") return VarianceMethod::Bootstrap;
  throw Error(ErrorKind::Specification, "unknown variance method '" + text + "'");
}

std::vector<VarianceMethod> parse_variance_methods(const std::string& text) {
  if (text == "all") return {VarianceMethod::Iid, VarianceMethod::Dependent, VarianceMethod::Bootstrap};
  std::vector<VarianceMethod> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto m = parse_variance_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw Error(ErrorKind::Specification, "no variance method given");
  return out;
}

Interval confidence_interval(double psi, double variance, double level, bool bounded) {
  if (!(variance >= 0.0)) throw Error(ErrorKind::InvalidParameter, "negative variance");
  const double z = normal_quantile(0.5 + 0.5 * level);
  const double half = z * std::sqrt(variance);
  Interval ci{psi - half, psi + half, false};
  if (bounded) {
    if (ci.lower < 0.0) {
      ci.lower = 0.0;
      ci.clipped = true;
    }
    if (ci.upper > 1.0) {
      ci.upper = 1.0;
      ci.clipped = true;
    }
  }
  return ci;
}

VarianceReport var_iid(const Vector& ic, double psi, double level) {
  const double n = static_cast<double>(ic.size());
  VarianceReport r;
  r.method = VarianceMethod::Iid;
  r.variance = ic.size() == 0 ? 0.0 : ic.squaredNorm() / (n * n);
  r.pairs = ic.size();
  r.ci = confidence_interval(psi, r.variance, level);
  return r;
}

namespace {

double dependent_sum(const Vector& f, const DependencyStructure& dep) {
  double total = 0.0;
  for (Index i = 0; i < f.size(); ++i) {
    double s = 0.0;
    for (Node j : dep.neighborhood(i)) s += f[j];
    total += f[i] * s;
  }
  return total;
}

}  // namespace

VarianceReport var_dependent(const Vector& ic, const DependencyStructure& dep, double psi, double level) {
  if (dep.size() != ic.size()) throw Error(ErrorKind::InvalidParameter, "dependency structure does not match");
  const double n = static_cast<double>(ic.size());
  VarianceReport r;
  r.method = VarianceMethod::Dependent;
  r.pairs = dep.pair_count();
  const double total = ic.size() == 0 ? 0.0 : dependent_sum(ic, dep) / (n * n);
  r.variance = total;
  if (total < 0.0) {
    std::ostringstream msg;
    msg << "dependent variance sum was negative (" << total << "); floored at 0";
    r.warnings.push_back(msg.str());
    r.variance = 0.0;
  }
  r.ci = confidence_interval(psi, r.variance, level);
  return r;
}

TmleResult with_treatment_model(const Dataset& data, const TmleResult& fit) {
  TmleResult out = fit;
  if (!out.nuisance.g) out.nuisance.g = fit_logistic_model(data.W, data.w_names(), data.X);
  return out;
}

VarianceReport var_bootstrap(const Dataset& data, const TmleResult& fit, const Intervention& iv,
                             const BootstrapConfig& config, std::uint64_t seed, double level) {
  if (config.replicates < 2) throw Error(ErrorKind::InvalidParameter, "bootstrap needs at least 2 replicates");
  const TmleResult full = with_treatment_model(data, fit);
  const InfluenceModel model(data, full, iv);
  const Index n = data.size();
  const Index M = config.replicates;

  std::vector<double> psi_b(static_cast<std::size_t>(M), 0.0);
  std::vector<char> ok(static_cast<std::size_t>(M), 0);

  auto run = [&](Index b) {
    const std::uint64_t seed_b = derive_seed(seed, Stream::Bootstrap, static_cast<std::uint64_t>(b));
    Rng rng(seed_b);
    CovariateTable C;
    C.names = data.C.names;
    C.values.resize(n, data.C.values.cols());
    for (Index i = 0; i < n; ++i) C.values.row(i) = data.C.values.row(rng.index(n));
    const Vector p = model.treatment_probabilities(model.w_summaries(C));
    Vector X(n);
    for (Index i = 0; i < n; ++i) X[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
    const Table V = model.v_summaries(C, X);
    const Vector m = expit_all(model.m_logit(V));
    Vector Y(n);
    for (Index i = 0; i < n; ++i) Y[i] = rng.bernoulli(m[i]) ? 1.0 : 0.0;
    const Vector H = model.weights(V);
    try {
      const double eps = tmle_fluctuation(Y, m, H);
      psi_b[b] = model.expected_star(C, config.draws, derive_seed(seed_b, Stream::Draw, 0), eps).mean();
      ok[b] = 1;
    } catch (const Error&) {
      ok[b] = 0;
    }
  };

  const int workers = std::max(1, std::min<int>(config.workers, static_cast<int>(M)));
  if (workers == 1) {
    for (Index b = 0; b < M; ++b) run(b);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (Index b = t; b < M; b += workers) run(b);
      });
    for (auto& th : pool) th.join();
  }

  // Reduction in replicate order.
  std::vector<double> good;
  for (Index b = 0; b < M; ++b)
    if (ok[b]) good.push_back(psi_b[b]);
  VarianceReport r;
  r.method = VarianceMethod::Bootstrap;
  r.replicates = M;
  r.failures = M - static_cast<Index>(good.size());
  if (static_cast<double>(r.failures) > config.max_failure_rate * static_cast<double>(M))
    throw Error(ErrorKind::Bootstrap, std::to_string(r.failures) + " of " + std::to_string(M) +
                                          " bootstrap replicates failed");
  if (r.failures > 0) r.warnings.push_back(std::to_string(r.failures) + " bootstrap replicates failed");
  const double sd = sample_sd(good);
  r.variance = sd * sd;
  r.ci = confidence_interval(fit.psi, r.variance, level);
  return r;
}

OrthogonalDecomposition orthogonal_decomposition(const Dataset& data, const TmleResult& fit, const Intervention& iv,
                                                 const DependencyStructure& dep, Index draws, Index inner_draws,
                                                 std::uint64_t seed) {
  if (draws < 2) throw Error(ErrorKind::InvalidParameter, "decomposition needs at least 2 draws");
  const TmleResult full = with_treatment_model(data, fit);
  const InfluenceModel model(data, full, iv);
  const Index n = data.size();
  const double psi = fit.psi;
  const EstimandKind kind = fit.kind;

  // E[f | X, C]: the residual term has conditional mean zero under m_eps.
  auto conditional_on_xc = [&](const CovariateTable& C, const Vector& X, const Vector& y_star) {
    const Vector y_fit = model.m_eps(model.v_summaries(C, X));
    return model.contributions(C, X, y_fit, y_star, psi, kind);
  };

  const Vector y_star = fit.y_tilde_star;
  const Vector f = model.contributions(data.C, data.X, data.Y, y_star, psi, kind);
  const Vector e_xc = conditional_on_xc(data.C, data.X, y_star);

  Vector e_c = Vector::Zero(n);
  Vector e_c_sq = Vector::Zero(n);
  Vector e_all = Vector::Zero(n);
  Vector e_all_sq = Vector::Zero(n);
  const Vector p_obs = model.treatment_probabilities(model.w_summaries(data.C));
  for (Index d = 0; d < draws; ++d) {
    Rng rng(derive_seed(seed, Stream::Decomposition, static_cast<std::uint64_t>(d)));
    Vector X(n);
    for (Index i = 0; i < n; ++i) X[i] = rng.bernoulli(p_obs[i]) ? 1.0 : 0.0;
    const Vector a = conditional_on_xc(data.C, X, y_star);
    e_c += a;
    e_c_sq += a.cwiseAbs2();

    CovariateTable C;
    C.names = data.C.names;
    C.values.resize(n, data.C.values.cols());
    for (Index i = 0; i < n; ++i) C.values.row(i) = data.C.values.row(rng.index(n));
    const Vector p = model.treatment_probabilities(model.w_summaries(C));
    Vector Xc(n);
    for (Index i = 0; i < n; ++i) Xc[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
    const Vector ys = kind == EstimandKind::Marginal
                          ? model.expected_star(C, inner_draws, derive_seed(seed, Stream::Draw, d))
                          : Vector::Zero(n);
    const Vector b = conditional_on_xc(C, Xc, ys);
    e_all += b;
    e_all_sq += b.cwiseAbs2();
  }
  const double D = static_cast<double>(draws);
  e_c /= D;
  e_all /= D;
  auto max_se = [&](const Vector& m, const Vector& sq) {
    const Vector var = ((sq / D - m.cwiseAbs2()) * (D / (D - 1.0))).cwiseMax(0.0);
    return std::sqrt(var.maxCoeff() / D);
  };

  OrthogonalDecomposition out;
  out.draws = draws;
  out.f_Y = f - e_xc;
  out.f_X = e_xc - e_c;
  out.f_C = e_c - e_all;
  out.centered = f - e_all;
  out.mc_se_X = max_se(e_c, e_c_sq);
  out.mc_se_C = max_se(e_all, e_all_sq);
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  out.sigma2_Y = dependent_sum(out.f_Y, dep) / nn;
  out.sigma2_X = dependent_sum(out.f_X, dep) / nn;
  out.sigma2_C = dependent_sum(out.f_C, dep) / nn;
  return out;
}

void to_json(nlohmann::json& j, const VarianceReport& r) {
  j = nlohmann::json{{"method", to_string(r.method)},
                     {"variance", r.variance},
                     {"ci", {r.ci.lower, r.ci.upper}},
                     {"ci_clipped", r.ci.clipped},
                     {"warnings", r.warnings}};
  if (r.method == VarianceMethod::Dependent) j["pairs"] = r.pairs;
  if (r.method == VarianceMethod::Bootstrap) {
    j["replicates"] = r.replicates;
    j["failures"] = r.failures;
  }
}

}  // namespace nettmle
