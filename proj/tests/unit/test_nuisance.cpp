#include <map>

#include "doctest.h"
#include "helpers.hpp"
#include "nettmle/interventions.hpp"
#include "nettmle/nuisance.hpp"

using namespace nettmle;
using namespace testutil;

namespace {

/// Plain Newton iterations for logistic regression, written independently.
Vector newton_logistic(const Matrix& X, const Vector& y) {
  Vector b = Vector::Zero(X.cols());
  for (int it = 0; it < 50; ++it) {
    Vector g = Vector::Zero(X.cols());
    Matrix I = Matrix::Zero(X.cols(), X.cols());
    for (Index i = 0; i < X.rows(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-X.row(i).dot(b)));
      g += (y[i] - p) * X.row(i).transpose();
      I += p * (1 - p) * X.row(i).transpose() * X.row(i);
    }
    b += I.ldlt().solve(g);
  }
  return b;
}

double total_variation(const PooledDensity& a, const PooledDensity& b) {
  double tv = 0.0;
  for (Index k = 0; k < a.size(); ++k) tv += std::abs(a.mass(k) - b(a.value(k)));
  for (Index k = 0; k < b.size(); ++k)
    if (a(b.value(k)) == 0.0) tv += b.mass(k);
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("logistic fit on hand cases") {
  SUBCASE("intercept only, half ones") {
    const Matrix X = Matrix::Ones(10, 1);
    Vector y(10);
    y << 0, 1, 0, 1, 0, 1, 0, 1, 0, 1;
    const auto f = fit_logistic(X, y);
    CHECK(f.coefficients[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.converged);
  }
  SUBCASE("constant outcome is separation") {
    try {
      fit_logistic(Matrix::Ones(5, 1), Vector::Ones(5));
      FAIL("expected separation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Separation);
    }
  }
  SUBCASE("perfectly separated covariate") {
    Matrix X(6, 2);
    X << 1, 0, 1, 1, 1, 2, 1, 3, 1, 4, 1, 5;
    Vector y(6);
    y << 0, 0, 0, 1, 1, 1;
    CHECK_THROWS_AS(fit_logistic(X, y), Error);
  }
  SUBCASE("aliased column is dropped with a warning") {
    Rng rng(3);
    Matrix X(200, 3);
    Vector y(200);
    for (Index i = 0; i < 200; ++i) {
      const double x = rng.normal();
      X.row(i) << 1.0, x, 2.0 * x;
      y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-x))) ? 1.0 : 0.0;
    }
    const auto f = fit_logistic(X, y);
    // Either copy may be dropped; the linear predictor is unique.
    CHECK(f.aliased[1] != f.aliased[2]);
    CHECK(f.coefficients[f.aliased[1] ? 1 : 2] == 0.0);
    CHECK_FALSE(f.warnings.empty());
    const Vector oracle = newton_logistic(X.leftCols(2), y);
    CHECK(((X * f.coefficients) - X.leftCols(2) * oracle).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("logistic fit recovers known coefficients and matches plain Newton") {
  Rng rng(11);
  const Index n = 5000;
  Matrix X(n, 2);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    const double x = rng.normal();
    X.row(i) << 1.0, x;
    y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-(-1.0 + 2.0 * x)))) ? 1.0 : 0.0;
  }
  const auto f = fit_logistic(X, y);
  CHECK(f.converged);
  CHECK(f.gradient_norm < 1e-10);
  CHECK(std::abs(f.coefficients[0] + 1.0) < 0.1);
  CHECK(std::abs(f.coefficients[1] - 2.0) < 0.1);
  const Vector oracle = newton_logistic(X, y);
  CHECK((f.coefficients - oracle).cwiseAbs().maxCoeff() < 1e-8);

  SUBCASE("equal weights leave the root unchanged") {
    const Vector w = Vector::Constant(n, 3.7);
    CHECK((fit_logistic(X, y, &w).coefficients - f.coefficients).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("fractional outcomes") {
    const Vector yf = (y.array() * 0.5 + 0.25).matrix();
    const auto g = fit_logistic(X, yf);
    CHECK(g.converged);
    // Score equation: sum x (y - p) = 0.
    const Vector p = expit_all(X * g.coefficients);
    CHECK((X.transpose() * (yf - p)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("offset shifts the intercept") {
    const Vector o = Vector::Constant(n, 0.5);
    const auto g = fit_logistic(X, y, nullptr, &o);
    CHECK(g.coefficients[0] == doctest::Approx(f.coefficients[0] - 0.5).epsilon(1e-6));
  }
}

TEST_CASE("named logistic models and their serialization") {
  const Preset p = preset_transmission();
  const Dataset d = simulate(share(gen_small_world(2000, 6, 0.1, 1)), p.sem, p.summaries, 5);
  const auto m = fit_logistic_model(d.V, d.v_names(), d.Y);
  CHECK(m.map.labels().front() == "(intercept)");
  CHECK(m.map.width() == 7);
  const auto sub = fit_logistic_model(d.V, d.v_names(), d.Y, std::vector<std::string>{"X", "nX"});
  CHECK(sub.fit.coefficients.size() == 3);
  CHECK_THROWS_AS(fit_logistic_model(d.V, d.v_names(), d.Y, std::vector<std::string>{"Q"}), Error);
  nlohmann::json j = m;
  const LogisticModel back = j.get<LogisticModel>();
  CHECK(back.predict(d.V, d.v_names()) == m.predict(d.V, d.v_names()));
}

TEST_CASE("pooled densities") {
  SUBCASE("a single value") {
    const Table V = Table::Constant(4, 2, 3.0);
    const auto h = estimate_hbar(V);
    CHECK(h.size() == 1);
    CHECK(h.mass(0) == 1.0);
  }
  SUBCASE("two values") {
    const Table V = (Table(4, 1) << 1, 1, 2, 2).finished();
    const auto h = estimate_hbar(V);
    const double a = 1.0, b = 2.0;
    CHECK(h(std::span<const double>(&a, 1)) == 0.5);
    CHECK(h(std::span<const double>(&b, 1)) == 0.5);
    const double c = 3.0;
    CHECK(h(std::span<const double>(&c, 1)) == 0.0);
  }
  SUBCASE("matches a direct count on simulated data") {
    const Preset p = preset_transmission();
    const Dataset d = simulate(share(gen_small_world(10000, 10, 0.1, 1)), p.sem, p.summaries, 7);
    const auto h = estimate_hbar(d.V);
    std::map<std::vector<double>, int> count;
    for (Index i = 0; i < d.size(); ++i) ++count[std::vector<double>(d.V.row(i).begin(), d.V.row(i).end())];
    CHECK(h.size() == static_cast<Index>(count.size()));
    for (const auto& [v, c] : count) CHECK(h(v) == static_cast<double>(c) / 10000.0);
    CHECK(std::abs(h.total() - 1.0) < 1e-12);
  }
  SUBCASE("identical draws give the one-draw density") {
    const Table V = (Table(3, 1) << 1, 2, 2).finished();
    const auto one = estimate_hbar_star({V});
    const auto two = estimate_hbar_star({V, V});
    CHECK(total_variation(one, two) < 1e-15);
    CHECK(std::abs(two.total() - 1.0) < 1e-12);
  }
  SUBCASE("json round trip") {
    const Table V = (Table(3, 2) << 1, 2, 2, 2, 1, 2).finished();
    const auto h = estimate_hbar(V);
    nlohmann::json j = h;
    const PooledDensity back = j.get<PooledDensity>();
    CHECK(total_variation(h, back) == 0.0);
  }
}

TEST_CASE("counterfactual density is stable in the number of draws") {
  const Preset p = preset_transmission();
  const Dataset d = simulate(share(gen_small_world(500, 10, 0.1, 1)), p.sem, p.summaries, 7);
  const auto a = estimate_hbar_star(counterfactual_summaries(d, make_bernoulli(0.35), nullptr, 1000, 1));
  const auto b = estimate_hbar_star(counterfactual_summaries(d, make_bernoulli(0.35), nullptr, 10000, 2));
  CHECK(std::abs(a.total() - 1.0) < 1e-12);
  CHECK(total_variation(a, b) < 0.02);
}

TEST_CASE("pooled-model density covers the treatment space") {
  const Preset p = preset_transmission();
  const Dataset d = simulate(share(gen_small_world(300, 4, 0.1, 1)), p.sem, p.summaries, 7);
  const TreatmentModel g = TreatmentModel::from_law(p.sem.treatment, d.w_names());
  const auto h = estimate_hbar_model(d, g, 200, 3);
  CHECK(std::abs(h.total() - 1.0) < 1e-12);
  CHECK(h.size() >= estimate_hbar(d.V).size());
}

TEST_CASE("clever weights") {
  const Table V = (Table(5, 1) << 1, 2, 2, 3, 3).finished();
  const auto hbar = estimate_hbar(V);
  SUBCASE("equal densities give unit weights") {
    const auto w = clever_weights(hbar, hbar, V);
    CHECK(w.H == Vector::Ones(5));
  }
  SUBCASE("ratio") {
    const auto star = estimate_hbar(Table::Constant(3, 1, 1.0));
    const auto w = clever_weights(hbar, star, V);
    CHECK(w.H[0] == doctest::Approx(5.0));
    CHECK(w.H[1] == 0.0);
    CHECK(w.max == doctest::Approx(5.0));
    CHECK(w.large);  // 5 > sqrt(5)
    const auto capped = clever_weights(hbar, star, V, 2.0);
    CHECK(capped.H[0] == 2.0);
    CHECK(capped.truncated == 1);
  }
  SUBCASE("zero density at an observed value names the node") {
    const auto other = estimate_hbar((Table(2, 1) << 1, 2).finished());
    try {
      clever_weights(other, hbar, V);
      FAIL("expected positivity error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Positivity);
      CHECK(std::string(e.what()).find("node 3") != std::string::npos);
    }
  }
  SUBCASE("weights follow node relabeling") {
    const Table P = (Table(5, 1) << 3, 2, 1, 3, 2).finished();
    const auto star = estimate_hbar((Table(4, 1) << 1, 1, 2, 3).finished());
    const auto a = clever_weights(hbar, star, V).H;
    const auto b = clever_weights(estimate_hbar(P), star, P).H;
    CHECK(b[2] == a[0]);
    CHECK(b[0] == a[3]);
    CHECK(b[1] == a[1]);
  }
}
