// End-to-end checks of the estimator against oracle truths. Prints one
// PASS/FAIL line per check and exits nonzero if any fails. Pass check
// numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "../unit/helpers.hpp"
#include "nettmle/harness.hpp"
#include "nettmle/stats.hpp"

using namespace nettmle;
using namespace testutil;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Largest |score| over every estimate made by the other checks.
double g_max_score = 0.0;
Index g_estimates = 0;

ExperimentResult run(const std::string& text) {
  ExperimentConfig c = parse_experiment(ConfigDocument::parse_string(text));
  c.workers = default_workers();
  ExperimentResult r = run_experiment(c);
  for (const auto& rec : r.records) {
    if (!rec.ok) continue;
    g_max_score = std::max(g_max_score, std::abs(rec.score));
    ++g_estimates;
  }
  return r;
}

std::string transmission(const std::string& family, const std::string& sizes, Index reps, const std::string& variance,
                         std::uint64_t seed, const std::string& extra = "") {
  return fmt(R"([experiment]
preset = transmission
sizes = %s
replicates = %lld
interventions = g1
variance = %s
seed = %llu
truth_replicates = 5000
bootstrap_max_n = 500
[network]
family = %s
[estimator]
positivity_override = true
)",
             sizes.c_str(), static_cast<long long>(reps), variance.c_str(), static_cast<unsigned long long>(seed),
             family.c_str()) +
         extra;
}

/// Coverage of method k over records of size n with replicate < limit.
double coverage(const ExperimentResult& r, Index n, std::size_t k, Index limit) {
  Index hit = 0, total = 0;
  for (const auto& rec : r.records) {
    if (rec.n != n || rec.replicate >= limit || !rec.ok || !rec.methods[k]) continue;
    ++total;
    hit += rec.methods[k]->covered ? 1 : 0;
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

Index failures(const ExperimentResult& r) {
  return static_cast<Index>(std::count_if(r.records.begin(), r.records.end(), [](const auto& x) { return !x.ok; }));
}

struct Bias {
  double bias, se;
  Index ok;
};

Bias bias_of(const ExperimentResult& r) {
  std::vector<double> psi;
  double truth = 0.0;
  for (const auto& rec : r.records)
    if (rec.ok) {
      psi.push_back(rec.psi_hat);
      truth = rec.truth;
    }
  return {mean(psi) - truth, sample_sd(psi) / std::sqrt(static_cast<double>(psi.size())),
          static_cast<Index>(psi.size())};
}

// 1. Enumeration and Monte Carlo truths agree on small random systems.
Outcome oracle_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240601);
  double worst = 0.0;
  int bad = 0;
  for (int k = 0; k < 20; ++k) {
    const Preset m = random_binary_model(rng);
    const Index n = 3 + rng.index(4);
    const Network net = random_graph(n, 0.5, 100 + static_cast<std::uint64_t>(k));
    const Intervention iv = k % 2 ? make_natural() : make_bernoulli(0.1 + 0.8 * rng.uniform());
    const double exact = psi_exact_enumeration(net, m.sem, m.summaries, iv);
    const auto mc = psi_monte_carlo_truth(net, m.sem, m.summaries, iv, 100000, 7000 + static_cast<std::uint64_t>(k));
    const double z = std::abs(mc.psi - exact) / mc.mc_se;
    worst = std::max(worst, z);
    bad += z > 3.0;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 60.0, fmt("20 instances, max |z| = %.2f, %.1f s", worst, secs)};
}

// 2. Correctly specified estimate is centered on the truth.
Outcome consistency() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run(transmission("preferential_attachment", "1000", 200, "iid", 41));
  const Bias b = bias_of(r);
  const double secs = seconds_since(t0);
  return {failures(r) == 0 && std::abs(b.bias) < 3.0 * b.se && secs < 300.0,
          fmt("bias %.5f, 3 SE %.5f, %lld ok, %.0f s", b.bias, 3.0 * b.se, static_cast<long long>(b.ok), secs)};
}

// 3. Unbiased when either nuisance model is right, biased when both are wrong.
Outcome double_robustness() {
  const std::string base = "hbar = pooled-model\ncentering_draws = 0\n";
  const std::string m_wrong = "m_features = PA,nPA\n";  // drops every treatment term
  const std::string g_wrong = "g_features = nPA\n";     // drops the own covariate
  auto one = [&](const std::string& extra) {
    const auto r = run(transmission("preferential_attachment", "1000", 500, "iid", 43, base + extra));
    return std::pair{bias_of(r), failures(r)};
  };
  const auto [g_bad, f1] = one(g_wrong);
  const auto [m_bad, f2] = one(m_wrong);
  const auto [both, f3] = one(m_wrong + g_wrong);
  const double z1 = g_bad.bias / g_bad.se, z2 = m_bad.bias / m_bad.se, z3 = both.bias / both.se;
  return {f1 + f2 + f3 == 0 && std::abs(z1) < 3.0 && std::abs(z2) < 3.0 && std::abs(z3) > 5.0,
          fmt("bias/SE: g wrong %.2f, m wrong %.2f, both wrong %.2f", z1, z2, z3)};
}

// 5 and 6 share the small-world run at n = 10000.
struct CoverageRuns {
  ExperimentResult sw_large, sw_small, pa;
  double seconds = 0.0;
};

CoverageRuns& coverage_runs() {
  static CoverageRuns runs = [] {
    const auto t0 = std::chrono::steady_clock::now();
    CoverageRuns c;
    c.sw_large = run(transmission("small_world", "10000", 500, "iid,dependent", 51));
    c.sw_small = run(transmission("small_world", "500", 200, "iid,dependent,bootstrap", 51));
    c.pa = run(transmission("preferential_attachment", "500,10000", 200, "iid,dependent,bootstrap", 53));
    c.seconds = seconds_since(t0);
    return c;
  }();
  return runs;
}

// 5. Dependent intervals are near nominal, iid ones are not, and the
// bootstrap covers at least as often at the small size.
Outcome coverage_ordering() {
  const auto& c = coverage_runs();
  // Method indices follow the variance lists above: 0 iid, 1 dependent, 2 bootstrap.
  const double sw_iid = coverage(c.sw_large, 10000, 0, 200), sw_dep = coverage(c.sw_large, 10000, 1, 200);
  const double pa_iid = coverage(c.pa, 10000, 0, 200), pa_dep = coverage(c.pa, 10000, 1, 200);
  const double sw_dep_small = coverage(c.sw_small, 500, 1, 200), sw_boot = coverage(c.sw_small, 500, 2, 200);
  const double pa_dep_small = coverage(c.pa, 500, 1, 200), pa_boot = coverage(c.pa, 500, 2, 200);
  auto near = [](double v) { return v >= 0.92 && v <= 0.97; };
  const bool ok = failures(c.sw_large) + failures(c.sw_small) + failures(c.pa) == 0 && near(sw_dep) && near(pa_dep) &&
                  sw_iid < 0.90 && pa_iid < 0.90 && sw_boot >= sw_dep_small && pa_boot >= pa_dep_small &&
                  c.seconds < 3600.0;
  return {ok, fmt("n=10000 dependent/iid: SW %.3f/%.3f, PA %.3f/%.3f; n=500 bootstrap/dependent: SW %.3f/%.3f, "
                  "PA %.3f/%.3f; %.0f s",
                  sw_dep, sw_iid, pa_dep, pa_iid, sw_boot, sw_dep_small, pa_boot, pa_dep_small, c.seconds)};
}

// 6. Rescaled estimates look standard normal.
Outcome normality() {
  const auto& r = coverage_runs().sw_large;
  std::vector<double> psi, truth;
  for (const auto& rec : r.records)
    if (rec.ok) {
      psi.push_back(rec.psi_hat);
      truth.push_back(rec.truth);
    }
  const double sd = sample_sd(psi);
  std::vector<double> z(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) z[k] = (psi[k] - truth[k]) / sd;
  const auto ks = ks_test_normal(z);
  return {psi.size() == 500 && ks.p_value > 0.01,
          fmt("%zu replicates, D = %.4f, p = %.3f", psi.size(), ks.statistic, ks.p_value)};
}

// 7. Under latent dependence the dependent variance covers at least as often.
Outcome latent_setting() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run(R"([experiment]
preset = latent
sizes = 10000
replicates = 200
interventions = g1
variance = iid,dependent
estimand = conditional
seed = 71
conditional_truth_replicates = 200
[network]
family = small_world
[estimator]
positivity_override = true
)");
  const double iid = coverage(r, 10000, 0, 200), dep = coverage(r, 10000, 1, 200);
  return {failures(r) == 0 && dep >= iid,
          fmt("dependent %.3f, iid %.3f, %.0f s", dep, iid, seconds_since(t0))};
}

// 4. Every estimate above solved its score equation.
Outcome score_equation() {
  return {g_estimates > 0 && g_max_score < 1e-8,
          fmt("%lld estimates, max |score| = %.2e", static_cast<long long>(g_estimates), g_max_score)};
}

// 8. Structural properties on randomized instances.
Outcome invariants() {
  Rng rng(808);
  int broken = 0;
  std::vector<std::string> what;
  auto fail = [&](const std::string& s) {
    ++broken;
    if (std::find(what.begin(), what.end(), s) == what.end()) what.push_back(s);
  };
  EstimatorConfig est;
  est.positivity_override = true;
  est.draws = 20;
  est.centering_draws = 5;
  for (std::uint64_t s = 0; s < 25; ++s) {
    const Index n = 100 + rng.index(200);
    const Network net = random_graph(n, 3.0 / static_cast<double>(n), 900 + s);
    // Dependency neighborhoods: symmetric, contain i, and equal distance <= 2.
    const auto dep = dependency_neighborhoods(net);
    const auto a = adjacency_matrix(net);
    for (Index i = 0; i < n; ++i) {
      const auto Di = dep.neighborhood(i);
      std::set<Index> want{i};
      for (Index j = 0; j < n; ++j) {
        if (!a[i][j]) continue;
        want.insert(j);
        for (Index k = 0; k < n; ++k)
          if (a[j][k]) want.insert(k);
      }
      if (std::set<Index>(Di.begin(), Di.end()) != want) fail("neighborhoods");
      for (Node j : Di) {
        const auto Dj = dep.neighborhood(j);
        if (std::find(Dj.begin(), Dj.end(), static_cast<Node>(i)) == Dj.end()) fail("symmetry");
      }
    }
    // Edgeless graphs: dependent and iid variances coincide.
    Vector f(n);
    for (Index i = 0; i < n; ++i) f[i] = rng.normal();
    if (std::abs(var_dependent(f, dependency_neighborhoods(Network(n)), 0.5).variance - var_iid(f, 0.5).variance) >
        1e-15)
      fail("edgeless variance");

    const Preset m = random_binary_model(rng);
    const Dataset d = simulate(share(net), m.sem, m.summaries, 950 + s);
    const auto r = tmle_estimate(d, make_bernoulli(0.35), est, s);
    if (r.psi < 0.0 || r.psi > 1.0) fail("substitution bound");
    if (std::abs(r.score) > 1e-8) fail("score");
    if (tmle_estimate(d, make_bernoulli(0.35), est, s).psi != r.psi) fail("seed determinism");
    if (std::abs(tmle_estimate(d, make_observed(d.X), est, s).psi - d.Y.mean()) > 1e-8) fail("identity");

    // Relabeling nodes relabels the contributions and leaves psi alone.
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    CovariateTable C{d.C.names, Matrix(n, d.C.values.cols())};
    Vector X(n), Y(n);
    for (Index i = 0; i < n; ++i) {
      C.values.row(perm[i]) = d.C.values.row(i);
      X[perm[i]] = d.X[i];
      Y[perm[i]] = d.Y[i];
    }
    const Dataset p = make_dataset(share(relabel(net, perm)), C, X, Y, d.summaries);
    const Intervention dyn = parse_intervention("dynamic_own:PA:1");
    const auto ra = tmle_estimate(d, dyn, est, 1), rb = tmle_estimate(p, dyn, est, 1);
    if (std::abs(ra.psi - rb.psi) > 1e-9) fail("permutation");
    for (Index i = 0; i < n; ++i)
      if (std::abs(ra.ic_conditional[i] - rb.ic_conditional[perm[i]]) > 1e-9) fail("permutation");
  }
  std::string detail = "25 instances";
  for (const auto& w : what) detail += ", broken: " + w;
  return {broken == 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"oracle equivalence", oracle_equivalence}, {"consistency", consistency},
      {"double robustness", double_robustness},   {"score equation", score_equation},
      {"coverage ordering", coverage_ordering},   {"normality", normality},
      {"latent setting", latent_setting},         {"structural invariants", invariants}};
  std::set<int> only;
  for (int k = 1; k < argc; ++k) only.insert(std::atoi(argv[k]));
  // The score check summarizes the others, so it runs last.
  std::vector<int> order{1, 2, 3, 5, 6, 7, 8, 4};
  std::vector<std::string> lines(checks.size());
  int failed = 0;
  for (int id : order) {
    if (!only.empty() && !only.count(id)) continue;
    const auto& [name, fn] = checks[static_cast<std::size_t>(id - 1)];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    lines[static_cast<std::size_t>(id - 1)] =
        fmt("%s criterion %d (%s): %s", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fprintf(stderr, "%s\n", lines[static_cast<std::size_t>(id - 1)].c_str());
  }
  for (const auto& l : lines)
    if (!l.empty()) std::printf("%s\n", l.c_str());
  return failed ? 1 : 0;
}
