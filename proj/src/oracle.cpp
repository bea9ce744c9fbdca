#include "nettmle/oracle.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <thread>
#include <vector>

namespace nettmle {

namespace {

std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > (std::uint64_t{1} << 62) / a) return std::uint64_t{1} << 62;
  return a * b;
}

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  std::uint64_t r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) r = saturating_mul(r, n - k + i) / i;
  return r;
}

// Calls fn(x, probability) for every treatment vector in the plan's support.
template <typename Fn>
void for_each_treatment(const TreatmentPlan& plan, Index n, Fn&& fn) {
  Vector x(n);
  switch (plan.kind) {
    case TreatmentPlan::Kind::Fixed:
      fn(plan.value, 1.0);
      return;
    case TreatmentPlan::Kind::Independent:
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double p = 1.0;
        for (Index i = 0; i < n; ++i) {
          const bool on = (mask >> i) & 1U;
          x[i] = on ? 1.0 : 0.0;
          p *= on ? plan.value[i] : 1.0 - plan.value[i];
        }
        if (p > 0.0) fn(x, p);
      }
      return;
    case TreatmentPlan::Kind::FixedFraction: {
      const double p = 1.0 / static_cast<double>(binomial(static_cast<std::uint64_t>(n),
                                                          static_cast<std::uint64_t>(plan.treated)));
      for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        if (static_cast<Index>(__builtin_popcountll(mask)) != plan.treated) continue;
        for (Index i = 0; i < n; ++i) x[i] = ((mask >> i) & 1U) ? 1.0 : 0.0;
        fn(x, p);
      }
      return;
    }
  }
}

}  // namespace

std::uint64_t enumeration_size(const Network& net, const SemSpec& spec, const Intervention& iv) {
  const Index n = net.size();
  std::uint64_t c = 1;
  for (Index i = 0; i < n; ++i)
    for (const auto& col : spec.covariates) c = saturating_mul(c, col.values.size());

  // The kind of treatment randomness does not depend on the covariate values.
  CovariateTable C;
  C.names = spec.covariate_names();
  C.values.resize(n, static_cast<Index>(spec.covariates.size()));
  for (Index k = 0; k < C.values.cols(); ++k) C.values.col(k).setConstant(spec.covariates[k].values.front());
  SummarySpec summaries;
  for (const auto& name : C.names) summaries.w.push_back(parse_feature(name, "own(" + name + ")"));
  summaries.v = summaries.w;
  const TreatmentModel g = TreatmentModel::from_law(TreatmentLaw{spec.treatment.kind, {}, spec.treatment.fraction},
                                                    feature_names(summaries.w));
  CounterfactualEngine engine(std::make_shared<const Network>(net), C, summaries, iv, &g);
  if (engine.random_network())
    throw Error(ErrorKind::Specification, "enumeration does not cover random network families");
  const auto plan = engine.resolve(0, 0).second;
  switch (plan.kind) {
    case TreatmentPlan::Kind::Fixed: return c;
    case TreatmentPlan::Kind::Independent:
      return n >= 62 ? std::uint64_t{1} << 62 : saturating_mul(c, std::uint64_t{1} << n);
    case TreatmentPlan::Kind::FixedFraction:
      return saturating_mul(c, binomial(static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(plan.treated)));
  }
  return c;
}

double psi_exact_enumeration(const Network& net, const SemSpec& spec, const SummarySpec& summaries,
                             const Intervention& iv) {
  if (spec.latent) throw Error(ErrorKind::Specification, "enumeration does not cover latent-variable models");
  validate(spec, summaries);
  const std::uint64_t size = enumeration_size(net, spec, iv);
  if (size > kEnumerationCap)
    throw Error(ErrorKind::TooLarge, std::to_string(size) + " configurations exceed the enumeration cap");

  const Index n = net.size();
  const Index p = static_cast<Index>(spec.covariates.size());
  const auto base = std::make_shared<const Network>(net);
  const auto w_names = feature_names(summaries.w);
  const TreatmentModel g = TreatmentModel::from_law(spec.treatment, w_names);

  CovariateTable C;
  C.names = spec.covariate_names();
  C.values.resize(n, p);
  std::vector<std::size_t> digit(static_cast<std::size_t>(n * p), 0);
  double psi = 0.0;
  Table v;
  while (true) {
    double pc = 1.0;
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < p; ++k) {
        const auto& col = spec.covariates[k];
        const std::size_t dgt = digit[i * p + k];
        C.values(i, k) = col.values[dgt];
        pc *= col.probs[dgt];
      }
    if (pc > 0.0) {
      CounterfactualEngine engine(base, C, summaries, iv, &g);
      auto [effective, plan] = engine.resolve(0, 0);
      double inner = 0.0;
      for_each_treatment(plan, n, [&](const Vector& x, double px) {
        engine.summarize(*effective, x, v);
        inner += px * outcome_probabilities(spec, v, engine.v_names(), *effective, nullptr).mean();
      });
      psi += pc * inner;
    }
    std::size_t pos = 0;
    for (; pos < digit.size(); ++pos) {
      const auto& col = spec.covariates[pos % static_cast<std::size_t>(p)];
      if (++digit[pos] < col.values.size()) break;
      digit[pos] = 0;
    }
    if (pos == digit.size()) break;
  }
  return psi;
}

TruthEstimate psi_monte_carlo_truth(const Network& net, const SemSpec& spec, const SummarySpec& summaries,
                                    const Intervention& iv, Index R, std::uint64_t seed, int workers) {
  if (R < 1) throw Error(ErrorKind::InvalidParameter, "truth needs at least one replicate");
  validate(spec, summaries);
  const auto base = std::make_shared<const Network>(net);
  const auto w_names = feature_names(summaries.w);
  const TreatmentModel g = TreatmentModel::from_law(spec.treatment, w_names);
  const Index n = net.size();
  std::vector<double> ybar(static_cast<std::size_t>(R));

  auto run = [&](Index r) {
    const std::uint64_t seed_r = derive_seed(seed, Stream::Truth, static_cast<std::uint64_t>(r));
    Rng rng(seed_r);
    Vector u;
    const Vector* latent = nullptr;
    if (spec.latent) {
      u = draw_latent(n, rng);
      latent = &u;
    }
    const CovariateTable C = draw_covariates(spec, net, rng, latent);
    CounterfactualEngine engine(base, C, summaries, iv, &g);
    auto [effective, plan] = engine.resolve(seed_r, 0);
    Vector x(n);
    sample_treatment(plan, rng, x);
    Table v;
    engine.summarize(*effective, x, v);
    // Latent traits act through the observed ties.
    ybar[r] = outcome_probabilities(spec, v, engine.v_names(), net, latent).mean();
  };

  workers = std::max(1, std::min<int>(workers, static_cast<int>(R)));
  if (workers == 1) {
    for (Index r = 0; r < R; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&, t] {
        for (Index r = t; r < R; r += workers) run(r);
      });
    for (auto& th : pool) th.join();
  }

  double s = 0.0;
  for (double y : ybar) s += y;
  const double m = s / static_cast<double>(R);
  double ss = 0.0;
  for (double y : ybar) ss += (y - m) * (y - m);
  TruthEstimate t;
  t.psi = m;
  t.replicates = R;
  t.mc_se = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
  return t;
}

TruthEstimate psi_conditional_truth(const NetworkPtr& net, const SemSpec& spec, const SummarySpec& summaries,
                                    const Intervention& iv, const CovariateTable& C, Index R, std::uint64_t seed) {
  if (R < 1) throw Error(ErrorKind::InvalidParameter, "truth needs at least one replicate");
  if (spec.latent && (spec.latent->covariate_loading_own != 0.0 || spec.latent->covariate_loading_friends != 0.0))
    throw Error(ErrorKind::Specification, "conditional truth needs latent variables independent of C");
  const auto w_names = feature_names(summaries.w);
  const TreatmentModel g = TreatmentModel::from_law(spec.treatment, w_names);
  CounterfactualEngine engine(net, C, summaries, iv, &g);
  const Index n = net->size();
  std::vector<double> ybar(static_cast<std::size_t>(R));
  Table v;
  Vector x(n);
  for (Index r = 0; r < R; ++r) {
    const std::uint64_t seed_r = derive_seed(seed, Stream::Truth, static_cast<std::uint64_t>(r));
    Rng rng(derive_seed(seed_r, Stream::Latent, 0));
    Vector u;
    const Vector* latent = nullptr;
    if (spec.latent) {
      u = draw_latent(n, rng);
      latent = &u;
    }
    auto [effective, plan] = engine.resolve(seed_r, 0);
    sample_treatment(plan, rng, x);
    engine.summarize(*effective, x, v);
    ybar[r] = outcome_probabilities(spec, v, engine.v_names(), *net, latent).mean();
  }
  double s = 0.0;
  for (double y : ybar) s += y;
  const double m = s / static_cast<double>(R);
  double ss = 0.0;
  for (double y : ybar) ss += (y - m) * (y - m);
  TruthEstimate t;
  t.psi = m;
  t.replicates = R;
  t.mc_se = R > 1 ? std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R)) : 0.0;
  return t;
}

PooledDensity exact_hbar_star(const NetworkPtr& net, const CovariateTable& C, const SummarySpec& summaries,
                              const Intervention& iv, const TreatmentModel* g) {
  CounterfactualEngine engine(net, C, summaries, iv, g);
  if (engine.random_network())
    throw Error(ErrorKind::Specification, "exact density does not cover random network families");
  const Index n = net->size();
  auto [effective, plan] = engine.resolve(0, 0);
  if (plan.kind != TreatmentPlan::Kind::Fixed && n > 16)
    throw Error(ErrorKind::TooLarge, "more than 2^16 treatment configurations");
  DensityAccumulator acc(static_cast<Index>(engine.v_names().size()));
  Table v;
  for_each_treatment(plan, n, [&](const Vector& x, double px) {
    engine.summarize(*effective, x, v);
    for (Index i = 0; i < n; ++i) acc.add(row_span(v, i), px);
  });
  return acc.finish();
}

std::string instance_key(const std::string& description) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : description) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

void write_truth_table(std::ostream& out, const TruthTable& table) {
  out << "key\tpsi\tmc_se\treplicates\tdescription\n";
  out << std::setprecision(17);
  for (const auto& [key, e] : table.entries)
    out << key << '\t' << e.psi << '\t' << e.mc_se << '\t' << e.replicates << '\t' << e.description << '\n';
}

TruthTable read_truth_table(std::istream& in) {
  TruthTable table;
  std::string line;
  if (!std::getline(in, line) || line.rfind("key\tpsi", 0) != 0)
    throw Error(ErrorKind::Io, "truth table: missing header");
  Index lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() < 4) throw Error(ErrorKind::Io, "truth table: malformed line " + std::to_string(lineno));
    TruthTable::Entry e;
    try {
      e.psi = std::stod(f[1]);
      e.mc_se = std::stod(f[2]);
      e.replicates = std::stoll(f[3]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::Io, "truth table: bad number on line " + std::to_string(lineno));
    }
    e.description = f.size() > 4 ? f[4] : "";
    table.entries[f[0]] = e;
  }
  return table;
}

}  // namespace nettmle
