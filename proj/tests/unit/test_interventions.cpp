#include <algorithm>

#include "doctest.h"
#include "helpers.hpp"
#include "nettmle/interventions.hpp"
#include "nettmle/summaries.hpp"

using namespace nettmle;
using namespace testutil;

namespace {

Dataset preset_data(const Network& net, std::uint64_t seed) {
  const Preset p = preset_transmission();
  return simulate(share(net), p.sem, p.summaries, seed);
}

TreatmentModel true_g() {
  const Preset p = preset_transmission();
  return TreatmentModel::from_law(p.sem.treatment, feature_names(p.summaries.w));
}

}  // namespace

TEST_CASE("identity intervention reproduces the observed summaries in one draw") {
  const Dataset d = preset_data(gen_small_world(300, 6, 0.1, 1), 2);
  const auto v = counterfactual_summaries(d, make_observed(d.X), nullptr, 7, 3);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == d.V);
}

TEST_CASE("top-degree targeting") {
  SUBCASE("star treats only the center") {
    CovariateTable C{{"PA"}, Matrix::Zero(10, 1)};
    CounterfactualEngine e(share(star(10)), C, preset_transmission().summaries, make_top_degree(0.10), nullptr);
    const auto [net, plan] = e.resolve(0, 0);
    REQUIRE(plan.kind == TreatmentPlan::Kind::Fixed);
    CHECK(plan.value[0] == 1.0);
    CHECK(plan.value.sum() == 1.0);
    CHECK_FALSE(e.random());
  }
  SUBCASE("ties at the cutoff go to the lowest id") {
    // Path 0-1-2-3-4: nodes 1, 2, 3 tie at degree 2.
    CovariateTable C{{"PA"}, Matrix::Zero(10, 1)};
    CounterfactualEngine e(share(path(10)), C, preset_transmission().summaries, make_top_degree(0.2), nullptr);
    const auto plan = e.resolve(0, 0).second;
    CHECK(plan.value[1] == 1.0);
    CHECK(plan.value[2] == 1.0);
    CHECK(plan.value.sum() == 2.0);
  }
}

TEST_CASE("bernoulli treats the stated fraction") {
  const Dataset d = preset_data(gen_small_world(10000, 4, 0.1, 1), 2);
  CounterfactualEngine e(d.network, d.C, d.summaries, make_bernoulli(0.35), nullptr);
  CHECK(e.random());
  Table v;
  Vector x(d.size());
  double treated = 0.0;
  for (Index k = 0; k < 100; ++k) {
    e.draw(5, k, v, x);
    treated += x.mean() / 100.0;
  }
  CHECK(treated > 0.34);
  CHECK(treated < 0.36);
}

TEST_CASE("counterfactual draws are seed-deterministic") {
  const Dataset d = preset_data(gen_small_world(200, 4, 0.1, 1), 2);
  const TreatmentModel g = true_g();
  for (const char* text : {"g1", "natural", "g3"}) {
    const Intervention iv = parse_intervention(text);
    const auto a = counterfactual_summaries(d, iv, &g, 5, 77);
    const auto b = counterfactual_summaries(d, iv, &g, 5, 77);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
  }
  const auto c = counterfactual_summaries(d, make_bernoulli(0.35), nullptr, 2, 78);
  CHECK_FALSE(c[0] == c[1]);
}

TEST_CASE("stochastic interventions need a treatment model; centrality targets are refused") {
  const Dataset d = preset_data(path(6), 1);
  CHECK_THROWS_AS(counterfactual_summaries(d, make_natural(), nullptr, 2, 1), Error);
  CHECK_THROWS_AS(counterfactual_summaries(d, parse_intervention("g3"), nullptr, 2, 1), Error);
  try {
    counterfactual_summaries(d, parse_intervention("centrality:betweenness"), nullptr, 2, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotIdentified);
  }
  CHECK(needs_treatment_model(make_natural()));
  CHECK(needs_treatment_model(parse_intervention("g3")));
  CHECK_FALSE(needs_treatment_model(parse_intervention("g4")));
  CHECK_FALSE(needs_treatment_model(parse_intervention("g1")));
}

TEST_CASE("natural intervention reproduces the law of V") {
  const Network net = gen_small_world(20000, 6, 0.1, 4);
  const Dataset d = preset_data(net, 5);
  const TreatmentModel g = true_g();
  const auto v = counterfactual_summaries(d, make_natural(), &g, 10, 6);
  // Compare the pooled means and the share of treated nodes with PA = 1.
  for (Index c = 0; c < d.V.cols(); ++c) {
    double star = 0.0;
    for (const auto& t : v) star += t.col(c).mean() / static_cast<double>(v.size());
    const double obs = d.V.col(c).mean();
    CHECK(std::abs(star - obs) < 0.05 * std::max(1.0, obs));
  }
}

TEST_CASE("adding an active friend rewires only the network") {
  const Network net = gen_small_world(100, 4, 0.3, 9);
  const Dataset d = preset_data(net, 3);
  const TreatmentModel g = true_g();
  CounterfactualEngine e(d.network, d.C, d.summaries, parse_intervention("add_active_friend:5:PA"), &g);
  const auto [star_net, plan] = e.resolve(3, 0);
  // The donor is the highest-degree PA = 1 node, lowest id on ties.
  Index donor = -1;
  for (Index i = 0; i < 100; ++i)
    if (d.C.values(i, 0) == 1.0 && (donor < 0 || net.degree(i) > net.degree(donor))) donor = i;
  for (Index i = 0; i < 100; ++i) {
    if (net.degree(i) < 5 && i != donor && !net.adjacent(i, donor)) {
      CHECK(star_net->adjacent(i, donor));
    }
    for (Node j : net.neighbors(i)) CHECK(star_net->adjacent(i, j));
  }
  CHECK(star_net->edge_count() > net.edge_count());
  // W and V recomputed on A*; C untouched.
  Table v;
  Vector x(100);
  e.draw(3, 0, v, x);
  const auto s = apply_summaries(*star_net, d.summaries, d.C, x);
  CHECK(s.V == v);
}

TEST_CASE("compositions") {
  const Network net = gen_small_world(100, 4, 0.3, 9);
  const Dataset d = preset_data(net, 3);
  CounterfactualEngine g4(d.network, d.C, d.summaries, parse_intervention("g4"), nullptr);
  CounterfactualEngine g2(d.network, d.C, d.summaries, parse_intervention("g2"), nullptr);
  CounterfactualEngine g3(d.network, d.C, d.summaries, parse_intervention("top_degree:0.1+add_active_friend:10:PA"),
                          nullptr);
  CHECK(g4.resolve(0, 0).second.value == g2.resolve(0, 0).second.value);
  CHECK(*g4.resolve(0, 0).first == *g3.resolve(0, 0).first);
  CHECK(parse_intervention("g4").label == "g4");
}

TEST_CASE("dynamic rules") {
  const Network net = path(4);
  CovariateTable C{{"PA"}, (Matrix(4, 1) << 1, 0, 0, 1).finished()};
  const SummarySpec s = preset_transmission().summaries;
  CounterfactualEngine own(share(net), C, s, parse_intervention("dynamic_own:PA:1"), nullptr);
  CHECK(own.resolve(0, 0).second.value == (Vector(4) << 1, 0, 0, 1).finished());
  CounterfactualEngine peer(share(net), C, s, parse_intervention("dynamic_peer:PA:1"), nullptr);
  CHECK(peer.resolve(0, 0).second.value == (Vector(4) << 0, 1, 1, 0).finished());
}

TEST_CASE("intervention parsing errors") {
  for (const char* bad : {"", "g5", "bernoulli", "bernoulli:x", "top_degree:0.1:2", "dynamic_own:PA"})
    CHECK_THROWS_AS(parse_intervention(bad), Error);
}

TEST_CASE("positivity diagnostic") {
  SUBCASE("support contained in the observed support passes") {
    const Table obs = (Table(4, 2) << 0, 1, 1, 1, 0, 2, 1, 2).finished();
    const Table star = (Table(4, 2) << 0, 1, 0, 1, 1, 2, 1, 2).finished();
    const auto r = positivity_diagnostic(obs, {star});
    CHECK(r.pass);
    CHECK(r.unsupported.empty());
    CHECK(r.min_frequency == doctest::Approx(0.25));
  }
  SUBCASE("a forced value never observed is flagged with its node") {
    // Star with center 0: forcing every leaf treated gives the center
    // nX = 4, which the observed data never show.
    const Table obs = (Table(5, 1) << 1, 0, 1, 0, 1).finished();
    const Table star = (Table(5, 1) << 4, 1, 1, 1, 1).finished();
    const auto r = positivity_diagnostic(obs, {star});
    CHECK_FALSE(r.pass);
    REQUIRE(r.unsupported.size() == 1);
    CHECK(r.unsupported[0].node == 0);
    CHECK(r.unsupported[0].value == std::vector<double>{4});
    CHECK(r.unsupported_mass == doctest::Approx(0.2));
  }
  SUBCASE("strata") {
    const Table obs = (Table(2, 1) << 1, 0).finished();
    const Table star = (Table(2, 1) << 0, 1).finished();
    const std::vector<double> strata{0, 1};
    CHECK(positivity_diagnostic(obs, {star}).pass);
    CHECK_FALSE(positivity_diagnostic(obs, {star}, &strata).pass);
  }
}
