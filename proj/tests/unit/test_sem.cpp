#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "nettmle/config.hpp"
#include "nettmle/sem.hpp"
#include "nettmle/summaries.hpp"

using namespace nettmle;
using namespace testutil;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k] / n;
    mb += b[k] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

CovariateTable one_column(const std::string& name, std::vector<double> v) {
  CovariateTable C;
  C.names = {name};
  C.values = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
  return C;
}

}  // namespace

TEST_CASE("summary built-ins on hand cases") {
  SUBCASE("neighbor sum on a path") {
    SummarySpec s;
    s.v = {parse_feature("nX", "nbr_sum(X)")};
    const Vector X = (Vector(3) << 1, 0, 1).finished();
    const auto out = apply_summaries(path(3), s, one_column("PA", {0, 0, 0}), X);
    CHECK(out.V(0, 0) == 0);
    CHECK(out.V(1, 0) == 2);
    CHECK(out.V(2, 0) == 0);
  }
  SUBCASE("reductions over an empty neighbor set are 0") {
    SummarySpec s;
    s.w = {parse_feature("m", "nbr_mean(PA)"), parse_feature("s", "nbr_sum(PA)"), parse_feature("x", "nbr_max(PA)"),
           parse_feature("k", "degree()")};
    const auto out = apply_summaries(Network(2), s, one_column("PA", {1, 1}), Vector::Zero(2));
    CHECK(out.W.row(0).isZero());
  }
  SUBCASE("mean, max, degree and product") {
    SummarySpec s;
    s.w = {parse_feature("mean", "nbr_mean(A)"), parse_feature("max", "nbr_max(A)"), parse_feature("deg", "degree()"),
           parse_feature("prod", "product(mean, deg)")};
    const auto out = apply_summaries(star(4), s, one_column("A", {0, 1, 2, 6}), Vector::Zero(4));
    CHECK(out.W(0, 0) == doctest::Approx(3.0));
    CHECK(out.W(0, 1) == 6.0);
    CHECK(out.W(0, 2) == 3.0);
    CHECK(out.W(0, 3) == doctest::Approx(9.0));
    CHECK(out.W(1, 0) == 0.0);
    CHECK(out.W(1, 2) == 1.0);
  }
  SUBCASE("treatment is not allowed in W") {
    SummarySpec s;
    s.w = {parse_feature("nX", "nbr_sum(X)")};
    CHECK_THROWS_AS(apply_summaries(path(3), s, one_column("PA", {0, 0, 0}), Vector::Zero(3)), Error);
  }
  SUBCASE("expression round trip") {
    for (const char* e : {"own(PA)", "nbr_sum(X)", "nbr_mean(PA)", "nbr_max(X)", "degree()", "product(a, b)"}) {
      const Feature f = parse_feature("f", e);
      CHECK(to_expression(parse_feature("f", to_expression(f))) == to_expression(f));
    }
    CHECK_THROWS_AS(parse_feature("f", "nbr_median(X)"), Error);
  }
}

TEST_CASE("summaries only read the closed neighborhood") {
  const Preset p = preset_transmission();
  const Network net = random_graph(40, 0.08, 3);
  Rng rng(5);
  Dataset d = simulate(share(net), p.sem, p.summaries, 9);
  for (Index j = 0; j < net.size(); j += 7) {
    CovariateTable C = d.C;
    Vector X = d.X;
    C.values(j, 0) = 1.0 - C.values(j, 0);
    X[j] = 1.0 - X[j];
    const auto s = apply_summaries(net, p.summaries, C, X);
    for (Index i = 0; i < net.size(); ++i) {
      if (i == j || net.adjacent(i, j)) continue;
      CHECK(s.W.row(i) == d.W.row(i));
      CHECK(s.V.row(i) == d.V.row(i));
    }
  }
}

TEST_CASE("simulation") {
  SUBCASE("zero outcome coefficients give fair coins") {
    Preset p = preset_transmission();
    p.sem.outcome.predictor = {0.0, {}};
    const Dataset d = simulate(share(gen_small_world(10000, 4, 0.1, 1)), p.sem, p.summaries, 3);
    CHECK(d.Y.mean() > 0.45);
    CHECK(d.Y.mean() < 0.55);
  }
  SUBCASE("randomized treatment treats exactly a quarter") {
    const Preset p = preset_randomized();
    for (Index n : {10, 101, 1000}) {
      const Dataset d = simulate(share(gen_small_world(n, 4, 0.1, 1)), p.sem, p.summaries, 7);
      CHECK(d.X.sum() == doctest::Approx(std::floor(0.25 * static_cast<double>(n))));
    }
  }
  SUBCASE("no neighbor effects and no latent variables leave tied outcomes uncorrelated") {
    Preset p = preset_transmission();
    p.sem.outcome.predictor = {-0.5, {{"PA", 1.0}, {"X", 0.4}}};
    p.sem.treatment.predictor = {-1.0, {}};
    const Network net = gen_small_world(10000, 4, 0.1, 2);
    const Dataset d = simulate(share(net), p.sem, p.summaries, 4);
    std::vector<double> a, b;
    for (auto [i, j] : net.edges()) {
      a.push_back(d.Y[i]);
      b.push_back(d.Y[j]);
    }
    CHECK(std::abs(correlation(a, b)) < 0.05);
  }
  SUBCASE("seed determinism and stored summaries") {
    const Preset p = preset_latent();
    const auto net = share(gen_preferential_attachment(1000, 3, 0.5, 5));
    const Dataset a = simulate(net, p.sem, p.summaries, 11);
    const Dataset b = simulate(net, p.sem, p.summaries, 11);
    CHECK(a.X == b.X);
    CHECK(a.Y == b.Y);
    CHECK(a.C.values == b.C.values);
    const auto s = apply_summaries(*net, p.summaries, a.C, a.X);
    CHECK(s.V == a.V);
    CHECK(s.W == a.W);
    CHECK_FALSE(simulate(net, p.sem, p.summaries, 12).Y == a.Y);
  }
  SUBCASE("unknown feature names are specification errors") {
    Preset p = preset_transmission();
    p.sem.outcome.predictor.terms.push_back({"nY", 1.0});
    CHECK_THROWS_AS(simulate(share(path(4)), p.sem, p.summaries, 1), Error);
    Preset q = preset_transmission();
    q.sem.treatment.predictor.terms.push_back({"X", 1.0});
    CHECK_THROWS_AS(simulate(share(path(4)), q.sem, q.summaries, 1), Error);
  }
}

TEST_CASE("outcomes at independent pairs are uncorrelated given the summaries") {
  // Residuals Y - P(Y | V) for pairs outside each other's dependency
  // neighborhood, pooled over replicates on a fixed ring.
  const Preset p = preset_transmission();
  const auto net = share(gen_small_world(60, 2, 0.0, 1));
  std::vector<double> a, b, la, lb;
  const Preset lat = preset_latent();
  for (std::uint64_t r = 0; r < 400; ++r) {
    for (int latent = 0; latent < 2; ++latent) {
      const Preset& q = latent ? lat : p;
      const Dataset d = simulate(net, q.sem, q.summaries, 1000 + r);
      const Vector m = outcome_probabilities(p.sem, d.V, d.v_names(), *net, nullptr);
      for (Index i = 0; i < 60; i += 6) {
        auto& x = latent ? la : a;
        auto& y = latent ? lb : b;
        x.push_back(d.Y[i] - m[i]);
        y.push_back(d.Y[(i + 3) % 60] - m[(i + 3) % 60]);
        if (!latent) continue;
        // Adjacent pairs share latent terms.
        la.push_back(d.Y[i] - m[i]);
        lb.push_back(d.Y[i + 1] - m[i + 1]);
      }
    }
  }
  CHECK(std::abs(correlation(a, b)) < 0.05);
  CHECK(correlation(la, lb) > 0.02);
}

TEST_CASE("dataset files") {
  const Preset p = preset_transmission();
  const Network net = path(5);
  const Dataset d = simulate(share(net), p.sem, p.summaries, 2);
  const std::vector<std::string> labels{"e", "d", "c", "b", "a"};
  std::stringstream io;
  write_dataset(io, d, &labels);
  const RawData raw = read_dataset(io);
  CHECK(raw.ids == labels);
  CHECK(raw.X == d.X);
  const std::vector<std::string> shuffled{"a", "b", "c", "d", "e"};
  const RawData aligned = align_to_labels(raw, shuffled);
  CHECK(aligned.Y[0] == d.Y[4]);
  CHECK_THROWS_AS(align_to_labels(raw, {"a", "b", "c", "d", "z"}), Error);
  std::istringstream bad("id,PA,X\n0,1,0\n");
  CHECK_THROWS_AS(read_dataset(bad), Error);
}

TEST_CASE("outcome rescaling") {
  const Vector y = (Vector(3) << 10, 15, 20).finished();
  const Vector r = rescale_outcome(y, 10, 20);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == doctest::Approx(0.5));
  CHECK(r[2] == 1.0);
  CHECK_THROWS_AS(rescale_outcome(y, 12, 20), Error);
}

TEST_CASE("model config text round trip") {
  for (const Preset& p : {preset_transmission(), preset_latent(), preset_randomized()}) {
    const std::string text = to_config_text(p.sem, p.summaries);
    const ModelSpec back = parse_model(ConfigDocument::parse_string(text));
    CHECK(to_config_text(back.sem, back.summaries) == text);
    const auto net = share(gen_small_world(200, 4, 0.1, 1));
    CHECK(simulate(net, back.sem, back.summaries, 5).Y == simulate(net, p.sem, p.summaries, 5).Y);
  }
}
