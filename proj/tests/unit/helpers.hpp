#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "nettmle/graph.hpp"
#include "nettmle/random.hpp"
#include "nettmle/sem.hpp"

namespace testutil {

using namespace nettmle;

inline NetworkPtr share(Network net) { return std::make_shared<const Network>(std::move(net)); }

inline Network path(Index n) {
  std::vector<Edge> e;
  for (Index i = 0; i + 1 < n; ++i) e.emplace_back(static_cast<Node>(i), static_cast<Node>(i + 1));
  return Network::from_edges(n, e);
}

inline Network star(Index n) {
  std::vector<Edge> e;
  for (Index i = 1; i < n; ++i) e.emplace_back(0, static_cast<Node>(i));
  return Network::from_edges(n, e);
}

inline Network complete(Index n) {
  std::vector<Edge> e;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) e.emplace_back(static_cast<Node>(i), static_cast<Node>(j));
  return Network::from_edges(n, e);
}

/// Each pair present independently with probability p.
inline Network random_graph(Index n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Edge> e;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) e.emplace_back(static_cast<Node>(i), static_cast<Node>(j));
  return Network::from_edges(n, e);
}

inline std::vector<std::vector<int>> adjacency_matrix(const Network& net) {
  const auto n = static_cast<std::size_t>(net.size());
  std::vector<std::vector<int>> a(n, std::vector<int>(n, 0));
  for (auto [i, j] : net.edges()) a[i][j] = a[j][i] = 1;
  return a;
}

/// Binary covariate PA, W = (PA, nPA), V = (PA, X, nX, nPA); random logistic
/// coefficients of moderate size.
inline Preset random_binary_model(Rng& rng) {
  Preset p;
  p.name = "random";
  const double q = 0.2 + 0.6 * rng.uniform();
  p.sem.covariates.push_back({"PA", {0.0, 1.0}, {1.0 - q, q}});
  p.summaries.w = {parse_feature("PA", "own(PA)"), parse_feature("nPA", "nbr_sum(PA)")};
  p.summaries.v = {parse_feature("PA", "own(PA)"), parse_feature("X", "own(X)"), parse_feature("nX", "nbr_sum(X)"),
                   parse_feature("nPA", "nbr_sum(PA)")};
  auto coef = [&] { return 2.0 * rng.uniform() - 1.0; };
  p.sem.treatment.predictor = {coef(), {{"PA", coef()}, {"nPA", coef()}}};
  p.sem.outcome.predictor = {coef(), {{"PA", coef()}, {"X", coef()}, {"nX", coef()}, {"nPA", coef()}}};
  return p;
}

}  // namespace testutil
