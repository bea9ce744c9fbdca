#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nettmle/core.hpp"

namespace nettmle {

using Edge = std::pair<Node, Node>;

/// Undirected simple graph on nodes 0..n-1, stored as sorted neighbor lists
/// (compressed rows). Immutable after construction.
class Network {
 public:
  Network() = default;
  /// Edgeless network on n nodes.
  explicit Network(Index n);

  /// Throws InvalidParameter on self-loops, duplicate edges or out-of-range ids.
  static Network from_edges(Index n, std::span<const Edge> edges);

  Index size() const { return static_cast<Index>(offsets_.size()) - 1; }
  Index edge_count() const { return static_cast<Index>(adjacency_.size()) / 2; }
  Index degree(Index i) const { return offsets_[i + 1] - offsets_[i]; }
  Index max_degree() const;
  std::span<const Node> neighbors(Index i) const {
    return {adjacency_.data() + offsets_[i], static_cast<std::size_t>(degree(i))};
  }
  bool adjacent(Index i, Index j) const;
  /// Edges (i, j) with i < j in lexicographic order.
  std::vector<Edge> edges() const;
  std::vector<Index> degrees() const;

  /// Number of common neighbors of i and j, merge of the two sorted lists.
  Index mutual_contacts(Index i, Index j) const;

  friend bool operator==(const Network& a, const Network& b) {
    return a.offsets_ == b.offsets_ && a.adjacency_ == b.adjacency_;
  }

 private:
  std::vector<Index> offsets_{0};
  std::vector<Node> adjacency_;
};

using NetworkPtr = std::shared_ptr<const Network>;

/// Network plus one extra edge set; used by topology interventions.
Network add_edges(const Network& net, std::span<const Edge> extra);
Network relabel(const Network& net, std::span<const Index> new_id_of_old);

/// D_i = {i} ∪ neighbors(i) ∪ neighbors of neighbors, sorted.
class DependencyStructure {
 public:
  DependencyStructure() = default;
  DependencyStructure(std::vector<Index> offsets, std::vector<Node> members)
      : offsets_(std::move(offsets)), members_(std::move(members)) {}

  Index size() const { return static_cast<Index>(offsets_.size()) - 1; }
  std::span<const Node> neighborhood(Index i) const {
    return {members_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }
  /// R(i, j)
  bool dependent(Index i, Index j) const;
  /// Number of ordered pairs (i, j) with j in D_i.
  Index pair_count() const { return static_cast<Index>(members_.size()); }

 private:
  std::vector<Index> offsets_{0};
  std::vector<Node> members_;
};

DependencyStructure dependency_neighborhoods(const Network& net);

// Generators. All are pure functions of their arguments, including the seed.

/// Arriving node attaches m_attach edges to distinct existing nodes with
/// probability proportional to degree^power. Seed graph: complete graph on
/// min(n, m_attach + 1) nodes.
Network gen_preferential_attachment(Index n, Index m_attach, double power, std::uint64_t seed);

/// Watts-Strogatz: ring lattice with k_ring/2 neighbors per side, each lattice
/// edge's far endpoint rewired with probability p_rewire (skipped if no valid
/// target exists).
Network gen_small_world(Index n, Index k_ring, double p_rewire, std::uint64_t seed);

/// G(n, M): M distinct edges drawn uniformly.
Network gen_erdos_renyi(Index n, Index m_edges, std::uint64_t seed);

struct SteinRateReport {
  Index k_max = 0;
  Index n = 0;
  double ratio = 0.0;         // k_max^2 / n
  double rate_lower = 0.0;    // n / k_max^2, capped at n
  double rate_upper = 0.0;    // n
  bool warning = false;       // ratio >= 1
};

SteinRateReport stein_rate_diagnostic(const Network& net);

struct HubConditioning {
  Network sub;
  std::vector<Index> hubs;        // original ids
  std::vector<Index> kept;        // original id of each sub node
  std::vector<Index> hub_ties;    // per sub node: number of removed hub neighbors
};

/// Hubs are nodes with degree >= degree_threshold; the remaining nodes form
/// the induced subgraph. Throws EmptySubnetwork when every node is a hub.
HubConditioning condition_on_hubs(const Network& net, Index degree_threshold);

struct LabeledNetwork {
  Network network;
  std::vector<std::string> labels;  // labels[i] is the file label of node i
};

/// Edge-list text: one whitespace-separated pair per line, '#' lines ignored.
/// A line with a single label declares an isolated node. Duplicates and
/// self-loops are rejected.
LabeledNetwork read_edge_list(std::istream& in);
LabeledNetwork read_edge_list_file(const std::string& path);
void write_edge_list(std::ostream& out, const Network& net);

}  // namespace nettmle
