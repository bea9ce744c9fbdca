#include "nettmle/graph.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "nettmle/random.hpp"

namespace nettmle {

Network::Network(Index n) : offsets_(static_cast<std::size_t>(n) + 1, 0) {
  if (n < 0) throw Error(ErrorKind::InvalidParameter, "negative node count");
}

Network Network::from_edges(Index n, std::span<const Edge> edges) {
  if (n < 0) throw Error(ErrorKind::InvalidParameter, "negative node count");
  std::vector<Index> deg(static_cast<std::size_t>(n), 0);
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw Error(ErrorKind::InvalidParameter, "edge endpoint out of range");
    if (a == b) throw Error(ErrorKind::InvalidParameter, "self-loop at node " + std::to_string(a));
    ++deg[a];
    ++deg[b];
  }
  Network net;
  net.offsets_.assign(static_cast<std::size_t>(n) + 1, 0);
  for (Index i = 0; i < n; ++i) net.offsets_[i + 1] = net.offsets_[i] + deg[i];
  net.adjacency_.resize(static_cast<std::size_t>(net.offsets_[n]));
  std::vector<Index> fill(net.offsets_.begin(), net.offsets_.end() - 1);
  for (const auto& [a, b] : edges) {
    net.adjacency_[fill[a]++] = b;
    net.adjacency_[fill[b]++] = a;
  }
  for (Index i = 0; i < n; ++i) {
    auto first = net.adjacency_.begin() + net.offsets_[i];
    auto last = net.adjacency_.begin() + net.offsets_[i + 1];
    std::sort(first, last);
    if (std::adjacent_find(first, last) != last)
      throw Error(ErrorKind::InvalidParameter, "duplicate edge at node " + std::to_string(i));
  }
  return net;
}

Index Network::max_degree() const {
  Index k = 0;
  for (Index i = 0; i < size(); ++i) k = std::max(k, degree(i));
  return k;
}

bool Network::adjacent(Index i, Index j) const {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), static_cast<Node>(j));
}

std::vector<Edge> Network::edges() const {
  std::vector<Edge> out;
  out.reserve(static_cast<std::size_t>(edge_count()));
  for (Index i = 0; i < size(); ++i)
    for (Node j : neighbors(i))
      if (j > i) out.emplace_back(static_cast<Node>(i), j);
  return out;
}

std::vector<Index> Network::degrees() const {
  std::vector<Index> out(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) out[i] = degree(i);
  return out;
}

Index Network::mutual_contacts(Index i, Index j) const {
  auto a = neighbors(i);
  auto b = neighbors(j);
  Index count = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++count;
      ++ia;
      ++ib;
    }
  }
  return count;
}

Network add_edges(const Network& net, std::span<const Edge> extra) {
  std::vector<Edge> all = net.edges();
  all.insert(all.end(), extra.begin(), extra.end());
  return Network::from_edges(net.size(), all);
}

Network relabel(const Network& net, std::span<const Index> new_id_of_old) {
  std::vector<Edge> edges = net.edges();
  for (auto& [a, b] : edges) {
    a = static_cast<Node>(new_id_of_old[a]);
    b = static_cast<Node>(new_id_of_old[b]);
  }
  return Network::from_edges(net.size(), edges);
}

bool DependencyStructure::dependent(Index i, Index j) const {
  auto d = neighborhood(i);
  return std::binary_search(d.begin(), d.end(), static_cast<Node>(j));
}

DependencyStructure dependency_neighborhoods(const Network& net) {
  const Index n = net.size();
  std::vector<Index> offsets(static_cast<std::size_t>(n) + 1, 0);
  std::vector<Node> members;
  std::vector<Node> scratch;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (Index i = 0; i < n; ++i) {
    scratch.clear();
    auto visit = [&](Node k) {
      if (!seen[k]) {
        seen[k] = 1;
        scratch.push_back(k);
      }
    };
    visit(static_cast<Node>(i));
    for (Node j : net.neighbors(i)) {
      visit(j);
      for (Node k : net.neighbors(j)) visit(k);
    }
    std::sort(scratch.begin(), scratch.end());
    for (Node k : scratch) seen[k] = 0;
    members.insert(members.end(), scratch.begin(), scratch.end());
    offsets[i + 1] = static_cast<Index>(members.size());
  }
  return DependencyStructure(std::move(offsets), std::move(members));
}

namespace {

// Fenwick tree over nonnegative weights supporting weighted sampling.
class WeightTree {
 public:
  explicit WeightTree(Index n) : tree_(static_cast<std::size_t>(n) + 1, 0.0), weight_(n, 0.0) {
    while ((top_ << 1) <= n) top_ <<= 1;
  }
  void set(Index i, double w) {
    const double delta = w - weight_[i];
    weight_[i] = w;
    for (Index k = i + 1; k < static_cast<Index>(tree_.size()); k += k & -k) tree_[k] += delta;
  }
  double weight(Index i) const { return weight_[i]; }
  double total() const {
    double s = 0.0;
    for (Index k = static_cast<Index>(tree_.size()) - 1; k > 0; k -= k & -k) s += tree_[k];
    return s;
  }
  // Smallest i with prefix(i + 1) > target.
  Index find(double target) const {
    Index pos = 0;
    for (Index step = top_; step > 0; step >>= 1) {
      const Index next = pos + step;
      if (next < static_cast<Index>(tree_.size()) && tree_[next] <= target) {
        pos = next;
        target -= tree_[next];
      }
    }
    return std::min<Index>(pos, static_cast<Index>(weight_.size()) - 1);
  }

 private:
  std::vector<double> tree_;
  std::vector<double> weight_;
  Index top_ = 1;
};

}  // namespace

Network gen_preferential_attachment(Index n, Index m_attach, double power, std::uint64_t seed) {
  if (m_attach < 1) throw Error(ErrorKind::InvalidParameter, "m_attach must be >= 1");
  if (n < m_attach) throw Error(ErrorKind::InvalidParameter, "n must be >= m_attach");
  if (power < 0.0) throw Error(ErrorKind::InvalidParameter, "power must be >= 0");
  Rng rng(seed);
  std::vector<Edge> edges;
  std::vector<Index> deg(static_cast<std::size_t>(n), 0);
  const Index core = std::min(n, m_attach + 1);
  for (Index i = 0; i < core; ++i)
    for (Index j = i + 1; j < core; ++j) {
      edges.emplace_back(static_cast<Node>(i), static_cast<Node>(j));
      ++deg[i];
      ++deg[j];
    }
  WeightTree weights(n);
  for (Index i = 0; i < core; ++i) weights.set(i, std::pow(static_cast<double>(deg[i]), power));

  std::vector<Index> chosen;
  for (Index t = core; t < n; ++t) {
    chosen.clear();
    for (Index e = 0; e < m_attach; ++e) {
      const double total = weights.total();
      Index target;
      if (total > 0.0) {
        target = weights.find(rng.uniform() * total);
        // Guard against rounding landing on a zero-weight slot.
        while (weights.weight(target) <= 0.0) target = weights.find(rng.uniform() * total);
      } else {
        target = rng.index(t);
      }
      chosen.push_back(target);
      weights.set(target, 0.0);
    }
    for (Index target : chosen) {
      edges.emplace_back(static_cast<Node>(t), static_cast<Node>(target));
      ++deg[target];
      ++deg[t];
    }
    for (Index target : chosen) weights.set(target, std::pow(static_cast<double>(deg[target]), power));
    weights.set(t, std::pow(static_cast<double>(deg[t]), power));
  }
  return Network::from_edges(n, edges);
}

Network gen_small_world(Index n, Index k_ring, double p_rewire, std::uint64_t seed) {
  if (k_ring < 0 || k_ring % 2 != 0) throw Error(ErrorKind::InvalidParameter, "k_ring must be even");
  if (p_rewire < 0.0 || p_rewire > 1.0) throw Error(ErrorKind::InvalidParameter, "p_rewire must be in [0,1]");
  if (n <= k_ring) throw Error(ErrorKind::InvalidParameter, "n must exceed k_ring");
  Rng rng(seed);
  std::vector<std::unordered_set<Node>> adj(static_cast<std::size_t>(n));
  std::vector<Edge> lattice;
  for (Index i = 0; i < n; ++i)
    for (Index j = 1; j <= k_ring / 2; ++j) {
      const auto b = static_cast<Node>((i + j) % n);
      lattice.emplace_back(static_cast<Node>(i), b);
      adj[i].insert(b);
      adj[b].insert(static_cast<Node>(i));
    }
  std::vector<Edge> edges;
  edges.reserve(lattice.size());
  for (auto [a, b] : lattice) {
    if (rng.uniform() < p_rewire && static_cast<Index>(adj[a].size()) < n - 1) {
      Node t;
      do {
        t = static_cast<Node>(rng.index(n));
      } while (t == a || adj[a].count(t));
      adj[a].erase(b);
      adj[b].erase(a);
      adj[a].insert(t);
      adj[t].insert(a);
    }
  }
  for (Index i = 0; i < n; ++i)
    for (Node j : adj[i])
      if (j > i) edges.emplace_back(static_cast<Node>(i), j);
  return Network::from_edges(n, edges);
}

Network gen_erdos_renyi(Index n, Index m_edges, std::uint64_t seed) {
  if (n < 0 || m_edges < 0 || m_edges > n * (n - 1) / 2)
    throw Error(ErrorKind::InvalidParameter, "edge count out of range");
  Rng rng(seed);
  std::unordered_set<std::uint64_t> seen;
  std::vector<Edge> edges;
  while (static_cast<Index>(edges.size()) < m_edges) {
    auto a = static_cast<Node>(rng.index(n));
    auto b = static_cast<Node>(rng.index(n));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    if (seen.insert(key).second) edges.emplace_back(a, b);
  }
  return Network::from_edges(n, edges);
}

SteinRateReport stein_rate_diagnostic(const Network& net) {
  SteinRateReport r;
  r.n = net.size();
  r.k_max = net.max_degree();
  const double n = static_cast<double>(r.n);
  const double k2 = static_cast<double>(r.k_max) * static_cast<double>(r.k_max);
  r.ratio = r.n > 0 ? k2 / n : 0.0;
  r.rate_upper = n;
  r.rate_lower = k2 > 0.0 ? std::min(n / k2, n) : n;
  r.warning = r.ratio >= 1.0;
  return r;
}

HubConditioning condition_on_hubs(const Network& net, Index degree_threshold) {
  if (degree_threshold < 1) throw Error(ErrorKind::InvalidParameter, "degree_threshold must be >= 1");
  HubConditioning out;
  std::vector<Index> new_id(static_cast<std::size_t>(net.size()), -1);
  for (Index i = 0; i < net.size(); ++i) {
    if (net.degree(i) >= degree_threshold) {
      out.hubs.push_back(i);
    } else {
      new_id[i] = static_cast<Index>(out.kept.size());
      out.kept.push_back(i);
    }
  }
  if (out.kept.empty()) throw Error(ErrorKind::EmptySubnetwork, "every node is a hub");
  std::vector<Edge> edges;
  out.hub_ties.assign(out.kept.size(), 0);
  for (Index s = 0; s < static_cast<Index>(out.kept.size()); ++s) {
    const Index i = out.kept[s];
    for (Node j : net.neighbors(i)) {
      if (new_id[j] < 0) {
        ++out.hub_ties[s];
      } else if (new_id[j] > s) {
        edges.emplace_back(static_cast<Node>(s), static_cast<Node>(new_id[j]));
      }
    }
  }
  out.sub = Network::from_edges(static_cast<Index>(out.kept.size()), edges);
  return out;
}

LabeledNetwork read_edge_list(std::istream& in) {
  std::unordered_map<std::string, Node> ids;
  LabeledNetwork out;
  std::vector<Edge> edges;
  std::unordered_set<std::uint64_t> seen;
  auto id_of = [&](const std::string& label) {
    auto [it, inserted] = ids.emplace(label, static_cast<Node>(out.labels.size()));
    if (inserted) out.labels.push_back(label);
    return it->second;
  };
  std::string line;
  Index lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::string a, b, extra;
    ls >> a;
    if (!(ls >> b)) {
      id_of(a);
      continue;
    }
    if (ls >> extra)
      throw Error(ErrorKind::Io, "line " + std::to_string(lineno) + ": expected two labels");
    if (a == b) throw Error(ErrorKind::Io, "line " + std::to_string(lineno) + ": self-loop " + a);
    Node ia = id_of(a), ib = id_of(b);
    const auto lo = std::min(ia, ib), hi = std::max(ia, ib);
    const std::uint64_t key = (static_cast<std::uint64_t>(lo) << 32) | static_cast<std::uint32_t>(hi);
    if (!seen.insert(key).second)
      throw Error(ErrorKind::Io, "line " + std::to_string(lineno) + ": duplicate edge " + a + " " + b);
    edges.emplace_back(ia, ib);
  }
  const auto n = static_cast<Index>(out.labels.size());
  out.network = Network::from_edges(n, edges);

  // Canonical integer labels 0..n-1 map back to their own ids.
  std::vector<Index> numeric(static_cast<std::size_t>(n), -1);
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  bool canonical = true;
  for (Index i = 0; i < n && canonical; ++i) {
    const std::string& s = out.labels[i];
    if (s.empty() || s.size() > 18 || s.find_first_not_of("0123456789") != std::string::npos ||
        (s.size() > 1 && s[0] == '0')) {
      canonical = false;
      break;
    }
    const Index v = std::stoll(s);
    if (v >= n || used[v]) canonical = false;
    else {
      used[v] = 1;
      numeric[i] = v;
    }
  }
  if (canonical) {
    out.network = relabel(out.network, numeric);
    for (Index i = 0; i < n; ++i) out.labels[i] = std::to_string(i);
  }
  return out;
}

LabeledNetwork read_edge_list_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_edge_list(in);
}

void write_edge_list(std::ostream& out, const Network& net) {
  out << "# nodes " << net.size() << " edges " << net.edge_count() << "\n";
  for (Index i = 0; i < net.size(); ++i)
    if (net.degree(i) == 0) out << i << "\n";
  for (const auto& [a, b] : net.edges()) out << a << " " << b << "\n";
}

}  // namespace nettmle
