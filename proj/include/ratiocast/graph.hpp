#pragma once

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ratiocast/errors.hpp"
#include "ratiocast/rng.hpp"

namespace ratiocast {

// Edge (j, i) means "node j receives from node i". Vertices are 0-indexed in
// the API; files and CLI output use 1-indexed vertices.
using Edge = std::pair<int, int>;

inline bool is_strongly_connected(int n, const std::vector<Edge>& edges) {
  if (n <= 0) return false;
  std::vector<std::vector<int>> fwd(n), rev(n);  // fwd[i]: receivers of i
  for (const auto& [j, i] : edges) {
    if (j < 0 || j >= n || i < 0 || i >= n) return false;
    fwd[i].push_back(j);
    rev[j].push_back(i);
  }
  auto reaches_all = [n](const std::vector<std::vector<int>>& adj) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  // Strongly connected iff vertex 0 reaches everyone and everyone reaches 0.
  return reaches_all(fwd) && reaches_all(rev);
}

// Directed communication graph with a self-loop at every vertex, validated
// strongly connected at construction. Immutable afterwards; safe to share
// across threads by const reference.
class DirectedGraph {
 public:
  static DirectedGraph from_edge_list(int n, std::vector<Edge> edges) {
    if (n < 1) throw InvalidVertex("vertex count must be at least 1");
    for (const auto& [j, i] : edges) {
      if (j < 0 || j >= n || i < 0 || i >= n)
        throw InvalidVertex("edge endpoint out of range");
    }
    std::set<Edge> unique(edges.begin(), edges.end());
    for (int v = 0; v < n; ++v) unique.insert({v, v});  // self-loops are mandatory
    std::vector<Edge> all(unique.begin(), unique.end());
    if (!is_strongly_connected(n, all))
      throw NotStronglyConnected("graph is not strongly connected");
    return DirectedGraph(n, std::move(all));
  }

  int vertex_count() const { return n_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }

  // In-neighbors of j in ascending vertex order (always contains j).
  const std::vector<int>& in_neighbors(int j) const { return in_neighbors_[j]; }
  int in_degree(int j) const { return static_cast<int>(in_neighbors_[j].size()); }
  int out_degree(int i) const { return out_degree_[i]; }
  int max_out_degree() const {
    return *std::max_element(out_degree_.begin(), out_degree_.end());
  }

  bool has_edge(int j, int i) const {
    return std::binary_search(edges_.begin(), edges_.end(), Edge{j, i});
  }

  // Position of edge (j, i) in edges(), or -1.
  int edge_index(int j, int i) const {
    auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{j, i});
    if (it == edges_.end() || *it != Edge{j, i}) return -1;
    return static_cast<int>(it - edges_.begin());
  }

  // Global edge index of (j, in_neighbors(j)[pos]).
  int in_edge_index(int j, int pos) const { return in_edge_index_[j][pos]; }

  bool edge_is_self(int e) const { return edges_[e].first == edges_[e].second; }

  // Position of j in its own in-neighbor list (self-loop always present).
  int self_position(int j) const { return self_position_[j]; }

 private:
  DirectedGraph(int n, std::vector<Edge> edges)
      : n_(n), edges_(std::move(edges)) {
    in_neighbors_.resize(n_);
    in_edge_index_.resize(n_);
    out_degree_.assign(n_, 0);
    self_position_.assign(n_, -1);
    for (int e = 0; e < static_cast<int>(edges_.size()); ++e) {
      const auto& [j, i] = edges_[e];
      in_neighbors_[j].push_back(i);  // edges_ is sorted, so this stays sorted
      in_edge_index_[j].push_back(e);
      ++out_degree_[i];
    }
    for (int j = 0; j < n_; ++j) {
      auto it = std::find(in_neighbors_[j].begin(), in_neighbors_[j].end(), j);
      self_position_[j] = static_cast<int>(it - in_neighbors_[j].begin());
    }
  }

  int n_;
  std::vector<Edge> edges_;  // sorted (receiver, sender) pairs
  std::vector<std::vector<int>> in_neighbors_;
  std::vector<std::vector<int>> in_edge_index_;
  std::vector<int> out_degree_;
  std::vector<int> self_position_;
};

inline bool is_strongly_connected(const DirectedGraph& g) {
  return is_strongly_connected(g.vertex_count(), g.edges());
}

// Rejection-samples Erdos-Renyi digraphs (each ordered pair taken with
// probability p, self-loops always present) until one is strongly connected.
// Deterministic for a fixed (n, p, seed).
inline DirectedGraph random_strongly_connected(int n, double p, std::uint64_t seed,
                                               int max_attempts = 10000) {
  if (n < 1) throw InvalidVertex("vertex count must be at least 1");
  if (!(p > 0.0 && p <= 1.0))
    throw std::invalid_argument("edge probability must be in (0, 1]");
  const Rng base(seed);
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const Rng draw = base.stream(attempt);
    std::vector<Edge> edges;
    std::uint64_t t = 0;
    for (int i = 0; i < n; ++i) {      // sender
      for (int j = 0; j < n; ++j) {    // receiver
        if (i == j) continue;
        if (draw.uniform_at(t++) < p) edges.push_back({j, i});
      }
    }
    for (int v = 0; v < n; ++v) edges.push_back({v, v});
    if (is_strongly_connected(n, edges))
      return DirectedGraph::from_edge_list(n, std::move(edges));
  }
  throw GenerationTimeout("no strongly connected graph found within attempt cap");
}

// Column-stochastic weight matrix: entry (j, i) is 1/out_degree(i) for every
// edge (j, i), zero otherwise. Every column sums to one.
inline Eigen::MatrixXd weight_matrix(const DirectedGraph& g) {
  const int n = g.vertex_count();
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [j, i] : g.edges()) P(j, i) = 1.0 / g.out_degree(i);
  return P;
}

// --- edge-list text format -------------------------------------------------
// First line "n m", then m lines "j i" (1-indexed, j receives from i).
// Self-loops may be omitted; they are restored on load.

inline DirectedGraph load_edge_list(std::istream& in) {
  int n = 0, m = 0;
  if (!(in >> n >> m)) throw std::invalid_argument("bad edge-list header");
  std::vector<Edge> edges;
  edges.reserve(m);
  for (int k = 0; k < m; ++k) {
    int j = 0, i = 0;
    if (!(in >> j >> i)) throw std::invalid_argument("truncated edge list");
    edges.push_back({j - 1, i - 1});
  }
  return DirectedGraph::from_edge_list(n, std::move(edges));
}

inline void save_edge_list(std::ostream& out, const DirectedGraph& g) {
  out << g.vertex_count() << ' ' << g.edge_count() << '\n';
  for (const auto& [j, i] : g.edges()) out << j + 1 << ' ' << i + 1 << '\n';
}

// --- built-in graphs --------------------------------------------------------

// Directed ring: each node receives from its predecessor, plus self-loops.
inline DirectedGraph cycle_graph(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i) edges.push_back({(i + 1) % n, i});
  return DirectedGraph::from_edge_list(n, std::move(edges));
}

inline DirectedGraph complete_graph(int n) {
  std::vector<Edge> edges;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) edges.push_back({j, i});
  return DirectedGraph::from_edge_list(n, std::move(edges));
}

// Fixed 5-node strongly connected demo graph (CLI name "paper5"):
// ring 1->2->3->4->5->1 plus shortcuts 1->3 and 3->5, plus self-loops,
// where a->b means b receives from a.
inline DirectedGraph paper5_graph() {
  return DirectedGraph::from_edge_list(
      5, {{1, 0}, {2, 1}, {3, 2}, {4, 3}, {0, 4}, {2, 0}, {4, 2}});
}

// 4-node ring with one chord (1->3), plus self-loops.
inline DirectedGraph four_cycle_with_chord() {
  return DirectedGraph::from_edge_list(4, {{1, 0}, {2, 1}, {3, 2}, {0, 3}, {2, 0}});
}

}  // namespace ratiocast
