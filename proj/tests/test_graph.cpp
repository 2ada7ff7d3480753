#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <set>
#include <sstream>

#include "ratiocast/graph.hpp"

using namespace ratiocast;

namespace {

// Independent reachability oracle: Floyd-Warshall transitive closure over the
// "i transmits to j" arcs.
bool strongly_connected_closure(int n, const std::vector<Edge>& edges) {
  std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
  for (int v = 0; v < n; ++v) reach[v][v] = 1;
  for (const auto& [j, i] : edges) reach[i][j] = 1;
  for (int k = 0; k < n; ++k)
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        if (reach[a][k] && reach[k][b]) reach[a][b] = 1;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (!reach[a][b]) return false;
  return true;
}

}  // namespace

TEST_CASE("single node becomes a self-looped graph") {
  const DirectedGraph g = DirectedGraph::from_edge_list(1, {});
  CHECK(g.vertex_count() == 1);
  CHECK(g.edge_count() == 1);
  CHECK(g.out_degree(0) == 1);
  CHECK(g.in_degree(0) == 1);
  CHECK(g.has_edge(0, 0));
}

TEST_CASE("three-cycle gets self-loops and symmetric degrees") {
  const DirectedGraph g = DirectedGraph::from_edge_list(3, {{1, 0}, {2, 1}, {0, 2}});
  CHECK(g.edge_count() == 6);
  for (int v = 0; v < 3; ++v) {
    CHECK(g.out_degree(v) == 2);
    CHECK(g.in_degree(v) == 2);
    CHECK(g.has_edge(v, v));
  }
}

TEST_CASE("duplicate edges collapse") {
  const DirectedGraph g =
      DirectedGraph::from_edge_list(2, {{0, 1}, {1, 0}, {0, 1}, {0, 1}});
  CHECK(g.edge_count() == 4);  // two self-loops + the two cross edges
}

TEST_CASE("broken cycle is rejected") {
  CHECK_THROWS_AS(DirectedGraph::from_edge_list(3, {{1, 0}, {2, 1}}),
                  NotStronglyConnected);
}

TEST_CASE("out-of-range endpoints are rejected") {
  CHECK_THROWS_AS(DirectedGraph::from_edge_list(3, {{1, 3}}), InvalidVertex);
  CHECK_THROWS_AS(DirectedGraph::from_edge_list(3, {{-1, 0}}), InvalidVertex);
}

TEST_CASE("strong connectivity answers") {
  CHECK(is_strongly_connected(3, {{1, 0}, {2, 1}, {0, 2}}));
  CHECK_FALSE(is_strongly_connected(2, {{0, 0}, {1, 1}}));  // disjoint self-loops
  std::vector<Edge> complete5;
  for (int j = 0; j < 5; ++j)
    for (int i = 0; i < 5; ++i) complete5.push_back({j, i});
  CHECK(is_strongly_connected(5, complete5));
}

TEST_CASE("strong connectivity agrees with a transitive-closure oracle") {
  const Rng rng(2024);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const Rng draw = rng.stream(trial);
    const int n = 2 + static_cast<int>(draw.uniform_at(1000) * 5);
    std::vector<Edge> edges;
    std::uint64_t t = 0;
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        if (draw.uniform_at(t++) < 0.3) edges.push_back({j, i});
    CHECK(is_strongly_connected(n, edges) == strongly_connected_closure(n, edges));
    ++checked;
  }
  CHECK(checked == 300);
}

TEST_CASE("random generation is reproducible and strongly connected") {
  const DirectedGraph a = random_strongly_connected(50, 0.5, 7);
  const DirectedGraph b = random_strongly_connected(50, 0.5, 7);
  CHECK(a.edges() == b.edges());
  CHECK(is_strongly_connected(a));
  const DirectedGraph c = random_strongly_connected(50, 0.5, 8);
  CHECK(a.edges() != c.edges());
}

TEST_CASE("p = 1 forces the complete digraph") {
  const DirectedGraph g = random_strongly_connected(5, 1.0, 0);
  CHECK(g.edge_count() == 25);
}

TEST_CASE("single node random graph") {
  const DirectedGraph g = random_strongly_connected(1, 0.5, 123);
  CHECK(g.edge_count() == 1);
}

TEST_CASE("generation gives up after the attempt cap") {
  CHECK_THROWS_AS(random_strongly_connected(40, 0.01, 5, 3), GenerationTimeout);
}

TEST_CASE("weight matrix of the three-cycle") {
  const DirectedGraph g = cycle_graph(3);
  const Eigen::MatrixXd P = weight_matrix(g);
  for (int i = 0; i < 3; ++i) {
    CHECK(P(i, i) == 0.5);                 // self
    CHECK(P((i + 1) % 3, i) == 0.5);       // successor
    CHECK(std::abs(P.col(i).sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("weight matrix of the complete digraph is uniform") {
  const Eigen::MatrixXd P = weight_matrix(complete_graph(3));
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 3; ++i) CHECK(P(j, i) == doctest::Approx(1.0 / 3).epsilon(1e-15));
}

TEST_CASE("weight matrix of the bidirectional pair") {
  const DirectedGraph g = DirectedGraph::from_edge_list(2, {{0, 1}, {1, 0}});
  const Eigen::MatrixXd P = weight_matrix(g);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < 2; ++i) CHECK(P(j, i) == 0.5);
}

TEST_CASE("weight matrix columns: sums and support") {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const DirectedGraph g = random_strongly_connected(9, 0.4, seed);
    const Eigen::MatrixXd P = weight_matrix(g);
    for (int i = 0; i < 9; ++i) {
      CHECK(std::abs(P.col(i).sum() - 1.0) <= 1e-12);
      CHECK((P.col(i).array() != 0.0).count() == g.out_degree(i));
    }
  }
}

TEST_CASE("edge-list round trip through the text format") {
  const DirectedGraph g = paper5_graph();
  std::stringstream buf;
  save_edge_list(buf, g);
  const DirectedGraph back = load_edge_list(buf);
  CHECK(back.edges() == g.edges());
}

TEST_CASE("file loader restores omitted self-loops") {
  std::stringstream buf("3 3\n2 1\n3 2\n1 3\n");
  const DirectedGraph g = load_edge_list(buf);
  CHECK(g.edge_count() == 6);
  for (int v = 0; v < 3; ++v) CHECK(g.has_edge(v, v));
}

TEST_CASE("builtin five-node demo graph") {
  const DirectedGraph g = paper5_graph();
  CHECK(g.vertex_count() == 5);
  CHECK(g.edge_count() == 12);
  CHECK(is_strongly_connected(g));
  CHECK(g.out_degree(0) == 3);
  CHECK(g.out_degree(2) == 3);
  CHECK(g.max_out_degree() == 3);
}

TEST_CASE("in-neighbor bookkeeping stays aligned with edge indices") {
  const DirectedGraph g = paper5_graph();
  for (int j = 0; j < g.vertex_count(); ++j) {
    const auto& nbrs = g.in_neighbors(j);
    CHECK(std::is_sorted(nbrs.begin(), nbrs.end()));
    for (int pos = 0; pos < static_cast<int>(nbrs.size()); ++pos) {
      const int e = g.in_edge_index(j, pos);
      CHECK(g.edges()[e] == Edge{j, nbrs[pos]});
    }
    CHECK(nbrs[g.self_position(j)] == j);
  }
}
