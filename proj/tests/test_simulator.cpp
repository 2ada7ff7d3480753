#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ratiocast/graph.hpp"
#include "ratiocast/protocol.hpp"
#include "ratiocast/simulator.hpp"

using namespace ratiocast;

namespace {

LinkRealization all_on(const DirectedGraph& g) {
  LinkRealization m;
  m.on.assign(g.edge_count(), 1);
  return m;
}

LinkRealization all_off(const DirectedGraph& g) {
  LinkRealization m;
  m.on.assign(g.edge_count(), 0);
  return m;
}

}  // namespace

TEST_CASE("q = 1 gives the all-ones mask") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 1.0;
  Rng rng(5);
  const LinkRealization mask = sample_mask(model, g, rng);
  for (auto b : mask.on) CHECK(b == 1);
}

TEST_CASE("empirical delivery rate matches q") {
  const DirectedGraph g = DirectedGraph::from_edge_list(2, {{0, 1}, {1, 0}});
  DropModel model;
  model.q = 0.5;
  Rng rng(77);
  const int edge = g.edge_index(0, 1);
  long hits = 0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) hits += sample_mask(model, g, rng).on[edge];
  const double mean = static_cast<double>(hits) / draws;
  CHECK(std::abs(mean - 0.5) <= 0.005);  // three binomial standard errors
}

TEST_CASE("self-reliable mode forces self-loops on") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.1;
  model.self_drop = false;
  Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    const LinkRealization mask = sample_mask(model, g, rng);
    for (int e = 0; e < g.edge_count(); ++e)
      if (g.edge_is_self(e)) CHECK(mask.on[e] == 1);
  }
}

TEST_CASE("per-edge probabilities are honored") {
  const DirectedGraph g = DirectedGraph::from_edge_list(2, {{0, 1}, {1, 0}});
  DropModel model;
  model.q = 1.0;
  model.q_per_edge.assign(g.edge_count(), 1.0);
  model.q_per_edge[g.edge_index(0, 1)] = 0.2;
  Rng rng(11);
  long hits = 0;
  for (int k = 0; k < 50000; ++k) {
    const LinkRealization mask = sample_mask(model, g, rng);
    hits += mask.on[g.edge_index(0, 1)];
    CHECK(mask.on[g.edge_index(1, 0)] == 1);
  }
  CHECK(std::abs(hits / 50000.0 - 0.2) <= 3 * std::sqrt(0.2 * 0.8 / 50000));
}

TEST_CASE("bad probabilities are rejected") {
  const DirectedGraph g = cycle_graph(3);
  DropModel model;
  model.q = 0.0;
  CHECK_THROWS_AS(model.validate(g), std::invalid_argument);
  model.q = 1.5;
  CHECK_THROWS_AS(model.validate(g), std::invalid_argument);
}

TEST_CASE("one reliable step equals the weight-matrix product") {
  const DirectedGraph g = cycle_graph(3);
  const Eigen::MatrixXd P = weight_matrix(g);
  auto states = init_average_consensus({-4, 5, 6}, g);
  Eigen::Vector3d y0(-4, 5, 6);
  DropModel model;  // q = 1
  step_with_mask(states, g, model, all_on(g));
  const Eigen::Vector3d y1 = P * y0;
  for (int j = 0; j < 3; ++j)
    CHECK(states[j].y == doctest::Approx(y1(j)).epsilon(1e-15));
}

TEST_CASE("an all-off mask parks all mass in flight") {
  const DirectedGraph g = paper5_graph();
  auto states = init_average_consensus({-4, 5, 6, -3, 1}, g);
  DropModel model;
  model.q = 0.5;
  const LinkRealization mask = all_off(g);
  step_with_mask(states, g, model, mask);
  for (const auto& s : states) {
    CHECK(s.y == 0.0);
    CHECK(s.z == 0.0);
  }
  const MassTotals m = total_mass(states, g, mask);
  CHECK(m.y == doctest::Approx(5.0).epsilon(1e-14));  // sum of initial values
  CHECK(m.z == doctest::Approx(5.0).epsilon(1e-14));
}

TEST_CASE("mass is conserved for every mask pattern") {
  const DirectedGraph g = paper5_graph();
  auto states = init_average_consensus({-4, 5, 6, -3, 1}, g);
  DropModel model;
  model.q = 0.3;
  Rng rng(21);
  const MassTotals m0 = initial_mass(states);
  CHECK(m0.z == 5.0);
  for (int k = 0; k < 400; ++k) {
    const LinkRealization mask = step(states, g, model, rng);
    const MassTotals m = total_mass(states, g, mask);
    CHECK(std::abs(m.z - m0.z) <= 1e-9 * 5);
    CHECK(std::abs(m.y - m0.y) <= 1e-9 * 5);
  }
}

TEST_CASE("z stays nonnegative when it starts positive") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.2;
  SimulationTrace trace = run(init_average_consensus({-4, 5, 6, -3, 1}, g), g,
                              model, Rng(31), 2000);
  for (const auto& rec : trace.rounds)
    for (double z : rec.z) CHECK(z >= 0.0);
}

TEST_CASE("a restored link delivers the whole withheld backlog at once") {
  const DirectedGraph g = DirectedGraph::from_edge_list(2, {{0, 1}, {1, 0}});
  auto states = init_average_consensus({3, 7}, g);
  DropModel model;
  model.q = 0.5;
  const int e01 = g.edge_index(0, 1);  // node 0 listening to node 1
  const auto& nbrs = g.in_neighbors(0);
  const int pos = static_cast<int>(std::find(nbrs.begin(), nbrs.end(), 1) -
                                   nbrs.begin());
  const MassTotals m0 = initial_mass(states);
  for (int k = 0; k < 8; ++k) {
    LinkRealization mask = all_on(g);
    if (k >= 2 && k <= 4) mask.on[e01] = 0;  // three-round outage
    step_with_mask(states, g, model, mask);
    const MassTotals m = total_mass(states, g, mask);
    CHECK(std::abs(m.z - m0.z) <= 1e-12);
    CHECK(std::abs(m.y - m0.y) <= 1e-12);
    if (k >= 5) CHECK(states[0].nu[pos] == states[1].mu);  // fully caught up
    if (k >= 2 && k <= 4) CHECK(states[0].nu[pos] != states[1].mu);
  }
}

TEST_CASE("identical seeds give bit-identical traces") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.4;
  const auto make = [&] {
    return run(init_average_consensus({-4, 5, 6, -3, 1}, g), g, model, Rng(1234),
               300);
  };
  const SimulationTrace a = make();
  const SimulationTrace b = make();
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t k = 0; k < a.rounds.size(); ++k) {
    CHECK(a.rounds[k].y == b.rounds[k].y);
    CHECK(a.rounds[k].z == b.rounds[k].z);
    CHECK(a.rounds[k].mass_z == b.rounds[k].mass_z);
  }
}

TEST_CASE("reliable run reduces to the drop-free iteration") {
  const DirectedGraph g = cycle_graph(3);
  DropModel model;  // q = 1
  SimulationTrace trace =
      run(init_average_consensus({1, 0, 0}, g), g, model, Rng(9), 40);
  std::vector<double> y{1, 0, 0};
  for (int k = 1; k <= 40; ++k) {
    reliable_iteration_step(g, y);
    for (int j = 0; j < 3; ++j) CHECK(trace.rounds[k].y[j] == y[j]);
  }
}

TEST_CASE("near-reliable averaging settles on the true mean") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.99;
  SimulationTrace trace = run(init_average_consensus({-4, 5, 6, -3, 1}, g), g,
                              model, Rng(42), 500);
  for (int k = 300; k <= 500; ++k)
    for (int j = 0; j < 5; ++j)
      if (trace.rounds[k].defined[j])
        CHECK(std::abs(trace.rounds[k].ratio[j] - 1.0) <= 1e-3);
}

TEST_CASE("heavy loss leaves gaps but correct defined ratios") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.1;
  SimulationTrace trace = run(init_average_consensus({-4, 5, 6, -3, 1}, g), g,
                              model, Rng(7), 3000);
  int undefined_rounds = 0;
  for (const auto& rec : trace.rounds)
    for (int j = 0; j < 5; ++j)
      if (!rec.defined[j]) ++undefined_rounds;
  CHECK(undefined_rounds > 0);
  for (int k = 2500; k <= 3000; ++k)
    for (int j = 0; j < 5; ++j)
      if (trace.rounds[k].defined[j])
        CHECK(std::abs(trace.rounds[k].ratio[j] - 1.0) <= 1e-2);
}

TEST_CASE("raw states keep fluctuating while the ratio settles") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.5;
  SimulationTrace trace = run(init_average_consensus({-4, 5, 6, -3, 1}, g), g,
                              model, Rng(12), 2000);
  double state_move = 0.0, ratio_move = 0.0;
  for (int k = 1900; k < 2000; ++k)
    for (int j = 0; j < 5; ++j) {
      state_move = std::max(
          state_move, std::abs(trace.rounds[k + 1].y[j] - trace.rounds[k].y[j]));
      if (trace.rounds[k].defined[j] && trace.rounds[k + 1].defined[j])
        ratio_move =
            std::max(ratio_move, std::abs(trace.rounds[k + 1].ratio[j] -
                                          trace.rounds[k].ratio[j]));
    }
  CHECK(state_move > 1e-2);   // the individual values never converge
  CHECK(ratio_move <= 1e-9);  // their ratio does
}

TEST_CASE("recorded masks and in-flight mass are consistent") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.4;
  RunOptions opts;
  opts.record_links = true;
  SimulationTrace trace = run(init_average_consensus({-4, 5, 6, -3, 1}, g), g,
                              model, Rng(8), 50, opts);
  REQUIRE(trace.masks.size() == 50);
  REQUIRE(trace.flight_z.size() == 50);
  for (int k = 0; k < 50; ++k) {
    REQUIRE(trace.flight_z[k].size() == static_cast<std::size_t>(g.edge_count()));
    double state_sum = 0.0, flight_sum = 0.0;
    for (double z : trace.rounds[k + 1].z) state_sum += z;
    for (int e = 0; e < g.edge_count(); ++e) {
      if (trace.masks[k].on[e]) CHECK(trace.flight_z[k][e] == 0.0);
      flight_sum += trace.flight_z[k][e];
    }
    CHECK(state_sum + flight_sum == doctest::Approx(5.0).epsilon(1e-12));
  }
}

TEST_CASE("state alignment decays below 1e-6 and stays there") {
  const DirectedGraph g = paper5_graph();
  DropModel model;
  model.q = 0.5;
  SimulationTrace trace = run(init_average_consensus({-4, 5, 6, -3, 1}, g), g,
                              model, Rng(3), 2500);
  const double alpha = 5.0 / 5.0;  // sum z0 / sum y0
  int horizon = -1;
  for (int k = 0; k <= trace.last_round(); ++k) {
    double dev = 0.0;
    for (int j = 0; j < 5; ++j)
      dev = std::max(dev,
                     std::abs(trace.rounds[k].z[j] - alpha * trace.rounds[k].y[j]));
    if (dev < 1e-6) {
      if (horizon < 0) horizon = k;
    } else {
      horizon = -1;  // must stay below once below
    }
  }
  REQUIRE(horizon >= 0);
  CHECK(horizon < 1500);
}

TEST_CASE("z clears the positivity threshold often at sampled rounds") {
  const DirectedGraph g = cycle_graph(3);
  DropModel model;
  model.q = 0.5;
  const double C = threshold_C(g);
  const double bound = threshold_hit_probability_bound(g, model.q) / 2.0;
  SimulationTrace trace =
      run(init_average_consensus({2, -1, 5}, g), g, model, Rng(17), 30000);
  const int n = 3;
  for (int j = 0; j < n; ++j) {
    int hits = 0, samples = 0;
    for (int k = n; k <= trace.last_round(); k += n) {
      ++samples;
      if (trace.rounds[k].z[j] >= C) ++hits;
    }
    CHECK(static_cast<double>(hits) / samples >= bound);
  }
}

TEST_CASE("positivity threshold closed forms") {
  CHECK(threshold_C(cycle_graph(3)) == doctest::Approx(1.0 / 12).epsilon(1e-15));
  CHECK(threshold_C(DirectedGraph::from_edge_list(1, {})) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(threshold_C(complete_graph(5)) ==
        doctest::Approx(5.0 / (30 * 625)).epsilon(1e-15));
  CHECK(threshold_hit_probability_bound(cycle_graph(3), 0.5) ==
        doctest::Approx(0.125).epsilon(1e-15));
}

TEST_CASE("trace round indices are contiguous from zero") {
  const DirectedGraph g = cycle_graph(3);
  DropModel model;
  model.q = 0.8;
  SimulationTrace trace =
      run(init_average_consensus({1, 2, 3}, g), g, model, Rng(2), 25);
  CHECK(trace.rounds.size() == 26);
  CHECK(trace.last_round() == 25);
  CHECK(trace.rounds[0].y[0] == 1.0);
  CHECK(trace.rounds[0].mass_z == 3.0);
}
