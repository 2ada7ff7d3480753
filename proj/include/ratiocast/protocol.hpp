#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ratiocast/errors.hpp"
#include "ratiocast/graph.hpp"

namespace ratiocast {

// One broadcast per node per round, tagged with the sender's identity and
// carrying the sender's cumulative broadcast masses for both iterations.
struct Message {
  int sender = -1;
  double mu = 0.0;     // cumulative broadcast mass, iteration 1
  double sigma = 0.0;  // cumulative broadcast mass, iteration 2
};

// Per-node protocol state for the drop-tolerant double iteration.
//
// y and z are the two internal states; mu and sigma are the running prefix
// sums of y/out_degree and z/out_degree that have been broadcast so far.
// nu[p]/tau[p] hold the latest cumulative mass received from the in-neighbor
// at position p (ascending vertex order, matching graph.in_neighbors), and
// nu_prev/tau_prev the value one delivery earlier. Differences of these
// prefix sums recover exactly the state increments missed while a link was
// down, which is what makes the iteration immune to packet drops.
struct NodeState {
  double y = 0.0;
  double z = 0.0;
  double mu = 0.0;
  double sigma = 0.0;
  std::vector<double> nu, nu_prev;
  std::vector<double> tau, tau_prev;
};

// States with given initial y and z values and all mass ledgers zeroed.
inline std::vector<NodeState> init_states(const std::vector<double>& y0,
                                          const std::vector<double>& z0,
                                          const DirectedGraph& g) {
  const int n = g.vertex_count();
  std::vector<NodeState> states(n);
  for (int j = 0; j < n; ++j) {
    states[j].y = y0[j];
    states[j].z = z0[j];
    const int deg = g.in_degree(j);
    states[j].nu.assign(deg, 0.0);
    states[j].nu_prev.assign(deg, 0.0);
    states[j].tau.assign(deg, 0.0);
    states[j].tau_prev.assign(deg, 0.0);
  }
  return states;
}

// Average consensus: y starts at the local values, z at all ones, so the
// per-node ratio y/z converges to the mean of the values.
inline std::vector<NodeState> init_average_consensus(const std::vector<double>& values,
                                                     const DirectedGraph& g) {
  return init_states(values, std::vector<double>(g.vertex_count(), 1.0), g);
}

// Resource coordination: leaders absorb an equal share of the demand, every
// node offsets by its lower capacity, and z carries the capacity ranges. The
// limiting ratio then maps each node to its feasible contribution.
inline std::vector<NodeState> init_resource_coordination(
    const std::vector<double>& pi_min, const std::vector<double>& pi_max,
    double rho_d, const std::vector<int>& leader_set, const DirectedGraph& g) {
  const int n = g.vertex_count();
  if (leader_set.empty()) throw std::invalid_argument("leader set must be nonempty");
  std::vector<double> y0(n), z0(n);
  for (int j = 0; j < n; ++j) {
    y0[j] = -pi_min[j];
    z0[j] = pi_max[j] - pi_min[j];
  }
  const double share = rho_d / static_cast<double>(leader_set.size());
  for (int j : leader_set) {
    if (j < 0 || j >= n) throw InvalidVertex("leader outside vertex range");
    y0[j] = share - pi_min[j];
  }
  return init_states(y0, z0, g);
}

// Folds this round's state into the prefix sums and returns the broadcast.
// The same message goes to every out-neighbor.
inline Message make_broadcast(NodeState& s, int out_degree, int sender) {
  s.mu += s.y / out_degree;
  s.sigma += s.z / out_degree;
  return Message{sender, s.mu, s.sigma};
}

// Applies one round of received masses to node `node`. `delivered` is aligned
// with g.in_neighbors(node); a null entry means the link dropped this round.
//
// When self_reliable is set, the node's own contribution y/out_degree is
// added directly instead of through the received-mass ledger (the self-loop
// must then always deliver); otherwise the self-loop is handled like any
// other link and may drop.
inline void receive_and_update(NodeState& s, const DirectedGraph& g, int node,
                               const std::vector<const Message*>& delivered,
                               bool self_reliable = false) {
  const int deg = g.in_degree(node);
  const int self_pos = g.self_position(node);
  double y_next = 0.0;
  double z_next = 0.0;
  for (int pos = 0; pos < deg; ++pos) {
    s.nu_prev[pos] = s.nu[pos];
    s.tau_prev[pos] = s.tau[pos];
    if (const Message* m = delivered[pos]) {
      s.nu[pos] = m->mu;
      s.tau[pos] = m->sigma;
    }
    if (self_reliable && pos == self_pos) {
      // s.y / s.z still hold this round's state here; the broadcast step only
      // touched the prefix sums.
      y_next += s.y / g.out_degree(node);
      z_next += s.z / g.out_degree(node);
    } else {
      y_next += s.nu[pos] - s.nu_prev[pos];
      z_next += s.tau[pos] - s.tau_prev[pos];
    }
  }
  s.y = y_next;
  s.z = z_next;
}

// Map-keyed variant: `delivered` maps sender id to message. Senders that are
// not in-neighbors of `node` are rejected.
inline void receive_and_update(NodeState& s, const DirectedGraph& g, int node,
                               const std::map<int, Message>& delivered,
                               bool self_reliable = false) {
  const auto& nbrs = g.in_neighbors(node);
  std::vector<const Message*> by_pos(nbrs.size(), nullptr);
  for (const auto& [sender, msg] : delivered) {
    auto it = std::lower_bound(nbrs.begin(), nbrs.end(), sender);
    if (it == nbrs.end() || *it != sender)
      throw UnknownSender("message from node " + std::to_string(sender + 1) +
                          " which is not an in-neighbor of node " +
                          std::to_string(node + 1));
    by_pos[it - nbrs.begin()] = &msg;
  }
  receive_and_update(s, g, node, by_pos, self_reliable);
}

// Ratio estimate y/z, defined only while z exceeds the threshold.
inline std::optional<double> ratio_estimate(const NodeState& s, double threshold = 0.0) {
  if (s.z > threshold) return s.y / s.z;
  return std::nullopt;
}

// One synchronous round of the drop-free double iteration: every node sums
// its in-neighbors' states weighted by the senders' out-degrees. Summation is
// in ascending vertex order; the drop-tolerant protocol with every link up
// reproduces these trajectories.
inline void reliable_iteration_step(const DirectedGraph& g, std::vector<double>& y) {
  std::vector<double> next(y.size(), 0.0);
  for (int j = 0; j < g.vertex_count(); ++j)
    for (int i : g.in_neighbors(j)) next[j] += y[i] / g.out_degree(i);
  y = std::move(next);
}

}  // namespace ratiocast
