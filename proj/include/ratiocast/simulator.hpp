#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ratiocast/csv.hpp"
#include "ratiocast/errors.hpp"
#include "ratiocast/graph.hpp"
#include "ratiocast/protocol.hpp"
#include "ratiocast/rng.hpp"

namespace ratiocast {

// Bernoulli link model: each edge delivers independently per round with
// probability q (or a per-edge override). With self_drop set, a node's own
// self-loop packet is subject to the same drop law as any other link; with it
// clear, self-loops always deliver and the node folds its own state in
// directly.
struct DropModel {
  double q = 1.0;
  std::vector<double> q_per_edge;  // optional, indexed like graph.edges()
  bool self_drop = true;

  double success_probability(int edge) const {
    return q_per_edge.empty() ? q : q_per_edge[edge];
  }

  void validate(const DirectedGraph& g) const {
    if (!q_per_edge.empty() &&
        q_per_edge.size() != static_cast<std::size_t>(g.edge_count()))
      throw std::invalid_argument("per-edge probabilities must cover every edge");
    for (int e = 0; e < g.edge_count(); ++e) {
      const double qe = success_probability(e);
      if (!(qe > 0.0 && qe <= 1.0))
        throw std::invalid_argument("link success probability must be in (0, 1]");
    }
  }
};

// One round's delivery mask, indexed like graph.edges().
struct LinkRealization {
  std::vector<std::uint8_t> on;
};

// Draws one independent Bernoulli per edge. Exactly one uniform is consumed
// per edge regardless of mode, so mask streams align across modes; forced
// self-loops in self-reliable mode simply ignore their draw.
inline LinkRealization sample_mask(const DropModel& model, const DirectedGraph& g,
                                   Rng& rng) {
  LinkRealization mask;
  mask.on.resize(g.edge_count());
  for (int e = 0; e < g.edge_count(); ++e) {
    const bool up = rng.next_uniform() < model.success_probability(e);
    mask.on[e] = (!model.self_drop && g.edge_is_self(e)) ? 1 : up;
  }
  return mask;
}

// Advances all nodes one synchronous round under an explicit delivery mask:
// every node broadcasts, then every node absorbs what the mask let through.
inline void step_with_mask(std::vector<NodeState>& states, const DirectedGraph& g,
                           const DropModel& model, const LinkRealization& mask) {
  const int n = g.vertex_count();
  std::vector<Message> msgs(n);
  for (int j = 0; j < n; ++j) msgs[j] = make_broadcast(states[j], g.out_degree(j), j);
  std::vector<const Message*> delivered;
  for (int j = 0; j < n; ++j) {
    const auto& nbrs = g.in_neighbors(j);
    delivered.assign(nbrs.size(), nullptr);
    for (int pos = 0; pos < static_cast<int>(nbrs.size()); ++pos)
      if (mask.on[g.in_edge_index(j, pos)]) delivered[pos] = &msgs[nbrs[pos]];
    receive_and_update(states[j], g, j, delivered, !model.self_drop);
  }
}

// Samples a mask and advances one round; returns the realized mask.
inline LinkRealization step(std::vector<NodeState>& states, const DirectedGraph& g,
                            const DropModel& model, Rng& rng) {
  LinkRealization mask = sample_mask(model, g, rng);
  step_with_mask(states, g, model, mask);
  return mask;
}

// Mass still sitting on a dropped link: the sender's prefix sum minus what
// the receiver has acknowledged, per edge, for the z ledger (y analogous).
inline std::vector<double> in_flight_z(const std::vector<NodeState>& states,
                                       const DirectedGraph& g,
                                       const LinkRealization& mask) {
  std::vector<double> flight(g.edge_count(), 0.0);
  for (int j = 0; j < g.vertex_count(); ++j) {
    const auto& nbrs = g.in_neighbors(j);
    for (int pos = 0; pos < static_cast<int>(nbrs.size()); ++pos) {
      const int e = g.in_edge_index(j, pos);
      if (!mask.on[e]) flight[e] = states[nbrs[pos]].sigma - states[j].tau[pos];
    }
  }
  return flight;
}

inline std::vector<double> in_flight_y(const std::vector<NodeState>& states,
                                       const DirectedGraph& g,
                                       const LinkRealization& mask) {
  std::vector<double> flight(g.edge_count(), 0.0);
  for (int j = 0; j < g.vertex_count(); ++j) {
    const auto& nbrs = g.in_neighbors(j);
    for (int pos = 0; pos < static_cast<int>(nbrs.size()); ++pos) {
      const int e = g.in_edge_index(j, pos);
      if (!mask.on[e]) flight[e] = states[nbrs[pos]].mu - states[j].nu[pos];
    }
  }
  return flight;
}

struct MassTotals {
  double y = 0.0;
  double z = 0.0;
};

// Total mass after a round: states plus whatever is parked on dropped links.
// The conservation audit checks this against the initial sums every round.
inline MassTotals total_mass(const std::vector<NodeState>& states,
                             const DirectedGraph& g, const LinkRealization& mask) {
  MassTotals m;
  for (const NodeState& s : states) {
    m.y += s.y;
    m.z += s.z;
  }
  for (double f : in_flight_y(states, g, mask)) m.y += f;
  for (double f : in_flight_z(states, g, mask)) m.z += f;
  return m;
}

inline MassTotals initial_mass(const std::vector<NodeState>& states) {
  MassTotals m;
  for (const NodeState& s : states) {
    m.y += s.y;
    m.z += s.z;
  }
  return m;
}

// Lower bound on z needed for the guaranteed-positivity argument: some node
// or link always carries at least n/(n+m) of the total mass, and a path of at
// most n-1 hops dilutes it by at most max_out_degree each hop. Intentionally
// conservative (shrinks exponentially with n).
inline double threshold_C(const DirectedGraph& g) {
  const double n = g.vertex_count();
  const double m = g.edge_count();
  return n / ((n + m) * std::pow(static_cast<double>(g.max_out_degree()),
                                 g.vertex_count() - 1));
}

// Probability floor for z exceeding threshold_C at sampled rounds: every link
// on one mass-carrying path of length at most n stays up.
inline double threshold_hit_probability_bound(const DirectedGraph& g, double q) {
  return std::pow(q, g.vertex_count());
}

struct RoundRecord {
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> ratio;          // meaningful only where defined[j] != 0
  std::vector<std::uint8_t> defined;  // z above the ratio threshold
  double mass_y = 0.0;
  double mass_z = 0.0;
};

// Full per-round record of a run. Round indices are contiguous from 0;
// masks[k] is the realization that advanced round k to k+1 (recorded only
// when requested, same for per-link in-flight mass).
struct SimulationTrace {
  int n = 0;
  std::vector<RoundRecord> rounds;
  std::vector<LinkRealization> masks;
  std::vector<std::vector<double>> flight_z;
  double max_mass_error_y = 0.0;
  double max_mass_error_z = 0.0;

  int last_round() const { return static_cast<int>(rounds.size()) - 1; }
};

struct RunOptions {
  double ratio_threshold = 0.0;
  bool record_links = false;    // keep masks and per-link in-flight mass
  bool audit = true;            // conservation check every round
  double audit_tol_per_node = 1e-9;
};

namespace detail {
inline RoundRecord snapshot(const std::vector<NodeState>& states, const MassTotals& m,
                            double threshold) {
  RoundRecord rec;
  rec.y.reserve(states.size());
  rec.z.reserve(states.size());
  rec.ratio.reserve(states.size());
  rec.defined.reserve(states.size());
  for (const NodeState& s : states) {
    rec.y.push_back(s.y);
    rec.z.push_back(s.z);
    const auto r = ratio_estimate(s, threshold);
    rec.ratio.push_back(r.value_or(std::nan("")));
    rec.defined.push_back(r.has_value() ? 1 : 0);
  }
  rec.mass_y = m.y;
  rec.mass_z = m.z;
  return rec;
}
}  // namespace detail

// Runs `rounds` synchronous rounds and records every round, auditing mass
// conservation on both ledgers as it goes. Deterministic per (inputs, seed).
inline SimulationTrace run(std::vector<NodeState> states, const DirectedGraph& g,
                           const DropModel& model, Rng rng, int rounds,
                           const RunOptions& opts = RunOptions{}) {
  if (rounds < 1) throw std::invalid_argument("round count must be at least 1");
  model.validate(g);
  SimulationTrace trace;
  trace.n = g.vertex_count();
  trace.rounds.reserve(rounds + 1);
  const MassTotals m0 = initial_mass(states);
  trace.rounds.push_back(detail::snapshot(states, m0, opts.ratio_threshold));
  const double tol = opts.audit_tol_per_node * g.vertex_count();
  for (int k = 0; k < rounds; ++k) {
    LinkRealization mask = step(states, g, model, rng);
    const MassTotals m = total_mass(states, g, mask);
    const double err_y = std::abs(m.y - m0.y);
    const double err_z = std::abs(m.z - m0.z);
    trace.max_mass_error_y = std::max(trace.max_mass_error_y, err_y);
    trace.max_mass_error_z = std::max(trace.max_mass_error_z, err_z);
    if (opts.audit && (err_y > tol || err_z > tol))
      throw MassLeak("mass audit failed at round " + std::to_string(k + 1) +
                     ": y deviation " + format_double(err_y) + ", z deviation " +
                     format_double(err_z));
    trace.rounds.push_back(detail::snapshot(states, m, opts.ratio_threshold));
    if (opts.record_links) {
      trace.flight_z.push_back(in_flight_z(states, g, mask));
      trace.masks.push_back(std::move(mask));
    }
  }
  return trace;
}

// --- trace serialization ----------------------------------------------------

// Rows: round,node,y,z,ratio,defined,mass_total (mass_total is the z ledger).
inline void write_trace_csv(std::ostream& out, const SimulationTrace& trace) {
  out << "round,node,y,z,ratio,defined,mass_total\n";
  for (std::size_t k = 0; k < trace.rounds.size(); ++k) {
    const RoundRecord& rec = trace.rounds[k];
    for (int j = 0; j < trace.n; ++j) {
      out << k << ',' << j + 1 << ',' << format_double(rec.y[j]) << ','
          << format_double(rec.z[j]) << ',' << format_double(rec.ratio[j]) << ','
          << int(rec.defined[j]) << ',' << format_double(rec.mass_z) << '\n';
    }
  }
}

// Defined ratio points only; undefined rounds leave gaps.
inline void write_ratios_csv(std::ostream& out, const SimulationTrace& trace) {
  out << "round,node,ratio\n";
  for (std::size_t k = 0; k < trace.rounds.size(); ++k) {
    const RoundRecord& rec = trace.rounds[k];
    for (int j = 0; j < trace.n; ++j)
      if (rec.defined[j])
        out << k << ',' << j + 1 << ',' << format_double(rec.ratio[j]) << '\n';
  }
}

// Rows: round,j,i,x with 1-indexed vertices; requires record_links.
inline void write_masks_csv(std::ostream& out, const SimulationTrace& trace,
                            const DirectedGraph& g) {
  out << "round,j,i,x\n";
  for (std::size_t k = 0; k < trace.masks.size(); ++k)
    for (int e = 0; e < g.edge_count(); ++e)
      out << k << ',' << g.edges()[e].first + 1 << ',' << g.edges()[e].second + 1
          << ',' << int(trace.masks[k].on[e]) << '\n';
}

}  // namespace ratiocast
