#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ratiocast/csv.hpp"
#include "ratiocast/simulator.hpp"

namespace ratiocast {

// Box-constrained resource coordination instance: each node can contribute
// between pi_min and pi_max units; the leaders inject a total demand rho_d.
struct ResourceParams {
  std::vector<double> pi_min, pi_max;
  double rho_d = 0.0;
  std::vector<int> leaders;

  void validate() const {
    if (pi_min.size() != pi_max.size() || pi_min.empty())
      throw std::invalid_argument("capacity vectors must be nonempty and equal length");
    for (std::size_t j = 0; j < pi_min.size(); ++j)
      if (pi_min[j] > pi_max[j])
        throw std::invalid_argument("pi_min exceeds pi_max at node " +
                                    std::to_string(j + 1));
    if (leaders.empty()) throw std::invalid_argument("leader set must be nonempty");
    for (int j : leaders)
      if (j < 0 || j >= static_cast<int>(pi_min.size()))
        throw std::invalid_argument("leader outside vertex range");
  }

  double min_total() const {
    double s = 0;
    for (double v : pi_min) s += v;
    return s;
  }
  double max_total() const {
    double s = 0;
    for (double v : pi_max) s += v;
    return s;
  }
  double range_total() const { return max_total() - min_total(); }
  bool feasible() const { return min_total() <= rho_d && rho_d <= max_total(); }

  // Limiting value of the per-node ratio under this initialization.
  double target_ratio() const { return (rho_d - min_total()) / range_total(); }
};

// Outcome of convergence detection on the per-node ratio sequence. The raw y
// and z values never settle; only the ratio does, and only at rounds where it
// is defined, so agreement is judged on defined samples against the
// cross-node median of a sliding window.
struct ConvergenceReport {
  bool converged = false;
  int first_converged_round = -1;
  double consensus = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> estimate;     // last defined ratio per node
  std::vector<int> estimate_round;  // round it was observed (-1 if never)
  double tail_max_deviation = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {
inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}
}  // namespace detail

// Declares convergence at the first round from which every sliding window of
// `window` rounds keeps all defined ratios within tol of the window's
// cross-node median. Undefined rounds are skipped, so sparse traces (heavy
// packet loss) are handled; a median-based criterion tolerates a node with
// long undefined gaps.
inline ConvergenceReport average_estimate(const SimulationTrace& trace,
                                          int window = 50, double tol = 1e-6) {
  ConvergenceReport rep;
  const int last = trace.last_round();
  const int n = trace.n;
  rep.estimate.assign(n, std::numeric_limits<double>::quiet_NaN());
  rep.estimate_round.assign(n, -1);
  for (int k = 0; k <= last; ++k)
    for (int j = 0; j < n; ++j)
      if (trace.rounds[k].defined[j]) {
        rep.estimate[j] = trace.rounds[k].ratio[j];
        rep.estimate_round[j] = k;
      }
  for (int j = 0; j < n; ++j)
    if (rep.estimate_round[j] < 0) return rep;  // a node never reported
  if (last + 1 < window) return rep;

  // ok[e] = the window ending at round e agrees within tol of its median.
  auto window_ok = [&](int end, double* max_dev) {
    std::vector<double> samples;
    for (int k = end - window + 1; k <= end; ++k)
      for (int j = 0; j < n; ++j)
        if (trace.rounds[k].defined[j]) samples.push_back(trace.rounds[k].ratio[j]);
    if (samples.empty()) return false;
    const double med = detail::median(samples);
    double dev = 0.0;
    for (double s : samples) dev = std::max(dev, std::abs(s - med));
    if (max_dev) *max_dev = dev;
    return dev <= tol;
  };

  int first_bad_after = window - 1;  // smallest e such that all e' >= e are ok
  for (int e = window - 1; e <= last; ++e)
    if (!window_ok(e, nullptr)) first_bad_after = e + 1;
  if (first_bad_after > last) return rep;

  std::vector<double> final_samples;
  for (int k = last - window + 1; k <= last; ++k)
    for (int j = 0; j < n; ++j)
      if (trace.rounds[k].defined[j])
        final_samples.push_back(trace.rounds[k].ratio[j]);
  rep.consensus = detail::median(final_samples);
  window_ok(last, &rep.tail_max_deviation);
  rep.converged = true;
  rep.first_converged_round = std::max(0, first_bad_after - window + 1);
  return rep;
}

struct AllocationReport {
  bool converged = false;
  bool feasible = false;
  std::vector<double> pi;
  double total = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();
  std::string diagnostics;
};

// Maps a converged trace of the coordination-initialized iteration to the
// per-node contributions pi_j = pi_min_j + ratio_j * (pi_max_j - pi_min_j)
// and verifies the box constraints and the demand total. A ratio outside
// [0, 1] signals that the demand lies outside the capacity window, which is
// exactly how nodes detect infeasibility.
inline AllocationReport resource_allocation(const SimulationTrace& trace,
                                            const ResourceParams& params,
                                            int window = 50, double tol = 1e-6) {
  params.validate();
  AllocationReport out;
  const int n = static_cast<int>(params.pi_min.size());
  std::ostringstream diag;
  diag << "sum(pi_min)=" << format_double(params.min_total())
       << " sum(pi_max)=" << format_double(params.max_total())
       << " rho_d=" << format_double(params.rho_d);
  out.diagnostics = diag.str();

  if (params.range_total() == 0.0) {
    // Every capacity is pinned; nothing to iterate.
    out.pi = params.pi_min;
    out.converged = true;
    for (double v : out.pi) out.total += v;
    out.feasible = std::abs(out.total - params.rho_d) <= n * tol;
    return out;
  }

  const ConvergenceReport rep = average_estimate(trace, window, tol);
  out.converged = rep.converged;
  if (!rep.converged) return out;
  out.ratio = rep.consensus;
  out.pi.resize(n);
  for (int j = 0; j < n; ++j) {
    const double range = params.pi_max[j] - params.pi_min[j];
    // Zero-range nodes are pinned to their bound; their own ratio never
    // matters because it is multiplied by zero.
    out.pi[j] = params.pi_min[j] + (range == 0.0 ? 0.0 : rep.estimate[j] * range);
    out.total += out.pi[j];
  }
  const double slack = n * tol;
  bool ok = out.ratio >= -slack && out.ratio <= 1.0 + slack;
  for (int j = 0; j < n; ++j)
    ok = ok && out.pi[j] >= params.pi_min[j] - slack &&
         out.pi[j] <= params.pi_max[j] + slack;
  ok = ok && std::abs(out.total - params.rho_d) <= slack;
  out.feasible = ok;
  return out;
}

// Rows: node,estimate,first_converged_round,tail_deviation.
inline void write_report_csv(std::ostream& out, const ConvergenceReport& rep) {
  out << "node,estimate,first_converged_round,tail_deviation\n";
  for (std::size_t j = 0; j < rep.estimate.size(); ++j)
    out << j + 1 << ',' << format_double(rep.estimate[j]) << ','
        << rep.first_converged_round << ',' << format_double(rep.tail_max_deviation)
        << '\n';
}

inline void write_allocation_csv(std::ostream& out, const AllocationReport& rep,
                                 const ResourceParams& params) {
  out << "node,pi,pi_min,pi_max\n";
  for (std::size_t j = 0; j < rep.pi.size(); ++j)
    out << j + 1 << ',' << format_double(rep.pi[j]) << ','
        << format_double(params.pi_min[j]) << ',' << format_double(params.pi_max[j])
        << '\n';
}

}  // namespace ratiocast
