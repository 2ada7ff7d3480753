#pragma once

#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "ratiocast/moments.hpp"
#include "ratiocast/protocol.hpp"
#include "ratiocast/simulator.hpp"

namespace ratiocast {

// Sample means over independent replicas of the node-state vectors and their
// outer products, with per-component standard errors, for rounds 0..k_max.
struct EmpiricalMoments {
  int k_max = 0;
  int trials = 0;
  std::vector<Eigen::VectorXd> ybar, zbar;
  std::vector<Eigen::MatrixXd> Phi, Lambda, Upsilon;
  std::vector<Eigen::VectorXd> ybar_se, zbar_se;
  std::vector<Eigen::MatrixXd> Phi_se, Lambda_se, Upsilon_se;
};

namespace detail {

// Per-block accumulators for a contiguous range of replicas.
struct MomentSums {
  std::vector<Eigen::VectorXd> sy, sy2, sz, sz2;
  std::vector<Eigen::MatrixXd> syy, syy2, szz, szz2, syz, syz2;

  MomentSums(int rows, int n)
      : sy(rows, Eigen::VectorXd::Zero(n)),
        sy2(sy),
        sz(sy),
        sz2(sy),
        syy(rows, Eigen::MatrixXd::Zero(n, n)),
        syy2(syy),
        szz(syy),
        szz2(syy),
        syz(syy),
        syz2(syy) {}

  void merge(const MomentSums& other) {
    for (std::size_t k = 0; k < sy.size(); ++k) {
      sy[k] += other.sy[k];
      sy2[k] += other.sy2[k];
      sz[k] += other.sz[k];
      sz2[k] += other.sz2[k];
      syy[k] += other.syy[k];
      syy2[k] += other.syy2[k];
      szz[k] += other.szz[k];
      szz2[k] += other.szz2[k];
      syz[k] += other.syz[k];
      syz2[k] += other.syz2[k];
    }
  }
};

inline void accumulate_replicas(const DirectedGraph& g, const DropModel& model,
                                const std::vector<double>& y0,
                                const std::vector<double>& z0, int first,
                                int last, int k_max, const Rng& rng,
                                MomentSums& sums) {
  const int n = g.vertex_count();
  Eigen::VectorXd y(n), z(n);
  for (int r = first; r < last; ++r) {
    std::vector<NodeState> states = init_states(y0, z0, g);
    Rng stream = rng.stream(r);
    for (int k = 0; k <= k_max; ++k) {
      if (k > 0) step(states, g, model, stream);
      for (int j = 0; j < n; ++j) {
        y(j) = states[j].y;
        z(j) = states[j].z;
      }
      const Eigen::MatrixXd yy = y * y.transpose();
      const Eigen::MatrixXd zz = z * z.transpose();
      const Eigen::MatrixXd yz = y * z.transpose();
      sums.sy[k] += y;
      sums.sy2[k] += y.cwiseProduct(y);
      sums.sz[k] += z;
      sums.sz2[k] += z.cwiseProduct(z);
      sums.syy[k] += yy;
      sums.syy2[k] += yy.cwiseProduct(yy);
      sums.szz[k] += zz;
      sums.szz2[k] += zz.cwiseProduct(zz);
      sums.syz[k] += yz;
      sums.syz2[k] += yz.cwiseProduct(yz);
    }
  }
}

}  // namespace detail

// Runs `trials` independent replicas with split random streams and estimates
// the first and second node-state moments empirically. Restricted to uniform
// q and self-drop mode, the regime the analytical recursions cover.
//
// Replicas fan out across worker threads in a fixed number of contiguous
// blocks merged in block order, so the result is bit-identical regardless of
// scheduling or core count.
inline EmpiricalMoments monte_carlo_moments(const DirectedGraph& g,
                                            const DropModel& model,
                                            const std::vector<double>& y0,
                                            const std::vector<double>& z0,
                                            int trials, int k_max, const Rng& rng) {
  if (!model.self_drop)
    throw std::invalid_argument("moment cross-validation requires self-drop mode");
  if (!model.q_per_edge.empty())
    throw std::invalid_argument("moment cross-validation requires uniform q");
  model.validate(g);
  const int n = g.vertex_count();
  const int rows = k_max + 1;

  constexpr int kBlocks = 8;  // fixed partition, independent of hardware
  std::vector<detail::MomentSums> partial(kBlocks, detail::MomentSums(rows, n));
  {
    std::vector<std::thread> workers;
    workers.reserve(kBlocks);
    for (int b = 0; b < kBlocks; ++b) {
      const int first = static_cast<int>(static_cast<long>(trials) * b / kBlocks);
      const int last =
          static_cast<int>(static_cast<long>(trials) * (b + 1) / kBlocks);
      workers.emplace_back([&, first, last, b] {
        detail::accumulate_replicas(g, model, y0, z0, first, last, k_max, rng,
                                    partial[b]);
      });
    }
    for (std::thread& t : workers) t.join();
  }
  detail::MomentSums total(rows, n);
  for (int b = 0; b < kBlocks; ++b) total.merge(partial[b]);
  const auto& sy = total.sy;
  const auto& sy2 = total.sy2;
  const auto& sz = total.sz;
  const auto& sz2 = total.sz2;
  const auto& syy = total.syy;
  const auto& syy2 = total.syy2;
  const auto& szz = total.szz;
  const auto& szz2 = total.szz2;
  const auto& syz = total.syz;
  const auto& syz2 = total.syz2;

  EmpiricalMoments em;
  em.k_max = k_max;
  em.trials = trials;
  auto vec_mean_se = [trials](const Eigen::VectorXd& sum, const Eigen::VectorXd& sq,
                              Eigen::VectorXd& mean, Eigen::VectorXd& se) {
    mean = sum / trials;
    se = ((sq / trials - mean.cwiseProduct(mean)) / trials).cwiseMax(0.0).cwiseSqrt();
  };
  auto mat_mean_se = [trials](const Eigen::MatrixXd& sum, const Eigen::MatrixXd& sq,
                              Eigen::MatrixXd& mean, Eigen::MatrixXd& se) {
    mean = sum / trials;
    se = ((sq / trials - mean.cwiseProduct(mean)) / trials).cwiseMax(0.0).cwiseSqrt();
  };
  em.ybar.resize(rows);
  em.zbar.resize(rows);
  em.Phi.resize(rows);
  em.Lambda.resize(rows);
  em.Upsilon.resize(rows);
  em.ybar_se.resize(rows);
  em.zbar_se.resize(rows);
  em.Phi_se.resize(rows);
  em.Lambda_se.resize(rows);
  em.Upsilon_se.resize(rows);
  for (int k = 0; k <= k_max; ++k) {
    vec_mean_se(sy[k], sy2[k], em.ybar[k], em.ybar_se[k]);
    vec_mean_se(sz[k], sz2[k], em.zbar[k], em.zbar_se[k]);
    mat_mean_se(syy[k], syy2[k], em.Phi[k], em.Phi_se[k]);
    mat_mean_se(szz[k], szz2[k], em.Lambda[k], em.Lambda_se[k]);
    mat_mean_se(syz[k], syz2[k], em.Upsilon[k], em.Upsilon_se[k]);
  }
  return em;
}

struct MomentMismatch {
  std::string quantity;
  int k = 0, i = 0, j = 0;
  double analytic = 0.0, empirical = 0.0, se = 0.0;
};

struct MomentComparison {
  int components = 0;
  std::vector<MomentMismatch> failures;
  double fraction_ok = 1.0;
};

// Checks every empirical component at rounds 1..k_max against the analytical
// recursions within `sigmas` standard errors (plus a small absolute floor for
// zero-variance components). Failing components are reported individually.
inline MomentComparison compare_moments(const EmpiricalMoments& em,
                                        const VectorizedSystem& v, double q,
                                        const Eigen::VectorXd& y0,
                                        const Eigen::VectorXd& z0,
                                        double sigmas = 3.0, double floor = 1e-9) {
  MomentComparison cmp;
  FirstMoments fm = init_first_moments(v, y0, z0);
  SecondMoments sm = init_second_moments(v, y0, z0);
  const int n = v.n;
  auto check = [&](const std::string& what, int k, int i, int j, double analytic,
                   double empirical, double se) {
    ++cmp.components;
    if (std::abs(empirical - analytic) > sigmas * se + floor)
      cmp.failures.push_back({what, k, i, j, analytic, empirical, se});
  };
  for (int k = 1; k <= em.k_max; ++k) {
    first_moment_step(fm, v, q);
    second_moment_step(sm, v, q);
    for (int i = 0; i < n; ++i) {
      check("ybar", k, i, 0, fm.ybar(i), em.ybar[k](i), em.ybar_se[k](i));
      check("zbar", k, i, 0, fm.zbar(i), em.zbar[k](i), em.zbar_se[k](i));
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        check("E[yy^T]", k, i, j, sm.Phi(i, j), em.Phi[k](i, j), em.Phi_se[k](i, j));
        check("E[zz^T]", k, i, j, sm.Lambda(i, j), em.Lambda[k](i, j),
              em.Lambda_se[k](i, j));
        check("E[yz^T]", k, i, j, sm.Upsilon(i, j), em.Upsilon[k](i, j),
              em.Upsilon_se[k](i, j));
      }
  }
  cmp.fraction_ok =
      cmp.components == 0
          ? 1.0
          : 1.0 - static_cast<double>(cmp.failures.size()) / cmp.components;
  return cmp;
}

}  // namespace ratiocast
