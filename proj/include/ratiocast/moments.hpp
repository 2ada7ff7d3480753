#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ratiocast/errors.hpp"
#include "ratiocast/rng.hpp"

namespace ratiocast {

// Vectorized form of the double iteration. The n^2-dimensional "pending mass"
// vector stacks, column by column, the per-edge gap between what a sender has
// broadcast and what the receiver last absorbed; its statistics drive both
// iterations.
//
//   P       n x n column-stochastic weight matrix
//   F       n x n^2 block row [I I ... I]; folds a stacked vector back to nodes
//   Ptilde  n^2 x n lift; block i carries column i of P, so Ptilde*y spreads
//           each node's weighted state over its outgoing edges
//   PF      Ptilde * F, cached (n^2 x n^2, column stochastic)
//   G_ones  indices of the unit entries of the diagonal selector G, i.e. the
//           vec-positions of matrix diagonals (G picks diag terms out of a
//           stacked outer product)
//
// F * Ptilde reproduces P exactly; verified at construction.
struct VectorizedSystem {
  int n = 0;
  Eigen::MatrixXd P;
  Eigen::MatrixXd F;
  Eigen::MatrixXd Ptilde;
  Eigen::MatrixXd PF;
  std::vector<int> G_ones;

  // Expected one-round update for stacked pending-mass vectors.
  Eigen::MatrixXd mean_update_stacked(double q) const {
    const int n2 = n * n;
    return q * PF + (1.0 - q) * Eigen::MatrixXd::Identity(n2, n2);
  }

  // Expected one-round update for node-state vectors.
  Eigen::MatrixXd mean_update_state(double q) const {
    return q * P + (1.0 - q) * Eigen::MatrixXd::Identity(n, n);
  }

  // Kept/dropped residual operator; q-independent.
  Eigen::MatrixXd residual() const {
    const int n2 = n * n;
    return Eigen::MatrixXd::Identity(n2, n2) - PF;
  }
};

inline VectorizedSystem build_vectorization(const Eigen::MatrixXd& P) {
  if (P.rows() != P.cols() || P.rows() < 1)
    throw NotColumnStochastic("weight matrix must be square");
  const int n = static_cast<int>(P.rows());
  for (int i = 0; i < n; ++i) {
    if (P.col(i).minCoeff() < 0.0)
      throw NotColumnStochastic("weight matrix has a negative entry");
    if (std::abs(P.col(i).sum() - 1.0) > 1e-12)
      throw NotColumnStochastic("column " + std::to_string(i + 1) +
                                " does not sum to one");
  }
  VectorizedSystem v;
  v.n = n;
  v.P = P;
  const int n2 = n * n;
  v.F = Eigen::MatrixXd::Zero(n, n2);
  for (int b = 0; b < n; ++b)
    v.F.block(0, b * n, n, n) = Eigen::MatrixXd::Identity(n, n);
  v.Ptilde = Eigen::MatrixXd::Zero(n2, n);
  for (int i = 0; i < n; ++i) v.Ptilde.block(i * n, i, n, 1) = P.col(i);
  v.PF = v.Ptilde * v.F;
  v.G_ones.reserve(n2);
  for (int l = 0; l < n2; ++l) v.G_ones.push_back(l * n2 + l);
  if ((v.F * v.Ptilde - P).cwiseAbs().maxCoeff() > 1e-14)
    throw std::logic_error("vectorization self-check failed");
  return v;
}

// --- first moments -----------------------------------------------------------

// Expected trajectories: abar/bbar are the expected stacked pending masses,
// ybar/zbar the expected node states, all at round k. The sums of abar and
// bbar stay at the initial state sums for every k; the sums of ybar and zbar
// stay at q times those sums from round 1 on.
struct FirstMoments {
  int k = 0;
  Eigen::VectorXd abar, bbar;
  Eigen::VectorXd ybar, zbar;
};

inline FirstMoments init_first_moments(const VectorizedSystem& v,
                                       const Eigen::VectorXd& y0,
                                       const Eigen::VectorXd& z0) {
  FirstMoments fm;
  fm.abar = v.Ptilde * y0;
  fm.bbar = v.Ptilde * z0;
  fm.ybar = y0;
  fm.zbar = z0;
  return fm;
}

inline void first_moment_step(FirstMoments& fm, const VectorizedSystem& v, double q) {
  // Emit the next node-state means from the current pending means, then
  // advance the pending means.
  fm.ybar = q * (v.F * fm.abar);
  fm.zbar = q * (v.F * fm.bbar);
  const Eigen::MatrixXd H = v.mean_update_stacked(q);
  fm.abar = H * fm.abar;
  fm.bbar = H * fm.bbar;
  ++fm.k;
}

// --- second moments ----------------------------------------------------------

// Second-moment trajectories at round k. Gamma/Psi/Xi are the n^2 x n^2
// moments of the stacked pending masses (E[aa^T], E[bb^T], E[ab^T]);
// Phi/Lambda/Upsilon the n x n moments of the node states (E[yy^T], E[zz^T],
// E[yz^T]). All three pending moments satisfy one and the same recursion and
// differ only in their initial conditions.
struct SecondMoments {
  int k = 0;
  Eigen::MatrixXd Gamma, Psi, Xi;
  Eigen::MatrixXd Phi, Lambda, Upsilon;

  // E[ba^T] is the transpose of E[ab^T] identically; not iterated separately.
  Eigen::MatrixXd delta() const { return Xi.transpose(); }
};

inline SecondMoments init_second_moments(const VectorizedSystem& v,
                                         const Eigen::VectorXd& y0,
                                         const Eigen::VectorXd& z0) {
  SecondMoments sm;
  const Eigen::VectorXd a0 = v.Ptilde * y0;
  const Eigen::VectorXd b0 = v.Ptilde * z0;
  sm.Gamma = a0 * a0.transpose();
  sm.Psi = b0 * b0.transpose();
  sm.Xi = a0 * b0.transpose();
  sm.Phi = y0 * y0.transpose();
  sm.Lambda = z0 * z0.transpose();
  sm.Upsilon = y0 * z0.transpose();
  return sm;
}

inline void second_moment_step(SecondMoments& sm, const VectorizedSystem& v,
                               double q) {
  const double ql = q * (1.0 - q);
  const Eigen::MatrixXd H = v.mean_update_stacked(q);
  const Eigen::MatrixXd R = v.residual();
  auto emit = [&](const Eigen::MatrixXd& M) -> Eigen::MatrixXd {
    Eigen::MatrixXd inner = q * q * M;
    inner.diagonal() += ql * M.diagonal();
    return v.F * inner * v.F.transpose();
  };
  auto advance = [&](Eigen::MatrixXd& M) {
    Eigen::MatrixXd next = H * M * H.transpose();
    next.noalias() += ql * (R * M.diagonal().asDiagonal() * R.transpose());
    M = std::move(next);
  };
  // Node-state moments at k+1 come from pending moments at k.
  sm.Phi = emit(sm.Gamma);
  sm.Lambda = emit(sm.Psi);
  sm.Upsilon = emit(sm.Xi);
  advance(sm.Gamma);
  advance(sm.Psi);
  advance(sm.Xi);
  ++sm.k;
}

// --- the second-moment transition operator -----------------------------------

// Matrix-free product with the n^4 x n^4 transition matrix that drives the
// stacked (vec) form of every pending second moment. Applying it to vec(M)
// computes H M H^T + q(1-q) R diag(M) R^T without materializing the matrix.
struct PiOperator {
  int n2 = 0;
  double q = 1.0;
  Eigen::MatrixXd H, R;

  int dim() const { return n2 * n2; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    Eigen::Map<const Eigen::MatrixXd> X(x.data(), n2, n2);
    Eigen::MatrixXd M = H * X * H.transpose();
    M.noalias() +=
        (q * (1.0 - q)) * (R * X.diagonal().asDiagonal() * R.transpose());
    return Eigen::Map<Eigen::VectorXd>(M.data(), n2 * n2);
  }
};

inline PiOperator make_pi_operator(const VectorizedSystem& v, double q) {
  PiOperator op;
  op.n2 = v.n * v.n;
  op.q = q;
  op.H = v.mean_update_stacked(q);
  op.R = v.residual();
  return op;
}

// --- power iteration ---------------------------------------------------------

struct PowerResult {
  double value = 0.0;
  Eigen::VectorXd vec;
  bool converged = false;
  int iterations = 0;
};

namespace detail {
inline Eigen::VectorXd hash_vector(int dim, std::uint64_t tag, double offset) {
  Eigen::VectorXd v(dim);
  const Rng r(tag);
  for (int i = 0; i < dim; ++i) v(i) = offset + r.uniform_at(i);
  return v;
}
}  // namespace detail

// Plain power iteration with a Rayleigh-quotient estimate. Converges to the
// dominant eigenpair when it is simple; the start vector is strictly positive
// so the leading direction of a nonnegative operator is never missed.
template <typename Op>
PowerResult power_iteration(int dim, Op&& apply, double tol = 1e-12,
                            int max_iter = 100000) {
  PowerResult res;
  Eigen::VectorXd x = detail::hash_vector(dim, 0x9042, 0.5);
  x /= x.norm();
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd y = apply(x);
    const double lambda = x.dot(y);
    const double resid = (y - lambda * x).lpNorm<Eigen::Infinity>();
    res.iterations = it;
    res.value = lambda;
    const double ynorm = y.norm();
    if (ynorm == 0.0) {
      res.value = 0.0;
      res.vec = y;
      res.converged = true;
      return res;
    }
    x = y / ynorm;
    if (resid <= tol * std::max(1.0, std::abs(lambda))) {
      res.vec = x;
      res.converged = true;
      return res;
    }
  }
  res.vec = x;
  return res;
}

// Magnitude of the second-largest eigenvalue of a column-stochastic operator
// with known leading eigenvector. Deflates against the all-ones left
// eigenvector, then runs power iteration on the sum-zero subspace; since the
// dominant remainder may be a complex pair, the magnitude is read off a
// two-term linear recurrence fitted to three consecutive iterates (with a
// norm-ratio geometric mean as fallback).
template <typename Op>
PowerResult subdominant_magnitude(int dim, Op&& apply,
                                  const Eigen::VectorXd& leading,
                                  double tol = 1e-10, int max_iter = 100000) {
  PowerResult res;
  if (dim <= 1) {
    res.converged = true;
    return res;
  }
  const Eigen::VectorXd v1 = leading / leading.sum();  // unit column sum
  auto deflated = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
    Eigen::VectorXd out = apply(w);
    out.noalias() -= v1 * w.sum();
    return out;
  };
  Eigen::VectorXd u = detail::hash_vector(dim, 0x51f3, -0.5);
  u /= u.norm();
  Eigen::VectorXd u_prev2, u_prev1;
  double c_prev1 = 0.0;
  double estimate = 0.0;
  int stable = 0;
  std::vector<double> log_ratios;
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::VectorXd w = deflated(u);
    const double c = w.norm();
    res.iterations = it;
    if (c < 1e-250) {  // operator ~nilpotent on this subspace
      res.value = 0.0;
      res.converged = true;
      res.vec = u;
      return res;
    }
    Eigen::VectorXd u_next = w / c;
    double current = 0.0;
    if (it >= 3) {
      // Geometric mean of recent norm ratios; converges for every eigenvalue
      // layout, just slowly, and anchors the recurrence-root choice below.
      log_ratios.push_back(std::log(c));
      const int window = std::min<int>(static_cast<int>(log_ratios.size()), 200);
      double gm = 0.0;
      for (int t = 0; t < window; ++t)
        gm += log_ratios[log_ratios.size() - 1 - t];
      gm = std::exp(gm / window);
      // Recurrence fit on the raw triple w0 = u_prev2, w1 = B w0 =
      // c_prev1*u_prev1, w2 = B w1 = c_prev1*c*u_next: solve w2 ~ s*w1 - p*w0
      // in least squares; the roots of t^2 - s t + p are the two leading
      // eigenvalues when the iterates span two modes. When they have
      // collapsed onto one real mode the system is rank-deficient and one
      // root is arbitrary, so take the root whose magnitude agrees with the
      // observed growth.
      Eigen::MatrixXd A(dim, 2);
      A.col(0) = c_prev1 * u_prev1;
      A.col(1) = -u_prev2;
      const Eigen::VectorXd b = (c_prev1 * c) * u_next;
      const Eigen::Vector2d sp = A.colPivHouseholderQr().solve(b);
      const double s = sp(0), p = sp(1);
      const double fit_resid = (A * sp - b).norm();
      const double disc = s * s - 4.0 * p;
      double fitted;
      if (disc >= 0.0) {
        const double r = std::sqrt(disc);
        const double root_a = std::abs((s + r) / 2.0);
        const double root_b = std::abs((s - r) / 2.0);
        fitted = std::abs(root_a - gm) <= std::abs(root_b - gm) ? root_a : root_b;
      } else {
        fitted = std::sqrt(std::max(p, 0.0));  // conjugate pair modulus
      }
      current = (fit_resid <= 1e-9 * b.norm()) ? fitted : gm;
    }
    u_prev2 = u;
    u_prev1 = u_next;
    c_prev1 = c;
    u = std::move(u_next);
    if (it >= 30) {
      if (std::abs(current - estimate) <=
          std::max(tol, 1e-8 * std::abs(current)))
        ++stable;
      else
        stable = 0;
      estimate = current;
      if (stable >= 8) {
        res.value = estimate;
        res.converged = true;
        res.vec = u;
        return res;
      }
    } else {
      estimate = current;
    }
  }
  res.value = estimate;
  res.vec = u;
  return res;
}

// --- dense transition matrix --------------------------------------------------

struct SpectralSummary {
  double lambda1 = 0.0;
  double lambda2_abs = 0.0;
  Eigen::VectorXd right_leading;  // the left leading eigenvector is all-ones
  bool lambda1_converged = false;
  bool lambda2_converged = false;
};

// The dense n^4 x n^4 transition matrix plus spectral and stochasticity
// summaries. Dense construction is capped at n <= 8; beyond that only the
// matrix-free PiOperator form is offered.
struct PiMatrix {
  int n = 0;
  double q = 1.0;
  Eigen::MatrixXd matrix;
  double colsum_max_err = 0.0;
  double min_entry = 0.0;
  double max_entry = 0.0;
  SpectralSummary spectral;
};

inline Eigen::MatrixXd kronecker(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

inline Eigen::MatrixXd build_pi_dense(const VectorizedSystem& v, double q,
                                      int dense_cap = 8) {
  if (v.n > dense_cap)
    throw DimensionTooLarge("dense transition matrix capped at " +
                            std::to_string(dense_cap) + " nodes, got " +
                            std::to_string(v.n));
  const int n2 = v.n * v.n;
  const Eigen::MatrixXd H = v.mean_update_stacked(q);
  const Eigen::MatrixXd R = v.residual();
  Eigen::MatrixXd Pi = kronecker(H, H);
  const double ql = q * (1.0 - q);
  // The diagonal selector restricts the residual term to the vec-positions of
  // matrix diagonals, i.e. columns l*n2+l.
  for (int l = 0; l < n2; ++l) {
    const int col = l * n2 + l;
    for (int i = 0; i < n2; ++i)
      for (int j = 0; j < n2; ++j) Pi(i * n2 + j, col) += ql * R(i, l) * R(j, l);
  }
  return Pi;
}

inline SpectralSummary compute_pi_spectrum(const PiOperator& op, double tol = 1e-10,
                                           int max_iter = 100000) {
  SpectralSummary s;
  auto apply = [&op](const Eigen::VectorXd& x) { return op.apply(x); };
  PowerResult top = power_iteration(op.dim(), apply, 1e-12, max_iter);
  s.lambda1 = top.value;
  s.right_leading = top.vec;
  s.lambda1_converged = top.converged;
  PowerResult second = subdominant_magnitude(op.dim(), apply, top.vec, tol, max_iter);
  s.lambda2_abs = second.value;
  s.lambda2_converged = second.converged;
  return s;
}

inline PiMatrix build_pi(const VectorizedSystem& v, double q, int dense_cap = 8) {
  PiMatrix pi;
  pi.n = v.n;
  pi.q = q;
  pi.matrix = build_pi_dense(v, q, dense_cap);
  pi.colsum_max_err = (pi.matrix.colwise().sum().array() - 1.0).abs().maxCoeff();
  pi.min_entry = pi.matrix.minCoeff();
  pi.max_entry = pi.matrix.maxCoeff();
  pi.spectral = compute_pi_spectrum(make_pi_operator(v, q));
  return pi;
}

// --- alignment residual ------------------------------------------------------

// Trajectory of the stacked second moment of w = b - alpha*a, the gap between
// the two pending-mass iterations after scaling by alpha = sum(z0)/sum(y0).
// Its entry sum is zero at every round and its norm decays geometrically at
// the subdominant rate of the transition operator; both are what the
// convergence argument rides on.
struct ChiTrajectory {
  double alpha = 0.0;
  std::vector<Eigen::VectorXd> chi;  // retained only when requested
  std::vector<double> sums;
  std::vector<double> norms;
};

inline ChiTrajectory chi_trajectory(const VectorizedSystem& v, double q,
                                    const Eigen::VectorXd& y0,
                                    const Eigen::VectorXd& z0, int k_max,
                                    bool keep_vectors = true) {
  const double sy = y0.sum();
  if (sy == 0.0 || std::abs(sy) < 1e-300)
    throw ZeroInitialSum("initial y values sum to zero; alignment ratio undefined");
  ChiTrajectory traj;
  traj.alpha = z0.sum() / sy;
  const Eigen::VectorXd a0 = v.Ptilde * y0;
  const Eigen::VectorXd b0 = v.Ptilde * z0;
  const Eigen::VectorXd w0 = b0 - traj.alpha * a0;
  const int n2 = v.n * v.n;
  Eigen::MatrixXd X0 = w0 * w0.transpose();
  Eigen::VectorXd chi = Eigen::Map<Eigen::VectorXd>(X0.data(), n2 * n2);
  const PiOperator op = make_pi_operator(v, q);
  for (int k = 0; k <= k_max; ++k) {
    traj.sums.push_back(chi.sum());
    traj.norms.push_back(chi.norm());
    if (keep_vectors) traj.chi.push_back(chi);
    if (k < k_max) {
      chi = op.apply(chi);
      // The exact dynamics conserves the entry sum at zero; removing the
      // rounding drift along that direction keeps it from shadowing the
      // decaying modes late in the trajectory. Recorded sums above are taken
      // before the correction, so the drift itself stays observable.
      chi.array() -= chi.sum() / chi.size();
    }
  }
  return traj;
}

// Decay rate of the invariant family that alignment residuals live in:
// iterates the transition operator on a generic rank-one seed built from a
// sum-zero vector and fits the tail growth. Every residual trajectory decays
// at this rate; it is bounded by the subdominant eigenvalue magnitude and for
// weakly mixing graphs sits strictly below it, because modes paired with the
// leading eigenvector are unreachable from sum-zero seeds.
inline double residual_mode_rate(const VectorizedSystem& v, double q,
                                 int k_max = 160) {
  const int n2 = v.n * v.n;
  Eigen::VectorXd w = detail::hash_vector(n2, 0x6e21, -0.5);
  w.array() -= w.mean();
  if (w.norm() == 0.0) return 0.0;  // n = 1: no sum-zero directions
  Eigen::MatrixXd W = w * w.transpose();
  Eigen::VectorXd chi = Eigen::Map<Eigen::VectorXd>(W.data(), n2 * n2);
  chi /= chi.norm();
  const PiOperator op = make_pi_operator(v, q);
  std::vector<double> log_growth;
  for (int k = 0; k < k_max; ++k) {
    chi = op.apply(chi);
    chi.array() -= chi.sum() / chi.size();
    const double c = chi.norm();
    if (c < 1e-250) return 0.0;
    log_growth.push_back(std::log(c));
    chi /= c;
  }
  double acc = 0.0;
  int count = 0;
  for (std::size_t k = log_growth.size() / 2; k < log_growth.size(); ++k) {
    acc += log_growth[k];
    ++count;
  }
  return count > 0 ? std::exp(acc / count) : 0.0;
}

// Least-squares geometric rate of a positive decaying sequence, fitted on the
// trailing fraction of the samples.
inline double fit_geometric_rate(const std::vector<double>& values,
                                 double tail_fraction = 0.5) {
  const int n = static_cast<int>(values.size());
  const int start = static_cast<int>(n * (1.0 - tail_fraction));
  double sk = 0, sl = 0, skk = 0, skl = 0;
  int count = 0;
  for (int k = start; k < n; ++k) {
    if (!(values[k] > 1e-290)) continue;
    const double l = std::log(values[k]);
    sk += k;
    sl += l;
    skk += static_cast<double>(k) * k;
    skl += k * l;
    ++count;
  }
  if (count < 2) return 0.0;
  const double denom = count * skk - sk * sk;
  if (denom == 0.0) return 0.0;
  return std::exp((count * skl - sk * sl) / denom);
}

// --- deviation second moment ---------------------------------------------------

// E[(z - alpha*y)(z - alpha*y)^T] at round k, computed from the alignment
// residual at round k-1 through the same fold that maps pending moments to
// node-state moments.
inline Eigen::MatrixXd deviation_second_moment(const VectorizedSystem& v, double q,
                                               const Eigen::VectorXd& chi_prev) {
  const int n2 = v.n * v.n;
  Eigen::Map<const Eigen::MatrixXd> X(chi_prev.data(), n2, n2);
  Eigen::MatrixXd inner = q * q * X;
  inner.diagonal() += (q * (1.0 - q)) * X.diagonal();
  return v.F * inner * v.F.transpose();
}

// Same quantity assembled from the node-state second moments; an independent
// computation path used to cross-check the one above.
inline Eigen::MatrixXd deviation_from_moments(const SecondMoments& sm, double alpha) {
  return sm.Lambda + alpha * alpha * sm.Phi -
         alpha * (sm.Upsilon + sm.Upsilon.transpose());
}

// --- Hadamard product expectation check ----------------------------------------

// Monte-Carlo validation of the two closed forms behind every second-moment
// recursion: for x with i.i.d. Bernoulli(q) entries independent of c and d,
//   E[(c o x)(x o d)^T]       = q^2 cd^T + q(1-q) diag(cd^T)
//   E[(c o x)((u-x) o d)^T]   = q(1-q) (cd^T - diag(cd^T))
struct HadamardReport {
  Eigen::MatrixXd S_emp, T_emp;
  Eigen::MatrixXd S_closed, T_closed;
  Eigen::MatrixXd S_se, T_se;
  int components = 0;
  int violations = 0;
  bool pass = false;
};

inline HadamardReport hadamard_expectation_check(const Eigen::VectorXd& c,
                                                 const Eigen::VectorXd& d, double q,
                                                 int trials, const Rng& rng) {
  const int n = static_cast<int>(c.size());
  HadamardReport rep;
  const Eigen::MatrixXd outer = c * d.transpose();
  Eigen::MatrixXd diag_part = Eigen::MatrixXd::Zero(n, n);
  diag_part.diagonal() = outer.diagonal();
  rep.S_closed = q * q * outer + q * (1.0 - q) * diag_part;
  rep.T_closed = q * (1.0 - q) * (outer - diag_part);

  Eigen::MatrixXd s_sum = Eigen::MatrixXd::Zero(n, n), s_sq = s_sum;
  Eigen::MatrixXd t_sum = s_sum, t_sq = s_sum;
  Eigen::VectorXd x(n);
  const Rng draws = rng.stream(0x4a11);
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i)
      x(i) = draws.bernoulli_at(static_cast<std::uint64_t>(t) * n + i, q) ? 1.0 : 0.0;
    const Eigen::VectorXd cx = c.cwiseProduct(x);
    const Eigen::VectorXd xd = x.cwiseProduct(d);
    const Eigen::VectorXd ud = (Eigen::VectorXd::Ones(n) - x).cwiseProduct(d);
    const Eigen::MatrixXd S = cx * xd.transpose();
    const Eigen::MatrixXd T = cx * ud.transpose();
    s_sum += S;
    s_sq += S.cwiseProduct(S);
    t_sum += T;
    t_sq += T.cwiseProduct(T);
  }
  rep.S_emp = s_sum / trials;
  rep.T_emp = t_sum / trials;
  auto se = [trials](const Eigen::MatrixXd& mean, const Eigen::MatrixXd& sq) {
    return ((sq / trials - mean.cwiseProduct(mean)) / trials)
        .cwiseMax(0.0)
        .cwiseSqrt()
        .eval();
  };
  rep.S_se = se(rep.S_emp, s_sq);
  rep.T_se = se(rep.T_emp, t_sq);
  rep.components = 2 * n * n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      // Small absolute floor absorbs summation noise in zero-variance cases.
      if (std::abs(rep.S_emp(i, j) - rep.S_closed(i, j)) >
          3.0 * rep.S_se(i, j) + 1e-9)
        ++rep.violations;
      if (std::abs(rep.T_emp(i, j) - rep.T_closed(i, j)) >
          3.0 * rep.T_se(i, j) + 1e-9)
        ++rep.violations;
    }
  rep.pass = rep.violations == 0;
  return rep;
}

inline HadamardReport hadamard_expectation_check(int n, double q, int trials,
                                                 const Rng& rng) {
  Eigen::VectorXd c(n), d(n);
  for (int i = 0; i < n; ++i) {
    c(i) = 1.0 + 0.5 * i;
    d(i) = 1.0 - 0.25 * i;
  }
  return hadamard_expectation_check(c, d, q, trials, rng);
}

}  // namespace ratiocast
