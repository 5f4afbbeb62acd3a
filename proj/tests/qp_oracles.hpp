#pragma once

// Independent reference solvers used only by the tests.

#include "deepc/qp_solver.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace deepc::testing {

/// Direct solve of [[P, A'], [A, 0]] [x; nu] = [-q; b] for an equality-only QP.
inline Eigen::VectorXd kkt_equality_solution(const Eigen::MatrixXd& p, const Eigen::VectorXd& q,
                                             const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  const auto n = p.rows();
  const auto m = a.rows();
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = p;
  kkt.topRightCorner(n, m) = a.transpose();
  kkt.bottomLeftCorner(m, n) = a;
  Eigen::VectorXd rhs(n + m);
  rhs << -q, b;
  return kkt.fullPivLu().solve(rhs).head(n);
}

/// Box-constrained strictly convex QP solved by enumerating every
/// free/lower/upper assignment of the variables and keeping the one that
/// satisfies the KKT conditions.
inline Eigen::VectorXd box_active_set_solution(const Eigen::MatrixXd& p, const Eigen::VectorXd& q,
                                               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  const int n = static_cast<int>(p.rows());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  std::optional<Eigen::VectorXd> best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int code = 0; code < combos; ++code) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<int> state(static_cast<std::size_t>(n));
    std::vector<int> free_idx;
    int c = code;
    for (int i = 0; i < n; ++i) {
      state[static_cast<std::size_t>(i)] = c % 3;
      c /= 3;
      if (state[static_cast<std::size_t>(i)] == 1) x(i) = lo(i);
      if (state[static_cast<std::size_t>(i)] == 2) x(i) = hi(i);
      if (state[static_cast<std::size_t>(i)] == 0) free_idx.push_back(i);
    }
    const int nf = static_cast<int>(free_idx.size());
    if (nf > 0) {
      Eigen::MatrixXd pff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (int a = 0; a < nf; ++a) {
        double r = -q(free_idx[a]);
        for (int j = 0; j < n; ++j) {
          if (state[static_cast<std::size_t>(j)] != 0) r -= p(free_idx[a], j) * x(j);
        }
        rhs(a) = r;
        for (int b = 0; b < nf; ++b) pff(a, b) = p(free_idx[a], free_idx[b]);
      }
      const Eigen::VectorXd xf = pff.llt().solve(rhs);
      for (int a = 0; a < nf; ++a) x(free_idx[a]) = xf(a);
    }
    const Eigen::VectorXd grad = p * x + q;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      const int s = state[static_cast<std::size_t>(i)];
      if (s == 0) ok = x(i) >= lo(i) - 1e-12 && x(i) <= hi(i) + 1e-12;
      if (s == 1) ok = grad(i) >= -1e-12;
      if (s == 2) ok = grad(i) <= 1e-12;
    }
    if (!ok) continue;
    const double obj = 0.5 * x.dot(p * x) + q.dot(x);
    if (obj < best_obj) {
      best_obj = obj;
      best = x;
    }
  }
  return *best;
}

inline Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng, double floor = 0.1) {
  std::normal_distribution<double> nd;
  const Eigen::MatrixXd m = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return nd(rng); });
  return m * m.transpose() + floor * Eigen::MatrixXd::Identity(n, n);
}

inline SparseMatrix to_sparse(const Eigen::MatrixXd& m) { return m.sparseView(); }

}  // namespace deepc::testing
