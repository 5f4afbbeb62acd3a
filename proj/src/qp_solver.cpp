#include "deepc/qp_solver.hpp"

#include "deepc/error.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>

namespace deepc {

using Eigen::Index;
using Eigen::VectorXd;

namespace {

constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityRhoFactor = 1e3;
constexpr double kInfinity = std::numeric_limits<double>::infinity();
constexpr int kInfeasibilityCheckInterval = 10;
constexpr double kPolishDelta = 1e-7;
constexpr int kPolishRefinements = 3;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

VectorXd column_inf_norms(const SparseMatrix& m) {
  VectorXd out = VectorXd::Zero(m.cols());
  for (Index j = 0; j < m.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) out(j) = std::max(out(j), std::abs(it.value()));
  }
  return out;
}

VectorXd row_inf_norms(const SparseMatrix& m) {
  VectorXd out = VectorXd::Zero(m.rows());
  for (Index j = 0; j < m.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
      out(it.row()) = std::max(out(it.row()), std::abs(it.value()));
    }
  }
  return out;
}

VectorXd equilibration_factors(const VectorXd& norms) {
  VectorXd out(norms.size());
  for (Index i = 0; i < norms.size(); ++i) {
    const double n = norms(i) < kMinScaling ? 1.0 : norms(i);
    out(i) = std::clamp(1.0 / std::sqrt(n), kMinScaling, kMaxScaling);
  }
  return out;
}

// Problem data after Ruiz equilibration: P_s = c D P D, q_s = c D q,
// A_s = E A D, bounds scaled by E.
struct ScaledProblem {
  SparseMatrix P;
  SparseMatrix A;
  VectorXd q, l, u;
  VectorXd D, E;
  double c = 1.0;
};

ScaledProblem equilibrate(const QpProblem& problem, int iterations) {
  ScaledProblem s;
  s.P = problem.P;
  s.A = problem.A;
  s.q = problem.q;
  const Index n = problem.variables();
  const Index m = problem.constraints();
  s.D = VectorXd::Ones(n);
  s.E = VectorXd::Ones(m);

  for (int it = 0; it < iterations; ++it) {
    VectorXd var_norms = column_inf_norms(s.P);
    if (m > 0) var_norms = var_norms.cwiseMax(column_inf_norms(s.A));
    const VectorXd dv = equilibration_factors(var_norms);
    const VectorXd dc = m > 0 ? equilibration_factors(row_inf_norms(s.A)) : VectorXd();
    s.P = dv.asDiagonal() * s.P * dv.asDiagonal();
    if (m > 0) s.A = dc.asDiagonal() * s.A * dv.asDiagonal();
    s.q = s.q.cwiseProduct(dv);
    s.D = s.D.cwiseProduct(dv);
    if (m > 0) s.E = s.E.cwiseProduct(dc);
  }

  if (iterations > 0) {
    const VectorXd p_norms = column_inf_norms(s.P);
    double scale = std::max(n > 0 ? p_norms.mean() : 0.0, inf_norm(s.q));
    if (scale < kMinScaling) scale = 1.0;
    s.c = std::clamp(1.0 / scale, kMinScaling, kMaxScaling);
    s.P *= s.c;
    s.q *= s.c;
  }
  s.l = problem.l.cwiseProduct(s.E);
  s.u = problem.u.cwiseProduct(s.E);
  s.P.makeCompressed();
  s.A.makeCompressed();
  return s;
}

// Upper triangle of [[P + sigma I, A'], [A, -diag(1/rho)]] with explicit
// diagonal entries so refactorizations keep the sparsity pattern.
SparseMatrix assemble_kkt(const SparseMatrix& P, const SparseMatrix& A, double sigma, const VectorXd& rho) {
  const Index n = P.rows();
  const Index m = A.rows();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(P.nonZeros() / 2 + A.nonZeros() + n + m));
  for (Index j = 0; j < n; ++j) {
    for (SparseMatrix::InnerIterator it(P, j); it; ++it) {
      if (it.row() < j) triplets.emplace_back(it.row(), j, it.value());
    }
    triplets.emplace_back(j, j, P.coeff(j, j) + sigma);
  }
  for (Index j = 0; j < n; ++j) {
    for (SparseMatrix::InnerIterator it(A, j); it; ++it) triplets.emplace_back(j, n + it.row(), it.value());
  }
  for (Index i = 0; i < m; ++i) triplets.emplace_back(n + i, n + i, -1.0 / rho(i));
  SparseMatrix kkt(n + m, n + m);
  kkt.setFromTriplets(triplets.begin(), triplets.end());
  kkt.makeCompressed();
  return kkt;
}

void check_positive_semidefinite(const SparseMatrix& P) {
  const Index n = P.rows();
  if (n == 0) return;
  double scale = 0.0;
  for (Index j = 0; j < n; ++j) scale = std::max(scale, std::abs(P.coeff(j, j)));
  const double shift = 1e-10 * std::max(1.0, scale);
  SparseMatrix shifted = P;
  for (Index j = 0; j < n; ++j) shifted.coeffRef(j, j) += shift;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any()) {
    throw Error(ErrorKind::not_positive_semidefinite, "quadratic cost matrix is not positive semidefinite");
  }
}

}  // namespace

class AdmmWorkspace {
 public:
  AdmmWorkspace(QpProblem problem, const QpSettings& settings)
      : problem_(std::move(problem)), settings_(settings) {
    problem_.validate();
    check_positive_semidefinite(problem_.P);
    s_ = equilibrate(problem_, settings_.scaling_iterations);
    n_ = problem_.variables();
    m_ = problem_.constraints();
    is_equality_.resize(static_cast<std::size_t>(m_));
    rho_vec_.resize(m_);
    set_rho(std::clamp(settings_.rho, kRhoMin, kRhoMax));
    kkt_ = assemble_kkt(s_.P, s_.A, settings_.sigma, rho_vec_);
    ldlt_.analyzePattern(kkt_);
    factorize();
  }

  [[nodiscard]] const QpProblem& problem() const { return problem_; }

  void update_vectors(const VectorXd& q, const VectorXd& l, const VectorXd& u) {
    if (q.size() != n_ || l.size() != m_ || u.size() != m_) {
      throw Error(ErrorKind::dimension_mismatch, "updated vectors do not match the problem");
    }
    for (Index i = 0; i < m_; ++i) {
      if (std::isnan(l(i)) || std::isnan(u(i)) || l(i) > u(i)) {
        throw Error(ErrorKind::invalid_argument, "constraint " + std::to_string(i) + " has l > u");
      }
    }
    if (!q.allFinite()) throw Error(ErrorKind::invalid_argument, "q has non-finite entries");
    problem_.q = q;
    problem_.l = l;
    problem_.u = u;
    s_.q = s_.c * q.cwiseProduct(s_.D);
    s_.l = l.cwiseProduct(s_.E);
    s_.u = u.cwiseProduct(s_.E);
    const VectorXd previous = rho_vec_;
    set_rho(rho_);
    if (previous != rho_vec_) refactorize_with_rho();
    last_polish_set_.clear();
  }

  QpSolution run(const QpWarmStart* warm) {
    VectorXd x = VectorXd::Zero(n_);
    VectorXd z = VectorXd::Zero(m_);
    VectorXd y = VectorXd::Zero(m_);
    if (warm != nullptr) {
      if (warm->x.size() != n_ || (warm->y.size() != 0 && warm->y.size() != m_)) {
        throw Error(ErrorKind::dimension_mismatch, "warm start dimensions do not match the problem");
      }
      x = warm->x.cwiseQuotient(s_.D);
      if (warm->y.size() == m_) y = s_.c * warm->y.cwiseQuotient(s_.E);
      z = project(s_.A * x);
    }
    last_polish_set_.clear();

    QpSolution best;
    best.x = x;
    best.y = y;
    double best_score = kInfinity;
    QpSolution sol;
    VectorXd rhs(n_ + m_);
    VectorXd kkt_sol(n_ + m_);
    VectorXd x_tilde(n_), z_tilde(m_), z_relaxed(m_), z_next(m_), y_prev(m_);
    const int interval = std::max(1, settings_.check_interval);

    for (int iter = 1; iter <= settings_.max_iter; ++iter) {
      rhs.head(n_) = settings_.sigma * x - s_.q;
      rhs.tail(m_) = z - y.cwiseQuotient(rho_vec_);
      kkt_sol = ldlt_.solve(rhs);
      x_tilde = kkt_sol.head(n_);
      z_tilde = z + (kkt_sol.tail(m_) - y).cwiseQuotient(rho_vec_);

      x = settings_.alpha * x_tilde + (1.0 - settings_.alpha) * x;
      z_relaxed = settings_.alpha * z_tilde + (1.0 - settings_.alpha) * z;
      z_next = project(z_relaxed + y.cwiseQuotient(rho_vec_));
      y_prev = y;
      y += rho_vec_.cwiseProduct(z_relaxed - z_next);
      z = z_next;

      const bool check = settings_.record_residuals || iter <= interval || iter % interval == 0 ||
                         iter == settings_.max_iter;
      if (check) {
        const Residuals r = residuals(x, z, y);
        if (settings_.record_residuals) sol.residual_history.push_back(std::max(r.primal, r.dual));

        const double score = std::max(r.primal / r.eps_primal, r.dual / r.eps_dual);
        if (score < best_score) {
          best_score = score;
          best.x = x;
          best.y = y;
          best.primal_residual = r.primal;
          best.dual_residual = r.dual;
        }
        if (r.primal <= r.eps_primal && r.dual <= r.eps_dual) {
          sol.status = QpStatus::solved;
          sol.iterations = iter;
          sol.primal_residual = r.primal;
          sol.dual_residual = r.dual;
          return finish(std::move(sol), x, y);
        }
        if (settings_.polish && score <= settings_.polish_trigger) {
          if (auto polished = polish(z, y)) {
            polished->iterations = iter;
            polished->residual_history = std::move(sol.residual_history);
            return std::move(*polished);
          }
        }
      }
      if (iter % kInfeasibilityCheckInterval == 0 && primal_infeasible(y - y_prev)) {
        const Residuals r = residuals(x, z, y);
        sol.status = QpStatus::primal_infeasible;
        sol.iterations = iter;
        sol.primal_residual = r.primal;
        sol.dual_residual = r.dual;
        return finish(std::move(sol), x, y);
      }
      if (settings_.adaptive_rho && iter % settings_.adaptive_rho_interval == 0) {
        adapt_rho(x, z, y);
      }
    }

    sol.status = QpStatus::max_iter;
    sol.iterations = settings_.max_iter;
    sol.primal_residual = best.primal_residual;
    sol.dual_residual = best.dual_residual;
    return finish(std::move(sol), best.x, best.y);
  }

 private:
  struct Residuals {
    double primal, dual, eps_primal, eps_dual;
  };

  enum class Bound : signed char { lower = -1, equality = 0, upper = 1 };

  void set_rho(double rho) {
    rho_ = rho;
    for (Index i = 0; i < m_; ++i) {
      const double lo = s_.l(i);
      const double hi = s_.u(i);
      const bool free_row = std::isinf(lo) && lo < 0 && std::isinf(hi) && hi > 0;
      const bool equality = std::abs(hi - lo) <= 1e-8 * std::max(1.0, std::abs(lo));
      is_equality_[static_cast<std::size_t>(i)] = equality;
      rho_vec_(i) = free_row ? kRhoMin : (equality ? kEqualityRhoFactor * rho : rho);
    }
  }

  void factorize() {
    ldlt_.factorize(kkt_);
    if (ldlt_.info() != Eigen::Success) {
      throw Error(ErrorKind::not_positive_semidefinite, "KKT factorization failed (zero pivot)");
    }
  }

  void refactorize_with_rho() {
    double* values = kkt_.valuePtr();
    const auto* outer = kkt_.outerIndexPtr();
    for (Index i = 0; i < m_; ++i) {
      // Upper-triangular column storage: the diagonal is the last entry.
      values[outer[n_ + i + 1] - 1] = -1.0 / rho_vec_(i);
    }
    factorize();
  }

  VectorXd project(const VectorXd& v) const { return v.cwiseMax(s_.l).cwiseMin(s_.u); }

  Residuals residuals(const VectorXd& x, const VectorXd& z, const VectorXd& y) const {
    const VectorXd ax = s_.A * x;
    const VectorXd px = s_.P * x;
    const VectorXd aty = s_.A.transpose() * y;
    const VectorXd& e = s_.E;
    const VectorXd d_inv = s_.D.cwiseInverse();
    const double c_inv = 1.0 / s_.c;

    Residuals r{};
    r.primal = m_ > 0 ? inf_norm((ax - z).cwiseQuotient(e)) : 0.0;
    r.dual = c_inv * inf_norm((px + s_.q + aty).cwiseProduct(d_inv));
    const double ax_norm = m_ > 0 ? inf_norm(ax.cwiseQuotient(e)) : 0.0;
    r.eps_primal = settings_.eps_abs + settings_.eps_rel * ax_norm;
    const double dual_scale = c_inv * std::max({inf_norm(px.cwiseProduct(d_inv)), inf_norm(aty.cwiseProduct(d_inv)),
                                                inf_norm(s_.q.cwiseProduct(d_inv))});
    r.eps_dual = settings_.eps_abs + settings_.eps_rel * dual_scale;
    return r;
  }

  // Equality-constrained solve on the active set guessed from (z, y), with a
  // small regularization removed by iterative refinement.
  std::optional<QpSolution> polish(const VectorXd& z, const VectorXd& y) {
    std::vector<std::pair<Index, Bound>> active;
    for (Index i = 0; i < m_; ++i) {
      if (is_equality_[static_cast<std::size_t>(i)]) {
        active.emplace_back(i, Bound::equality);
      } else if (z(i) - s_.l(i) < -y(i)) {
        active.emplace_back(i, Bound::lower);
      } else if (s_.u(i) - z(i) < y(i)) {
        active.emplace_back(i, Bound::upper);
      }
    }
    if (active == last_polish_set_) return std::nullopt;
    last_polish_set_ = active;

    const auto k = static_cast<Index>(active.size());
    std::vector<Index> position(static_cast<std::size_t>(m_), -1);
    for (Index a = 0; a < k; ++a) position[static_cast<std::size_t>(active[static_cast<std::size_t>(a)].first)] = a;

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(s_.P.nonZeros() / 2 + s_.A.nonZeros() + n_ + k));
    for (Index j = 0; j < n_; ++j) {
      for (SparseMatrix::InnerIterator it(s_.P, j); it; ++it) {
        if (it.row() < j) triplets.emplace_back(it.row(), j, it.value());
      }
      triplets.emplace_back(j, j, s_.P.coeff(j, j) + kPolishDelta);
      for (SparseMatrix::InnerIterator it(s_.A, j); it; ++it) {
        const Index a = position[static_cast<std::size_t>(it.row())];
        if (a >= 0) triplets.emplace_back(j, n_ + a, it.value());
      }
    }
    for (Index a = 0; a < k; ++a) triplets.emplace_back(n_ + a, n_ + a, -kPolishDelta);
    SparseMatrix kkt(n_ + k, n_ + k);
    kkt.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt(kkt);
    if (ldlt.info() != Eigen::Success) return std::nullopt;

    VectorXd b(k);
    for (Index a = 0; a < k; ++a) {
      const auto [row, bound] = active[static_cast<std::size_t>(a)];
      b(a) = bound == Bound::upper ? s_.u(row) : s_.l(row);
    }
    const auto active_product = [&](const VectorXd& x) {
      const VectorXd ax = s_.A * x;
      VectorXd out(k);
      for (Index a = 0; a < k; ++a) out(a) = ax(active[static_cast<std::size_t>(a)].first);
      return out;
    };
    const auto scatter = [&](const VectorXd& ya) {
      VectorXd out = VectorXd::Zero(m_);
      for (Index a = 0; a < k; ++a) out(active[static_cast<std::size_t>(a)].first) = ya(a);
      return out;
    };

    VectorXd rhs(n_ + k);
    rhs << -s_.q, b;
    VectorXd sol = ldlt.solve(rhs);
    for (int it = 0; it < kPolishRefinements; ++it) {
      const VectorXd x = sol.head(n_);
      const VectorXd yf = scatter(sol.tail(k));
      VectorXd res(n_ + k);
      res << -s_.q - s_.P * x - s_.A.transpose() * yf, b - active_product(x);
      sol += ldlt.solve(res);
    }
    if (!sol.allFinite()) return std::nullopt;

    const VectorXd x = sol.head(n_);
    const VectorXd yp = scatter(sol.tail(k));
    const Residuals r = residuals(x, project(s_.A * x), yp);
    if (r.primal > r.eps_primal || r.dual > r.eps_dual) return std::nullopt;
    for (Index a = 0; a < k; ++a) {
      const auto [row, bound] = active[static_cast<std::size_t>(a)];
      if (bound == Bound::lower && yp(row) > r.eps_dual) return std::nullopt;
      if (bound == Bound::upper && yp(row) < -r.eps_dual) return std::nullopt;
    }
    QpSolution out;
    out.status = QpStatus::solved;
    out.primal_residual = r.primal;
    out.dual_residual = r.dual;
    return finish(std::move(out), x, yp);
  }

  bool primal_infeasible(VectorXd dy) const {
    if (m_ == 0) return false;
    for (Index i = 0; i < m_; ++i) {
      if (std::isinf(s_.u(i))) dy(i) = std::min(dy(i), 0.0);
      if (std::isinf(s_.l(i))) dy(i) = std::max(dy(i), 0.0);
    }
    const double dy_norm = inf_norm(dy.cwiseProduct(s_.E));
    if (dy_norm < 1e-30) return false;
    const double eps = settings_.eps_primal_infeasible * dy_norm;
    const VectorXd atdy = (s_.A.transpose() * dy).cwiseQuotient(s_.D);
    if (inf_norm(atdy) > eps) return false;
    double support = 0.0;
    for (Index i = 0; i < m_; ++i) {
      if (dy(i) > 0.0) support += s_.u(i) * dy(i);
      if (dy(i) < 0.0) support += s_.l(i) * dy(i);
    }
    return support < -eps;
  }

  void adapt_rho(const VectorXd& x, const VectorXd& z, const VectorXd& y) {
    if (m_ == 0) return;
    const VectorXd e_inv = s_.E.cwiseInverse();
    const VectorXd d_inv = s_.D.cwiseInverse();
    const VectorXd ax = (s_.A * x).cwiseProduct(e_inv);
    const VectorXd zu = z.cwiseProduct(e_inv);
    const VectorXd px = (s_.P * x).cwiseProduct(d_inv);
    const VectorXd aty = (s_.A.transpose() * y).cwiseProduct(d_inv);
    const VectorXd qu = s_.q.cwiseProduct(d_inv);
    const double prim_den = std::max({inf_norm(ax), inf_norm(zu), 1e-30});
    const double dual_den = std::max({inf_norm(px), inf_norm(aty), inf_norm(qu), 1e-30});
    const double prim = inf_norm(ax - zu) / prim_den;
    const double dual = inf_norm(px + qu + aty) / dual_den;
    if (dual < 1e-30) return;
    const double candidate = std::clamp(rho_ * std::sqrt(prim / dual), kRhoMin, kRhoMax);
    if (candidate > settings_.adaptive_rho_tolerance * rho_ || candidate < rho_ / settings_.adaptive_rho_tolerance) {
      set_rho(candidate);
      refactorize_with_rho();
    }
  }

  QpSolution finish(QpSolution sol, const VectorXd& x_scaled, const VectorXd& y_scaled) const {
    sol.x = x_scaled.cwiseProduct(s_.D);
    sol.y = y_scaled.cwiseProduct(s_.E) / s_.c;
    sol.objective = problem_.objective(sol.x);
    return sol;
  }

  QpProblem problem_;
  QpSettings settings_;
  ScaledProblem s_;
  Index n_ = 0;
  Index m_ = 0;
  double rho_ = 0.1;
  VectorXd rho_vec_;
  std::vector<bool> is_equality_;
  SparseMatrix kkt_;
  Eigen::SimplicialLDLT<SparseMatrix, Eigen::Upper, Eigen::AMDOrdering<int>> ldlt_;
  std::vector<std::pair<Index, Bound>> last_polish_set_;
};

QpWorkspace::QpWorkspace(QpProblem problem, QpSettings settings)
    : impl_(std::make_unique<AdmmWorkspace>(std::move(problem), settings)) {}
QpWorkspace::~QpWorkspace() = default;
QpWorkspace::QpWorkspace(QpWorkspace&&) noexcept = default;
QpWorkspace& QpWorkspace::operator=(QpWorkspace&&) noexcept = default;

const QpProblem& QpWorkspace::problem() const { return impl_->problem(); }

void QpWorkspace::update_vectors(const VectorXd& q, const VectorXd& l, const VectorXd& u) {
  impl_->update_vectors(q, l, u);
}

QpSolution QpWorkspace::solve(const QpWarmStart* warm_start) { return impl_->run(warm_start); }

double QpProblem::objective
(const VectorXd& x) const { return 0.5 * x.dot(P * x) + q.dot(x); }

void QpProblem::validate() const {
  const Index n = q.size();
  const Index m = l.size();
  if (P.rows() != n || P.cols() != n) {
    throw Error(ErrorKind::dimension_mismatch, "P must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (A.rows() != m || A.cols() != n || u.size() != m) {
    throw Error(ErrorKind::dimension_mismatch, "constraint matrix/bounds have inconsistent dimensions");
  }
  const SparseMatrix asym = SparseMatrix(P.transpose()) - P;
  double p_scale = 1.0;
  for (Index j = 0; j < P.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(P, j); it; ++it) p_scale = std::max(p_scale, std::abs(it.value()));
  }
  for (Index j = 0; j < asym.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(asym, j); it; ++it) {
      if (std::abs(it.value()) > 1e-10 * p_scale) {
        throw Error(ErrorKind::invalid_argument, "P is not symmetric");
      }
    }
  }
  for (Index i = 0; i < m; ++i) {
    if (std::isnan(l(i)) || std::isnan(u(i)) || l(i) > u(i)) {
      throw Error(ErrorKind::invalid_argument, "constraint " + std::to_string(i) + " has l > u");
    }
  }
  if (!q.allFinite()) {
    throw Error(ErrorKind::invalid_argument, "q has non-finite entries");
  }
}

std::string_view to_string(QpStatus status) {
  switch (status) {
    case QpStatus::solved:
      return "solved";
    case QpStatus::max_iter:
      return "max_iter";
    case QpStatus::primal_infeasible:
      return "primal_infeasible";
  }
  return "unknown";
}

QpSolution QpSolver::solve(const QpProblem& problem, const QpWarmStart* warm_start) const {
  AdmmWorkspace workspace(problem, settings_);
  return workspace.run(warm_start);
}

QpSolution solve(const QpProblem& problem, const QpSettings& settings, const std::optional<QpWarmStart>& warm_start) {
  return QpSolver(settings).solve(problem, warm_start ? &*warm_start : nullptr);
}

QpSolution warm_started_resolve(const QpProblem& problem, const QpSolution& previous, const QpSettings& settings) {
  if (previous.x.size() != problem.variables() || previous.y.size() != problem.constraints()) {
    throw Error(ErrorKind::dimension_mismatch, "previous solution dimensions do not match the problem");
  }
  const QpWarmStart warm{previous.x, previous.y};
  return QpSolver(settings).solve(problem, &warm);
}

}  // namespace deepc
