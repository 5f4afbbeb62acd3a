#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace deepc {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// minimize 0.5 x'Px + q'x  subject to  l <= Ax <= u.
/// Equalities are rows with l == u; infinite bounds are allowed.
struct QpProblem {
  SparseMatrix P;  // full symmetric storage
  Eigen::VectorXd q;
  SparseMatrix A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  [[nodiscard]] Eigen::Index variables() const { return q.size(); }
  [[nodiscard]] Eigen::Index constraints() const { return l.size(); }
  [[nodiscard]] double objective(const Eigen::VectorXd& x) const;

  /// Shape, symmetry (1e-10) and bound-ordering checks; throws deepc::Error.
  void validate() const;
};

enum class QpStatus { solved, max_iter, primal_infeasible };

[[nodiscard]] std::string_view to_string(QpStatus status);

struct QpSettings {
  double eps_abs = 1e-5;
  double eps_rel = 1e-5;
  int max_iter = 4000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  double adaptive_rho_tolerance = 5.0;
  int scaling_iterations = 10;
  double eps_primal_infeasible = 1e-6;
  bool record_residuals = false;
  /// Residuals are evaluated every iteration for the first `check_interval`
  /// iterations and every `check_interval` iterations afterwards.
  int check_interval = 5;
  /// Solve the equality-constrained problem on the estimated active set once
  /// the iterates are within `polish_trigger` times the tolerances.
  bool polish = true;
  double polish_trigger = 100.0;
};

struct QpWarmStart {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // multipliers: Px + q + A'y = 0 at optimality
  QpStatus status = QpStatus::max_iter;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double objective = 0.0;
  /// max(primal, dual) after every iteration when requested in the settings.
  std::vector<double> residual_history;
};

class AdmmWorkspace;

/// Scaled and factored problem kept across solves that share P and A.
/// Not thread-safe.
class QpWorkspace {
 public:
  QpWorkspace(QpProblem problem, QpSettings settings = {});
  ~QpWorkspace();
  QpWorkspace(QpWorkspace&&) noexcept;
  QpWorkspace& operator=(QpWorkspace&&) noexcept;

  [[nodiscard]] const QpProblem& problem() const;
  /// Replaces q, l and u; P and A are unchanged.
  void update_vectors(const Eigen::VectorXd& q, const Eigen::VectorXd& l, const Eigen::VectorXd& u);
  [[nodiscard]] QpSolution solve(const QpWarmStart* warm_start = nullptr);

 private:
  std::unique_ptr<AdmmWorkspace> impl_;
};

/// Operator-splitting (ADMM) solver with Ruiz equilibration, adaptive step
/// size and a sparse quasi-definite factorization of the reduced KKT system.
/// One instance is reusable across problems but not thread-safe.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  [[nodiscard]] const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

  /// Throws deepc::Error for malformed problems or a P that is not PSD.
  [[nodiscard]] QpSolution solve(const QpProblem& problem, const QpWarmStart* warm_start = nullptr) const;

 private:
  QpSettings settings_;
};

[[nodiscard]] QpSolution solve(const QpProblem& problem, const QpSettings& settings = {},
                               const std::optional<QpWarmStart>& warm_start = std::nullopt);

/// Re-solve starting from a previous solution's primal and dual iterates.
[[nodiscard]] QpSolution warm_started_resolve(const QpProblem& problem, const QpSolution& previous,
                                              const QpSettings& settings = {});

}  // namespace deepc
