#pragma once

#include <Eigen/Dense>

namespace wbmpc {

struct SimplexLsqResult {
  Eigen::VectorXd w;
  double objective = 0.0;
  int support_size = 0;
  bool ridge_used = false;
};

/// Exact minimizer of  w'Gw - 2c'w + k  over the probability simplex.
///
/// Enumerates every nonempty support, solves the equality-constrained
/// subproblem on it and keeps the best feasible candidate. Ties go to the
/// larger support, then to the lexicographically smaller index list.
/// Singular subproblems are retried with a 1e-10 ridge. Limited to N <= 16.
SimplexLsqResult solve_simplex_lsq(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double k = 0.0);

double simplex_objective(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double k, const Eigen::VectorXd& w);

/// True when all components are >= -tol and they sum to one within tol.
bool on_simplex(const Eigen::VectorXd& w, double tol = 1e-9);

}  // namespace wbmpc
