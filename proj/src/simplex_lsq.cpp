#include "wbmpc/simplex_lsq.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace wbmpc {
namespace {

constexpr double kRidge = 1e-10;

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

double simplex_objective(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double k, const Eigen::VectorXd& w) {
  return w.dot(G * w) - 2.0 * c.dot(w) + k;
}

bool on_simplex(const Eigen::VectorXd& w, double tol) {
  if (w.size() == 0) return false;
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!std::isfinite(w[i]) || w[i] < -tol) return false;
  }
  return std::abs(w.sum() - 1.0) <= tol;
}

SimplexLsqResult solve_simplex_lsq(const Eigen::MatrixXd& G, const Eigen::VectorXd& c, double k) {
  const int n = static_cast<int>(c.size());
  if (n == 0 || G.rows() != n || G.cols() != n) throw std::invalid_argument("solve_simplex_lsq: size mismatch");
  if (n > 16) throw std::invalid_argument("solve_simplex_lsq: support enumeration limited to 16 components");

  SimplexLsqResult best;
  std::vector<int> best_support;
  bool have = false;
  const double scale = std::max(1.0, G.diagonal().cwiseAbs().maxCoeff());

  std::vector<int> idx;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    idx.clear();
    for (int i = 0; i < n; ++i) {
      if (mask & (1u << i)) idx.push_back(i);
    }
    const int m = static_cast<int>(idx.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    for (int r = 0; r < m; ++r) {
      for (int s = 0; s < m; ++s) kkt(r, s) = G(idx[r], idx[s]);
      kkt(r, m) = 1.0;
      kkt(m, r) = 1.0;
      rhs[r] = c[idx[r]];
    }
    rhs[m] = 1.0;

    bool ridge = false;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
    if (!lu.isInvertible()) {
      for (int r = 0; r < m; ++r) kkt(r, r) += kRidge * scale;
      lu.compute(kkt);
      ridge = true;
      if (!lu.isInvertible()) continue;
    }
    const Eigen::VectorXd sol = lu.solve(rhs);

    Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
    bool feasible = sol.allFinite();
    for (int r = 0; r < m && feasible; ++r) {
      if (sol[r] < -1e-12) feasible = false;
      w[idx[r]] = std::max(0.0, sol[r]);
    }
    if (!feasible || !(w.sum() > 0.0)) continue;
    w /= w.sum();

    const double obj = simplex_objective(G, c, k, w);
    const double tol = 1e-12 * std::max({std::abs(k), std::abs(obj), have ? std::abs(best.objective) : 0.0});
    bool take = !have;
    if (have) {
      if (obj < best.objective - tol) {
        take = true;
      } else if (obj <= best.objective + tol) {
        take = m > best.support_size || (m == best.support_size && lex_less(idx, best_support));
      }
    }
    if (take) {
      best.w = w;
      best.objective = obj;
      best.support_size = m;
      best.ridge_used = ridge;
      best_support = idx;
      have = true;
    }
  }
  if (!have) {
    best.w = Eigen::VectorXd::Constant(n, 1.0 / n);
    best.objective = simplex_objective(G, c, k, best.w);
    best.support_size = n;
    best.ridge_used = true;
  }
  return best;
}

}  // namespace wbmpc
