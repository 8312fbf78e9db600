#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace wbmpc::optim {

/// Returns f(x) and writes the gradient into `grad` (already sized).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
  int max_iterations = 500;
  int memory = 10;
  double c1 = 1e-4;
  double c2 = 0.9;
  double gradient_tolerance = 1e-14;
  int max_line_search = 25;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool line_search_failed = false;
};

/// Limited-memory BFGS: two-loop recursion, strong-Wolfe line search with
/// cubic zoom. Returns the best iterate seen; a failed line search ends the
/// run rather than throwing.
LbfgsResult minimize_lbfgs(const Objective& f, Eigen::VectorXd x0, const LbfgsOptions& opt = {});

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(Eigen::Index n, AdamOptions opt = {});
  void step(Eigen::VectorXd& x, const Eigen::VectorXd& grad);
  long steps() const { return t_; }

 private:
  AdamOptions opt_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace wbmpc::optim
