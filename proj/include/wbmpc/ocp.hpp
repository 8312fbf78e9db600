#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <iosfwd>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "wbmpc/specialists.hpp"
#include "wbmpc/symgraph.hpp"
#include "wbmpc/tape.hpp"
#include "wbmpc/vehicle.hpp"

namespace wbmpc::ocp {

struct OcpConfig {
  int H = 15;
  double Ts = 0.02;
  double Q_p = 10.0;
  double P = -1.0;  // terminal position weight; negative means Q_p
  double R_delta = 1.0;
  double R_D = 0.1;
  vehicle::ControlInput u_min{-0.4, -0.2};
  vehicle::ControlInput u_max{0.4, 1.0};
  double ddelta_max = 0.05;  // rad per step
  double v_ref = 1.5;

  // Solver settings.
  int max_iterations = 50;
  double step_tolerance = 1e-8;
  double kkt_tolerance = 1e-6;
  double initial_damping = 1e-8;
  int max_halvings = 20;

  double terminal_weight() const { return P < 0.0 ? Q_p : P; }
  /// Throws std::invalid_argument.
  void validate() const;
};

/// The three model flavours differ only in what the Parameter slots hold.
enum class ModelKind {
  Parametric,  // 15 vehicle parameter slots
  Ensemble,    // N mixing weights
  Fixed,       // constants baked in, no slots
};

class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolveTiming {
  double total = 0.0;
  double derivative_eval = 0.0;
  double linear_solve = 0.0;
  double line_search = 0.0;
};

struct SolveReport {
  std::vector<vehicle::ControlInput> u_star;
  int iterations = 0;
  bool converged = false;
  double initial_cost = 0.0;
  double cost = 0.0;
  double kkt_residual = 0.0;
  double constraint_violation = 0.0;
  SolveTiming timing;
};

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, double t, const SolveReport& r);

struct BuildStats {
  double build_seconds = 0.0;
  std::size_t model_nodes = 0;
  std::size_t stage_nodes = 0;  // stage map plus its Jacobian
  std::size_t tape_instructions = 0;
  std::size_t jacobian_entries = 0;
};

/// Single-shooting tracking OCP over a symbolic 8-variable, 6-output model.
///
/// Decisions are u_0..u_{H-1}; states come from the Euler rollout
/// x_{k+1} = x_k + Ts f(x_k, u_k). The cost is the stacked residual
///   sqrt(Q_p) (p_k - pref_k), k = 1..H;  sqrt(P) (p_H - pref_H);
///   sqrt(R_delta) (delta_k - delta_{k-1}), sqrt(R_D) (D_k - D_{k-1}), k = 0..H-1
/// with u_{-1} the previously applied input. Parameter slots of the model
/// (vehicle parameters or mixing weights) are held in a mutable block.
class OcpProblem {
 public:
  OcpProblem(const sym::ExprGraph& model, ModelKind kind, const OcpConfig& cfg, Eigen::VectorXd params = {});

  const OcpConfig& config() const { return cfg_; }
  ModelKind kind() const { return kind_; }
  const BuildStats& build_stats() const { return stats_; }
  int decision_size() const { return 2 * cfg_.H; }

  const Eigen::VectorXd& params() const { return params_; }
  /// Ensemble only; throws when w is off the simplex by more than 1e-6.
  void update_weights(const Eigen::VectorXd& w);
  /// Parametric only; full parameter vector in slot order.
  void update_params(const Eigen::VectorXd& p);
  void update_params(const vehicle::VehicleParams& p);

  /// Stage map x+ = x + Ts f(x, u).
  vehicle::VehicleState step(const vehicle::VehicleState& x, const vehicle::ControlInput& u) const;
  /// States x_0..x_H under `u`.
  std::vector<vehicle::VehicleState> rollout(const vehicle::VehicleState& x0, const Eigen::VectorXd& u) const;

  /// Rolled-out cost and, optionally, its gradient with respect to the 2H
  /// decisions (layout delta_0, D_0, delta_1, ...).
  double cost(const vehicle::VehicleState& x0, const std::vector<Eigen::Vector2d>& refs,
              const vehicle::ControlInput& u_prev, const Eigen::VectorXd& u, Eigen::VectorXd* grad = nullptr) const;

  /// Stacked residual and its Jacobian (sensitivity chain through the stage
  /// Jacobians).
  void residuals(const vehicle::VehicleState& x0, const std::vector<Eigen::Vector2d>& refs,
                 const vehicle::ControlInput& u_prev, const Eigen::VectorXd& u, Eigen::VectorXd& r,
                 Eigen::MatrixXd* J) const;
  int residual_size() const { return 2 * cfg_.H + 2 + 2 * cfg_.H; }

  /// Gauss-Newton SQP from `warm_start` (projected onto the feasible set;
  /// empty means u_prev repeated). Throws SolverFailure when the rollout is
  /// non-finite at the starting point.
  SolveReport solve(const vehicle::VehicleState& x0, const std::vector<Eigen::Vector2d>& refs,
                    const vehicle::ControlInput& u_prev, const std::vector<vehicle::ControlInput>& warm_start = {}) const;

  /// Box and steering-rate feasibility, max violation.
  double constraint_violation(const Eigen::VectorXd& u, const vehicle::ControlInput& u_prev) const;
  /// Projection used on warm starts: sequential clamp into box and rate limits.
  Eigen::VectorXd project(Eigen::VectorXd u, const vehicle::ControlInput& u_prev) const;

  /// Structural density of the Jacobian of the equivalent multiple-shooting
  /// transcription (states and controls as decisions, one 6-row defect block
  /// per stage plus the initial-state rows).
  double nlp_jacobian_density() const;

 private:
  void stage_eval(const double* xu, double* out, double* jac) const;

  OcpConfig cfg_;
  ModelKind kind_;
  Eigen::VectorXd params_;
  sym::Tape tape_f_;
  sym::Tape tape_fj_;
  std::vector<std::pair<int, int>> jac_slots_;  // (row, col) of each Jacobian output
  BuildStats stats_;
  mutable std::vector<double> work_;
};

std::unique_ptr<OcpProblem> make_parametric_problem(const vehicle::VehicleParams& p, const OcpConfig& cfg);
std::unique_ptr<OcpProblem> make_ensemble_problem(const specialists::SpecialistLibrary& lib, const Eigen::VectorXd& w,
                                                  const OcpConfig& cfg);

/// Full re-transcription with the parameters baked in as constants; the
/// naive alternative to a parameter write. Returns the wall time.
struct JitRebuild {
  std::unique_ptr<OcpProblem> problem;
  double seconds = 0.0;
};
JitRebuild rebuild_jit_baseline(const vehicle::VehicleParams& p, const OcpConfig& cfg);

/// Previous optimum shifted by one step with the last input repeated.
std::vector<vehicle::ControlInput> shift_warm_start(const std::vector<vehicle::ControlInput>& u_star);

Eigen::VectorXd pack(const std::vector<vehicle::ControlInput>& u);
std::vector<vehicle::ControlInput> unpack(const Eigen::VectorXd& u);

}  // namespace wbmpc::ocp
