#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "wbmpc/specialists.hpp"
#include "wbmpc/vehicle.hpp"

namespace wbmpc::governor {

/// (x_k - x_prev) / dt with the heading difference wrapped to (-pi, pi].
vehicle::StateVector fd_derivative(const vehicle::VehicleState& x_k, const vehicle::VehicleState& x_prev, double dt);

/// How a window entry's regressors are built from the specialists.
///  Euler:     Psi_i(x_prev, u_prev)
///  Trapezoid: (Psi_i(x_prev, u_prev) + Psi_i(x, u_prev)) / 2
/// The trapezoid rule keeps the regression close to unbiased when the plant's
/// lateral dynamics are fast relative to dt.
enum class Residual { Euler, Trapezoid };

/// One window entry. `psi` caches every specialist's regressor rows so a
/// solve never re-evaluates the library.
struct Measurement {
  vehicle::VehicleState x;
  vehicle::VehicleState x_prev;
  vehicle::ControlInput u_prev;
  std::vector<specialists::DynamicRows> psi;
};

class MeasurementWindow {
 public:
  explicit MeasurementWindow(std::size_t capacity = 20, double dt = 0.02, Residual rule = Residual::Trapezoid);

  /// Appends an entry, dropping the oldest one when full.
  void push(const vehicle::VehicleState& x, const vehicle::VehicleState& x_prev, const vehicle::ControlInput& u_prev,
            const specialists::SpecialistLibrary& lib);
  void push(Measurement m);
  void clear() { entries_.clear(); }

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  double dt() const { return dt_; }
  Residual rule() const { return rule_; }
  const std::deque<Measurement>& entries() const { return entries_; }

  /// Normal equations of the dynamic-row regression: the objective at w is
  /// w'Gw - 2c'w + k.
  void normal_equations(Eigen::MatrixXd& G, Eigen::VectorXd& c, double& k) const;
  double objective(const Eigen::VectorXd& w) const;

 private:
  std::size_t capacity_;
  double dt_;
  Residual rule_;
  std::deque<Measurement> entries_;
};

/// Exact simplex-constrained least squares over the window. Fewer than two
/// entries give uniform weights.
Eigen::VectorXd solve_weights(const MeasurementWindow& window, const specialists::SpecialistLibrary& lib);

struct GovernorState {
  Eigen::VectorXd w_raw;
  Eigen::VectorXd w_smooth;
  double alpha = 0.1;
  MeasurementWindow window;
};

/// Both weight vectors start at `w0` (uniform when empty).
GovernorState make_governor(const specialists::SpecialistLibrary& lib, Eigen::VectorXd w0 = {},
                            std::size_t capacity = 20, double dt = 0.02, double alpha = 0.1,
                            Residual rule = Residual::Trapezoid);

/// w_smooth <- (1 - alpha) w_smooth + alpha w_new.
void ema_update(GovernorState& s, const Eigen::VectorXd& w_new);

/// Push, solve, smooth. Returns the wall-clock seconds spent, including the
/// specialist evaluations for the new entry. A failed solve falls back to
/// uniform weights with a warning on stderr.
double governor_step(GovernorState& s, const vehicle::VehicleState& x_k, const vehicle::VehicleState& x_prev,
                     const vehicle::ControlInput& u_prev, const specialists::SpecialistLibrary& lib);

/// Per-step weight log.
class WeightTrace {
 public:
  void record(double t, const Eigen::VectorXd& w, double latency);
  std::size_t size() const { return t_.size(); }
  const std::vector<Eigen::VectorXd>& weights() const { return w_; }
  const std::vector<double>& times() const { return t_; }
  const std::vector<double>& latencies() const { return latency_; }

  /// Columns t, w1..wN, latency_ms.
  void write_csv(std::ostream& out) const;
  void write_csv(const std::string& path) const;

 private:
  std::vector<double> t_;
  std::vector<Eigen::VectorXd> w_;
  std::vector<double> latency_;
};

}  // namespace wbmpc::governor
