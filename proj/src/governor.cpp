#include "wbmpc/governor.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "wbmpc/simplex_lsq.hpp"

namespace wbmpc::governor {

using vehicle::ControlInput;
using vehicle::VehicleState;

vehicle::StateVector fd_derivative(const VehicleState& x_k, const VehicleState& x_prev, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("fd_derivative: dt must be positive");
  const auto a = x_k.to_array();
  const auto b = x_prev.to_array();
  vehicle::StateVector d{};
  for (std::size_t i = 0; i < vehicle::kStateDim; ++i) d[i] = (a[i] - b[i]) / dt;
  d[vehicle::kPsi] = vehicle::wrap_angle(a[vehicle::kPsi] - b[vehicle::kPsi]) / dt;
  return d;
}

MeasurementWindow::MeasurementWindow(std::size_t capacity, double dt, Residual rule)
    : capacity_(capacity), dt_(dt), rule_(rule) {
  if (capacity_ == 0) throw std::invalid_argument("MeasurementWindow: capacity must be positive");
  if (!(dt_ > 0.0)) throw std::invalid_argument("MeasurementWindow: dt must be positive");
}

void MeasurementWindow::push(const VehicleState& x, const VehicleState& x_prev, const ControlInput& u_prev,
                             const specialists::SpecialistLibrary& lib) {
  Measurement m{x, x_prev, u_prev, {}};
  m.psi.reserve(lib.size());
  for (const auto& s : lib.members) {
    auto psi = specialists::predict_dynamics(s, x_prev, u_prev);
    if (rule_ == Residual::Trapezoid) {
      const auto end = specialists::predict_dynamics(s, x, u_prev);
      for (int r = 0; r < specialists::kDynamicRows; ++r) psi[r] = 0.5 * (psi[r] + end[r]);
    }
    m.psi.push_back(psi);
  }
  push(std::move(m));
}

void MeasurementWindow::push(Measurement m) {
  if (!entries_.empty() && m.psi.size() != entries_.front().psi.size()) {
    throw std::invalid_argument("MeasurementWindow: library size changed");
  }
  entries_.push_back(std::move(m));
  while (entries_.size() > capacity_) entries_.pop_front();
}

void MeasurementWindow::normal_equations(Eigen::MatrixXd& G, Eigen::VectorXd& c, double& k) const {
  const Eigen::Index n = entries_.empty() ? 0 : static_cast<Eigen::Index>(entries_.front().psi.size());
  G = Eigen::MatrixXd::Zero(n, n);
  c = Eigen::VectorXd::Zero(n);
  k = 0.0;
  Eigen::MatrixXd A(specialists::kDynamicRows, n);
  Eigen::Vector3d b;
  for (const auto& m : entries_) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int r = 0; r < specialists::kDynamicRows; ++r) A(r, i) = dt_ * m.psi[static_cast<std::size_t>(i)][r];
    }
    b << m.x.vx - m.x_prev.vx, m.x.vy - m.x_prev.vy, m.x.omega - m.x_prev.omega;
    G.noalias() += A.transpose() * A;
    c.noalias() += A.transpose() * b;
    k += b.squaredNorm();
  }
}

double MeasurementWindow::objective(const Eigen::VectorXd& w) const {
  Eigen::MatrixXd G;
  Eigen::VectorXd c;
  double k = 0.0;
  normal_equations(G, c, k);
  return simplex_objective(G, c, k, w);
}

Eigen::VectorXd solve_weights(const MeasurementWindow& window, const specialists::SpecialistLibrary& lib) {
  const auto n = static_cast<Eigen::Index>(lib.size());
  if (n < 2) throw std::invalid_argument("solve_weights: library needs at least two members");
  if (window.size() < 2) return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  if (window.entries().front().psi.size() != lib.size()) {
    throw std::invalid_argument("solve_weights: window was filled with a different library");
  }
  Eigen::MatrixXd G;
  Eigen::VectorXd c;
  double k = 0.0;
  window.normal_equations(G, c, k);
  if (!G.allFinite() || !c.allFinite()) throw std::runtime_error("solve_weights: non-finite regression data");
  return solve_simplex_lsq(G, c, k).w;
}

GovernorState make_governor(const specialists::SpecialistLibrary& lib, Eigen::VectorXd w0, std::size_t capacity,
                            double dt, double alpha, Residual rule) {
  const auto n = static_cast<Eigen::Index>(lib.size());
  if (n < 2) throw std::invalid_argument("make_governor: library needs at least two members");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("make_governor: alpha must lie in (0, 1]");
  if (w0.size() == 0) w0 = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
  if (w0.size() != n || !on_simplex(w0, 1e-6)) throw std::invalid_argument("make_governor: w0 is not on the simplex");
  return {w0, w0, alpha, MeasurementWindow(capacity, dt, rule)};
}

void ema_update(GovernorState& s, const Eigen::VectorXd& w_new) {
  if (w_new.size() != s.w_smooth.size() || !on_simplex(w_new, 1e-6)) {
    throw std::invalid_argument("ema_update: w_new is not on the simplex");
  }
  s.w_smooth = (1.0 - s.alpha) * s.w_smooth + s.alpha * w_new;
}

double governor_step(GovernorState& s, const VehicleState& x_k, const VehicleState& x_prev, const ControlInput& u_prev,
                     const specialists::SpecialistLibrary& lib) {
  const auto t0 = std::chrono::steady_clock::now();
  s.window.push(x_k, x_prev, u_prev, lib);
  if (s.window.size() >= 2) {
    try {
      s.w_raw = solve_weights(s.window, lib);
    } catch (const std::exception& e) {
      std::cerr << "warning: governor solve failed (" << e.what() << "), using uniform weights\n";
      s.w_raw = Eigen::VectorXd::Constant(s.w_smooth.size(), 1.0 / static_cast<double>(s.w_smooth.size()));
    }
    ema_update(s, s.w_raw);
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void WeightTrace::record(double t, const Eigen::VectorXd& w, double latency) {
  if (!w_.empty() && w.size() != w_.front().size()) throw std::invalid_argument("WeightTrace: width changed");
  t_.push_back(t);
  w_.push_back(w);
  latency_.push_back(latency);
}

void WeightTrace::write_csv(std::ostream& out) const {
  const Eigen::Index n = w_.empty() ? 0 : w_.front().size();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",w" << i + 1;
  out << ",latency_ms\n";
  out.precision(10);
  for (std::size_t k = 0; k < t_.size(); ++k) {
    out << t_[k];
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << w_[k][i];
    out << ',' << latency_[k] * 1e3 << '\n';
  }
}

void WeightTrace::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_csv(f);
}

}  // namespace wbmpc::governor
