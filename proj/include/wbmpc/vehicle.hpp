#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "wbmpc/symgraph.hpp"

namespace wbmpc::vehicle {

inline constexpr std::size_t kStateDim = 6;
inline constexpr std::size_t kControlDim = 2;
inline constexpr std::size_t kParamCount = 15;

/// Index of each state component in the flat state vector.
enum StateIndex : std::size_t { kX = 0, kY, kPsi, kVx, kVy, kOmega };
enum ControlIndex : std::size_t { kDelta = 0, kDrive };

/// Slip-angle denominator regularization [m/s].
inline constexpr double kSlipEps = 1e-3;

using StateVector = std::array<double, kStateDim>;
using ControlVector = std::array<double, kControlDim>;

struct VehicleState {
  double X = 0.0;      // m
  double Y = 0.0;      // m
  double psi = 0.0;    // rad
  double vx = 0.0;     // m/s, body frame
  double vy = 0.0;     // m/s, body frame
  double omega = 0.0;  // rad/s

  StateVector to_array() const { return {X, Y, psi, vx, vy, omega}; }
  static VehicleState from_array(const StateVector& a) { return {a[0], a[1], a[2], a[3], a[4], a[5]}; }
  bool finite() const;
};

struct ControlInput {
  double delta = 0.0;  // rad
  double D = 0.0;      // drive command in [-1, 1]

  ControlVector to_array() const { return {delta, D}; }
  static ControlInput from_array(const ControlVector& a) { return {a[0], a[1]}; }
};

/// Physical regime parameters. Instantiated with double for simulation and
/// with sym::Sym when the parameters are graph inputs.
template <class T>
struct BasicParams {
  T m;         // kg
  T Iz;        // kg m^2
  T lf;        // m, CoG to front axle
  T lr;        // m, CoG to rear axle
  T Bf, Cf, Df;
  T Br, Cr, Dr;
  T Cm1, Cm2;  // drivetrain
  T Cr0;       // N, rolling resistance
  T Cd;        // N s^2 / m^2, aerodynamic drag
  T mu_scale;  // friction multiplier on Df, Dr

  template <class F>
  static constexpr void for_each_field(F&& f) {
    f("m", &BasicParams::m);
    f("Iz", &BasicParams::Iz);
    f("lf", &BasicParams::lf);
    f("lr", &BasicParams::lr);
    f("Bf", &BasicParams::Bf);
    f("Cf", &BasicParams::Cf);
    f("Df", &BasicParams::Df);
    f("Br", &BasicParams::Br);
    f("Cr", &BasicParams::Cr);
    f("Dr", &BasicParams::Dr);
    f("Cm1", &BasicParams::Cm1);
    f("Cm2", &BasicParams::Cm2);
    f("Cr0", &BasicParams::Cr0);
    f("Cd", &BasicParams::Cd);
    f("mu_scale", &BasicParams::mu_scale);
  }
};

using VehicleParams = BasicParams<double>;

/// 1:43-scale nominal set used when no parameter file is given.
VehicleParams nominal_params();

/// Throws std::invalid_argument when a physical invariant is violated.
void validate(const VehicleParams& p);

/// Flat vector in `for_each_field` order (the parametric graph's slot layout).
std::array<double, kParamCount> to_vector(const VehicleParams& p);
VehicleParams from_vector(const std::array<double, kParamCount>& v);
std::size_t param_slot(std::string_view name);

/// `name = value` lines; `#`/`;` comments. Unspecified fields keep `base`.
VehicleParams parse_params(std::istream& in, const VehicleParams& base = nominal_params());
VehicleParams load_params(const std::string& path, const VehicleParams& base = nominal_params());
void write_params(std::ostream& out, const VehicleParams& p);

struct RegimeShift {
  std::optional<double> mu_scale;
  std::optional<double> mass_factor;
  std::optional<double> drag_factor;
};

VehicleParams make_regime(const VehicleParams& base, const RegimeShift& shift);

/// Dynamic single-track model with Pacejka lateral tire forces.
///
///   alpha_f = -atan((vy + lf w) / (vx + eps)) + delta
///   alpha_r = -atan((vy - lr w) / (vx + eps))
///   Fy      = mu D sin(C atan(B alpha))           per axle
///   Fx      = (Cm1 - Cm2 vx) D - Cr0 - Cd vx^2
///   vx'     = (Fx - Fyf sin(delta) + m vy w) / m
///   vy'     = (Fyr + Fyf cos(delta) - m vx w) / m
///   w'      = (Fyf lf cos(delta) - Fyr lr) / Iz
template <class T, class P>
std::array<T, kStateDim> single_track_rhs(const std::array<T, kStateDim>& x,
                                          const std::array<T, kControlDim>& u, const BasicParams<P>& p) {
  using std::atan;
  using std::cos;
  using std::sin;
  const T& psi = x[kPsi];
  const T& vx = x[kVx];
  const T& vy = x[kVy];
  const T& w = x[kOmega];
  const T& delta = u[kDelta];
  const T& drive = u[kDrive];

  const T vx_reg = vx + kSlipEps;
  const T alpha_f = delta - atan((vy + p.lf * w) / vx_reg);
  const T alpha_r = -atan((vy - p.lr * w) / vx_reg);
  const T fy_f = p.mu_scale * p.Df * sin(p.Cf * atan(p.Bf * alpha_f));
  const T fy_r = p.mu_scale * p.Dr * sin(p.Cr * atan(p.Br * alpha_r));
  const T fx = (p.Cm1 - p.Cm2 * vx) * drive - p.Cr0 - p.Cd * vx * vx;
  const T sd = sin(delta);
  const T cd = cos(delta);
  const T cpsi = cos(psi);
  const T spsi = sin(psi);

  return {
      vx * cpsi - vy * spsi,
      vx * spsi + vy * cpsi,
      w,
      (fx - fy_f * sd + p.m * vy * w) / p.m,
      (fy_r + fy_f * cd - p.m * vx * w) / p.m,
      (fy_f * p.lf * cd - fy_r * p.lr) / p.Iz,
  };
}

StateVector continuous_dynamics(const VehicleState& x, const ControlInput& u, const VehicleParams& p);

/// Front and rear tire slip angles [rad] as the model sees them.
std::array<double, 2> slip_angles(const VehicleState& x, const ControlInput& u, const VehicleParams& p);

/// Classical fourth-order Runge-Kutta step with the control held constant.
VehicleState rk4_step(const VehicleState& x, const ControlInput& u, const VehicleParams& p, double dt);

/// `substeps` RK4 steps covering `period` seconds.
VehicleState simulate(const VehicleState& x, const ControlInput& u, const VehicleParams& p, double period,
                      int substeps);

/// Graph slot layout shared by every dynamics graph: variables are
/// (X, Y, psi, vx, vy, omega, delta, D).
inline constexpr std::size_t kModelVars = kStateDim + kControlDim;

struct SymbolicIo {
  std::array<sym::Sym, kStateDim> x;
  std::array<sym::Sym, kControlDim> u;
};

SymbolicIo model_inputs(sym::ExprGraph& g);

/// Dynamics with every VehicleParams field as a Parameter slot, so regime
/// updates are parameter writes. Six outputs, eight variables, 15 params.
sym::ExprGraph build_parametric_graph();

/// Same equations with `p` baked in as literals (the rebuild baseline and the
/// exact-ODE specialists).
sym::ExprGraph build_fixed_graph(const VehicleParams& p);

/// Appends the model's six derivative rows to an existing graph.
std::array<sym::Sym, kStateDim> emit_fixed_dynamics(sym::ExprGraph& g, const SymbolicIo& io,
                                                    const VehicleParams& p);

/// Wrap an angle to (-pi, pi].
double wrap_angle(double a);

}  // namespace wbmpc::vehicle
