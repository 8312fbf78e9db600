#include "wbmpc/vehicle.hpp"

#include <fstream>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "wbmpc/config.hpp"

namespace wbmpc::vehicle {

bool VehicleState::finite() const {
  for (double v : to_array()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

VehicleParams nominal_params() {
  VehicleParams p{};
  p.m = 0.041;
  p.Iz = 27.8e-6;
  p.lf = 0.029;
  p.lr = 0.033;
  p.Bf = 2.579;
  p.Cf = 1.2;
  p.Df = 0.192;
  p.Br = 3.3852;
  p.Cr = 1.2691;
  p.Dr = 0.1737;
  p.Cm1 = 0.287;
  p.Cm2 = 0.0545;
  p.Cr0 = 0.0518;
  p.Cd = 0.00035;
  p.mu_scale = 1.0;
  return p;
}

void validate(const VehicleParams& p) {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("vehicle parameter '") + name + "' must be positive");
    }
  };
  positive(p.m, "m");
  positive(p.Iz, "Iz");
  positive(p.lf, "lf");
  positive(p.lr, "lr");
  positive(p.Df, "Df");
  positive(p.Dr, "Dr");
  positive(p.mu_scale, "mu_scale");
  VehicleParams::for_each_field([&](const char* name, auto field) {
    if (!std::isfinite(p.*field)) {
      throw std::invalid_argument(std::string("vehicle parameter '") + name + "' is not finite");
    }
  });
}

std::array<double, kParamCount> to_vector(const VehicleParams& p) {
  std::array<double, kParamCount> v{};
  std::size_t i = 0;
  VehicleParams::for_each_field([&](const char*, auto field) { v[i++] = p.*field; });
  return v;
}

VehicleParams from_vector(const std::array<double, kParamCount>& v) {
  VehicleParams p{};
  std::size_t i = 0;
  VehicleParams::for_each_field([&](const char*, auto field) { p.*field = v[i++]; });
  return p;
}

std::size_t param_slot(std::string_view name) {
  std::size_t i = 0, found = kParamCount;
  VehicleParams::for_each_field([&](const char* n, auto) {
    if (name == n) found = i;
    ++i;
  });
  if (found == kParamCount) throw std::invalid_argument("unknown vehicle parameter '" + std::string(name) + "'");
  return found;
}

VehicleParams parse_params(std::istream& in, const VehicleParams& base) {
  const config::KeyValues kv = config::parse_key_values(in);
  VehicleParams p = base;
  for (const auto& [key, value] : kv) {
    bool known = false;
    VehicleParams::for_each_field([&](const char* name, auto field) {
      if (key == name) {
        p.*field = config::to_double(key, value);
        known = true;
      }
    });
    if (!known) throw config::ConfigError("unknown vehicle parameter '" + key + "'");
  }
  validate(p);
  return p;
}

VehicleParams load_params(const std::string& path, const VehicleParams& base) {
  std::ifstream in(path);
  if (!in) throw config::MissingArtifact(path);
  return parse_params(in, base);
}

void write_params(std::ostream& out, const VehicleParams& p) {
  std::ostringstream os;
  os << std::setprecision(17);
  VehicleParams::for_each_field([&](const char* name, auto field) { os << name << " = " << p.*field << '\n'; });
  out << os.str();
}

VehicleParams make_regime(const VehicleParams& base, const RegimeShift& shift) {
  const auto check = [](const std::optional<double>& f, const char* name) {
    if (f && !(*f > 0.0)) throw std::invalid_argument(std::string("regime factor '") + name + "' must be positive");
  };
  check(shift.mu_scale, "mu_scale");
  check(shift.mass_factor, "mass_factor");
  check(shift.drag_factor, "drag_factor");
  VehicleParams p = base;
  if (shift.mu_scale) p.mu_scale = *shift.mu_scale;
  if (shift.mass_factor) p.m *= *shift.mass_factor;
  if (shift.drag_factor) p.Cd *= *shift.drag_factor;
  return p;
}

StateVector continuous_dynamics(const VehicleState& x, const ControlInput& u, const VehicleParams& p) {
  return single_track_rhs<double, double>(x.to_array(), u.to_array(), p);
}

std::array<double, 2> slip_angles(const VehicleState& x, const ControlInput& u, const VehicleParams& p) {
  const double vx = x.vx + kSlipEps;
  return {u.delta - std::atan((x.vy + p.lf * x.omega) / vx), -std::atan((x.vy - p.lr * x.omega) / vx)};
}

VehicleState rk4_step(const VehicleState& x, const ControlInput& u, const VehicleParams& p, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("rk4_step: dt must be positive");
  const StateVector s = x.to_array();
  const ControlVector c = u.to_array();
  const auto f = [&](const StateVector& v) { return single_track_rhs<double, double>(v, c, p); };
  const auto axpy = [](const StateVector& a, double h, const StateVector& k) {
    StateVector r;
    for (std::size_t i = 0; i < kStateDim; ++i) r[i] = a[i] + h * k[i];
    return r;
  };
  const StateVector k1 = f(s);
  const StateVector k2 = f(axpy(s, 0.5 * dt, k1));
  const StateVector k3 = f(axpy(s, 0.5 * dt, k2));
  const StateVector k4 = f(axpy(s, dt, k3));
  StateVector out;
  for (std::size_t i = 0; i < kStateDim; ++i) out[i] = s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return VehicleState::from_array(out);
}

VehicleState simulate(const VehicleState& x, const ControlInput& u, const VehicleParams& p, double period,
                      int substeps) {
  VehicleState s = x;
  const double dt = period / substeps;
  for (int i = 0; i < substeps; ++i) s = rk4_step(s, u, p, dt);
  return s;
}

SymbolicIo model_inputs(sym::ExprGraph& g) {
  SymbolicIo io;
  for (std::size_t i = 0; i < kStateDim; ++i) io.x[i] = g.variable(i);
  for (std::size_t i = 0; i < kControlDim; ++i) io.u[i] = g.variable(kStateDim + i);
  return io;
}

sym::ExprGraph build_parametric_graph() {
  sym::ExprGraph g(kModelVars, kParamCount);
  const SymbolicIo io = model_inputs(g);
  BasicParams<sym::Sym> p{};
  std::size_t slot = 0;
  BasicParams<sym::Sym>::for_each_field([&](const char*, auto field) { p.*field = g.parameter(slot++); });
  const auto rhs = single_track_rhs<sym::Sym, sym::Sym>(io.x, io.u, p);
  g.set_outputs(std::span<const sym::Sym>(rhs));
  return g;
}

std::array<sym::Sym, kStateDim> emit_fixed_dynamics(sym::ExprGraph& g, const SymbolicIo& io,
                                                    const VehicleParams& p) {
  // Member pointers differ between instantiations; go through the flat layout.
  BasicParams<sym::Sym> lits{};
  const auto values = to_vector(p);
  std::size_t i = 0;
  BasicParams<sym::Sym>::for_each_field([&](const char*, auto field) { lits.*field = g.constant(values[i++]); });
  return single_track_rhs<sym::Sym, sym::Sym>(io.x, io.u, lits);
}

sym::ExprGraph build_fixed_graph(const VehicleParams& p) {
  sym::ExprGraph g(kModelVars, 0);
  const SymbolicIo io = model_inputs(g);
  const auto rhs = emit_fixed_dynamics(g, io, p);
  g.set_outputs(std::span<const sym::Sym>(rhs));
  return g;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r <= 0.0) r += two_pi;
  return r - std::numbers::pi;
}

}  // namespace wbmpc::vehicle
