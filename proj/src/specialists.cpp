#include "wbmpc/specialists.hpp"

#include <cmath>
#include <numbers>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "wbmpc/config.hpp"
#include "wbmpc/simplex_lsq.hpp"

namespace wbmpc::specialists {
namespace {

using sym::Sym;
using vehicle::ControlInput;
using vehicle::VehicleParams;
using vehicle::VehicleState;

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_real(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw std::runtime_error("specialist file: bad number '" + tok + "'");
  return v;
}

void write_vector(std::ostream& out, const char* tag, const Eigen::VectorXd& v) {
  out << tag;
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ' ' << hex(v[i]);
  out << '\n';
}

std::vector<std::string> tokens(std::istream& in, const char* expect) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) break;
  }
  std::istringstream ls(line);
  std::vector<std::string> t;
  for (std::string s; ls >> s;) t.push_back(s);
  if (t.empty() || t[0] != expect) {
    throw std::runtime_error(std::string("specialist file: expected '") + expect + "', got '" + line + "'");
  }
  return t;
}

Eigen::VectorXd read_vector(std::istream& in, const char* tag, Eigen::Index n) {
  const auto t = tokens(in, tag);
  if (static_cast<Eigen::Index>(t.size()) != n + 1) {
    throw std::runtime_error(std::string("specialist file: wrong length for '") + tag + "'");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = parse_real(t[static_cast<std::size_t>(i) + 1]);
  return v;
}

Eigen::MatrixXd truth_matrix(const VehicleParams& p, const std::vector<Sample>& states) {
  Eigen::MatrixXd out(kDynamicRows, static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto d = vehicle::continuous_dynamics(states[k].x, states[k].u, p);
    for (int r = 0; r < kDynamicRows; ++r) out(r, static_cast<Eigen::Index>(k)) = d[vehicle::kVx + r];
  }
  return out;
}

Eigen::MatrixXd prediction_matrix(const Specialist& s, const std::vector<Sample>& states) {
  Eigen::MatrixXd out(kDynamicRows, static_cast<Eigen::Index>(states.size()));
  for (std::size_t k = 0; k < states.size(); ++k) {
    const auto d = predict_dynamics(s, states[k].x, states[k].u);
    for (int r = 0; r < kDynamicRows; ++r) out(r, static_cast<Eigen::Index>(k)) = d[r];
  }
  return out;
}

// Mean squared residual of `target` against the best simplex mix of `basis`.
double simplex_fit(const std::vector<const Eigen::MatrixXd*>& basis, const Eigen::MatrixXd& target,
                   Eigen::VectorXd* w) {
  const Eigen::Index n = static_cast<Eigen::Index>(basis.size());
  const double inv = 1.0 / static_cast<double>(target.cols());
  Eigen::MatrixXd G(n, n);
  Eigen::VectorXd c(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c[i] = basis[i]->cwiseProduct(target).sum() * inv;
    for (Eigen::Index j = 0; j <= i; ++j) G(i, j) = G(j, i) = basis[i]->cwiseProduct(*basis[j]).sum() * inv;
  }
  const auto res = solve_simplex_lsq(G, c, target.squaredNorm() * inv);
  if (w) *w = res.w;
  return std::max(0.0, res.objective);
}

}  // namespace

std::string_view protocol_name(Protocol p) { return p == Protocol::AdamOnly ? "adam_only" : "hybrid"; }

Protocol protocol_from_name(std::string_view name) {
  if (name == "adam_only") return Protocol::AdamOnly;
  if (name == "hybrid") return Protocol::Hybrid;
  throw std::invalid_argument("unknown training protocol '" + std::string(name) + "'");
}

Eigen::VectorXd SpecialistNet::forward(const Eigen::VectorXd& input) const {
  Eigen::VectorXd z = (input - input_mean).cwiseQuotient(input_std);
  const std::size_t last = weights.size() - 1;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::VectorXd a = weights[l] * z + biases[l];
    z = l == last ? a : Eigen::VectorXd(a.array().tanh());
  }
  return z.cwiseProduct(output_std) + output_mean;
}

Eigen::MatrixXd SpecialistNet::forward_batch(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd z = (inputs.colwise() - input_mean).array().colwise() / input_std.array();
  const std::size_t last = weights.size() - 1;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXd a = weights[l] * z;
    a.colwise() += biases[l];
    if (l != last) a = a.array().tanh();
    z = std::move(a);
  }
  return (z.array().colwise() * output_std.array()).colwise() + output_mean.array();
}

void SpecialistNet::validate() const {
  if (layer_dims.size() < 2 || layer_dims.front() != kNetInputs || layer_dims.back() != kNetOutputs) {
    throw std::invalid_argument("specialist: layer_dims must run from 5 inputs to 6 outputs");
  }
  if (weights.size() != layer_dims.size() - 1 || biases.size() != weights.size()) {
    throw std::invalid_argument("specialist: layer count mismatch");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
        biases[l].size() != layer_dims[l + 1]) {
      throw std::invalid_argument("specialist: layer " + std::to_string(l) + " has the wrong shape");
    }
    if (!weights[l].allFinite() || !biases[l].allFinite()) {
      throw std::invalid_argument("specialist: non-finite weights in layer " + std::to_string(l));
    }
  }
  const auto positive = [](const Eigen::VectorXd& v, Eigen::Index n, const char* what) {
    if (v.size() != n || !v.allFinite() || (v.array() <= 0.0).any()) {
      throw std::invalid_argument(std::string("specialist: ") + what + " must be positive");
    }
  };
  positive(input_std, kNetInputs, "input_std");
  positive(output_std, kNetOutputs, "output_std");
  if (input_mean.size() != kNetInputs || output_mean.size() != kNetOutputs || !input_mean.allFinite() ||
      !output_mean.allFinite()) {
    throw std::invalid_argument("specialist: bad normalization means");
  }
}

Eigen::VectorXd net_input(const VehicleState& x, const ControlInput& u) {
  Eigen::VectorXd in(kNetInputs);
  in << x.vx, x.vy, x.omega, u.delta, u.D;
  return in;
}

void write_net(std::ostream& out, const SpecialistNet& net) {
  net.validate();
  std::ostringstream os;
  os << "wbmpc-specialist 1\n";
  os << "protocol " << protocol_name(net.protocol) << '\n';
  os << "heldout_rmse " << hex(net.heldout_rmse) << '\n';
  VehicleParams::for_each_field(
      [&](const char* name, auto field) { os << "regime " << name << ' ' << hex(net.regime.*field) << '\n'; });
  os << "layers";
  for (int d : net.layer_dims) os << ' ' << d;
  os << '\n';
  write_vector(os, "input_mean", net.input_mean);
  write_vector(os, "input_std", net.input_std);
  write_vector(os, "output_mean", net.output_mean);
  write_vector(os, "output_std", net.output_std);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Eigen::MatrixXd& W = net.weights[l];
    for (Eigen::Index r = 0; r < W.rows(); ++r) write_vector(os, "w", W.row(r).transpose());
    write_vector(os, "b", net.biases[l]);
  }
  os << "end\n";
  out << os.str();
}

SpecialistNet read_net(std::istream& in) {
  SpecialistNet net;
  auto head = tokens(in, "wbmpc-specialist");
  if (head.size() != 2 || head[1] != "1") throw std::runtime_error("specialist file: unsupported version");
  net.protocol = protocol_from_name(tokens(in, "protocol").at(1));
  net.heldout_rmse = parse_real(tokens(in, "heldout_rmse").at(1));
  VehicleParams::for_each_field([&](const char* name, auto field) {
    const auto t = tokens(in, "regime");
    if (t.size() != 3 || t[1] != name) throw std::runtime_error(std::string("specialist file: expected regime ") + name);
    net.regime.*field = parse_real(t[2]);
  });
  const auto dims = tokens(in, "layers");
  for (std::size_t i = 1; i < dims.size(); ++i) net.layer_dims.push_back(std::stoi(dims[i]));
  if (net.layer_dims.size() < 2) throw std::runtime_error("specialist file: too few layers");
  net.input_mean = read_vector(in, "input_mean", net.layer_dims.front());
  net.input_std = read_vector(in, "input_std", net.layer_dims.front());
  net.output_mean = read_vector(in, "output_mean", net.layer_dims.back());
  net.output_std = read_vector(in, "output_std", net.layer_dims.back());
  for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
    Eigen::MatrixXd W(net.layer_dims[l + 1], net.layer_dims[l]);
    for (Eigen::Index r = 0; r < W.rows(); ++r) W.row(r) = read_vector(in, "w", W.cols()).transpose();
    net.weights.push_back(std::move(W));
    net.biases.push_back(read_vector(in, "b", net.layer_dims[l + 1]));
  }
  tokens(in, "end");
  net.validate();
  return net;
}

void save_net(const std::string& path, const SpecialistNet& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_net(out, net);
}

SpecialistNet load_net(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config::MissingArtifact(path);
  return read_net(in);
}

bool SpecialistLibrary::neural() const {
  return !members.empty() && std::holds_alternative<SpecialistNet>(members.front());
}

void SpecialistLibrary::validate() const {
  if (members.size() < 2) throw std::invalid_argument("specialist library needs at least two members");
  const bool nets = neural();
  for (const auto& m : members) {
    if (std::holds_alternative<SpecialistNet>(m) != nets) {
      throw std::invalid_argument("specialist library mixes ODE and neural members");
    }
    if (nets) {
      const auto& net = std::get<SpecialistNet>(m);
      net.validate();
      if (net.layer_dims != std::get<SpecialistNet>(members.front()).layer_dims) {
        throw std::invalid_argument("specialist library members differ in layer_dims");
      }
    } else {
      vehicle::validate(std::get<OdeSpecialist>(m).params);
    }
  }
}

DynamicRows predict_dynamics(const Specialist& s, const VehicleState& x, const ControlInput& u) {
  if (const auto* ode = std::get_if<OdeSpecialist>(&s)) {
    const auto d = vehicle::continuous_dynamics(x, u, ode->params);
    return {d[vehicle::kVx], d[vehicle::kVy], d[vehicle::kOmega]};
  }
  const auto y = std::get<SpecialistNet>(s).forward(net_input(x, u));
  return {y[3], y[4], y[5]};
}

const VehicleParams& regime_of(const Specialist& s) {
  if (const auto* ode = std::get_if<OdeSpecialist>(&s)) return ode->params;
  return std::get<SpecialistNet>(s).regime;
}

void save_library(const SpecialistLibrary& lib, const std::string& dir) {
  namespace fs = std::filesystem;
  lib.validate();
  fs::create_directories(dir);
  std::ostringstream manifest;
  manifest << "wbmpc-library 1\n";
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const std::string name = "specialist_" + std::to_string(i) + (lib.neural() ? ".net" : ".cfg");
    const std::string path = (fs::path(dir) / name).string();
    if (lib.neural()) {
      save_net(path, std::get<SpecialistNet>(lib.members[i]));
      manifest << "net " << name << '\n';
    } else {
      std::ofstream out(path);
      if (!out) throw std::runtime_error("cannot write " + path);
      vehicle::write_params(out, std::get<OdeSpecialist>(lib.members[i]).params);
      manifest << "ode " << name << '\n';
    }
  }
  std::ofstream out(fs::path(dir) / "manifest.txt");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << manifest.str();
}

SpecialistLibrary load_library(const std::string& manifest_path) {
  namespace fs = std::filesystem;
  std::ifstream in(manifest_path);
  if (!in) throw config::MissingArtifact(manifest_path);
  std::string line;
  std::getline(in, line);
  if (line != "wbmpc-library 1") throw config::ConfigError("not a specialist library manifest: " + manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  SpecialistLibrary lib;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string kind, file;
    ls >> kind >> file;
    const std::string path = (base / file).string();
    if (kind == "net") {
      lib.members.emplace_back(load_net(path));
    } else if (kind == "ode") {
      lib.members.emplace_back(OdeSpecialist{vehicle::load_params(path)});
    } else {
      throw config::ConfigError("manifest: unknown member kind '" + kind + "'");
    }
  }
  lib.validate();
  return lib;
}

std::array<Sym, kNetOutputs> emit_net(sym::ExprGraph& g, const std::array<Sym, kNetInputs>& in,
                                      const SpecialistNet& net) {
  std::vector<Sym> z(kNetInputs);
  for (int i = 0; i < kNetInputs; ++i) z[i] = (in[i] - net.input_mean[i]) / net.input_std[i];
  const std::size_t last = net.weights.size() - 1;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const Eigen::MatrixXd& W = net.weights[l];
    std::vector<Sym> next(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index j = 0; j < W.rows(); ++j) {
      Sym acc = g.constant(net.biases[l][j]);
      for (Eigen::Index i = 0; i < W.cols(); ++i) {
        if (W(j, i) != 0.0) acc = acc + W(j, i) * z[static_cast<std::size_t>(i)];
      }
      next[static_cast<std::size_t>(j)] = l == last ? acc : tanh(acc);
    }
    z = std::move(next);
  }
  std::array<Sym, kNetOutputs> out;
  for (int r = 0; r < kNetOutputs; ++r) out[r] = z[r] * net.output_std[r] + net.output_mean[r];
  return out;
}

sym::ExprGraph embed_symbolic(const SpecialistNet& net) {
  net.validate();
  sym::ExprGraph g(kNetInputs, 0);
  std::array<Sym, kNetInputs> in;
  for (int i = 0; i < kNetInputs; ++i) in[i] = g.variable(i);
  const auto out = emit_net(g, in, net);
  g.set_outputs(std::span<const Sym>(out));
  return g;
}

std::array<Sym, kDynamicRows> emit_dynamics(sym::ExprGraph& g, const vehicle::SymbolicIo& io, const Specialist& s) {
  if (const auto* ode = std::get_if<OdeSpecialist>(&s)) {
    const auto rows = vehicle::emit_fixed_dynamics(g, io, ode->params);
    return {rows[vehicle::kVx], rows[vehicle::kVy], rows[vehicle::kOmega]};
  }
  using namespace vehicle;
  const std::array<Sym, kNetInputs> in{io.x[kVx], io.x[kVy], io.x[kOmega], io.u[kDelta], io.u[kDrive]};
  const auto out = emit_net(g, in, std::get<SpecialistNet>(s));
  return {out[3], out[4], out[5]};
}

sym::ExprGraph build_ensemble(const SpecialistLibrary& lib) {
  using namespace vehicle;
  lib.validate();
  sym::ExprGraph g(kModelVars, lib.size());
  const SymbolicIo io = model_inputs(g);
  const Sym psi = io.x[kPsi], vx = io.x[kVx], vy = io.x[kVy];
  const Sym cpsi = cos(psi);
  const Sym spsi = sin(psi);
  std::array<Sym, kStateDim> rows{vx * cpsi - vy * spsi, vx * spsi + vy * cpsi, io.x[kOmega], Sym(), Sym(), Sym()};
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const Sym w = g.parameter(i);
    const auto dyn = emit_dynamics(g, io, lib.members[i]);
    for (int r = 0; r < kDynamicRows; ++r) {
      Sym term = w * dyn[r];
      Sym& acc = rows[kVx + r];
      acc = acc.valid() ? acc + term : term;
    }
  }
  g.set_outputs(std::span<const Sym>(rows));
  return g;
}

bool StateBox::contains(const vehicle::VehicleState& x) const {
  return x.vx >= vx_min && x.vx <= vx_max && std::abs(x.vy) <= vy_abs && std::abs(x.omega) <= omega_abs;
}

Sample draw_sample(std::mt19937_64& rng, const StateBox& box) {
  static const VehicleParams geometry = vehicle::nominal_params();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  Sample s;
  s.x.X = draw(-1.0, 1.0);
  s.x.Y = draw(-1.0, 1.0);
  s.x.psi = draw(-std::numbers::pi, std::numbers::pi);
  for (;;) {
    s.x.vx = draw(box.vx_min, box.vx_max);
    s.x.vy = draw(-box.vy_abs, box.vy_abs);
    s.x.omega = draw(-box.omega_abs, box.omega_abs);
    s.u.delta = draw(-box.delta_abs, box.delta_abs);
    s.u.D = draw(box.drive_min, box.drive_max);
    const auto a = vehicle::slip_angles(s.x, s.u, geometry);
    if (std::abs(a[0]) <= box.slip_abs && std::abs(a[1]) <= box.slip_abs) return s;
  }
}

std::vector<Sample> validation_states(std::size_t n, std::uint64_t seed, const StateBox& box) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out(n);
  for (auto& s : out) s = draw_sample(rng, box);
  return out;
}

std::vector<VehicleParams> candidate_grid(const VehicleParams& base) {
  std::vector<VehicleParams> out;
  for (double mu : {0.5, 0.75, 1.0, 1.25}) {
    for (double mass : {1.0, 1.2}) {
      for (double drag : {1.0, 1.4}) out.push_back(vehicle::make_regime(base, {mu, mass, drag}));
    }
  }
  return out;
}

double hull_residual(const std::vector<Specialist>& members, const VehicleParams& target,
                     const std::vector<Sample>& states, Eigen::VectorXd* w) {
  if (members.empty() || states.empty()) throw std::invalid_argument("hull_residual: empty input");
  std::vector<Eigen::MatrixXd> preds;
  preds.reserve(members.size());
  for (const auto& m : members) preds.push_back(prediction_matrix(m, states));
  std::vector<const Eigen::MatrixXd*> basis;
  for (const auto& p : preds) basis.push_back(&p);
  return simplex_fit(basis, truth_matrix(target, states), w);
}

std::vector<std::size_t> select_regimes(const std::vector<VehicleParams>& candidates, std::size_t n,
                                        const std::vector<Sample>& states, const VehicleParams& nominal) {
  if (n < 1 || candidates.size() < n) throw std::invalid_argument("select_regimes: need at least N candidates");
  if (states.empty()) throw std::invalid_argument("select_regimes: no validation states");
  std::vector<Eigen::MatrixXd> truth;
  for (const auto& c : candidates) truth.push_back(truth_matrix(c, states));
  const Eigen::MatrixXd nominal_truth = truth_matrix(nominal, states);

  std::vector<std::size_t> chosen;
  std::vector<bool> taken(candidates.size(), false);
  while (chosen.size() < n) {
    std::vector<const Eigen::MatrixXd*> basis;
    if (chosen.empty()) {
      basis.push_back(&nominal_truth);
    } else {
      for (std::size_t i : chosen) basis.push_back(&truth[i]);
    }
    std::size_t pick = candidates.size();
    double worst = -1.0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (taken[c]) continue;
      const double r = simplex_fit(basis, truth[c], nullptr);
      if (r > worst) {
        worst = r;
        pick = c;
      }
    }
    taken[pick] = true;
    chosen.push_back(pick);
  }
  return chosen;
}

SpecialistLibrary select_library(const std::vector<VehicleParams>& candidates, std::size_t n,
                                 const std::vector<Sample>& states, const VehicleParams& nominal) {
  SpecialistLibrary lib;
  for (std::size_t i : select_regimes(candidates, n, states, nominal)) {
    lib.members.emplace_back(OdeSpecialist{candidates[i]});
  }
  return lib;
}

Eigen::VectorXd nominal_weights(const SpecialistLibrary& lib, const VehicleParams& nominal,
                                const std::vector<Sample>& states) {
  Eigen::VectorXd w;
  hull_residual(lib.members, nominal, states, &w);
  return w;
}

}  // namespace wbmpc::specialists
