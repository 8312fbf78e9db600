#include "wbmpc/ocp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

#include "wbmpc/jacobian.hpp"
#include "wbmpc/simplex_lsq.hpp"

namespace wbmpc::ocp {
namespace {

using Clock = std::chrono::steady_clock;
using vehicle::ControlInput;
using vehicle::VehicleState;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct QpResult {
  Eigen::VectorXd d;
  int iterations = 0;
};

// Primal active set for  min 1/2 d'Hd + g'd  s.t.  A d <= b, started at the
// feasible point d = 0 (b >= 0). H must be positive definite. A constraint
// only blocks when it is hit with a'p > 1e-12, so working-set rows stay
// linearly independent.
QpResult solve_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::MatrixXd& A,
                  const Eigen::VectorXd& b) {
  const Eigen::Index n = H.rows(), m = A.rows();
  QpResult res;
  res.d = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Index> work;
  std::vector<char> in_work(static_cast<std::size_t>(m), 0);
  const int max_iter = 10 * static_cast<int>(n + m);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    const auto nw = static_cast<Eigen::Index>(work.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + nw, n + nw);
    K.topLeftCorner(n, n) = H;
    for (Eigen::Index j = 0; j < nw; ++j) {
      K.block(n + j, 0, 1, n) = A.row(work[static_cast<std::size_t>(j)]);
      K.block(0, n + j, n, 1) = A.row(work[static_cast<std::size_t>(j)]).transpose();
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + nw);
    rhs.head(n) = -(H * res.d + g);
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    const Eigen::VectorXd p = sol.head(n);

    if (p.lpNorm<Eigen::Infinity>() <= 1e-14 * (1.0 + res.d.lpNorm<Eigen::Infinity>())) {
      Eigen::Index drop = -1;
      double most_negative = -1e-12;
      for (Eigen::Index j = 0; j < nw; ++j) {
        if (sol[n + j] < most_negative) {
          most_negative = sol[n + j];
          drop = j;
        }
      }
      if (drop < 0) return res;
      in_work[static_cast<std::size_t>(work[static_cast<std::size_t>(drop)])] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (in_work[static_cast<std::size_t>(i)]) continue;
      const double ap = A.row(i).dot(p);
      if (ap <= 1e-12) continue;
      const double step = std::max(0.0, b[i] - A.row(i).dot(res.d)) / ap;
      if (step < alpha) {
        alpha = step;
        blocking = i;
      }
    }
    res.d += alpha * p;
    if (blocking >= 0) {
      work.push_back(blocking);
      in_work[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  return res;
}

}  // namespace

void OcpConfig::validate() const {
  if (H < 1) throw std::invalid_argument("OcpConfig: H must be >= 1");
  if (!(Ts > 0.0)) throw std::invalid_argument("OcpConfig: Ts must be positive");
  if (!(Q_p >= 0.0 && R_delta >= 0.0 && R_D >= 0.0) || std::isnan(P)) {
    throw std::invalid_argument("OcpConfig: weights must be non-negative");
  }
  if (!(u_min.delta < u_max.delta && u_min.D < u_max.D)) throw std::invalid_argument("OcpConfig: u_min must be below u_max");
  if (!(ddelta_max > 0.0)) throw std::invalid_argument("OcpConfig: ddelta_max must be positive");
  if (max_iterations < 1 || max_halvings < 1) throw std::invalid_argument("OcpConfig: iteration limits must be positive");
}

void write_report_header(std::ostream& out) {
  out << "t,iterations,converged,cost,kkt,violation,total_ms,derivative_ms,linear_ms,line_search_ms\n";
}

void write_report_row(std::ostream& out, double t, const SolveReport& r) {
  out << t << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << r.cost << ',' << r.kkt_residual << ','
      << r.constraint_violation << ',' << r.timing.total * 1e3 << ',' << r.timing.derivative_eval * 1e3 << ','
      << r.timing.linear_solve * 1e3 << ',' << r.timing.line_search * 1e3 << '\n';
}

OcpProblem::OcpProblem(const sym::ExprGraph& model, ModelKind kind, const OcpConfig& cfg, Eigen::VectorXd params)
    : cfg_(cfg), kind_(kind), params_(std::move(params)) {
  const auto t0 = Clock::now();
  cfg_.validate();
  if (model.n_vars() != 8 || model.outputs().size() != vehicle::kStateDim) {
    throw std::invalid_argument("transcribe: model must have 8 variables and 6 outputs");
  }
  if (static_cast<std::size_t>(params_.size()) != model.n_params()) {
    throw std::invalid_argument("transcribe: parameter block does not match the model's slots");
  }
  if (kind_ == ModelKind::Fixed && model.n_params() != 0) throw std::invalid_argument("transcribe: fixed model has slots");

  sym::ExprGraph g(8, model.n_params());
  const auto f = sym::import_graph(g, model, model.outputs());
  std::vector<sym::Sym> next;
  for (std::size_t i = 0; i < vehicle::kStateDim; ++i) next.push_back(g.variable(i) + cfg_.Ts * g.wrap(f[i]));
  std::vector<sym::NodeId> rows;
  for (const auto& s : next) rows.push_back(s.id());
  const auto wrt = sym::all_variables(g);
  const auto jac = sym::jacobian(g, rows, wrt);

  std::vector<sym::NodeId> outs = rows;
  for (const auto& e : jac.entries) {
    outs.push_back(e.expr);
    jac_slots_.emplace_back(static_cast<int>(e.row), static_cast<int>(e.col));
  }
  tape_f_ = sym::Tape::compile(g, rows);
  tape_fj_ = sym::Tape::compile(g, outs);
  work_.resize(std::max(tape_f_.workspace_size(), tape_fj_.workspace_size()));

  stats_.model_nodes = model.size();
  stats_.stage_nodes = g.size();
  stats_.tape_instructions = tape_fj_.instruction_count();
  stats_.jacobian_entries = jac.entries.size();
  stats_.build_seconds = seconds_since(t0);
}

void OcpProblem::update_weights(const Eigen::VectorXd& w) {
  if (kind_ != ModelKind::Ensemble) throw std::logic_error("update_weights: not an ensemble problem");
  if (w.size() != params_.size() || !w.allFinite() || !on_simplex(w, 1e-6)) {
    throw std::invalid_argument("update_weights: w is not on the simplex");
  }
  params_ = w;
}

void OcpProblem::update_params(const Eigen::VectorXd& p) {
  if (kind_ != ModelKind::Parametric) throw std::logic_error("update_params: not a parametric problem");
  if (p.size() != params_.size()) throw std::invalid_argument("update_params: wrong parameter count");
  std::array<double, vehicle::kParamCount> arr{};
  for (std::size_t i = 0; i < arr.size(); ++i) arr[i] = p[static_cast<Eigen::Index>(i)];
  vehicle::validate(vehicle::from_vector(arr));
  params_ = p;
}

void OcpProblem::update_params(const vehicle::VehicleParams& p) {
  const auto arr = vehicle::to_vector(p);
  update_params(Eigen::Map<const Eigen::VectorXd>(arr.data(), static_cast<Eigen::Index>(arr.size())));
}

void OcpProblem::stage_eval(const double* xu, double* out, double* jac) const {
  const std::span<const double> vars(xu, 8);
  const std::span<const double> prm(params_.data(), static_cast<std::size_t>(params_.size()));
  if (!jac) {
    tape_f_.eval(vars, prm, std::span<double>(out, vehicle::kStateDim), work_);
    return;
  }
  thread_local std::vector<double> buf;
  buf.resize(tape_fj_.n_outputs());
  tape_fj_.eval(vars, prm, buf, work_);
  std::copy_n(buf.begin(), vehicle::kStateDim, out);
  std::fill_n(jac, 48, 0.0);
  for (std::size_t e = 0; e < jac_slots_.size(); ++e) {
    jac[jac_slots_[e].first + 6 * jac_slots_[e].second] = buf[vehicle::kStateDim + e];  // column-major 6x8
  }
}

VehicleState OcpProblem::step(const VehicleState& x, const ControlInput& u) const {
  const auto s = x.to_array();
  const double xu[8] = {s[0], s[1], s[2], s[3], s[4], s[5], u.delta, u.D};
  vehicle::StateVector out{};
  stage_eval(xu, out.data(), nullptr);
  return VehicleState::from_array(out);
}

std::vector<VehicleState> OcpProblem::rollout(const VehicleState& x0, const Eigen::VectorXd& u) const {
  if (u.size() != decision_size()) throw std::invalid_argument("rollout: wrong decision size");
  std::vector<VehicleState> xs{x0};
  for (int k = 0; k < cfg_.H; ++k) xs.push_back(step(xs.back(), {u[2 * k], u[2 * k + 1]}));
  return xs;
}

void OcpProblem::residuals(const VehicleState& x0, const std::vector<Eigen::Vector2d>& refs,
                           const ControlInput& u_prev, const Eigen::VectorXd& u, Eigen::VectorXd& r,
                           Eigen::MatrixXd* J) const {
  const int H = cfg_.H, n = decision_size();
  if (static_cast<int>(refs.size()) != H) throw std::invalid_argument("residuals: need H reference points");
  if (u.size() != n) throw std::invalid_argument("residuals: wrong decision size");
  const double sq = std::sqrt(cfg_.Q_p), sp = std::sqrt(cfg_.terminal_weight());
  const double sd = std::sqrt(cfg_.R_delta), sD = std::sqrt(cfg_.R_D);
  r.resize(residual_size());
  if (J) J->setZero(residual_size(), n);

  Eigen::Matrix<double, 6, Eigen::Dynamic> S = Eigen::MatrixXd::Zero(6, n);
  Eigen::Matrix<double, 6, 8> jac;
  auto xs = x0.to_array();
  double xu[8];
  double next[6];
  for (int k = 0; k < H; ++k) {
    std::copy(xs.begin(), xs.end(), xu);
    xu[6] = u[2 * k];
    xu[7] = u[2 * k + 1];
    stage_eval(xu, next, J ? jac.data() : nullptr);
    if (J) {
      S = (jac.leftCols<6>() * S).eval();
      S.middleCols<2>(2 * k) += jac.rightCols<2>();
      J->block(2 * k, 0, 2, n) = sq * S.topRows<2>();
    }
    std::copy(next, next + 6, xs.begin());
    r[2 * k] = sq * (xs[0] - refs[static_cast<std::size_t>(k)][0]);
    r[2 * k + 1] = sq * (xs[1] - refs[static_cast<std::size_t>(k)][1]);
  }
  r[2 * H] = sp * (xs[0] - refs.back()[0]);
  r[2 * H + 1] = sp * (xs[1] - refs.back()[1]);
  if (J) J->block(2 * H, 0, 2, n) = sp * S.topRows<2>();

  const int base = 2 * H + 2;
  for (int k = 0; k < H; ++k) {
    const double pd = k == 0 ? u_prev.delta : u[2 * k - 2];
    const double pD = k == 0 ? u_prev.D : u[2 * k - 1];
    r[base + 2 * k] = sd * (u[2 * k] - pd);
    r[base + 2 * k + 1] = sD * (u[2 * k + 1] - pD);
    if (J) {
      (*J)(base + 2 * k, 2 * k) = sd;
      (*J)(base + 2 * k + 1, 2 * k + 1) = sD;
      if (k > 0) {
        (*J)(base + 2 * k, 2 * k - 2) = -sd;
        (*J)(base + 2 * k + 1, 2 * k - 1) = -sD;
      }
    }
  }
  if (!r.allFinite()) throw SolverFailure("non-finite rollout");
}

double OcpProblem::cost(const VehicleState& x0, const std::vector<Eigen::Vector2d>& refs, const ControlInput& u_prev,
                        const Eigen::VectorXd& u, Eigen::VectorXd* grad) const {
  Eigen::VectorXd r;
  if (!grad) {
    residuals(x0, refs, u_prev, u, r, nullptr);
    return r.squaredNorm();
  }
  Eigen::MatrixXd J;
  residuals(x0, refs, u_prev, u, r, &J);
  *grad = 2.0 * J.transpose() * r;
  return r.squaredNorm();
}

double OcpProblem::constraint_violation(const Eigen::VectorXd& u, const ControlInput& u_prev) const {
  double v = 0.0;
  for (int k = 0; k < cfg_.H; ++k) {
    v = std::max({v, cfg_.u_min.delta - u[2 * k], u[2 * k] - cfg_.u_max.delta, cfg_.u_min.D - u[2 * k + 1],
                  u[2 * k + 1] - cfg_.u_max.D});
    const double prev = k == 0 ? u_prev.delta : u[2 * k - 2];
    v = std::max(v, std::abs(u[2 * k] - prev) - cfg_.ddelta_max);
  }
  return v;
}

Eigen::VectorXd OcpProblem::project(Eigen::VectorXd u, const ControlInput& u_prev) const {
  double prev = std::clamp(u_prev.delta, cfg_.u_min.delta, cfg_.u_max.delta);
  for (int k = 0; k < cfg_.H; ++k) {
    const double lo = std::max(cfg_.u_min.delta, prev - cfg_.ddelta_max);
    const double hi = std::min(cfg_.u_max.delta, prev + cfg_.ddelta_max);
    u[2 * k] = std::clamp(u[2 * k], lo, hi);
    u[2 * k + 1] = std::clamp(u[2 * k + 1], cfg_.u_min.D, cfg_.u_max.D);
    prev = u[2 * k];
  }
  return u;
}

SolveReport OcpProblem::solve(const VehicleState& x0, const std::vector<Eigen::Vector2d>& refs,
                              const ControlInput& u_prev, const std::vector<ControlInput>& warm_start) const {
  const auto t_start = Clock::now();
  const int H = cfg_.H, n = decision_size();
  SolveReport rep;
  std::vector<ControlInput> init = warm_start;
  if (init.empty()) init.assign(static_cast<std::size_t>(H), u_prev);
  if (static_cast<int>(init.size()) != H) throw std::invalid_argument("solve: warm start must have H inputs");
  // The rate constraint at k = 0 is anchored to an in-box previous input.
  const ControlInput anchor{std::clamp(u_prev.delta, cfg_.u_min.delta, cfg_.u_max.delta), u_prev.D};
  Eigen::VectorXd u = project(pack(init), anchor);

  // Constraint rows over the step d: A d <= b(u).
  const int m = 4 * H + 2 * H;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, n);
  for (int j = 0; j < n; ++j) {
    A(2 * j, j) = 1.0;
    A(2 * j + 1, j) = -1.0;
  }
  for (int k = 0; k < H; ++k) {
    A(2 * n + 2 * k, 2 * k) = 1.0;
    A(2 * n + 2 * k + 1, 2 * k) = -1.0;
    if (k > 0) {
      A(2 * n + 2 * k, 2 * k - 2) = -1.0;
      A(2 * n + 2 * k + 1, 2 * k - 2) = 1.0;
    }
  }
  const auto bounds = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd b(m);
    for (int j = 0; j < n; ++j) {
      const bool steer = j % 2 == 0;
      b[2 * j] = (steer ? cfg_.u_max.delta : cfg_.u_max.D) - x[j];
      b[2 * j + 1] = x[j] - (steer ? cfg_.u_min.delta : cfg_.u_min.D);
    }
    for (int k = 0; k < H; ++k) {
      const double rate = x[2 * k] - (k == 0 ? anchor.delta : x[2 * k - 2]);
      b[2 * n + 2 * k] = cfg_.ddelta_max - rate;
      b[2 * n + 2 * k + 1] = cfg_.ddelta_max + rate;
    }
    return b.cwiseMax(0.0).eval();
  };

  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  auto t0 = Clock::now();
  try {
    residuals(x0, refs, anchor, u, r, &J);
  } catch (const std::exception& e) {
    throw SolverFailure(std::string("solve: cannot evaluate the starting point: ") + e.what());
  }
  rep.timing.derivative_eval += seconds_since(t0);
  double f = r.squaredNorm();
  rep.initial_cost = f;
  double lambda = cfg_.initial_damping;

  for (int it = 0; it < cfg_.max_iterations; ++it) {
    rep.iterations = it + 1;
    t0 = Clock::now();
    Eigen::MatrixXd Hm = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Hm.diagonal().array() += lambda;
    const Eigen::VectorXd d = solve_qp(Hm, g, A, bounds(u)).d;
    rep.timing.linear_solve += seconds_since(t0);

    rep.kkt_residual = 2.0 * (Hm * d).lpNorm<Eigen::Infinity>();
    const double slope = 2.0 * g.dot(d);
    if (rep.kkt_residual < cfg_.kkt_tolerance || !(slope < 0.0)) {
      rep.converged = true;
      break;
    }

    t0 = Clock::now();
    double alpha = 1.0;
    bool accepted = false;
    for (int h = 0; h < cfg_.max_halvings; ++h, alpha *= 0.5) {
      double trial = INFINITY;
      try {
        Eigen::VectorXd rt;
        residuals(x0, refs, anchor, u + alpha * d, rt, nullptr);
        trial = rt.squaredNorm();
      } catch (const std::exception&) {
      }
      if (std::isfinite(trial) && trial <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
    }
    rep.timing.line_search += seconds_since(t0);
    if (!accepted) {
      lambda *= 10.0;
      if (lambda > 1e8) break;
      continue;
    }
    lambda = std::max(cfg_.initial_damping, lambda / 10.0);
    const Eigen::VectorXd step = alpha * d;
    u += step;
    t0 = Clock::now();
    residuals(x0, refs, anchor, u, r, &J);
    rep.timing.derivative_eval += seconds_since(t0);
    f = r.squaredNorm();
    if (step.lpNorm<Eigen::Infinity>() < cfg_.step_tolerance) {
      rep.converged = true;
      break;
    }
  }

  rep.cost = f;
  rep.u_star = unpack(u);
  rep.constraint_violation = std::max(0.0, constraint_violation(u, anchor));
  rep.timing.total = seconds_since(t_start);
  return rep;
}

double OcpProblem::nlp_jacobian_density() const {
  const auto H = static_cast<double>(cfg_.H);
  const double rows = 6.0 * (H + 1.0);
  const double cols = 6.0 * (H + 1.0) + 2.0 * H;
  const double nnz = 6.0 + H * (6.0 + static_cast<double>(jac_slots_.size()));
  return nnz / (rows * cols);
}

std::unique_ptr<OcpProblem> make_parametric_problem(const vehicle::VehicleParams& p, const OcpConfig& cfg) {
  const auto arr = vehicle::to_vector(p);
  Eigen::VectorXd params = Eigen::Map<const Eigen::VectorXd>(arr.data(), static_cast<Eigen::Index>(arr.size()));
  return std::make_unique<OcpProblem>(vehicle::build_parametric_graph(), ModelKind::Parametric, cfg, params);
}

std::unique_ptr<OcpProblem> make_ensemble_problem(const specialists::SpecialistLibrary& lib, const Eigen::VectorXd& w,
                                                  const OcpConfig& cfg) {
  auto prob = std::make_unique<OcpProblem>(specialists::build_ensemble(lib), ModelKind::Ensemble, cfg,
                                           Eigen::VectorXd::Constant(static_cast<Eigen::Index>(lib.size()),
                                                                     1.0 / static_cast<double>(lib.size())));
  if (w.size() > 0) prob->update_weights(w);
  return prob;
}

JitRebuild rebuild_jit_baseline(const vehicle::VehicleParams& p, const OcpConfig& cfg) {
  const auto t0 = Clock::now();
  JitRebuild out;
  out.problem = std::make_unique<OcpProblem>(vehicle::build_fixed_graph(p), ModelKind::Fixed, cfg);
  out.seconds = seconds_since(t0);
  return out;
}

std::vector<ControlInput> shift_warm_start(const std::vector<ControlInput>& u_star) {
  if (u_star.empty()) return {};
  std::vector<ControlInput> out(u_star.begin() + 1, u_star.end());
  out.push_back(u_star.back());
  return out;
}

Eigen::VectorXd pack(const std::vector<ControlInput>& u) {
  Eigen::VectorXd out(2 * static_cast<Eigen::Index>(u.size()));
  for (std::size_t k = 0; k < u.size(); ++k) {
    out[2 * static_cast<Eigen::Index>(k)] = u[k].delta;
    out[2 * static_cast<Eigen::Index>(k) + 1] = u[k].D;
  }
  return out;
}

std::vector<ControlInput> unpack(const Eigen::VectorXd& u) {
  std::vector<ControlInput> out(static_cast<std::size_t>(u.size() / 2));
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = {u[2 * static_cast<Eigen::Index>(k)], u[2 * static_cast<Eigen::Index>(k) + 1]};
  }
  return out;
}

}  // namespace wbmpc::ocp
