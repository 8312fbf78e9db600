#include "wbmpc/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>

namespace wbmpc::scenarios {
namespace {

using Clock = std::chrono::steady_clock;
using vehicle::ControlInput;
using vehicle::VehicleState;

// Exact turtle integration of straights and arcs.
struct Turtle {
  Eigen::Vector2d p = Eigen::Vector2d::Zero();
  double heading = 0.0;
  std::vector<Eigen::Vector2d> pts{Eigen::Vector2d::Zero()};

  void advance(double length, double curvature, double ds) {
    const int n = std::max(1, static_cast<int>(std::ceil(length / ds - 1e-9)));
    const double h = length / n;
    for (int i = 0; i < n; ++i) {
      if (curvature == 0.0) {
        p += h * Eigen::Vector2d(std::cos(heading), std::sin(heading));
      } else {
        const double next = heading + curvature * h;
        p += Eigen::Vector2d(std::sin(next) - std::sin(heading), std::cos(heading) - std::cos(next)) / curvature;
        heading = next;
      }
      pts.push_back(p);
    }
  }
};

void append_num(std::string& s, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  s += buf;
}

}  // namespace

Track::Track(std::vector<Eigen::Vector2d> waypoints) : pts_(std::move(waypoints)) {
  if (pts_.size() < 3) throw std::invalid_argument("Track: need at least three waypoints");
  s_.assign(pts_.size(), 0.0);
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const double seg = (pts_[(i + 1) % pts_.size()] - pts_[i]).norm();
    if (!(seg > 0.0)) throw std::invalid_argument("Track: consecutive waypoints must differ");
    if (i + 1 < pts_.size()) s_[i + 1] = s_[i] + seg;
    else length_ = s_[i] + seg;
  }
}

Track Track::stadium(double straight, double radius, double chicane_radius, double chicane_angle, double ds) {
  const double chicane_len = 4.0 * chicane_radius * std::sin(chicane_angle);
  if (!(radius > 0.0 && chicane_radius > 0.0 && chicane_angle >= 0.0 && chicane_angle < std::numbers::pi / 2 &&
        straight > chicane_len && ds > 0.0)) {
    throw std::invalid_argument("Track::stadium: inconsistent geometry");
  }
  const double flat = 0.5 * (straight - chicane_len);
  const double k = 1.0 / chicane_radius;
  const double arc = chicane_radius * chicane_angle;
  Turtle t;
  for (int side = 0; side < 2; ++side) {
    t.advance(flat, 0.0, ds);
    if (chicane_angle > 0.0) {
      t.advance(arc, k, ds);
      t.advance(2.0 * arc, -k, ds);
      t.advance(arc, k, ds);
    }
    t.advance(flat, 0.0, ds);
    t.advance(std::numbers::pi * radius, 1.0 / radius, ds);
  }
  if (t.pts.back().norm() > 1e-9) throw std::logic_error("Track::stadium: loop does not close");
  t.pts.pop_back();
  return Track(std::move(t.pts));
}

Track Track::circle(double radius, std::size_t n) {
  std::vector<Eigen::Vector2d> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    pts.emplace_back(radius * std::cos(a), radius * std::sin(a));
  }
  return Track(std::move(pts));
}

Eigen::Vector2d Track::at(double s) const {
  s = std::fmod(s, length_);
  if (s < 0.0) s += length_;
  const auto it = std::upper_bound(s_.begin(), s_.end(), s);
  const std::size_t i = static_cast<std::size_t>(it - s_.begin()) - 1;
  const std::size_t j = (i + 1) % pts_.size();
  const double end = j == 0 ? length_ : s_[j];
  const double a = (s - s_[i]) / (end - s_[i]);
  return (1.0 - a) * pts_[i] + a * pts_[j];
}

TrackProjection Track::project(const Eigen::Vector2d& p) const {
  TrackProjection best;
  double best_d2 = INFINITY;
  for (std::size_t i = 0; i < pts_.size(); ++i) {
    const Eigen::Vector2d& a = pts_[i];
    const Eigen::Vector2d ab = pts_[(i + 1) % pts_.size()] - a;
    const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    const Eigen::Vector2d q = a + t * ab;
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.segment = i;
      best.s = s_[i] + t * ab.norm();
      best.point = q;
    }
  }
  best.distance = std::sqrt(best_d2);
  if (best.s >= length_) best.s -= length_;
  return best;
}

std::vector<Eigen::Vector2d> make_reference(const Track& track, const VehicleState& x, const ocp::OcpConfig& cfg) {
  const double s0 = track.project({x.X, x.Y}).s;
  std::vector<Eigen::Vector2d> refs;
  refs.reserve(static_cast<std::size_t>(cfg.H));
  for (int k = 1; k <= cfg.H; ++k) refs.push_back(track.at(s0 + k * cfg.v_ref * cfg.Ts));
  return refs;
}

std::string_view tier_name(Tier t) {
  switch (t) {
    case Tier::IdealOde: return "ideal_ode";
    case Tier::NoisyOde: return "noisy_ode";
    case Tier::PinnAdam: return "pinn_adam";
    case Tier::PinnHybrid: return "pinn_hybrid";
  }
  return "?";
}

std::string_view shift_name(Shift s) {
  switch (s) {
    case Shift::None: return "none";
    case Shift::FrictionOnly: return "friction_only";
    case Shift::AllParams: return "all_params";
    case Shift::BenchmarkFrictionUp: return "benchmark_friction_up";
  }
  return "?";
}

Tier tier_from_name(std::string_view name) {
  for (Tier t : {Tier::IdealOde, Tier::NoisyOde, Tier::PinnAdam, Tier::PinnHybrid}) {
    if (tier_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown tier '" + std::string(name) + "'");
}

Shift shift_from_name(std::string_view name) {
  for (Shift s : {Shift::None, Shift::FrictionOnly, Shift::AllParams, Shift::BenchmarkFrictionUp}) {
    if (shift_name(s) == name) return s;
  }
  throw std::invalid_argument("unknown shift '" + std::string(name) + "'");
}

vehicle::RegimeShift regime_shift(Shift s) {
  switch (s) {
    case Shift::None: return {};
    case Shift::FrictionOnly: return {0.5, std::nullopt, std::nullopt};
    case Shift::AllParams: return {0.5, 1.2, 1.4};
    case Shift::BenchmarkFrictionUp: return {1.25, std::nullopt, std::nullopt};
  }
  return {};
}

void Scenario::validate() const {
  if (!(duration > 0.0 && shift_time >= 0.0 && shift_time < duration)) {
    throw std::invalid_argument("Scenario: need 0 <= shift_time < duration");
  }
  if (!(warmup >= 0.0 && warmup <= shift_time)) throw std::invalid_argument("Scenario: warmup must precede the shift");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("Scenario: noise sigma must be non-negative");
}

void Trace::write_csv(std::ostream& out) const {
  const Eigen::Index n = rows.empty() ? 0 : rows.front().w.size();
  std::string s = "t,X,Y,psi,vx,vy,omega,delta,D,ref_X,ref_Y,cross_track,speed_error,iterations,converged,cost";
  for (Eigen::Index i = 0; i < n; ++i) s += ",w" + std::to_string(i + 1);
  s += '\n';
  for (const auto& r : rows) {
    const double vals[] = {r.t,     r.x.X,   r.x.Y,    r.x.psi,       r.x.vx,         r.x.vy,
                           r.x.omega, r.u.delta, r.u.D, r.ref[0], r.ref[1], r.cross_track, r.speed_error};
    for (std::size_t i = 0; i < std::size(vals); ++i) {
      if (i) s += ',';
      append_num(s, vals[i]);
    }
    s += ',' + std::to_string(r.iterations) + ',' + (r.converged ? "1" : "0") + ',';
    append_num(s, r.cost);
    for (Eigen::Index i = 0; i < r.w.size(); ++i) {
      s += ',';
      append_num(s, r.w[i]);
    }
    s += '\n';
  }
  out << s;
}

void Trace::write_timing_csv(std::ostream& out) const {
  std::string s = "t,total_ms,derivative_ms,linear_ms,line_search_ms,governor_ms\n";
  for (const auto& r : rows) {
    const double vals[] = {r.t, r.timing.total * 1e3, r.timing.derivative_eval * 1e3, r.timing.linear_solve * 1e3,
                           r.timing.line_search * 1e3, r.governor_latency * 1e3};
    for (std::size_t i = 0; i < std::size(vals); ++i) {
      if (i) s += ',';
      append_num(s, vals[i]);
    }
    s += '\n';
  }
  out << s;
}

RunMetrics compute_metrics(const Trace& trace, double shift_time, double warmup, double convergence_time) {
  RunMetrics m;
  double sum[2][3] = {};
  int count[2] = {0, 0};
  const Eigen::VectorXd* prev_w = nullptr;
  for (const auto& r : trace.rows) {
    if (!r.converged) ++m.unconverged_steps;
    if (prev_w && r.t >= convergence_time && r.w.size() == prev_w->size()) {
      m.max_weight_step = std::max(m.max_weight_step, (r.w - *prev_w).lpNorm<Eigen::Infinity>());
    }
    prev_w = &r.w;
    if (r.t < warmup) continue;
    const int win = r.t < shift_time ? 0 : 1;
    sum[win][0] += r.speed_error * r.speed_error;
    sum[win][1] += r.x.vy * r.x.vy;
    sum[win][2] += r.cross_track * r.cross_track;
    ++count[win];
  }
  const auto rms = [&](int win, int k) { return count[win] ? std::sqrt(sum[win][k] / count[win]) : 0.0; };
  m.vx = {rms(0, 0), rms(1, 0)};
  m.vy = {rms(0, 1), rms(1, 1)};
  m.pos = {rms(0, 2), rms(1, 2)};
  return m;
}

double degradation(double post, double pre_base) { return 100.0 * (post - pre_base) / std::abs(pre_base); }

double mitigation(double delta_base, double delta_adapt) {
  return 100.0 * (delta_base - delta_adapt) / std::abs(delta_base);
}

MetricComparison compare(const RunMetrics& adaptive, const RunMetrics* baseline, const RunMetrics& pre_base) {
  const auto one = [&](const WindowRmse& a, const WindowRmse* b, const WindowRmse& base) {
    PairedMetrics p;
    p.degradation_adapt = degradation(a.post, base.pre);
    if (b) {
      p.degradation_base = degradation(b->post, base.pre);
      p.mitigation = mitigation(p.degradation_base, p.degradation_adapt);
    }
    return p;
  };
  return {one(adaptive.vx, baseline ? &baseline->vx : nullptr, pre_base.vx),
          one(adaptive.vy, baseline ? &baseline->vy : nullptr, pre_base.vy),
          one(adaptive.pos, baseline ? &baseline->pos : nullptr, pre_base.pos)};
}

specialists::SpecialistLibrary ideal_library(const specialists::SpecialistLibrary& lib) {
  specialists::SpecialistLibrary out;
  for (const auto& m : lib.members) out.members.push_back(specialists::OdeSpecialist{specialists::regime_of(m)});
  return out;
}

namespace {

// Throttle that holds v on a straight line.
double cruise_throttle(const vehicle::VehicleParams& p, double v) {
  return std::clamp((p.Cr0 + p.Cd * v * v) / (p.Cm1 - p.Cm2 * v), 0.0, 1.0);
}

VehicleState start_state(const Track& track, double v, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double s0 = unit(rng) * track.length();
  const double lateral = 0.02 * (2.0 * unit(rng) - 1.0);
  const double dpsi = 0.05 * (2.0 * unit(rng) - 1.0);
  const Eigen::Vector2d p = track.at(s0);
  const Eigen::Vector2d tangent = (track.at(s0 + 1e-3) - p).normalized();
  VehicleState x;
  x.X = p[0] - lateral * tangent[1];
  x.Y = p[1] + lateral * tangent[0];
  x.psi = std::atan2(tangent[1], tangent[0]) + dpsi;
  x.vx = v;
  return x;
}

}  // namespace

RunResult run_closed_loop(const Scenario& sc, const specialists::SpecialistLibrary& lib, const RunContext& ctx) {
  sc.validate();
  lib.validate();
  const auto& cfg = ctx.ocp;
  const vehicle::VehicleParams shifted = vehicle::make_regime(ctx.nominal, regime_shift(sc.shift));
  auto prob = ocp::make_ensemble_problem(lib, ctx.w0, cfg);
  auto gov = governor::make_governor(lib, prob->params(), ctx.governor.window, cfg.Ts, ctx.governor.alpha,
                                     ctx.governor.residual);

  std::mt19937_64 rng(sc.seed);
  std::mt19937_64 noise_rng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, 1.0);
  const bool noisy = sc.tier == Tier::NoisyOde && sc.noise_sigma > 0.0;
  const auto measure = [&](const VehicleState& x) {
    if (!noisy) return x;
    auto a = x.to_array();
    for (auto& v : a) v += sc.noise_sigma * noise(noise_rng);
    return VehicleState::from_array(a);
  };

  VehicleState x = start_state(ctx.track, cfg.v_ref, rng);
  ControlInput u_prev{0.0, cruise_throttle(ctx.nominal, cfg.v_ref)};
  std::vector<ControlInput> warm;
  VehicleState y_prev = measure(x);
  const int steps = static_cast<int>(std::lround(sc.duration / cfg.Ts));

  RunResult res;
  res.trace.rows.reserve(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k) {
    const double t = k * cfg.Ts;
    TraceRow row;
    row.t = t;
    const VehicleState y = k == 0 ? y_prev : measure(x);
    if (sc.adaptive && k > 0) {
      const auto t0 = Clock::now();
      governor::governor_step(gov, y, y_prev, u_prev, lib);
      prob->update_weights(gov.w_smooth);
      row.governor_latency = std::chrono::duration<double>(Clock::now() - t0).count();
    }
    const auto refs = make_reference(ctx.track, x, cfg);
    const auto rep = prob->solve(x, refs, u_prev, warm);
    const ControlInput u = rep.u_star.front();

    row.x = x;
    row.u = u;
    row.ref = refs.front();
    row.cross_track = ctx.track.project({x.X, x.Y}).distance;
    row.speed_error = x.vx - cfg.v_ref;
    row.iterations = rep.iterations;
    row.converged = rep.converged;
    row.cost = rep.cost;
    row.w = prob->params();
    row.timing = rep.timing;
    res.trace.rows.push_back(std::move(row));

    const auto& plant = t >= sc.shift_time ? shifted : ctx.nominal;
    x = vehicle::simulate(x, u, plant, cfg.Ts, ctx.substeps);
    if (!x.finite()) throw SimulationError("plant state became non-finite at t = " + std::to_string(t));
    warm = ocp::shift_warm_start(rep.u_star);
    u_prev = u;
    y_prev = y;
  }
  res.metrics = compute_metrics(res.trace, sc.shift_time, sc.warmup);
  return res;
}

namespace {

Interval bootstrap(const std::vector<double>& values, int resamples, double level, std::uint64_t seed,
                   const std::function<double(std::vector<double>)>& stat) {
  if (values.empty()) throw std::invalid_argument("bootstrap: no values");
  Interval out;
  out.mean = stat(values);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  std::vector<double> stats(static_cast<std::size_t>(resamples));
  std::vector<double> draw(values.size());
  for (auto& m : stats) {
    for (auto& d : draw) d = values[pick(rng)];
    m = stat(draw);
  }
  out.lo = percentile(stats, 0.5 * (1.0 - level));
  out.hi = percentile(stats, 1.0 - 0.5 * (1.0 - level));
  return out;
}

double mean_of(std::vector<double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Interval bootstrap_mean(const std::vector<double>& values, int resamples, double level, std::uint64_t seed) {
  return bootstrap(values, resamples, level, seed, mean_of);
}

Interval bootstrap_median(const std::vector<double>& values, int resamples, double level, std::uint64_t seed) {
  return bootstrap(values, resamples, level, seed, [](std::vector<double> v) { return median(std::move(v)); });
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("percentile: no values");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + frac * (v[i + 1] - v[i]) : v[i];
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

namespace {

// Warm-started closed-loop solves on the nominal plant; the plant moves to
// the friction-up regime halfway through.
void bench_loop(const ocp::OcpProblem& prob, const RunContext& ctx, int solves, ModelClassBench& out,
                const std::function<void(const VehicleState&, const VehicleState&, const ControlInput&)>& adapt) {
  std::mt19937_64 rng(0);
  const auto up = vehicle::make_regime(ctx.nominal, regime_shift(Shift::BenchmarkFrictionUp));
  VehicleState x = start_state(ctx.track, ctx.ocp.v_ref, rng);
  ControlInput u_prev{0.0, cruise_throttle(ctx.nominal, ctx.ocp.v_ref)};
  std::vector<ControlInput> warm;
  for (int k = 0; k < solves; ++k) {
    const auto rep = prob.solve(x, make_reference(ctx.track, x, ctx.ocp), u_prev, warm);
    out.solves.push_back(rep.timing);
    out.iterations.push_back(rep.iterations);
    const VehicleState next = vehicle::simulate(x, rep.u_star.front(), k < solves / 2 ? ctx.nominal : up, ctx.ocp.Ts,
                                                ctx.substeps);
    if (adapt) adapt(next, x, rep.u_star.front());
    u_prev = rep.u_star.front();
    warm = ocp::shift_warm_start(rep.u_star);
    x = next;
  }
}

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

BenchReport run_phase1_benchmarks(const specialists::SpecialistLibrary& lib, const RunContext& ctx,
                                  const BenchConfig& cfg) {
  BenchReport rep;
  const auto up = vehicle::make_regime(ctx.nominal, regime_shift(Shift::BenchmarkFrictionUp));

  {
    ModelClassBench b;
    b.name = "parametric";
    auto t0 = Clock::now();
    auto prob = ocp::make_parametric_problem(ctx.nominal, ctx.ocp);
    b.build_seconds = elapsed(t0);
    b.stage_nodes = prob->build_stats().stage_nodes;
    b.jacobian_density = prob->nlp_jacobian_density();
    bench_loop(*prob, ctx, cfg.solves, b, nullptr);
    for (int i = 0; i < cfg.adaptation_samples; ++i) {
      t0 = Clock::now();
      prob->update_params(i % 2 == 0 ? up : ctx.nominal);
      b.adaptation_latency.push_back(elapsed(t0));
    }
    rep.classes.push_back(std::move(b));
  }
  {
    ModelClassBench b;
    b.name = "ensemble";
    auto t0 = Clock::now();
    auto prob = ocp::make_ensemble_problem(lib, ctx.w0, ctx.ocp);
    b.build_seconds = elapsed(t0);
    b.stage_nodes = prob->build_stats().stage_nodes;
    b.jacobian_density = prob->nlp_jacobian_density();
    auto gov = governor::make_governor(lib, prob->params(), ctx.governor.window, ctx.ocp.Ts, ctx.governor.alpha,
                                       ctx.governor.residual);
    bench_loop(*prob, ctx, std::max(cfg.solves, cfg.adaptation_samples + 1), b,
               [&](const VehicleState& xk, const VehicleState& xp, const ControlInput& u) {
                 const auto g0 = Clock::now();
                 governor::governor_step(gov, xk, xp, u, lib);
                 prob->update_weights(gov.w_smooth);
                 if (static_cast<int>(b.adaptation_latency.size()) < cfg.adaptation_samples) {
                   b.adaptation_latency.push_back(elapsed(g0));
                 }
               });
    rep.classes.push_back(std::move(b));
  }
  {
    ModelClassBench b;
    b.name = "jit";
    auto jit = ocp::rebuild_jit_baseline(ctx.nominal, ctx.ocp);
    b.build_seconds = jit.seconds;
    b.stage_nodes = jit.problem->build_stats().stage_nodes;
    b.jacobian_density = jit.problem->nlp_jacobian_density();
    bench_loop(*jit.problem, ctx, cfg.solves, b, nullptr);
    for (int i = 0; i < cfg.adaptation_samples; ++i) {
      b.adaptation_latency.push_back(ocp::rebuild_jit_baseline(i % 2 == 0 ? up : ctx.nominal, ctx.ocp).seconds);
    }
    rep.classes.push_back(std::move(b));
  }
  return rep;
}

void write_bench_csv(std::ostream& out, const BenchReport& r) {
  out << "model_class,build_ms,stage_nodes,jacobian_density,solves,solve_median_ms,solve_p95_ms,"
         "derivative_share,linear_share,line_search_share,iterations_median,adapt_median_ms,adapt_p95_ms\n";
  for (const auto& c : r.classes) {
    std::vector<double> total, iters;
    double sum_total = 0.0, sum_d = 0.0, sum_l = 0.0, sum_ls = 0.0;
    for (const auto& t : c.solves) {
      total.push_back(t.total * 1e3);
      sum_total += t.total;
      sum_d += t.derivative_eval;
      sum_l += t.linear_solve;
      sum_ls += t.line_search;
    }
    for (int i : c.iterations) iters.push_back(i);
    std::vector<double> adapt;
    for (double a : c.adaptation_latency) adapt.push_back(a * 1e3);
    std::string s = c.name + ',';
    for (double v : {c.build_seconds * 1e3, static_cast<double>(c.stage_nodes), c.jacobian_density,
                     static_cast<double>(c.solves.size()), total.empty() ? 0.0 : median(total),
                     total.empty() ? 0.0 : percentile(total, 0.95), sum_total > 0 ? sum_d / sum_total : 0.0,
                     sum_total > 0 ? sum_l / sum_total : 0.0, sum_total > 0 ? sum_ls / sum_total : 0.0,
                     iters.empty() ? 0.0 : median(iters), adapt.empty() ? 0.0 : median(adapt),
                     adapt.empty() ? 0.0 : percentile(adapt, 0.95)}) {
      append_num(s, v);
      s += ',';
    }
    s.back() = '\n';
    out << s;
  }
}

}  // namespace wbmpc::scenarios
