#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "wbmpc/scenarios.hpp"

using namespace wbmpc;
using scenarios::Track;

namespace {

specialists::SpecialistLibrary corner_library() {
  const auto nominal = vehicle::nominal_params();
  return specialists::select_library(specialists::candidate_grid(nominal), 8, specialists::validation_states(200, 1),
                                     nominal);
}

scenarios::RunContext context(const specialists::SpecialistLibrary& lib) {
  scenarios::RunContext ctx;
  ctx.w0 = specialists::nominal_weights(lib, ctx.nominal, specialists::validation_states(200, 1));
  return ctx;
}

scenarios::Trace synthetic_trace(double shift_time, double pre_err, double post_err) {
  scenarios::Trace tr;
  for (int k = 0; k < 1000; ++k) {
    scenarios::TraceRow r;
    r.t = k * 0.02;
    const double e = r.t < shift_time ? pre_err : post_err;
    r.cross_track = (k % 2 ? 1.0 : -1.0) * e;
    r.speed_error = 2.0 * e;
    r.x.vy = 3.0 * e;
    r.w = Eigen::VectorXd::Constant(2, 0.5);
    tr.rows.push_back(r);
  }
  return tr;
}

}  // namespace

TEST(TrackTest, StadiumClosesWithExpectedLength) {
  const double straight = 2.0, R = 0.8, r = 0.8, th = 0.4;
  const auto t = Track::stadium(straight, R, r, th);
  const double flat = 0.5 * (straight - 4.0 * r * std::sin(th));
  EXPECT_NEAR(t.length(), 2.0 * (2.0 * flat + 4.0 * r * th) + 2.0 * std::numbers::pi * R, 1e-3);
  const auto& s = t.arclength();
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GT(s[i], s[i - 1]);
  EXPECT_LT((t.waypoints().back() - t.waypoints().front()).norm(), 0.011);
  EXPECT_THROW(Track::stadium(1.0, 0.8, 0.8, 0.8), std::invalid_argument);
  EXPECT_THROW(Track({{0, 0}, {1, 0}, {1, 0}}), std::invalid_argument);
}

TEST(TrackTest, ReferencesOnCircleAtFixedArclength) {
  const double R = 1.0;
  const auto t = Track::circle(R, 3600);
  ocp::OcpConfig cfg;
  vehicle::VehicleState x;
  x.X = t.waypoints()[100][0];
  x.Y = t.waypoints()[100][1];
  const auto refs = scenarios::make_reference(t, x, cfg);
  ASSERT_EQ(refs.size(), 15u);
  const double s0 = t.arclength()[100];
  for (int k = 0; k < cfg.H; ++k) {
    EXPECT_NEAR(refs[static_cast<std::size_t>(k)].norm(), R, 1e-6);
    EXPECT_NEAR(t.project(refs[static_cast<std::size_t>(k)]).s - s0, (k + 1) * cfg.v_ref * cfg.Ts, 1e-9);
  }
  EXPECT_NEAR(t.project(refs.back()).s - s0, 0.45, 1e-9);
}

TEST(TrackTest, ReferencesWrapAroundTheLoop) {
  const auto t = Track::circle(1.0, 360);
  ocp::OcpConfig cfg;
  vehicle::VehicleState x;
  x.X = t.waypoints().back()[0];
  x.Y = t.waypoints().back()[1];
  const auto refs = scenarios::make_reference(t, x, cfg);
  EXPECT_LT(t.project(refs.back()).s, 0.45);
}

TEST(TrackTest, ProjectionTieGoesToLowerSegment) {
  const Track square({{0, 0}, {2, 0}, {2, 2}, {0, 2}});
  const auto p = square.project({1.0, 1.0});
  EXPECT_EQ(p.segment, 0u);
  EXPECT_NEAR(p.distance, 1.0, 1e-15);
  EXPECT_NEAR(p.s, 1.0, 1e-15);
  // Corner (2, 0) is shared by segments 0 and 1.
  EXPECT_EQ(square.project({2.5, -0.5}).segment, 0u);
  EXPECT_EQ(square.project({3.0, 0.5}).segment, 1u);
}

TEST(MetricsTest, PublishedTripleGivesPublishedMitigation) {
  const double pre_base = 0.0602, post_b = 0.1214, post_a = 0.0617;
  const double db = scenarios::degradation(post_b, pre_base);
  const double da = scenarios::degradation(post_a, pre_base);
  EXPECT_NEAR(db, 101.66, 0.01);
  EXPECT_NEAR(da, 2.49, 0.01);
  EXPECT_NEAR(scenarios::mitigation(db, da), 97.5, 0.1);
  EXPECT_EQ(scenarios::degradation(pre_base, pre_base), 0.0);
}

TEST(MetricsTest, WindowsAndPairing) {
  const auto tr = synthetic_trace(10.0, 0.01, 0.03);
  const auto m = scenarios::compute_metrics(tr, 10.0, 2.0);
  EXPECT_NEAR(m.pos.pre, 0.01, 1e-15);
  EXPECT_NEAR(m.pos.post, 0.03, 1e-15);
  EXPECT_NEAR(m.vx.post, 0.06, 1e-15);
  EXPECT_NEAR(m.vy.pre, 0.03, 1e-15);
  EXPECT_EQ(m.max_weight_step, 0.0);

  const auto same = scenarios::compare(m, &m, m);
  ASSERT_TRUE(same.pos.mitigation.has_value());
  EXPECT_EQ(*same.pos.mitigation, 0.0);
  EXPECT_NEAR(same.pos.degradation_adapt, 200.0, 1e-9);
  const auto alone = scenarios::compare(m, nullptr, m);
  EXPECT_FALSE(alone.pos.mitigation.has_value());
  EXPECT_FALSE(alone.vx.mitigation.has_value());
}

TEST(BootstrapTest, DeterministicAndBracketsTheMean) {
  std::vector<double> v;
  for (int i = 0; i < 20; ++i) v.push_back(std::sin(i));
  const auto a = scenarios::bootstrap_mean(v, 1000, 0.95, 3);
  const auto b = scenarios::bootstrap_mean(v, 1000, 0.95, 3);
  EXPECT_EQ(a.lo, b.lo);
  EXPECT_EQ(a.hi, b.hi);
  EXPECT_LT(a.lo, a.mean);
  EXPECT_GT(a.hi, a.mean);
  const auto c = scenarios::bootstrap_mean(std::vector<double>(5, 2.5));
  EXPECT_EQ(c.lo, 2.5);
  EXPECT_EQ(c.hi, 2.5);
  EXPECT_EQ(scenarios::percentile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  const auto med = scenarios::bootstrap_median({1.0, 2.0, 100.0});
  EXPECT_EQ(med.mean, 2.0);
  EXPECT_LE(med.lo, 2.0);
  EXPECT_GE(med.hi, 2.0);
}

TEST(ScenarioTest, NamesRoundTrip) {
  for (auto t : {scenarios::Tier::IdealOde, scenarios::Tier::NoisyOde, scenarios::Tier::PinnAdam,
                 scenarios::Tier::PinnHybrid}) {
    EXPECT_EQ(scenarios::tier_from_name(scenarios::tier_name(t)), t);
  }
  for (auto s : {scenarios::Shift::None, scenarios::Shift::FrictionOnly, scenarios::Shift::AllParams,
                 scenarios::Shift::BenchmarkFrictionUp}) {
    EXPECT_EQ(scenarios::shift_from_name(scenarios::shift_name(s)), s);
  }
  EXPECT_THROW(scenarios::tier_from_name("tier9"), std::invalid_argument);
  scenarios::Scenario sc;
  sc.shift_time = 30.0;
  EXPECT_THROW(sc.validate(), std::invalid_argument);
}

TEST(ClosedLoopTest, SeededRunsAreByteIdentical) {
  const auto lib = corner_library();
  const auto ctx = context(lib);
  scenarios::Scenario sc;
  sc.tier = scenarios::Tier::NoisyOde;
  sc.duration = 2.0;
  sc.shift_time = 1.0;
  sc.warmup = 0.5;
  sc.seed = 4;
  const auto a = scenarios::run_closed_loop(sc, lib, ctx);
  const auto b = scenarios::run_closed_loop(sc, lib, ctx);
  std::ostringstream sa, sb;
  a.trace.write_csv(sa);
  b.trace.write_csv(sb);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(a.trace.rows.size(), 100u);
}

TEST(ClosedLoopTest, NoiseReachesOnlyTheGovernor) {
  const auto lib = corner_library();
  const auto ctx = context(lib);
  scenarios::Scenario sc;
  sc.duration = 2.0;
  sc.shift_time = 1.0;
  sc.warmup = 0.5;
  sc.adaptive = false;
  const auto ideal = scenarios::run_closed_loop(sc, lib, ctx);
  sc.tier = scenarios::Tier::NoisyOde;
  const auto noisy = scenarios::run_closed_loop(sc, lib, ctx);
  std::ostringstream a, b;
  ideal.trace.write_csv(a);
  noisy.trace.write_csv(b);
  EXPECT_EQ(a.str(), b.str());

  sc.adaptive = true;
  const auto adaptive_noisy = scenarios::run_closed_loop(sc, lib, ctx);
  sc.tier = scenarios::Tier::IdealOde;
  const auto adaptive_ideal = scenarios::run_closed_loop(sc, lib, ctx);
  EXPECT_NE(adaptive_noisy.trace.rows.back().w, adaptive_ideal.trace.rows.back().w);
}

TEST(ClosedLoopTest, ShiftIsAtomic) {
  const auto lib = corner_library();
  const auto ctx = context(lib);
  scenarios::Scenario sc;
  sc.duration = 3.0;
  sc.shift_time = 1.5;
  sc.warmup = 0.5;
  sc.adaptive = false;
  sc.shift = scenarios::Shift::None;
  const auto none = scenarios::run_closed_loop(sc, lib, ctx);
  sc.shift = scenarios::Shift::FrictionOnly;
  const auto shifted = scenarios::run_closed_loop(sc, lib, ctx);
  const std::size_t k_shift = 75;
  for (std::size_t k = 0; k <= k_shift; ++k) EXPECT_EQ(none.trace.rows[k].x.to_array(), shifted.trace.rows[k].x.to_array());
  EXPECT_NE(none.trace.rows[k_shift + 1].x.to_array(), shifted.trace.rows[k_shift + 1].x.to_array());
}

TEST(ClosedLoopTest, StraightLineLateralErrorSettles) {
  specialists::SpecialistLibrary lib;
  lib.members.push_back(specialists::OdeSpecialist{vehicle::nominal_params()});
  lib.members.push_back(specialists::OdeSpecialist{vehicle::make_regime(vehicle::nominal_params(), {1.25, 1.2, 1.4})});
  scenarios::RunContext ctx;
  ctx.track = Track::stadium(40.0, 5.0, 1.0, 0.0);
  ctx.w0 = Eigen::Vector2d(1.0, 0.0);
  scenarios::Scenario sc;
  sc.duration = 6.0;
  sc.shift_time = 5.0;
  sc.shift = scenarios::Shift::None;
  sc.adaptive = false;
  sc.seed = 1;
  const auto r = scenarios::run_closed_loop(sc, lib, ctx);
  double worst = 0.0;
  for (const auto& row : r.trace.rows) {
    if (row.t >= 2.0 && ctx.track.project({row.x.X, row.x.Y}).s < 18.0) worst = std::max(worst, row.cross_track);
  }
  EXPECT_LT(worst, 0.02);
}

TEST(ClosedLoopTest, AdaptationMitigatesFrictionDrop) {
  const auto lib = corner_library();
  const auto ctx = context(lib);
  scenarios::Scenario sc;
  sc.duration = 12.0;
  sc.shift_time = 6.0;
  sc.adaptive = false;
  const auto base = scenarios::run_closed_loop(sc, lib, ctx);
  sc.adaptive = true;
  const auto adapt = scenarios::run_closed_loop(sc, lib, ctx);
  const auto cmp = scenarios::compare(adapt.metrics, &base.metrics, base.metrics);
  EXPECT_GE(*cmp.pos.mitigation, 50.0);
  // The Governor ends on the low-friction member with nominal mass and drag.
  const auto& w = adapt.trace.rows.back().w;
  Eigen::Index best;
  w.maxCoeff(&best);
  const auto& p = specialists::regime_of(lib.members[static_cast<std::size_t>(best)]);
  EXPECT_EQ(p.mu_scale, 0.5);
  EXPECT_EQ(p.m, vehicle::nominal_params().m);
}

TEST(ClosedLoopTest, NullShiftDoesNotDrift) {
  const auto lib = corner_library();
  const auto ctx = context(lib);
  scenarios::Scenario sc;
  sc.duration = 12.0;
  sc.shift_time = 6.0;
  sc.shift = scenarios::Shift::None;
  const auto r = scenarios::run_closed_loop(sc, lib, ctx);
  EXPECT_LT(r.metrics.max_weight_step, 0.2);
  EXPECT_EQ(r.metrics.unconverged_steps, 0);
}

TEST(BenchTest, ReportsThreeModelClasses) {
  const auto lib = scenarios::ideal_library(corner_library());
  const auto ctx = context(lib);
  const auto rep = scenarios::run_phase1_benchmarks(lib, ctx, {10, 5});
  ASSERT_EQ(rep.classes.size(), 3u);
  EXPECT_EQ(rep.classes[0].name, "parametric");
  EXPECT_EQ(rep.classes[1].name, "ensemble");
  EXPECT_EQ(rep.classes[2].name, "jit");
  for (const auto& c : rep.classes) {
    EXPECT_GE(c.solves.size(), 10u);
    EXPECT_EQ(c.adaptation_latency.size(), 5u);
  }
  EXPECT_GT(rep.classes[1].stage_nodes, rep.classes[0].stage_nodes);
  std::ostringstream os;
  scenarios::write_bench_csv(os, rep);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}
