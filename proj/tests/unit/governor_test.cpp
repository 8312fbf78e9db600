#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "wbmpc/governor.hpp"
#include "wbmpc/simplex_lsq.hpp"

using namespace wbmpc;
using governor::Measurement;
using governor::MeasurementWindow;
using specialists::SpecialistLibrary;

namespace {

// Friction, mass and drag all differ so no member lies in the hull of the
// others (the dynamics are affine in the friction scale alone).
SpecialistLibrary ode_library() {
  SpecialistLibrary lib;
  for (vehicle::RegimeShift r : {vehicle::RegimeShift{0.5, 1.0, 1.0}, vehicle::RegimeShift{1.0, 1.2, 1.0},
                                 vehicle::RegimeShift{1.25, 1.0, 1.4}}) {
    lib.members.push_back(specialists::OdeSpecialist{vehicle::make_regime(vehicle::nominal_params(), r)});
  }
  return lib;
}

// Direct objective from the entries, independent of the normal equations.
double brute_objective(const MeasurementWindow& win, const Eigen::VectorXd& w) {
  double sum = 0.0;
  for (const auto& m : win.entries()) {
    const double b[3] = {m.x.vx - m.x_prev.vx, m.x.vy - m.x_prev.vy, m.x.omega - m.x_prev.omega};
    for (int r = 0; r < 3; ++r) {
      double pred = 0.0;
      for (Eigen::Index i = 0; i < w.size(); ++i) pred += w[i] * m.psi[static_cast<std::size_t>(i)][r];
      const double e = b[r] - win.dt() * pred;
      sum += e * e;
    }
  }
  return sum;
}

// Window of synthetic entries whose increments come from a planted weight
// vector plus optional noise.
MeasurementWindow planted_window(const Eigen::VectorXd& w, std::size_t n_entries, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  MeasurementWindow win(n_entries, 0.02);
  for (std::size_t k = 0; k < n_entries; ++k) {
    Measurement m;
    m.psi.resize(static_cast<std::size_t>(w.size()));
    for (auto& p : m.psi) {
      for (auto& v : p) v = 5.0 * g(rng);
    }
    m.x_prev.vx = 1.0;
    double inc[3] = {0, 0, 0};
    for (int r = 0; r < 3; ++r) {
      for (Eigen::Index i = 0; i < w.size(); ++i) inc[r] += win.dt() * w[i] * m.psi[static_cast<std::size_t>(i)][r];
      inc[r] += noise * g(rng);
    }
    m.x = m.x_prev;
    m.x.vx += inc[0];
    m.x.vy += inc[1];
    m.x.omega += inc[2];
    win.push(std::move(m));
  }
  return win;
}

Eigen::VectorXd uniform(Eigen::Index n) { return Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)); }

SpecialistLibrary dummy_library(std::size_t n) {
  SpecialistLibrary lib;
  for (std::size_t i = 0; i < n; ++i) lib.members.push_back(specialists::OdeSpecialist{vehicle::nominal_params()});
  return lib;
}

}  // namespace

TEST(FdDerivativeTest, ZeroForEqualStates) {
  vehicle::VehicleState x{0.3, -0.2, 1.0, 1.5, 0.1, 0.4};
  for (double v : governor::fd_derivative(x, x, 0.02)) EXPECT_EQ(v, 0.0);
}

TEST(FdDerivativeTest, HeadingWrapsAcrossPi) {
  vehicle::VehicleState a, b;
  a.psi = 3.1;
  b.psi = -3.1;
  const auto d = governor::fd_derivative(a, b, 0.02);
  EXPECT_NEAR(d[vehicle::kPsi], (6.2 - 2.0 * std::numbers::pi) / 0.02, 1e-9);
  EXPECT_NEAR(d[vehicle::kPsi], -4.1593, 1e-3);
}

TEST(FdDerivativeTest, RecoversLinearMotion) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    vehicle::StateVector x0, v;
    for (std::size_t i = 0; i < 6; ++i) {
      x0[i] = u(rng);
      v[i] = 2.0 * u(rng);
    }
    const double dt = 0.02, t = 0.4;
    vehicle::StateVector xa, xb;
    for (std::size_t i = 0; i < 6; ++i) {
      xb[i] = x0[i] + v[i] * t;
      xa[i] = x0[i] + v[i] * (t + dt);
    }
    const auto d = governor::fd_derivative(vehicle::VehicleState::from_array(xa), vehicle::VehicleState::from_array(xb), dt);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(d[i], v[i], 1e-12);
  }
  EXPECT_THROW(governor::fd_derivative({}, {}, 0.0), std::invalid_argument);
}

TEST(SolveWeightsTest, VertexDataGivesVertex) {
  const auto lib = ode_library();
  const auto states = specialists::validation_states(20, 4);
  for (std::size_t truth = 0; truth < lib.size(); ++truth) {
    const auto& p = specialists::regime_of(lib.members[truth]);
    MeasurementWindow win(20, 0.02, governor::Residual::Euler);
    for (const auto& s : states) {
      const auto f = vehicle::continuous_dynamics(s.x, s.u, p);
      auto next = s.x;
      next.vx += 0.02 * f[3];
      next.vy += 0.02 * f[4];
      next.omega += 0.02 * f[5];
      win.push(next, s.x, s.u, lib);
    }
    const auto w = governor::solve_weights(win, lib);
    for (Eigen::Index i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], i == static_cast<Eigen::Index>(truth) ? 1.0 : 0.0, 1e-6);
  }
}

TEST(SolveWeightsTest, TrapezoidVertexDataGivesVertex) {
  // Implicit trapezoid steps of one member, solved by fixed-point iteration.
  const auto lib = ode_library();
  const auto states = specialists::validation_states(20, 9);
  for (std::size_t truth = 0; truth < lib.size(); ++truth) {
    const auto& p = specialists::regime_of(lib.members[truth]);
    MeasurementWindow win(20, 0.02);
    for (const auto& s : states) {
      const auto f0 = vehicle::continuous_dynamics(s.x, s.u, p);
      auto next = s.x;
      for (int it = 0; it < 200; ++it) {
        const auto f1 = vehicle::continuous_dynamics(next, s.u, p);
        next.vx = s.x.vx + 0.01 * (f0[3] + f1[3]);
        next.vy = s.x.vy + 0.01 * (f0[4] + f1[4]);
        next.omega = s.x.omega + 0.01 * (f0[5] + f1[5]);
      }
      win.push(next, s.x, s.u, lib);
    }
    const auto w = governor::solve_weights(win, lib);
    for (Eigen::Index i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], i == static_cast<Eigen::Index>(truth) ? 1.0 : 0.0, 1e-6);
  }
}

TEST(SolveWeightsTest, PlantedMixtureMatchesGridOracle) {
  std::mt19937_64 rng(5);
  const auto win = planted_window((Eigen::VectorXd(2) << 0.3, 0.7).finished(), 20, 0.0, rng);
  const auto w = governor::solve_weights(win, dummy_library(2));
  EXPECT_NEAR(w[0], 0.3, 1e-3);
  EXPECT_NEAR(w[1], 0.7, 1e-3);

  double best = INFINITY, best_a = -1.0;
  for (int i = 0; i <= 10000; ++i) {
    const double a = i * 1e-4;
    const double obj = brute_objective(win, (Eigen::VectorXd(2) << a, 1.0 - a).finished());
    if (obj < best) {
      best = obj;
      best_a = a;
    }
  }
  EXPECT_NEAR(w[0], best_a, 1e-4);
  EXPECT_LE(brute_objective(win, w), best + 1e-12);
}

TEST(SolveWeightsTest, NeverWorseThanSimplexGrid) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double h = 1e-3;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + trial % 2;
    Eigen::VectorXd truth(n);
    for (auto& v : truth) v = u(rng) - 0.2;  // may leave the simplex
    truth /= truth.sum();
    const auto win = planted_window(truth, 5 + trial % 16, 0.02, rng);
    const auto w = governor::solve_weights(win, dummy_library(static_cast<std::size_t>(n)));
    ASSERT_TRUE(on_simplex(w));
    const double obj = brute_objective(win, w);

    double grid = INFINITY;
    const int steps = static_cast<int>(std::lround(1.0 / h));
    for (int i = 0; i <= steps; ++i) {
      for (int j = 0; j <= (n == 3 ? steps - i : 0); ++j) {
        Eigen::VectorXd g(n);
        if (n == 2) {
          g << i * h, 1.0 - i * h;
        } else {
          g << i * h, j * h, 1.0 - (i + j) * h;
        }
        grid = std::min(grid, brute_objective(win, g));
      }
    }
    EXPECT_LE(obj, grid + 1e-8);
    // Any grid point lies within h of the optimum, so the quadratic gap is
    // bounded by the largest curvature.
    Eigen::MatrixXd G;
    Eigen::VectorXd c;
    double k;
    win.normal_equations(G, c, k);
    const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().maxCoeff();
    EXPECT_LE(grid - obj, 2.0 * lmax * h * h + 1e-8);
  }
}

TEST(SolveWeightsTest, BeatsEveryVertex) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto win = planted_window(uniform(4), 12, 0.05, rng);
    const auto w = governor::solve_weights(win, dummy_library(4));
    const double obj = win.objective(w);
    EXPECT_NEAR(obj, brute_objective(win, w), 1e-10 * std::max(1.0, obj));
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_LE(obj, brute_objective(win, Eigen::VectorXd::Unit(4, i)) + 1e-12);
  }
}

TEST(SolveWeightsTest, ShortWindowGivesUniform) {
  const auto lib = dummy_library(3);
  MeasurementWindow win(20, 0.02);
  EXPECT_TRUE(governor::solve_weights(win, lib).isApprox(uniform(3)));
  win.push(vehicle::VehicleState{}, vehicle::VehicleState{}, {}, lib);
  EXPECT_TRUE(governor::solve_weights(win, lib).isApprox(uniform(3)));
  EXPECT_THROW(governor::solve_weights(win, dummy_library(1)), std::invalid_argument);
}

TEST(SolveWeightsTest, IdenticalMembersStayOnSimplex) {
  std::mt19937_64 rng(2);
  MeasurementWindow win = planted_window(uniform(3), 10, 0.1, rng);
  MeasurementWindow dup(10, 0.02);
  for (auto m : win.entries()) {
    m.psi[1] = m.psi[0];
    m.psi[2] = m.psi[0];
    dup.push(m);
  }
  const auto w = governor::solve_weights(dup, dummy_library(3));
  EXPECT_TRUE(on_simplex(w));
}

TEST(MeasurementWindowTest, RingBufferAndMonotoneInfluence) {
  std::mt19937_64 rng(4);
  const Eigen::VectorXd w = (Eigen::VectorXd(3) << 0.2, 0.5, 0.3).finished();
  MeasurementWindow noisy = planted_window(w, 6, 0.05, rng);
  MeasurementWindow clean = planted_window(w, 30, 0.0, rng);
  MeasurementWindow win(8, 0.02);
  for (const auto& m : noisy.entries()) win.push(m);
  double prev = brute_objective(win, w);
  for (const auto& m : clean.entries()) {
    win.push(m);
    EXPECT_LE(win.size(), 8u);
    const double now = brute_objective(win, w);
    EXPECT_LE(now, prev + 1e-15);
    prev = now;
  }
  EXPECT_EQ(win.size(), 8u);
  EXPECT_NEAR(prev, 0.0, 1e-20);
}

TEST(EmaTest, FixedPointArithmeticAndGeometricRate) {
  const auto lib = dummy_library(2);
  auto s = governor::make_governor(lib, (Eigen::VectorXd(2) << 1.0, 0.0).finished());
  governor::ema_update(s, s.w_smooth);
  EXPECT_DOUBLE_EQ(s.w_smooth[0], 1.0);
  const Eigen::VectorXd target = (Eigen::VectorXd(2) << 0.0, 1.0).finished();
  governor::ema_update(s, target);
  EXPECT_NEAR(s.w_smooth[0], 0.9, 1e-15);
  EXPECT_NEAR(s.w_smooth[1], 0.1, 1e-15);
  for (int k = 2; k <= 50; ++k) {
    governor::ema_update(s, target);
    EXPECT_NEAR((s.w_smooth - target).norm(), std::pow(0.9, k) * std::sqrt(2.0), 1e-12);
    EXPECT_TRUE(on_simplex(s.w_smooth));
  }
  EXPECT_THROW(governor::ema_update(s, (Eigen::VectorXd(2) << 0.7, 0.7).finished()), std::invalid_argument);
  EXPECT_THROW(governor::make_governor(lib, (Eigen::VectorXd(2) << 2.0, -1.0).finished()), std::invalid_argument);
}

TEST(GovernorStepTest, ShortWindowLeavesWeightsAlone) {
  const auto lib = ode_library();
  auto s = governor::make_governor(lib, (Eigen::VectorXd(3) << 0.25, 0.5, 0.25).finished());
  vehicle::VehicleState x;
  x.vx = 1.0;
  const double lat = governor::governor_step(s, x, x, {0.0, 0.3}, lib);
  EXPECT_GE(lat, 0.0);
  EXPECT_DOUBLE_EQ(s.w_smooth[0], 0.25);
  EXPECT_EQ(s.window.size(), 1u);
}

TEST(GovernorStepTest, SteadyRegimeSettlesOnVertex) {
  // The plant runs the second member exactly; the stream is RK4 data, so the
  // trapezoid regression still sees a small discretization mismatch.
  const auto lib = ode_library();
  const auto plant = specialists::regime_of(lib.members[1]);
  auto s = governor::make_governor(lib);
  vehicle::VehicleState x;
  x.vx = 1.2;
  double max_late_change = 0.0;
  for (int k = 0; k < 600; ++k) {
    const double t = k * 0.02;
    const vehicle::ControlInput u{0.25 * std::sin(2.0 * t) + 0.1 * std::sin(7.0 * t), 0.4 + 0.1 * std::sin(1.3 * t)};
    const auto next = vehicle::simulate(x, u, plant, 0.02, 10);
    const Eigen::VectorXd before = s.w_smooth;
    governor::governor_step(s, next, x, u, lib);
    if (t >= 5.0) max_late_change = std::max(max_late_change, (s.w_smooth - before).lpNorm<Eigen::Infinity>());
    x = next;
  }
  EXPECT_GT(s.w_smooth[1], 0.75);
  EXPECT_LT(max_late_change, 0.02);
}

TEST(WeightTraceTest, CsvColumns) {
  governor::WeightTrace tr;
  tr.record(0.0, uniform(3), 0.001);
  tr.record(0.02, uniform(3), 0.002);
  std::ostringstream os;
  tr.write_csv(os);
  const auto text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,w1,w2,w3,latency_ms");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_THROW(tr.record(0.04, uniform(2), 0.0), std::invalid_argument);
}
