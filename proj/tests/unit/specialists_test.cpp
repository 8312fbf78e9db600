#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "fd_oracle.hpp"
#include "net_fixtures.hpp"
#include "wbmpc/config.hpp"
#include "wbmpc/jacobian.hpp"
#include "wbmpc/optim.hpp"
#include "wbmpc/specialists.hpp"
#include "wbmpc/tape.hpp"
#include "wbmpc/training.hpp"

namespace wbmpc::specialists {
namespace {

using testing::random_net;

// Plain loops, no Eigen products.
std::vector<double> reference_forward(const SpecialistNet& net, const std::vector<double>& in) {
  std::vector<double> z(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) z[i] = (in[i] - net.input_mean[i]) / net.input_std[i];
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const auto& W = net.weights[l];
    std::vector<double> next(static_cast<std::size_t>(W.rows()));
    for (Eigen::Index j = 0; j < W.rows(); ++j) {
      double acc = net.biases[l][j];
      for (Eigen::Index i = 0; i < W.cols(); ++i) acc += W(j, i) * z[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(j)] = l + 1 == net.weights.size() ? acc : std::tanh(acc);
    }
    z = next;
  }
  for (std::size_t r = 0; r < z.size(); ++r) z[r] = z[r] * net.output_std[r] + net.output_mean[r];
  return z;
}

std::vector<double> random_input(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {1.4 + u(rng), 0.3 * u(rng), 3.0 * u(rng), 0.35 * u(rng), 0.5 + 0.5 * u(rng)};
}

TEST(EmbedTest, MatchesReferenceForwardPass) {
  const SpecialistNet net = random_net(1);
  const sym::Tape tape = sym::Tape::compile(embed_symbolic(net));
  std::mt19937_64 rng(2);
  for (int k = 0; k < 1000; ++k) {
    const auto in = random_input(rng);
    const auto got = tape(in, {});
    const auto want = reference_forward(net, in);
    const auto eig = net.forward(Eigen::Map<const Eigen::VectorXd>(in.data(), kNetInputs));
    for (int r = 0; r < kNetOutputs; ++r) {
      EXPECT_NEAR(got[r], want[r], 1e-12 * std::max(1.0, std::abs(want[r])));
      EXPECT_NEAR(eig[r], want[r], 1e-12 * std::max(1.0, std::abs(want[r])));
    }
  }
}

TEST(EmbedTest, JacobianMatchesFiniteDifferences) {
  const SpecialistNet net = random_net(3);
  sym::ExprGraph g = embed_symbolic(net);
  const auto jac = sym::jacobian(g);
  const sym::Tape tape = sym::Tape::compile(g, jac.expressions());
  std::mt19937_64 rng(4);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto in = random_input(rng);
    const auto vals = tape(in, {});
    const auto fd = testing::central_jacobian(
        [&](const std::vector<double>& x) { return reference_forward(net, x); }, in);
    std::vector<double> dense(kNetOutputs * kNetInputs, 0.0);
    for (std::size_t e = 0; e < jac.entries.size(); ++e) {
      dense[jac.entries[e].row * kNetInputs + jac.entries[e].col] = vals[e];
    }
    for (std::size_t i = 0; i < dense.size(); ++i) worst = std::max(worst, testing::rel_error(dense[i], fd[i / kNetInputs][i % kNetInputs]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(EmbedTest, ZeroWeightsGiveBiasPath) {
  SpecialistNet net = random_net(5);
  for (auto& W : net.weights) W.setZero();
  const auto g = embed_symbolic(net);
  const Eigen::VectorXd expect = net.biases[3].cwiseProduct(net.output_std) + net.output_mean;
  const auto got = sym::eval(g, std::vector<double>{1.0, 0.0, 0.0, 0.1, 0.5});
  for (int r = 0; r < kNetOutputs; ++r) EXPECT_EQ(got[r], expect[r]);
}

TEST(SpecialistNetTest, SerializationIsExactAndStable) {
  const SpecialistNet net = random_net(6);
  std::ostringstream a;
  write_net(a, net);
  std::istringstream in(a.str());
  const SpecialistNet back = read_net(in);
  std::mt19937_64 rng(7);
  for (int k = 0; k < 50; ++k) {
    const auto x = random_input(rng);
    back.forward(Eigen::Map<const Eigen::VectorXd>(x.data(), kNetInputs));
  }
  std::ostringstream b;
  write_net(b, back);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(back.weights[2], net.weights[2]);
}

TEST(SpecialistNetTest, RejectsBadShapes) {
  SpecialistNet net = random_net(8);
  net.output_std[2] = 0.0;
  EXPECT_THROW(net.validate(), std::invalid_argument);
  net = random_net(8);
  net.weights[1](0, 0) = NAN;
  EXPECT_THROW(net.validate(), std::invalid_argument);
  std::istringstream junk("wbmpc-specialist 2\n");
  EXPECT_THROW(read_net(junk), std::runtime_error);
}

TEST(SpecialistNetTest, NormalizationRoundTrip) {
  const SpecialistNet net = random_net(9);
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    for (int r = 0; r < kNetOutputs; ++r) {
      const double y = n(rng);
      const double z = (y - net.output_mean[r]) / net.output_std[r];
      EXPECT_NEAR(z * net.output_std[r] + net.output_mean[r], y, 1e-12 * std::max(1.0, std::abs(y)));
    }
  }
}

SpecialistLibrary net_library(std::size_t n, std::vector<int> hidden = {16, 16, 16}) {
  SpecialistLibrary lib;
  for (std::size_t i = 0; i < n; ++i) lib.members.emplace_back(random_net(100 + i, hidden));
  return lib;
}

std::vector<double> random_model_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {u(rng), u(rng), 3.0 * u(rng), 1.4 + u(rng), 0.3 * u(rng), 3.0 * u(rng), 0.35 * u(rng), 0.5 + 0.5 * u(rng)};
}

std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> w(n);
  double s = 0.0;
  for (auto& v : w) s += (v = e(rng));
  for (auto& v : w) v /= s;
  return w;
}

TEST(EnsembleTest, VertexWeightsReproduceSpecialist) {
  const SpecialistLibrary lib = net_library(3);
  const sym::Tape tape = sym::Tape::compile(build_ensemble(lib));
  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto x = random_model_point(rng);
    for (std::size_t i = 0; i < lib.size(); ++i) {
      std::vector<double> w(lib.size(), 0.0);
      w[i] = 1.0;
      const auto out = tape(x, w);
      const auto& net = std::get<SpecialistNet>(lib.members[i]);
      const auto ref = reference_forward(net, {x[3], x[4], x[5], x[6], x[7]});
      for (int r = 0; r < 3; ++r) EXPECT_NEAR(out[3 + r], ref[3 + r], 1e-12 * std::max(1.0, std::abs(ref[3 + r])));
      EXPECT_NEAR(out[0], x[3] * std::cos(x[2]) - x[4] * std::sin(x[2]), 1e-14);
      EXPECT_NEAR(out[2], x[5], 0.0);
    }
  }
}

TEST(EnsembleTest, IdenticalMembersMixToEither) {
  SpecialistLibrary lib;
  lib.members.emplace_back(random_net(12, {8, 8, 8}));
  lib.members.emplace_back(random_net(12, {8, 8, 8}));
  const sym::Tape tape = sym::Tape::compile(build_ensemble(lib));
  const std::vector<double> x{0, 0, 0.2, 1.2, 0.1, 0.5, 0.1, 0.4};
  const auto half = tape(x, std::vector<double>{0.5, 0.5});
  const auto one = tape(x, std::vector<double>{1.0, 0.0});
  for (int r = 3; r < 6; ++r) EXPECT_NEAR(half[r], one[r], 1e-12 * std::max(1.0, std::abs(one[r])));
}

TEST(EnsembleTest, HullContainmentAndJacobianConvexity) {
  const SpecialistLibrary lib = net_library(4);
  sym::ExprGraph g = build_ensemble(lib);
  const auto jac = sym::jacobian(g);
  const sym::Tape tape = sym::Tape::compile(g);
  const sym::Tape jtape = sym::Tape::compile(g, jac.expressions());

  std::vector<sym::Tape> member_tapes;
  std::vector<sym::SparseJacobian> member_jacs;
  for (const auto& m : lib.members) {
    SpecialistLibrary single;
    single.members = {m, m};
    sym::ExprGraph mg = build_ensemble(single);
    member_jacs.push_back(sym::jacobian(mg));
    member_tapes.push_back(sym::Tape::compile(mg, member_jacs.back().expressions()));
  }

  std::mt19937_64 rng(13);
  for (int k = 0; k < 1000; ++k) {
    const auto x = random_model_point(rng);
    const auto w = random_simplex(rng, lib.size());
    const auto out = tape(x, w);
    for (int r = 3; r < 6; ++r) {
      double lo = INFINITY, hi = -INFINITY;
      for (const auto& m : lib.members) {
        const auto p = predict_dynamics(m, vehicle::VehicleState::from_array({x[0], x[1], x[2], x[3], x[4], x[5]}),
                                        {x[6], x[7]});
        lo = std::min(lo, p[r - 3]);
        hi = std::max(hi, p[r - 3]);
      }
      const double slack = 1e-12 * std::max(1.0, std::abs(out[r]));
      EXPECT_GE(out[r], lo - slack);
      EXPECT_LE(out[r], hi + slack);
    }

    std::vector<double> mixed(6 * 8, 0.0), blend(6 * 8, 0.0);
    const auto jv = jtape(x, w);
    for (std::size_t e = 0; e < jac.entries.size(); ++e) mixed[jac.entries[e].row * 8 + jac.entries[e].col] = jv[e];
    for (std::size_t i = 0; i < lib.size(); ++i) {
      const auto mv = member_tapes[i](x, std::vector<double>{0.5, 0.5});
      for (std::size_t e = 0; e < member_jacs[i].entries.size(); ++e) {
        const auto& en = member_jacs[i].entries[e];
        if (en.row >= 3) blend[en.row * 8 + en.col] += w[i] * mv[e];
      }
    }
    for (std::size_t row = 3; row < 6; ++row) {
      for (std::size_t col = 0; col < 8; ++col) {
        const double a = mixed[row * 8 + col], b = blend[row * 8 + col];
        EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(b)));
      }
    }
  }
}

TEST(EnsembleTest, OdeVertexMatchesVehicleModel) {
  SpecialistLibrary lib;
  lib.members.emplace_back(OdeSpecialist{vehicle::nominal_params()});
  lib.members.emplace_back(OdeSpecialist{vehicle::make_regime(vehicle::nominal_params(), {0.5, 1.2, 1.4})});
  const sym::Tape tape = sym::Tape::compile(build_ensemble(lib));
  std::mt19937_64 rng(14);
  for (int k = 0; k < 100; ++k) {
    const auto x = random_model_point(rng);
    const auto out = tape(x, std::vector<double>{0.0, 1.0});
    const auto ref = vehicle::continuous_dynamics(vehicle::VehicleState::from_array({x[0], x[1], x[2], x[3], x[4], x[5]}),
                                                  {x[6], x[7]}, std::get<OdeSpecialist>(lib.members[1]).params);
    for (int r = 0; r < 6; ++r) EXPECT_NEAR(out[r], ref[r], 1e-12 * std::max(1.0, std::abs(ref[r])));
  }
}

TEST(LibraryTest, SaveAndLoad) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "wbmpc_lib_test";
  fs::remove_all(dir);
  const SpecialistLibrary lib = net_library(2, {8, 8, 8});
  save_library(lib, dir.string());
  const SpecialistLibrary back = load_library((dir / "manifest.txt").string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(std::get<SpecialistNet>(back.members[1]).weights[0], std::get<SpecialistNet>(lib.members[1]).weights[0]);
  fs::remove(dir / "specialist_1.net");
  try {
    load_library((dir / "manifest.txt").string());
    FAIL() << "expected MissingArtifact";
  } catch (const config::MissingArtifact& e) {
    EXPECT_NE(e.path().find("specialist_1.net"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(SelectionTest, AllCandidatesWhenNEqualsCount) {
  const auto cands = candidate_grid(vehicle::nominal_params());
  ASSERT_EQ(cands.size(), 16u);
  const auto states = validation_states(200, 1);
  auto idx = select_regimes(cands, cands.size(), states, vehicle::nominal_params());
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
}

TEST(SelectionTest, DuplicateNeverBeatsDistinctCandidate) {
  const auto base = vehicle::nominal_params();
  const std::vector<vehicle::VehicleParams> cands{vehicle::make_regime(base, {0.5, {}, {}}),
                                                  vehicle::make_regime(base, {0.5, {}, {}}),
                                                  vehicle::make_regime(base, {1.25, {}, {}}),
                                                  vehicle::make_regime(base, {1.0, 1.2, {}})};
  const auto idx = select_regimes(cands, 3, validation_states(200, 2), base);
  EXPECT_EQ(std::count(idx.begin(), idx.end(), 0u) + std::count(idx.begin(), idx.end(), 1u), 1);
}

TEST(SelectionTest, FrictionSweepPicksBestWorstCasePair) {
  const auto base = vehicle::nominal_params();
  std::vector<vehicle::VehicleParams> cands;
  for (double mu : {0.5, 0.75, 1.0, 1.25}) cands.push_back(vehicle::make_regime(base, {mu, {}, {}}));
  const auto states = validation_states(300, 3);
  auto idx = select_regimes(cands, 2, states, base);
  std::sort(idx.begin(), idx.end());

  // Brute force over all pairs: smallest worst-case residual over the sweep.
  double best = INFINITY;
  std::pair<std::size_t, std::size_t> best_pair;
  for (std::size_t a = 0; a < cands.size(); ++a) {
    for (std::size_t b = a + 1; b < cands.size(); ++b) {
      const std::vector<Specialist> members{OdeSpecialist{cands[a]}, OdeSpecialist{cands[b]}};
      double worst = 0.0;
      for (const auto& c : cands) worst = std::max(worst, hull_residual(members, c, states));
      if (worst < best - 1e-15) {
        best = worst;
        best_pair = {a, b};
      }
    }
  }
  EXPECT_EQ(idx[0], best_pair.first);
  EXPECT_EQ(idx[1], best_pair.second);
  EXPECT_EQ(best_pair, (std::pair<std::size_t, std::size_t>{0, 3}));
}

TEST(SelectionTest, NominalWeightsRecoverFrictionMix) {
  const auto base = vehicle::nominal_params();
  SpecialistLibrary lib;
  lib.members.emplace_back(OdeSpecialist{vehicle::make_regime(base, {0.5, {}, {}})});
  lib.members.emplace_back(OdeSpecialist{vehicle::make_regime(base, {1.25, {}, {}})});
  const Eigen::VectorXd w = nominal_weights(lib, base, validation_states(200, 4));
  EXPECT_NEAR(w[0], 1.0 / 3.0, 1e-9);
  EXPECT_NEAR(w[1], 2.0 / 3.0, 1e-9);
}

}  // namespace
}  // namespace wbmpc::specialists

namespace wbmpc::training {
namespace {

using specialists::SpecialistNet;

TEST(DatasetTest, DeterministicAndExact) {
  const auto p = vehicle::nominal_params();
  const auto a = generate_dataset(p, 300, 3, 42);
  const auto b = generate_dataset(p, 300, 3, 42);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.split, b.split);
  for (Eigen::Index i = 0; i < a.inputs.cols(); ++i) {
    const auto x = vehicle::VehicleState::from_array(
        {a.inputs(0, i), a.inputs(1, i), a.inputs(2, i), a.inputs(3, i), a.inputs(4, i), a.inputs(5, i)});
    const auto d = vehicle::continuous_dynamics(x, {a.inputs(6, i), a.inputs(7, i)}, p);
    for (int r = 0; r < 6; ++r) EXPECT_EQ(a.targets(r, i), d[r]);
  }
  const auto c = generate_dataset(p, 300, 3, 43);
  EXPECT_NE(a.inputs, c.inputs);
  EXPECT_EQ(a.indices(Split::Train).size() + a.indices(Split::Val).size() + a.indices(Split::Test).size(), a.size());
}

TEST(DatasetTest, ChirpsReachLargerSlip) {
  const auto p = vehicle::nominal_params();
  const auto d = generate_dataset(p, 2000, 8, 5);
  const auto slip = [&](Eigen::Index i) {
    const double vx = d.inputs(3, i) + vehicle::kSlipEps, vy = d.inputs(4, i), w = d.inputs(5, i);
    const double af = d.inputs(6, i) - std::atan((vy + p.lf * w) / vx);
    const double ar = -std::atan((vy - p.lr * w) / vx);
    return std::max(std::abs(af), std::abs(ar));
  };
  std::vector<double> uniform;
  double chirp_max = 0.0;
  for (Eigen::Index i = 0; i < d.inputs.cols(); ++i) {
    if (d.chirp[static_cast<std::size_t>(i)]) {
      chirp_max = std::max(chirp_max, slip(i));
    } else {
      uniform.push_back(slip(i));
    }
  }
  std::sort(uniform.begin(), uniform.end());
  const double p95 = uniform[static_cast<std::size_t>(0.95 * (uniform.size() - 1))];
  EXPECT_GT(chirp_max, p95);
}

TEST(PhysicsLossTest, ZeroForExactKinematicsAndClosedFormShift) {
  const auto d = generate_dataset(vehicle::nominal_params(), 200, 2, 6);
  const Eigen::MatrixXd body = net_targets(d.inputs, d.targets);
  const Eigen::VectorXd sd = (Eigen::VectorXd(6) << 0.5, 0.2, 2.0, 1.0, 1.0, 1.0).finished();
  EXPECT_NEAR(physics_loss(d.inputs, body, sd), 0.0, 1e-28);

  // Body-frame offsets (c0, c1, c2) rotate into world-frame errors of the
  // same length; with equal std on the first two rows the loss is exact.
  Eigen::VectorXd sd_eq = sd;
  sd_eq[1] = sd_eq[0];
  Eigen::MatrixXd shifted = body;
  const double c0 = 0.03, c1 = -0.02, c2 = 0.1;
  shifted.row(0).array() += c0;
  shifted.row(1).array() += c1;
  shifted.row(2).array() += c2;
  const double expect = ((c0 * c0 + c1 * c1) / (sd_eq[0] * sd_eq[0]) + c2 * c2 / (sd_eq[2] * sd_eq[2])) / 3.0;
  EXPECT_NEAR(physics_loss(d.inputs, shifted, sd_eq), expect, 1e-15);
  EXPECT_GE(physics_loss(d.inputs, shifted, sd), 0.0);
}

TEST(TotalLossTest, MatchesComponentsAndGradient) {
  const auto d = generate_dataset(vehicle::nominal_params(), 60, 1, 7);
  SpecialistNet net = specialists::SpecialistNet{};
  {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 0.3);
    net.layer_dims = {5, 6, 5, 6};
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
      net.weights.push_back(Eigen::MatrixXd::NullaryExpr(net.layer_dims[l + 1], net.layer_dims[l], [&] { return n(rng); }));
      net.biases.push_back(Eigen::VectorXd::NullaryExpr(net.layer_dims[l + 1], [&] { return n(rng); }));
    }
    net.input_mean = Eigen::VectorXd::Constant(5, 0.1);
    net.input_std = Eigen::VectorXd::Constant(5, 0.8);
    net.output_mean = Eigen::VectorXd::Constant(6, 0.2);
    net.output_std = (Eigen::VectorXd(6) << 0.9, 0.3, 1.5, 2.0, 3.0, 40.0).finished();
  }
  const double lambda = 0.1;
  const Eigen::MatrixXd pred = net.forward_batch(net_inputs(d.inputs));
  const Eigen::MatrixXd err =
      (pred - net_targets(d.inputs, d.targets)).array().colwise() / net.output_std.array();
  const double l_data = err.squaredNorm() / static_cast<double>(err.size());
  const double l_phy = physics_loss(d.inputs, pred, net.output_std);

  Eigen::VectorXd grad;
  const double total = total_loss(net, d.inputs, d.targets, lambda, &grad);
  EXPECT_NEAR(total, l_data + lambda * l_phy, 1e-12 * total);

  const Eigen::VectorXd theta = flatten(net);
  ASSERT_EQ(grad.size(), theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double h = 1e-6;
    Eigen::VectorXd tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (total_loss(unflatten(net, tp), d.inputs, d.targets, lambda) -
                       total_loss(unflatten(net, tm), d.inputs, d.targets, lambda)) /
                      (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd))) << "parameter " << i;
  }
}

TEST(OptimTest, LbfgsSolvesRosenbrock) {
  const optim::Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    double v = 0.0;
    g.setZero();
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i], b = 1.0 - x[i];
      v += 100 * a * a + b * b;
      g[i] += -400 * a * x[i] - 2 * b;
      g[i + 1] += 200 * a;
    }
    return v;
  };
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(10, -1.2);
  optim::LbfgsOptions opt;
  opt.max_iterations = 1000;
  const auto r = optim::minimize_lbfgs(f, x0, opt);
  EXPECT_LT(r.f, 1e-16);
  EXPECT_LT((r.x.array() - 1.0).abs().maxCoeff(), 1e-7);
}

TEST(OptimTest, AdamMinimizesQuadratic) {
  optim::Adam adam(3, {0.05});
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 2.0);
  for (int i = 0; i < 2000; ++i) adam.step(x, 2.0 * (x - Eigen::Vector3d(1, -1, 0.5)));
  EXPECT_LT((x - Eigen::Vector3d(1, -1, 0.5)).norm(), 1e-3);
}

TEST(TrainTest, LbfgsRefinesConstantFit) {
  TrainingSet d;
  d.regime = vehicle::nominal_params();
  const int n = 200;
  d.inputs.resize(8, n);
  d.targets.resize(6, n);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < n; ++i) {
    d.inputs.col(i) << 0, 0, 0, 1.0, 0.0, 0.0, 0.3 * u(rng), 0.5 + 0.5 * u(rng);
    d.targets.col(i) << 1.0, 0.0, 0.0, 0.25, -0.5, 3.0;
    d.split.push_back(i % 10 == 0 ? Split::Test : i % 10 == 1 ? Split::Val : Split::Train);
    d.chirp.push_back(0);
  }
  TrainConfig cfg;
  cfg.max_epochs = 20;
  cfg.lbfgs_iterations = 200;
  const auto r = train_specialist_pair(d, cfg, 1);
  EXPECT_FALSE(r.lbfgs_line_search_failed);
  EXPECT_LT(r.hybrid.heldout_rmse, 0.05 * r.adam_only.heldout_rmse);
  const auto idx = d.indices(Split::Test);
  Eigen::MatrixXd in(8, 1);
  in.col(0) = d.inputs.col(idx[0]);
  const Eigen::VectorXd y = r.hybrid.forward_batch(net_inputs(in)).col(0);
  EXPECT_NEAR(y[5], 3.0, 1e-2);
  EXPECT_EQ(r.hybrid.protocol, specialists::Protocol::Hybrid);
  EXPECT_EQ(r.adam_only.protocol, specialists::Protocol::AdamOnly);
}

TEST(TrainTest, RejectsEmptyData) {
  TrainingSet d;
  EXPECT_THROW(train_specialist_pair(d, {}, 1), std::invalid_argument);
  EXPECT_THROW(generate_dataset(vehicle::nominal_params(), 0, 1, 1), std::invalid_argument);
}

}  // namespace
}  // namespace wbmpc::training
