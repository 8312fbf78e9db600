#include "wbmpc/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "wbmpc/optim.hpp"

namespace wbmpc::training {
namespace {

using specialists::SpecialistNet;
using vehicle::ControlInput;
using vehicle::VehicleParams;
using vehicle::VehicleState;

constexpr int kPsiRow = 2;

struct Normalization {
  Eigen::VectorXd in_mean, in_std, out_mean, out_std;
};

void column_stats(const Eigen::MatrixXd& m, Eigen::VectorXd& mean, Eigen::VectorXd& stdev) {
  mean = m.rowwise().mean();
  stdev = ((m.colwise() - mean).cwiseAbs2().rowwise().sum() / static_cast<double>(m.cols())).cwiseSqrt();
  for (Eigen::Index i = 0; i < stdev.size(); ++i) {
    if (!(stdev[i] > 1e-12)) stdev[i] = 1.0;
  }
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& cols) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(cols[j]);
  return out;
}

// Normalized inputs/targets plus the raw (psi, vx, vy, omega) rows L_phy needs.
struct Block {
  Eigen::MatrixXd x, t, kin;
};

Block make_block(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets, const Normalization& nz) {
  Block b;
  b.x = (net_inputs(inputs).colwise() - nz.in_mean).array().colwise() / nz.in_std.array();
  b.t = (net_targets(inputs, targets).colwise() - nz.out_mean).array().colwise() / nz.out_std.array();
  b.kin.resize(4, inputs.cols());
  b.kin.row(0) = inputs.row(vehicle::kPsi);
  b.kin.row(1) = inputs.row(vehicle::kVx);
  b.kin.row(2) = inputs.row(vehicle::kVy);
  b.kin.row(3) = inputs.row(vehicle::kOmega);
  return b;
}

Block slice(const Block& b, const std::vector<Eigen::Index>& cols) {
  return {gather(b.x, cols), gather(b.t, cols), gather(b.kin, cols)};
}

// Dense tanh MLP with a flat parameter vector: per layer W (column-major),
// then b.
class MlpLoss {
 public:
  MlpLoss(std::vector<int> dims, double lambda, const Normalization& nz)
      : dims_(std::move(dims)), lambda_(lambda), nz_(nz) {
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      offsets_.push_back(off);
      off += static_cast<std::size_t>(dims_[l + 1]) * (static_cast<std::size_t>(dims_[l]) + 1);
    }
    size_ = static_cast<Eigen::Index>(off);
  }

  Eigen::Index size() const { return size_; }
  std::size_t layers() const { return offsets_.size(); }

  Eigen::Map<const Eigen::MatrixXd> W(const Eigen::VectorXd& th, std::size_t l) const {
    return {th.data() + offsets_[l], dims_[l + 1], dims_[l]};
  }
  Eigen::Map<const Eigen::VectorXd> b(const Eigen::VectorXd& th, std::size_t l) const {
    return {th.data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1]) * dims_[l], dims_[l + 1]};
  }

  Eigen::VectorXd xavier(std::mt19937_64& rng) const {
    Eigen::VectorXd th = Eigen::VectorXd::Zero(size_);
    for (std::size_t l = 0; l < layers(); ++l) {
      const double lim = std::sqrt(6.0 / (dims_[l] + dims_[l + 1]));
      std::uniform_real_distribution<double> u(-lim, lim);
      const std::size_t n = static_cast<std::size_t>(dims_[l + 1]) * dims_[l];
      for (std::size_t i = 0; i < n; ++i) th[static_cast<Eigen::Index>(offsets_[l] + i)] = u(rng);
    }
    return th;
  }

  double operator()(const Eigen::VectorXd& th, const Block& blk, Eigen::VectorXd* grad) const {
    const Eigen::Index B = blk.x.cols();
    const std::size_t L = layers();
    std::vector<Eigen::MatrixXd> act(L);
    const Eigen::MatrixXd* in = &blk.x;
    for (std::size_t l = 0; l < L; ++l) {
      act[l].noalias() = W(th, l) * (*in);
      act[l].colwise() += b(th, l);
      if (l + 1 < L) act[l] = act[l].array().tanh();
      in = &act[l];
    }
    const Eigen::MatrixXd& out = act[L - 1];

    const Eigen::MatrixXd diff = out - blk.t;
    const double l_data = diff.squaredNorm() / static_cast<double>(6 * B);

    // Physics term on the raw body-frame kinematic rows.
    const auto& sd = nz_.out_std;
    const Eigen::ArrayXXd raw0 = out.row(0).array() * sd[0] + nz_.out_mean[0] - blk.kin.row(1).array();
    const Eigen::ArrayXXd raw1 = out.row(1).array() * sd[1] + nz_.out_mean[1] - blk.kin.row(2).array();
    const Eigen::ArrayXXd raw2 = out.row(2).array() * sd[2] + nz_.out_mean[2] - blk.kin.row(3).array();
    const Eigen::ArrayXXd c = blk.kin.row(0).array().cos();
    const Eigen::ArrayXXd s = blk.kin.row(0).array().sin();
    const Eigen::ArrayXXd eX = (c * raw0 - s * raw1) / sd[0];
    const Eigen::ArrayXXd eY = (s * raw0 + c * raw1) / sd[1];
    const Eigen::ArrayXXd eP = raw2 / sd[2];
    const double l_phy = (eX.square().sum() + eY.square().sum() + eP.square().sum()) / static_cast<double>(3 * B);
    const double total = l_data + lambda_ * l_phy;
    if (!grad) return total;

    Eigen::MatrixXd delta = diff * (2.0 / static_cast<double>(6 * B));
    const double k = lambda_ * 2.0 / static_cast<double>(3 * B);
    delta.row(0).array() += k * (eX * c / sd[0] + eY * s / sd[1]) * sd[0];
    delta.row(1).array() += k * (-eX * s / sd[0] + eY * c / sd[1]) * sd[1];
    delta.row(2).array() += k * eP / sd[2] * sd[2];

    grad->resize(size_);
    for (std::size_t l = L; l-- > 0;) {
      const Eigen::MatrixXd& prev = l == 0 ? blk.x : act[l - 1];
      Eigen::Map<Eigen::MatrixXd> gW(grad->data() + offsets_[l], dims_[l + 1], dims_[l]);
      Eigen::Map<Eigen::VectorXd> gb(grad->data() + offsets_[l] + static_cast<std::size_t>(dims_[l + 1]) * dims_[l],
                                     dims_[l + 1]);
      gW.noalias() = delta * prev.transpose();
      gb = delta.rowwise().sum();
      if (l > 0) {
        Eigen::MatrixXd back = W(th, l).transpose() * delta;
        delta = back.array() * (1.0 - act[l - 1].array().square());
      }
    }
    return total;
  }

  SpecialistNet to_net(const Eigen::VectorXd& th) const {
    SpecialistNet net;
    net.layer_dims = dims_;
    for (std::size_t l = 0; l < layers(); ++l) {
      net.weights.emplace_back(W(th, l));
      net.biases.emplace_back(b(th, l));
    }
    net.input_mean = nz_.in_mean;
    net.input_std = nz_.in_std;
    net.output_mean = nz_.out_mean;
    net.output_std = nz_.out_std;
    return net;
  }

 private:
  std::vector<int> dims_;
  double lambda_;
  Normalization nz_;
  std::vector<std::size_t> offsets_;
  Eigen::Index size_ = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<Eigen::Index> TrainingSet::indices(Split s) const {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split[i] == s) out.push_back(static_cast<Eigen::Index>(i));
  }
  return out;
}

TrainingSet generate_dataset(const VehicleParams& p, std::size_t n_uniform, std::size_t n_chirp_trajs,
                             std::uint64_t seed, const DatasetConfig& cfg) {
  if (n_uniform == 0 || n_chirp_trajs == 0) throw std::invalid_argument("generate_dataset: counts must be positive");
  vehicle::validate(p);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const auto& box = cfg.box;

  std::vector<std::pair<VehicleState, ControlInput>> rows;
  std::vector<std::uint8_t> chirp;
  for (std::size_t i = 0; i < n_uniform; ++i) {
    const auto smp = specialists::draw_sample(rng, box);
    rows.emplace_back(smp.x, smp.u);
    chirp.push_back(0);
  }

  const int steps = static_cast<int>(std::lround(cfg.chirp_duration / cfg.sample_period));
  for (std::size_t j = 0; j < n_chirp_trajs; ++j) {
    VehicleState x;
    x.psi = draw(-std::numbers::pi, std::numbers::pi);
    x.vx = draw(0.8, 2.0);
    const double amp = draw(cfg.chirp_amp_min, cfg.chirp_amp_max);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    for (int k = 0; k < steps && box.contains(x); ++k) {
      const double t = k * cfg.sample_period;
      const double freq = cfg.chirp_f0 + (cfg.chirp_f1 - cfg.chirp_f0) * t / cfg.chirp_duration;
      const double delta = sign * amp * std::sin(2.0 * std::numbers::pi * freq * t);
      const std::size_t stage = std::min<std::size_t>(cfg.drive_levels.size() - 1,
                                                      static_cast<std::size_t>(3.0 * t / cfg.chirp_duration));
      const ControlInput u{delta, cfg.drive_levels[stage]};
      rows.emplace_back(x, u);
      chirp.push_back(1);
      x = vehicle::simulate(x, u, p, cfg.sample_period, cfg.substeps);
    }
  }

  TrainingSet set;
  set.regime = p;
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  set.inputs.resize(8, n);
  set.targets.resize(6, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& [x, u] = rows[static_cast<std::size_t>(i)];
    const auto s = x.to_array();
    for (int r = 0; r < 6; ++r) set.inputs(r, i) = s[r];
    set.inputs(6, i) = u.delta;
    set.inputs(7, i) = u.D;
    const auto d = vehicle::continuous_dynamics(x, u, p);
    for (int r = 0; r < 6; ++r) set.targets(r, i) = d[r];
  }
  set.chirp = std::move(chirp);

  std::vector<std::size_t> perm(rows.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto n_val = static_cast<std::size_t>(cfg.val_fraction * rows.size());
  const auto n_test = static_cast<std::size_t>(cfg.test_fraction * rows.size());
  set.split.assign(rows.size(), Split::Train);
  for (std::size_t i = 0; i < n_val; ++i) set.split[perm[i]] = Split::Val;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) set.split[perm[i]] = Split::Test;
  return set;
}

Eigen::MatrixXd net_inputs(const Eigen::MatrixXd& inputs) {
  Eigen::MatrixXd out(specialists::kNetInputs, inputs.cols());
  out.row(0) = inputs.row(vehicle::kVx);
  out.row(1) = inputs.row(vehicle::kVy);
  out.row(2) = inputs.row(vehicle::kOmega);
  out.row(3) = inputs.row(6);
  out.row(4) = inputs.row(7);
  return out;
}

Eigen::MatrixXd net_targets(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  Eigen::MatrixXd out(specialists::kNetOutputs, targets.cols());
  for (Eigen::Index i = 0; i < targets.cols(); ++i) {
    const double c = std::cos(inputs(kPsiRow, i)), s = std::sin(inputs(kPsiRow, i));
    out(0, i) = c * targets(0, i) + s * targets(1, i);
    out(1, i) = -s * targets(0, i) + c * targets(1, i);
    for (int r = 2; r < 6; ++r) out(r, i) = targets(r, i);
  }
  return out;
}

double physics_loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& raw_outputs,
                    const Eigen::VectorXd& output_std) {
  const Eigen::Index n = inputs.cols();
  if (n == 0) return 0.0;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double psi = inputs(vehicle::kPsi, i), vx = inputs(vehicle::kVx, i), vy = inputs(vehicle::kVy, i);
    const double c = std::cos(psi), s = std::sin(psi);
    const double pred_X = c * raw_outputs(0, i) - s * raw_outputs(1, i);
    const double pred_Y = s * raw_outputs(0, i) + c * raw_outputs(1, i);
    const double eX = (pred_X - (vx * c - vy * s)) / output_std[0];
    const double eY = (pred_Y - (vx * s + vy * c)) / output_std[1];
    const double eP = (raw_outputs(2, i) - inputs(vehicle::kOmega, i)) / output_std[2];
    acc += eX * eX + eY * eY + eP * eP;
  }
  return acc / static_cast<double>(3 * n);
}

double physics_loss(const Eigen::MatrixXd& inputs, const SpecialistNet& net) {
  return physics_loss(inputs, net.forward_batch(net_inputs(inputs)), net.output_std);
}

double normalized_rmse(const SpecialistNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets) {
  if (inputs.cols() == 0) return 0.0;
  const Eigen::MatrixXd pred = net.forward_batch(net_inputs(inputs));
  const Eigen::MatrixXd err =
      (pred - net_targets(inputs, targets)).array().colwise() / net.output_std.array();
  return std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
}

double normalized_rmse(const SpecialistNet& net, const TrainingSet& data, Split split) {
  const auto idx = data.indices(split);
  return normalized_rmse(net, gather(data.inputs, idx), gather(data.targets, idx));
}

double total_loss(const SpecialistNet& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  double lambda, Eigen::VectorXd* grad) {
  const Normalization nz{net.input_mean, net.input_std, net.output_mean, net.output_std};
  const MlpLoss loss(net.layer_dims, lambda, nz);
  return loss(flatten(net), make_block(inputs, targets, nz), grad);
}

Eigen::VectorXd flatten(const SpecialistNet& net) {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) n += net.weights[l].size() + net.biases[l].size();
  Eigen::VectorXd th(n);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    th.segment(off, net.weights[l].size()) = net.weights[l].reshaped();
    off += net.weights[l].size();
    th.segment(off, net.biases[l].size()) = net.biases[l];
    off += net.biases[l].size();
  }
  return th;
}

SpecialistNet unflatten(const SpecialistNet& shape, const Eigen::VectorXd& theta) {
  SpecialistNet net = shape;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto& W = net.weights[l];
    W = theta.segment(off, W.size()).reshaped(W.rows(), W.cols());
    off += W.size();
    net.biases[l] = theta.segment(off, net.biases[l].size());
    off += net.biases[l].size();
  }
  if (off != theta.size()) throw std::invalid_argument("unflatten: parameter count mismatch");
  return net;
}

TrainResult train_specialist_pair(const TrainingSet& data, const TrainConfig& cfg, std::uint64_t seed) {
  const auto train_idx = data.indices(Split::Train);
  auto val_idx = data.indices(Split::Val);
  if (train_idx.empty()) throw std::invalid_argument("train_specialist: empty training split");
  if (val_idx.empty()) val_idx = train_idx;

  const Eigen::MatrixXd train_in = gather(data.inputs, train_idx);
  const Eigen::MatrixXd train_tg = gather(data.targets, train_idx);
  Normalization nz;
  column_stats(net_inputs(train_in), nz.in_mean, nz.in_std);
  column_stats(net_targets(train_in, train_tg), nz.out_mean, nz.out_std);

  std::vector<int> dims{specialists::kNetInputs};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(specialists::kNetOutputs);
  const MlpLoss loss(dims, cfg.lambda, nz);

  const Block train = make_block(train_in, train_tg, nz);
  const Block val = make_block(gather(data.inputs, val_idx), gather(data.targets, val_idx), nz);

  std::mt19937_64 rng(seed);
  Eigen::VectorXd theta = loss.xavier(rng);
  Eigen::VectorXd grad(loss.size());
  optim::Adam adam(loss.size(), optim::AdamOptions{cfg.lr});

  TrainResult res;
  const auto t0 = std::chrono::steady_clock::now();
  Eigen::VectorXd best = theta;
  double best_val = loss(theta, val, nullptr);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.x.cols()));
  std::iota(order.begin(), order.end(), 0);
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      const std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
      const double f = loss(theta, slice(train, cols), &grad);
      if (!std::isfinite(f)) {
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      adam.step(theta, grad);
    }
    const double v = loss(theta, val, nullptr);
    if (!std::isfinite(v)) throw TrainingError("training diverged: non-finite validation loss");
    res.adam_epochs = epoch;
    if (v < best_val) {
      best_val = v;
      best = theta;
      res.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  res.adam_seconds = seconds_since(t0);

  const auto finish = [&](const Eigen::VectorXd& th, specialists::Protocol protocol) {
    SpecialistNet net = loss.to_net(th);
    net.regime = data.regime;
    net.protocol = protocol;
    net.heldout_rmse = normalized_rmse(net, data, data.indices(Split::Test).empty() ? Split::Val : Split::Test);
    net.validate();
    return net;
  };
  res.adam_only = finish(best, specialists::Protocol::AdamOnly);

  const auto t1 = std::chrono::steady_clock::now();
  optim::LbfgsOptions lo;
  lo.max_iterations = cfg.lbfgs_iterations;
  lo.memory = cfg.lbfgs_memory;
  const auto refined = optim::minimize_lbfgs(
      [&](const Eigen::VectorXd& th, Eigen::VectorXd& g) { return loss(th, train, &g); }, best, lo);
  res.lbfgs_iterations = refined.iterations;
  res.lbfgs_line_search_failed = refined.line_search_failed;
  res.lbfgs_seconds = seconds_since(t1);
  res.hybrid = finish(refined.x, specialists::Protocol::Hybrid);
  return res;
}

SpecialistNet train_specialist(const TrainingSet& data, specialists::Protocol protocol, const TrainConfig& cfg,
                               std::uint64_t seed) {
  TrainConfig c = cfg;
  if (protocol == specialists::Protocol::AdamOnly) c.lbfgs_iterations = 0;
  TrainResult r = train_specialist_pair(data, c, seed);
  return protocol == specialists::Protocol::AdamOnly ? std::move(r.adam_only) : std::move(r.hybrid);
}

}  // namespace wbmpc::training
