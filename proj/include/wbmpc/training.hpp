#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "wbmpc/specialists.hpp"
#include "wbmpc/vehicle.hpp"

namespace wbmpc::training {

enum class Split : std::uint8_t { Train, Val, Test };

struct DatasetConfig {
  specialists::StateBox box;
  double chirp_duration = 4.0;      // s
  double sample_period = 0.02;      // s between recorded samples
  int substeps = 10;                // RK4 steps per sample period
  double chirp_amp_min = 0.15;      // rad
  double chirp_amp_max = 0.4;       // rad
  double chirp_f0 = 0.2;            // Hz
  double chirp_f1 = 3.0;            // Hz
  std::array<double, 3> drive_levels{0.25, 0.55, 0.85};
  double val_fraction = 0.1;
  double test_fraction = 0.1;
};

/// Synthetic samples of one regime. Columns are samples.
struct TrainingSet {
  vehicle::VehicleParams regime{};
  Eigen::MatrixXd inputs;   // 8 rows: X, Y, psi, vx, vy, omega, delta, D
  Eigen::MatrixXd targets;  // 6 rows: continuous_dynamics of the input
  std::vector<Split> split;
  std::vector<std::uint8_t> chirp;  // 1 when the sample lies on a chirp trajectory

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
  std::vector<Eigen::Index> indices(Split s) const;
};

/// Uniform box samples plus chirp-steering trajectories of the plant,
/// delta(t) = A sin(2 pi (f0 + (f1 - f0) t / T) t) with D stepping through
/// `drive_levels`. A trajectory is cut when it leaves the box's velocity
/// limits; it is not held to the slip bound.
TrainingSet generate_dataset(const vehicle::VehicleParams& p, std::size_t n_uniform, std::size_t n_chirp_trajs,
                             std::uint64_t seed, const DatasetConfig& cfg = {});

/// (vx, vy, omega, delta, D) rows of an 8-row input block.
Eigen::MatrixXd net_inputs(const Eigen::MatrixXd& inputs);
/// Net training targets: world-frame position rates rotated into the body
/// frame, then psi', vx', vy', omega'.
Eigen::MatrixXd net_targets(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets);

/// Kinematic consistency penalty. The net's body-frame rows are rotated by the
/// sample's heading and compared with the analytic world-frame kinematics in
/// physical units; each row is divided by the matching output_std and the
/// squares averaged over samples and the three rows.
double physics_loss(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& raw_outputs,
                    const Eigen::VectorXd& output_std);
double physics_loss(const Eigen::MatrixXd& inputs, const specialists::SpecialistNet& net);

/// RMSE of the net's output in units of output_std, over all six rows.
double normalized_rmse(const specialists::SpecialistNet& net, const Eigen::MatrixXd& inputs,
                       const Eigen::MatrixXd& targets);
double normalized_rmse(const specialists::SpecialistNet& net, const TrainingSet& data, Split split);

/// L_data + lambda * L_phy of `net` on raw samples, with the gradient with
/// respect to flatten(net) when `grad` is given.
double total_loss(const specialists::SpecialistNet& net, const Eigen::MatrixXd& inputs,
                  const Eigen::MatrixXd& targets, double lambda, Eigen::VectorXd* grad = nullptr);

/// Weights and biases in one vector: per layer W (column-major), then b.
Eigen::VectorXd flatten(const specialists::SpecialistNet& net);
specialists::SpecialistNet unflatten(const specialists::SpecialistNet& shape, const Eigen::VectorXd& theta);

struct TrainConfig {
  std::vector<int> hidden{64, 64, 64};
  double lambda = 0.1;
  double lr = 1e-3;
  int batch = 256;
  int max_epochs = 5000;
  int patience = 200;
  int lbfgs_iterations = 500;
  int lbfgs_memory = 10;
};

struct TrainResult {
  specialists::SpecialistNet adam_only;
  specialists::SpecialistNet hybrid;
  int adam_epochs = 0;
  int best_epoch = 0;
  int lbfgs_iterations = 0;
  bool lbfgs_line_search_failed = false;
  double adam_seconds = 0.0;
  double lbfgs_seconds = 0.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adam from a seeded Xavier init with early stopping on validation L_total;
/// the best checkpoint is the adam_only net and the starting point of the
/// L-BFGS refinement that yields the hybrid net. Throws TrainingError when
/// the loss turns non-finite.
TrainResult train_specialist_pair(const TrainingSet& data, const TrainConfig& cfg, std::uint64_t seed);

specialists::SpecialistNet train_specialist(const TrainingSet& data, specialists::Protocol protocol,
                                            const TrainConfig& cfg, std::uint64_t seed);

}  // namespace wbmpc::training
