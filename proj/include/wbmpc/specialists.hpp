#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "wbmpc/symgraph.hpp"
#include "wbmpc/vehicle.hpp"

namespace wbmpc::specialists {

/// Net inputs: (vx, vy, omega, delta, D).
inline constexpr int kNetInputs = 5;
/// Net outputs: body-frame kinematics (vx, vy, omega) followed by the
/// dynamic rows (vx', vy', omega').
inline constexpr int kNetOutputs = 6;
inline constexpr int kDynamicRows = 3;

enum class Protocol { AdamOnly, Hybrid };

std::string_view protocol_name(Protocol p);
Protocol protocol_from_name(std::string_view name);

/// Frozen MLP with tanh hidden layers, identity output and Z-score scaling
/// on both ends.
struct SpecialistNet {
  std::vector<int> layer_dims;
  std::vector<Eigen::MatrixXd> weights;  // layer l maps dims[l] -> dims[l+1]
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input_mean, input_std;
  Eigen::VectorXd output_mean, output_std;
  vehicle::VehicleParams regime{};
  Protocol protocol = Protocol::Hybrid;
  double heldout_rmse = 0.0;

  /// Raw inputs to raw outputs; one column per sample in the batch form.
  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  /// Throws std::invalid_argument on inconsistent shapes, non-finite weights
  /// or non-positive scaling.
  void validate() const;
};

Eigen::VectorXd net_input(const vehicle::VehicleState& x, const vehicle::ControlInput& u);

void write_net(std::ostream& out, const SpecialistNet& net);
SpecialistNet read_net(std::istream& in);
void save_net(const std::string& path, const SpecialistNet& net);
SpecialistNet load_net(const std::string& path);

/// The exact model of one regime, used where the tiers call for ideal
/// specialists.
struct OdeSpecialist {
  vehicle::VehicleParams params{};
};

using Specialist = std::variant<OdeSpecialist, SpecialistNet>;

struct SpecialistLibrary {
  std::vector<Specialist> members;

  std::size_t size() const { return members.size(); }
  bool neural() const;
  /// N >= 2; members are all ODE or all nets with identical layer_dims.
  void validate() const;
};

using DynamicRows = std::array<double, kDynamicRows>;

DynamicRows predict_dynamics(const Specialist& s, const vehicle::VehicleState& x, const vehicle::ControlInput& u);
const vehicle::VehicleParams& regime_of(const Specialist& s);

/// Writes `manifest.txt` plus one file per member into `dir`.
void save_library(const SpecialistLibrary& lib, const std::string& dir);
/// Reads a manifest; member paths are relative to the manifest's directory.
/// Throws config::MissingArtifact naming the first absent file.
SpecialistLibrary load_library(const std::string& manifest_path);

/// Standalone graph of one net: 5 variables (the net inputs), 6 outputs.
sym::ExprGraph embed_symbolic(const SpecialistNet& net);
std::array<sym::Sym, kNetOutputs> emit_net(sym::ExprGraph& g, const std::array<sym::Sym, kNetInputs>& in,
                                           const SpecialistNet& net);

/// Dynamic rows (vx', vy', omega') of one specialist on the model slots.
std::array<sym::Sym, kDynamicRows> emit_dynamics(sym::ExprGraph& g, const vehicle::SymbolicIo& io,
                                                 const Specialist& s);

/// Vector-field mixture: 8 variables, N Parameter slots holding the weights.
/// Rows 0-2 are the shared analytic kinematics, rows 3-5 are sum_i w_i Psi_i.
sym::ExprGraph build_ensemble(const SpecialistLibrary& lib);

/// Sampling box for training inputs and selection states. Pose is drawn
/// separately; the nets never see it. Uniform draws are rejected when either
/// tire slip angle (nominal geometry) exceeds `slip_abs`; chirp trajectories
/// only have to stay inside the velocity limits.
struct StateBox {
  double vx_min = 0.3, vx_max = 2.5;
  double vy_abs = 0.5;
  double omega_abs = 8.0;
  double delta_abs = 0.4;
  double drive_min = -0.2, drive_max = 1.0;
  double slip_abs = 0.3;

  bool contains(const vehicle::VehicleState& x) const;
};

struct Sample {
  vehicle::VehicleState x;
  vehicle::ControlInput u;
};

/// One uniform draw from `box` (pose included), by rejection on slip.
Sample draw_sample(std::mt19937_64& rng, const StateBox& box);

/// Operating points for selection and nominal-weight fitting, drawn from the
/// training box.
std::vector<Sample> validation_states(std::size_t n, std::uint64_t seed, const StateBox& box = {});

/// mu_scale x mass_factor x drag_factor grid around `base`.
std::vector<vehicle::VehicleParams> candidate_grid(const vehicle::VehicleParams& base);

/// Best simplex approximation of `target`'s dynamic rows by `members`, as a
/// mean squared residual over `states`. Returns the weights through `w`.
double hull_residual(const std::vector<Specialist>& members, const vehicle::VehicleParams& target,
                     const std::vector<Sample>& states, Eigen::VectorXd* w = nullptr);

/// Greedy worst-case selection. The first pick is the candidate worst covered
/// by `nominal`; every later pick is the candidate worst covered by the
/// members chosen so far. Ties go to the lower index. Returns indices.
std::vector<std::size_t> select_regimes(const std::vector<vehicle::VehicleParams>& candidates, std::size_t n,
                                        const std::vector<Sample>& states, const vehicle::VehicleParams& nominal);

SpecialistLibrary select_library(const std::vector<vehicle::VehicleParams>& candidates, std::size_t n,
                                 const std::vector<Sample>& states, const vehicle::VehicleParams& nominal);

/// Simplex weights under which `lib` best reproduces `nominal`; the frozen
/// baseline and the Governor's starting point.
Eigen::VectorXd nominal_weights(const SpecialistLibrary& lib, const vehicle::VehicleParams& nominal,
                                const std::vector<Sample>& states);

}  // namespace wbmpc::specialists
