#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wbmpc/governor.hpp"
#include "wbmpc/ocp.hpp"
#include "wbmpc/specialists.hpp"
#include "wbmpc/vehicle.hpp"

namespace wbmpc::scenarios {

struct TrackProjection {
  std::size_t segment = 0;  // index of the segment start
  double s = 0.0;           // arclength of the projected point
  double distance = 0.0;    // Euclidean distance to the centerline
  Eigen::Vector2d point = Eigen::Vector2d::Zero();
};

/// Closed polyline centerline. The last waypoint connects back to the first.
class Track {
 public:
  explicit Track(std::vector<Eigen::Vector2d> waypoints);

  /// Straights of `straight` metres joined by semicircles of `radius`, with
  /// a left-right-left chicane (arcs of `chicane_radius`, turning angle
  /// `chicane_angle`, `2 chicane_angle`, `chicane_angle`) in the middle of
  /// each straight. Sampled every `ds` metres.
  static Track stadium(double straight = 2.0, double radius = 1.0, double chicane_radius = 1.0,
                       double chicane_angle = 0.4, double ds = 0.01);
  static Track circle(double radius, std::size_t n);

  const std::vector<Eigen::Vector2d>& waypoints() const { return pts_; }
  /// Arclength at each waypoint; strictly increasing from 0.
  const std::vector<double>& arclength() const { return s_; }
  double length() const { return length_; }

  /// Point at arclength s (wrapped onto [0, length)).
  Eigen::Vector2d at(double s) const;
  /// Nearest segment, linear interpolation; ties go to the lower index.
  TrackProjection project(const Eigen::Vector2d& p) const;

 private:
  std::vector<Eigen::Vector2d> pts_;
  std::vector<double> s_;
  double length_ = 0.0;
};

/// H reference positions k v_ref Ts ahead of the projection of (X, Y).
std::vector<Eigen::Vector2d> make_reference(const Track& track, const vehicle::VehicleState& x,
                                            const ocp::OcpConfig& cfg);

enum class Tier { IdealOde, NoisyOde, PinnAdam, PinnHybrid };
enum class Shift { None, FrictionOnly, AllParams, BenchmarkFrictionUp };

std::string_view tier_name(Tier t);
std::string_view shift_name(Shift s);
Tier tier_from_name(std::string_view name);
Shift shift_from_name(std::string_view name);
vehicle::RegimeShift regime_shift(Shift s);

struct Scenario {
  Tier tier = Tier::IdealOde;
  Shift shift = Shift::FrictionOnly;
  double shift_time = 10.0;
  double duration = 20.0;
  double warmup = 2.0;  // excluded from the pre-shift window
  bool adaptive = true;
  std::uint64_t seed = 0;
  double noise_sigma = 0.05;  // measurement noise for the noisy tier

  void validate() const;
};

struct GovernorConfig {
  std::size_t window = 20;
  double alpha = 0.1;
  governor::Residual residual = governor::Residual::Trapezoid;
};

/// Everything a closed-loop run needs besides the scenario.
struct RunContext {
  Track track = Track::stadium();
  vehicle::VehicleParams nominal = vehicle::nominal_params();
  ocp::OcpConfig ocp;
  GovernorConfig governor;
  /// Starting (and, for non-adaptive runs, frozen) mixing weights.
  Eigen::VectorXd w0;
  int substeps = 10;
};

struct TraceRow {
  double t = 0.0;
  vehicle::VehicleState x;
  vehicle::ControlInput u;
  Eigen::Vector2d ref = Eigen::Vector2d::Zero();  // first horizon reference
  double cross_track = 0.0;
  double speed_error = 0.0;  // vx - v_ref
  int iterations = 0;
  bool converged = true;
  double cost = 0.0;
  Eigen::VectorXd w;
  ocp::SolveTiming timing;
  double governor_latency = 0.0;
};

struct Trace {
  std::vector<TraceRow> rows;

  /// Deterministic columns only: t, state, u, reference, errors, solver
  /// iterations/convergence/cost, weights.
  void write_csv(std::ostream& out) const;
  /// Wall-clock columns: solve timing decomposition and Governor latency.
  void write_timing_csv(std::ostream& out) const;
};

struct WindowRmse {
  double pre = 0.0;
  double post = 0.0;
};

struct RunMetrics {
  WindowRmse vx, vy, pos;
  int unconverged_steps = 0;
  double max_weight_step = 0.0;  // max |w_k - w_{k-1}| after the convergence time
};

/// Pre window [warmup, shift_time), post window [shift_time, end].
RunMetrics compute_metrics(const Trace& trace, double shift_time, double warmup = 2.0,
                           double convergence_time = 5.0);

/// 100 (post - pre_base) / |pre_base|.
double degradation(double post, double pre_base);
/// 100 (delta_base - delta_adapt) / |delta_base|.
double mitigation(double delta_base, double delta_adapt);

struct PairedMetrics {
  double degradation_base = 0.0;
  double degradation_adapt = 0.0;
  std::optional<double> mitigation;  // absent when no baseline run exists
};

/// Position/vx/vy comparison of an adaptive run against its baseline, both
/// standardized to `pre_base` (the Tier-1 non-adaptive pre-shift values).
struct MetricComparison {
  PairedMetrics vx, vy, pos;
};
MetricComparison compare(const RunMetrics& adaptive, const RunMetrics* baseline, const RunMetrics& pre_base);

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunResult {
  Trace trace;
  RunMetrics metrics;
};

/// Synchronous closed loop: measure, Governor step (adaptive runs), NMPC
/// solve, apply u_0 to the RK4 plant; the plant switches regime at
/// shift_time. Noise (noisy tier) reaches the Governor's measurements only.
RunResult run_closed_loop(const Scenario& sc, const specialists::SpecialistLibrary& lib, const RunContext& ctx);

/// Library of exact ODE specialists with the regimes of `lib`.
specialists::SpecialistLibrary ideal_library(const specialists::SpecialistLibrary& lib);

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
/// Percentile bootstrap of the mean.
Interval bootstrap_mean(const std::vector<double>& values, int resamples = 1000, double level = 0.95,
                        std::uint64_t seed = 0);
Interval bootstrap_median(const std::vector<double>& values, int resamples = 1000, double level = 0.95,
                          std::uint64_t seed = 0);

// ---- Phase I --------------------------------------------------------------

struct ModelClassBench {
  std::string name;
  double build_seconds = 0.0;
  std::size_t stage_nodes = 0;
  double jacobian_density = 0.0;
  std::vector<ocp::SolveTiming> solves;
  std::vector<int> iterations;
  std::vector<double> adaptation_latency;  // seconds, one sample per measurement
};

struct BenchReport {
  std::vector<ModelClassBench> classes;  // parametric, ensemble, jit
};

struct BenchConfig {
  int solves = 100;
  int adaptation_samples = 100;
};

/// Closed-loop, warm-started solve timings for the explicit parametric model,
/// the ensemble of `lib` and the JIT-rebuilt fixed model, plus adaptation
/// latencies after mu 1.0 -> 1.25: Governor step, parameter write, rebuild.
BenchReport run_phase1_benchmarks(const specialists::SpecialistLibrary& lib, const RunContext& ctx,
                                  const BenchConfig& cfg = {});

double median(std::vector<double> v);
double percentile(std::vector<double> v, double q);

void write_bench_csv(std::ostream& out, const BenchReport& r);

}  // namespace wbmpc::scenarios
