#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wbmpc/scenarios.hpp"
#include "wbmpc/specialists.hpp"
#include "wbmpc/training.hpp"

namespace wbmpc::experiment {

struct LibraryTrainingConfig {
  std::size_t n_uniform = 3000;
  std::size_t n_chirps = 16;
  training::DatasetConfig data;
  training::TrainConfig train;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct MemberReport {
  vehicle::VehicleParams regime{};
  std::size_t samples = 0;
  int adam_epochs = 0;
  int best_epoch = 0;
  int lbfgs_iterations = 0;
  bool lbfgs_line_search_failed = false;
  double adam_rmse = 0.0;
  double hybrid_rmse = 0.0;
  double seconds = 0.0;
};

struct TrainedLibraries {
  specialists::SpecialistLibrary adam_only;
  specialists::SpecialistLibrary hybrid;
  std::vector<MemberReport> members;
  double seconds = 0.0;  // wall clock for the whole library
};

/// One adam_only/hybrid pair per regime. Member i uses dataset seed
/// `seed + i` and init seed `seed + 1000 + i`, so results do not depend on
/// the thread count.
TrainedLibraries train_libraries(const std::vector<vehicle::VehicleParams>& regimes,
                                 const LibraryTrainingConfig& cfg,
                                 const std::function<void(std::size_t, const MemberReport&)>& progress = {});

void write_training_csv(std::ostream& out, const TrainedLibraries& t);

/// Library directories of a trained run: `<root>/adam_only` and `<root>/hybrid`.
void save_trained(const TrainedLibraries& t, const std::string& root);

/// Specialists per tier. Ideal and noisy tiers use exact dynamics of the
/// selected regimes; neural tiers need the matching trained library.
struct TierLibraries {
  specialists::SpecialistLibrary ode;
  std::optional<specialists::SpecialistLibrary> adam_only;
  std::optional<specialists::SpecialistLibrary> hybrid;

  /// Throws config::MissingArtifact when a neural tier has no library.
  const specialists::SpecialistLibrary& for_tier(scenarios::Tier t) const;
};

/// Loads `<root>/adam_only/manifest.txt` and `<root>/hybrid/manifest.txt`;
/// the ODE library takes the regimes of the hybrid members.
TierLibraries load_tier_libraries(const std::string& root);

struct RunRecord {
  scenarios::Tier tier = scenarios::Tier::IdealOde;
  scenarios::Shift shift = scenarios::Shift::FrictionOnly;
  bool adaptive = false;
  std::uint64_t seed = 0;
  scenarios::RunMetrics metrics;
};

struct MatrixConfig {
  std::vector<scenarios::Tier> tiers{scenarios::Tier::IdealOde, scenarios::Tier::NoisyOde,
                                     scenarios::Tier::PinnAdam, scenarios::Tier::PinnHybrid};
  std::vector<scenarios::Shift> shifts{scenarios::Shift::None, scenarios::Shift::FrictionOnly,
                                       scenarios::Shift::AllParams};
  std::vector<std::uint64_t> seeds;  // empty means 0..19
  scenarios::Scenario base;          // tier, shift, adaptive and seed are overwritten
  unsigned threads = 1;
};

/// Every (tier, shift, adaptive, seed) cell, plus the ideal-tier
/// non-adaptive runs the degradation baseline needs when the ideal tier is
/// not requested. Records come back in a fixed order.
std::vector<RunRecord> run_matrix(const MatrixConfig& cfg, const TierLibraries& libs,
                                  const scenarios::RunContext& ctx,
                                  const std::function<void(const RunRecord&)>& progress = {});

/// Pre-shift baseline for degradation: the ideal-tier non-adaptive run with
/// the same shift and seed. Mitigation pairs an adaptive record with the
/// non-adaptive record of the same tier, shift and seed.
struct PairedRecord {
  RunRecord run;
  std::optional<scenarios::MetricComparison> comparison;  // absent without a pre-shift baseline
};
std::vector<PairedRecord> pair_records(const std::vector<RunRecord>& records);

void write_runs_csv(std::ostream& out, const std::vector<PairedRecord>& rows);
/// Inverse of write_runs_csv for the run fields; comparisons are recomputed
/// by pair_records.
std::vector<RunRecord> read_runs_csv(std::istream& in);

/// Mean and bootstrap interval across seeds of one (tier, shift, adaptive) cell.
struct CellSummary {
  scenarios::Tier tier = scenarios::Tier::IdealOde;
  scenarios::Shift shift = scenarios::Shift::FrictionOnly;
  bool adaptive = false;
  std::size_t seeds = 0;
  scenarios::Interval vx_post, vy_post, pos_post;
  std::optional<scenarios::Interval> deg_vx, deg_vy, deg_pos;
  std::optional<scenarios::Interval> mit_vx, mit_vy, mit_pos;
  double positive_mitigation_fraction = 0.0;  // position, over seeds with a mitigation
  double max_weight_step = 0.0;               // worst over seeds
  int unconverged_steps = 0;                  // total over seeds
};

std::vector<CellSummary> summarize(const std::vector<PairedRecord>& rows);
void write_metrics_csv(std::ostream& out, const std::vector<CellSummary>& cells);

/// `bench.csv` rows keyed by model class, then column name.
using BenchTable = std::map<std::string, std::map<std::string, double>>;
BenchTable read_bench_csv(std::istream& in);

/// Markdown with a solver/latency panel (when `bench` is given) and a
/// post-shift RMSE panel (when `cells` is non-empty).
void write_summary(std::ostream& out, const BenchTable* bench, const std::vector<CellSummary>& cells);

}  // namespace wbmpc::experiment
