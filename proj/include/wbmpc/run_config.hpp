#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wbmpc/experiment.hpp"
#include "wbmpc/scenarios.hpp"

namespace wbmpc::run_config {

struct TrackConfig {
  double straight = 2.0;
  double radius = 1.0;
  double chicane_radius = 1.0;
  double chicane_angle = 0.4;
};

struct SelectionConfig {
  std::size_t size = 8;
  std::size_t states = 400;
  std::uint64_t seed = 1;
};

struct MatrixRunConfig {
  std::uint64_t seed_count = 20;  // seeds 0 .. seed_count-1
  unsigned threads = 1;
  std::vector<scenarios::Tier> tiers{scenarios::Tier::IdealOde, scenarios::Tier::NoisyOde,
                                     scenarios::Tier::PinnAdam, scenarios::Tier::PinnHybrid};
  std::vector<scenarios::Shift> shifts{scenarios::Shift::None, scenarios::Shift::FrictionOnly,
                                       scenarios::Shift::AllParams};
};

struct Paths {
  std::string library = "library";  // root holding adam_only/ and hybrid/
  std::string output = "runs";
};

/// Everything a CLI invocation reads from the run file.
struct RunConfig {
  vehicle::VehicleParams vehicle = vehicle::nominal_params();
  ocp::OcpConfig ocp;
  scenarios::GovernorConfig governor;
  scenarios::Scenario scenario;
  TrackConfig track;
  SelectionConfig selection;
  experiment::LibraryTrainingConfig training;
  MatrixRunConfig matrix;
  scenarios::BenchConfig bench;
  int substeps = 10;
  Paths paths;

  /// Throws config::ConfigError on any invalid combination.
  void validate() const;
};

/// INI text with sections vehicle, ocp, governor, scenario, track,
/// selection, training, matrix, bench and paths. Unknown sections or keys are
/// errors; absent keys keep their defaults.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

/// `section.key=value`, as given on the command line.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Complete snapshot that parse_run_config reads back to the same values.
void write_run_config(std::ostream& out, const RunConfig& cfg);

/// Track, nominal parameters, OCP and Governor settings for the closed loop.
/// The baseline weights are fitted to the library's regimes.
scenarios::RunContext make_context(const RunConfig& cfg, const specialists::SpecialistLibrary& lib);

}  // namespace wbmpc::run_config
