#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "wbmpc/config.hpp"
#include "wbmpc/experiment.hpp"
#include "wbmpc/run_config.hpp"

namespace fs = std::filesystem;
using namespace wbmpc;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kSolver = 3, kMissing = 4 };

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "Run file (INI)");
  cmd->add_option("-s,--set", c.overrides, "Override as section.key=value")->take_all();
  cmd->add_option("-o,--out", c.out, "Output directory (default: paths.output)");
}

run_config::RunConfig load(const Common& c) {
  run_config::RunConfig cfg = c.config_path.empty() ? run_config::RunConfig{} : run_config::load_run_config(c.config_path);
  for (const auto& o : c.overrides) run_config::apply_override(cfg, o);
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Common& c, const run_config::RunConfig& cfg) {
  const fs::path dir = c.out.empty() ? fs::path(cfg.paths.output) : fs::path(c.out);
  fs::create_directories(dir);
  std::ofstream snap(dir / "config.ini");
  if (!snap) throw std::runtime_error("cannot write " + (dir / "config.ini").string());
  run_config::write_run_config(snap, cfg);
  return dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

specialists::SpecialistLibrary select_ode(const run_config::RunConfig& cfg) {
  return specialists::select_library(specialists::candidate_grid(cfg.vehicle), cfg.selection.size,
                                     specialists::validation_states(cfg.selection.states, cfg.selection.seed),
                                     cfg.vehicle);
}

void write_selection(const fs::path& path, const specialists::SpecialistLibrary& lib) {
  auto f = open_out(path);
  f << "member,mu_scale,m,Cd\n";
  for (std::size_t i = 0; i < lib.size(); ++i) {
    const auto& p = specialists::regime_of(lib.members[i]);
    f << i << ',' << p.mu_scale << ',' << p.m << ',' << p.Cd << '\n';
  }
}

// Libraries for the requested tiers; the trained ones are loaded only when needed.
experiment::TierLibraries tier_libraries(const run_config::RunConfig& cfg, bool neural) {
  if (neural) return experiment::load_tier_libraries(cfg.paths.library);
  experiment::TierLibraries libs;
  libs.ode = select_ode(cfg);
  return libs;
}

bool is_neural(scenarios::Tier t) { return t == scenarios::Tier::PinnAdam || t == scenarios::Tier::PinnHybrid; }

int cmd_select(const Common& c) {
  const auto cfg = load(c);
  const auto dir = prepare_out(c, cfg);
  const auto lib = select_ode(cfg);
  write_selection(dir / "selection.csv", lib);
  specialists::save_library(lib, (fs::path(cfg.paths.library) / "ode").string());
  std::printf("selected %zu regimes; library written to %s\n", lib.size(),
              (fs::path(cfg.paths.library) / "ode").string().c_str());
  return kOk;
}

int cmd_train(const Common& c) {
  const auto cfg = load(c);
  const auto dir = prepare_out(c, cfg);
  const auto ode = select_ode(cfg);
  write_selection(dir / "selection.csv", ode);
  std::vector<vehicle::VehicleParams> regimes;
  for (const auto& m : ode.members) regimes.push_back(specialists::regime_of(m));
  const auto trained = experiment::train_libraries(regimes, cfg.training, [](std::size_t i, const auto& r) {
    std::printf("member %zu: adam %.3e hybrid %.3e (%.1f s)\n", i, r.adam_rmse, r.hybrid_rmse, r.seconds);
    std::fflush(stdout);
  });
  experiment::save_trained(trained, cfg.paths.library);
  auto f = open_out(dir / "training.csv");
  experiment::write_training_csv(f, trained);
  std::printf("trained %zu members in %.1f s; libraries under %s\n", regimes.size(), trained.seconds,
              cfg.paths.library.c_str());
  return kOk;
}

int cmd_run(const Common& c) {
  const auto cfg = load(c);
  const auto libs = tier_libraries(cfg, is_neural(cfg.scenario.tier));
  const auto& lib = libs.for_tier(cfg.scenario.tier);
  const auto ctx = run_config::make_context(cfg, lib);
  const auto dir = prepare_out(c, cfg);

  const auto result = scenarios::run_closed_loop(cfg.scenario, lib, ctx);
  {
    auto f = open_out(dir / "trace.csv");
    result.trace.write_csv(f);
    auto t = open_out(dir / "timing.csv");
    result.trace.write_timing_csv(t);
  }

  // Paired twin and degradation baseline, so mitigation is defined.
  std::vector<experiment::RunRecord> records{
      {cfg.scenario.tier, cfg.scenario.shift, cfg.scenario.adaptive, cfg.scenario.seed, result.metrics}};
  auto twin_of = [&](scenarios::Tier tier, bool adaptive) {
    scenarios::Scenario sc = cfg.scenario;
    sc.tier = tier;
    sc.adaptive = adaptive;
    return experiment::RunRecord{tier, sc.shift, adaptive, sc.seed,
                                 scenarios::run_closed_loop(sc, libs.for_tier(tier), ctx).metrics};
  };
  if (cfg.scenario.adaptive) records.push_back(twin_of(cfg.scenario.tier, false));
  if (cfg.scenario.tier != scenarios::Tier::IdealOde) records.push_back(twin_of(scenarios::Tier::IdealOde, false));
  const auto paired = experiment::pair_records(records);
  auto f = open_out(dir / "metrics.csv");
  experiment::write_runs_csv(f, {paired.front()});
  const auto& m = result.metrics;
  std::printf("pos RMSE pre %.4f post %.4f  vx %.4f/%.4f  vy %.4f/%.4f  unconverged %d\n", m.pos.pre, m.pos.post,
              m.vx.pre, m.vx.post, m.vy.pre, m.vy.post, m.unconverged_steps);
  if (paired.front().comparison && paired.front().comparison->pos.mitigation) {
    std::printf("pos mitigation %.1f%%\n", *paired.front().comparison->pos.mitigation);
  }
  return kOk;
}

int cmd_matrix(const Common& c) {
  const auto cfg = load(c);
  bool neural = false;
  for (auto t : cfg.matrix.tiers) neural = neural || is_neural(t);
  const auto libs = tier_libraries(cfg, neural);
  const auto ctx = run_config::make_context(cfg, libs.ode);
  const auto dir = prepare_out(c, cfg);
  experiment::MatrixConfig mc;
  mc.tiers = cfg.matrix.tiers;
  mc.shifts = cfg.matrix.shifts;
  for (std::uint64_t s = 0; s < cfg.matrix.seed_count; ++s) mc.seeds.push_back(s);
  mc.base = cfg.scenario;
  mc.threads = cfg.matrix.threads;
  const auto records = experiment::run_matrix(mc, libs, ctx, [](const experiment::RunRecord& r) {
    std::printf("%s %s %s seed %llu: pos post %.4f\n", std::string(scenarios::tier_name(r.tier)).c_str(),
                std::string(scenarios::shift_name(r.shift)).c_str(), r.adaptive ? "adaptive" : "baseline",
                static_cast<unsigned long long>(r.seed), r.metrics.pos.post);
    std::fflush(stdout);
  });
  const auto paired = experiment::pair_records(records);
  const auto cells = experiment::summarize(paired);
  auto runs = open_out(dir / "runs.csv");
  experiment::write_runs_csv(runs, paired);
  auto metrics = open_out(dir / "metrics.csv");
  experiment::write_metrics_csv(metrics, cells);
  auto summary = open_out(dir / "summary.md");
  experiment::write_summary(summary, nullptr, cells);
  std::printf("%zu runs, %zu cells written to %s\n", records.size(), cells.size(), dir.string().c_str());
  return kOk;
}

int cmd_bench(const Common& c, bool ideal) {
  const auto cfg = load(c);
  const auto libs = tier_libraries(cfg, !ideal);
  const auto& lib = ideal ? libs.ode : *libs.hybrid;
  const auto ctx = run_config::make_context(cfg, lib);
  const auto dir = prepare_out(c, cfg);
  const auto rep = scenarios::run_phase1_benchmarks(lib, ctx, cfg.bench);
  {
    auto f = open_out(dir / "bench.csv");
    scenarios::write_bench_csv(f, rep);
  }
  std::ifstream in(dir / "bench.csv");
  const auto table = experiment::read_bench_csv(in);
  auto summary = open_out(dir / "summary.md");
  experiment::write_summary(summary, &table, {});
  for (const auto& [name, row] : table) {
    std::printf("%-10s solve median %.3f ms  adaptation p95 %.4f ms\n", name.c_str(), row.at("solve_median_ms"),
                row.at("adapt_p95_ms"));
  }
  return kOk;
}

int cmd_report(const std::string& dir_arg) {
  const fs::path dir(dir_arg);
  std::optional<experiment::BenchTable> bench;
  std::vector<experiment::CellSummary> cells;
  bool found = false;
  if (std::ifstream in(dir / "bench.csv"); in) {
    bench = experiment::read_bench_csv(in);
    found = true;
  }
  if (std::ifstream in(dir / "runs.csv"); in) {
    const auto paired = experiment::pair_records(experiment::read_runs_csv(in));
    cells = experiment::summarize(paired);
    auto metrics = open_out(dir / "metrics.csv");
    experiment::write_metrics_csv(metrics, cells);
    found = true;
  }
  if (!found) throw config::MissingArtifact((dir / "runs.csv").string());
  auto summary = open_out(dir / "summary.md");
  experiment::write_summary(summary, bench ? &*bench : nullptr, cells);
  std::printf("wrote %s\n", (dir / "summary.md").string().c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"White-box adaptive NMPC: specialist training, closed-loop scenarios and benchmarks"};
  app.require_subcommand(1);
  Common c;
  bool ideal = false;
  std::string report_dir;

  auto* train = app.add_subcommand("train", "Select regimes and train adam_only and hybrid specialist libraries");
  auto* select = app.add_subcommand("select", "Greedy library selection over the regime grid");
  auto* run = app.add_subcommand("run", "One closed-loop scenario");
  auto* matrix = app.add_subcommand("matrix", "Tier x shift x seed grid with paired baselines");
  auto* bench = app.add_subcommand("bench", "Solver cost and adaptation latency benchmarks");
  auto* report = app.add_subcommand("report", "Aggregate runs.csv / bench.csv into metrics.csv and summary.md");
  for (auto* cmd : {train, select, run, matrix, bench}) add_common(cmd, c);
  bench->add_flag("--ideal", ideal, "Use exact-ODE specialists instead of a trained library");
  report->add_option("dir", report_dir, "Directory holding runs.csv and/or bench.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*train) return cmd_train(c);
    if (*select) return cmd_select(c);
    if (*run) return cmd_run(c);
    if (*matrix) return cmd_matrix(c);
    if (*bench) return cmd_bench(c, ideal);
    if (*report) return cmd_report(report_dir);
  } catch (const config::MissingArtifact& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kMissing;
  } catch (const config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const ocp::SolverFailure& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return kSolver;
  } catch (const scenarios::SimulationError& e) {
    std::fprintf(stderr, "simulation error: %s\n", e.what());
    return kSolver;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
