#include "wbmpc/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <tuple>

#include "wbmpc/config.hpp"

namespace wbmpc::experiment {
namespace {

using scenarios::Shift;
using scenarios::Tier;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Runs job(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& job) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ls(line);
  while (std::getline(ls, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw config::ConfigError("csv: not a number: '" + s + "'");
  }
}

auto cell_key(const RunRecord& r) { return std::tuple(r.tier, r.shift, r.adaptive); }

}  // namespace

TrainedLibraries train_libraries(const std::vector<vehicle::VehicleParams>& regimes, const LibraryTrainingConfig& cfg,
                                 const std::function<void(std::size_t, const MemberReport&)>& progress) {
  if (regimes.size() < 2) throw std::invalid_argument("train_libraries: need at least two regimes");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<training::TrainResult> results(regimes.size());
  std::vector<MemberReport> reports(regimes.size());
  std::mutex progress_mutex;
  parallel_for(regimes.size(), cfg.threads, [&](std::size_t i) {
    const auto m0 = std::chrono::steady_clock::now();
    const auto data = training::generate_dataset(regimes[i], cfg.n_uniform, cfg.n_chirps, cfg.seed + i, cfg.data);
    auto r = training::train_specialist_pair(data, cfg.train, cfg.seed + 1000 + i);
    MemberReport rep;
    rep.regime = regimes[i];
    rep.samples = data.size();
    rep.adam_epochs = r.adam_epochs;
    rep.best_epoch = r.best_epoch;
    rep.lbfgs_iterations = r.lbfgs_iterations;
    rep.lbfgs_line_search_failed = r.lbfgs_line_search_failed;
    rep.adam_rmse = r.adam_only.heldout_rmse;
    rep.hybrid_rmse = r.hybrid.heldout_rmse;
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - m0).count();
    results[i] = std::move(r);
    reports[i] = rep;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(i, rep);
    }
  });
  TrainedLibraries out;
  for (auto& r : results) {
    out.adam_only.members.emplace_back(std::move(r.adam_only));
    out.hybrid.members.emplace_back(std::move(r.hybrid));
  }
  out.members = std::move(reports);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void write_training_csv(std::ostream& out, const TrainedLibraries& t) {
  out << "member,mu_scale,m,Cd,samples,adam_epochs,best_epoch,lbfgs_iterations,lbfgs_line_search_failed,"
         "adam_rmse,hybrid_rmse,rmse_ratio,seconds\n";
  for (std::size_t i = 0; i < t.members.size(); ++i) {
    const auto& m = t.members[i];
    out << i << ',' << num(m.regime.mu_scale) << ',' << num(m.regime.m) << ',' << num(m.regime.Cd) << ','
        << m.samples << ',' << m.adam_epochs << ',' << m.best_epoch << ',' << m.lbfgs_iterations << ','
        << (m.lbfgs_line_search_failed ? 1 : 0) << ',' << num(m.adam_rmse) << ',' << num(m.hybrid_rmse) << ','
        << num(m.hybrid_rmse > 0 ? m.adam_rmse / m.hybrid_rmse : 0.0) << ',' << num(m.seconds) << '\n';
  }
}

void save_trained(const TrainedLibraries& t, const std::string& root) {
  namespace fs = std::filesystem;
  specialists::save_library(t.adam_only, (fs::path(root) / "adam_only").string());
  specialists::save_library(t.hybrid, (fs::path(root) / "hybrid").string());
  std::ofstream out(fs::path(root) / "training.csv");
  if (!out) throw std::runtime_error("cannot write training.csv in " + root);
  write_training_csv(out, t);
}

const specialists::SpecialistLibrary& TierLibraries::for_tier(Tier t) const {
  switch (t) {
    case Tier::IdealOde:
    case Tier::NoisyOde:
      return ode;
    case Tier::PinnAdam:
      if (!adam_only) throw config::MissingArtifact("adam_only/manifest.txt");
      return *adam_only;
    case Tier::PinnHybrid:
      if (!hybrid) throw config::MissingArtifact("hybrid/manifest.txt");
      return *hybrid;
  }
  throw std::logic_error("unknown tier");
}

TierLibraries load_tier_libraries(const std::string& root) {
  namespace fs = std::filesystem;
  TierLibraries libs;
  libs.adam_only = specialists::load_library((fs::path(root) / "adam_only" / "manifest.txt").string());
  libs.hybrid = specialists::load_library((fs::path(root) / "hybrid" / "manifest.txt").string());
  libs.ode = scenarios::ideal_library(*libs.hybrid);
  return libs;
}

std::vector<RunRecord> run_matrix(const MatrixConfig& cfg, const TierLibraries& libs, const scenarios::RunContext& ctx,
                                  const std::function<void(const RunRecord&)>& progress) {
  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (seeds.empty()) {
    for (std::uint64_t s = 0; s < 20; ++s) seeds.push_back(s);
  }
  std::vector<RunRecord> plan;
  const bool has_ideal = std::find(cfg.tiers.begin(), cfg.tiers.end(), Tier::IdealOde) != cfg.tiers.end();
  for (Tier t : cfg.tiers) {
    for (Shift s : cfg.shifts) {
      for (bool adaptive : {false, true}) {
        for (auto seed : seeds) plan.push_back({t, s, adaptive, seed, {}});
      }
    }
  }
  if (!has_ideal) {
    for (Shift s : cfg.shifts) {
      for (auto seed : seeds) plan.push_back({Tier::IdealOde, s, false, seed, {}});
    }
  }
  for (const auto& r : plan) libs.for_tier(r.tier);

  std::mutex progress_mutex;
  parallel_for(plan.size(), cfg.threads, [&](std::size_t i) {
    auto& r = plan[i];
    scenarios::Scenario sc = cfg.base;
    sc.tier = r.tier;
    sc.shift = r.shift;
    sc.adaptive = r.adaptive;
    sc.seed = r.seed;
    r.metrics = scenarios::run_closed_loop(sc, libs.for_tier(r.tier), ctx).metrics;
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(r);
    }
  });
  return plan;
}

std::vector<PairedRecord> pair_records(const std::vector<RunRecord>& records) {
  auto find = [&](Tier t, Shift s, bool adaptive, std::uint64_t seed) -> const RunRecord* {
    for (const auto& r : records) {
      if (r.tier == t && r.shift == s && r.adaptive == adaptive && r.seed == seed) return &r;
    }
    return nullptr;
  };
  std::vector<PairedRecord> out;
  for (const auto& r : records) {
    PairedRecord p{r, std::nullopt};
    if (const auto* pre = find(Tier::IdealOde, r.shift, false, r.seed)) {
      const RunRecord* base = r.adaptive ? find(r.tier, r.shift, false, r.seed) : nullptr;
      p.comparison = scenarios::compare(r.metrics, base ? &base->metrics : nullptr, pre->metrics);
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_runs_csv(std::ostream& out, const std::vector<PairedRecord>& rows) {
  out << "tier,shift,adaptive,seed,vx_pre,vx_post,vy_pre,vy_post,pos_pre,pos_post,unconverged_steps,"
         "max_weight_step,deg_vx,deg_vy,deg_pos,mit_vx,mit_vy,mit_pos\n";
  for (const auto& p : rows) {
    const auto& r = p.run;
    const auto& m = r.metrics;
    out << scenarios::tier_name(r.tier) << ',' << scenarios::shift_name(r.shift) << ',' << (r.adaptive ? 1 : 0)
        << ',' << r.seed;
    for (double v : {m.vx.pre, m.vx.post, m.vy.pre, m.vy.post, m.pos.pre, m.pos.post}) out << ',' << num(v);
    out << ',' << m.unconverged_steps << ',' << num(m.max_weight_step);
    for (auto part : {&scenarios::MetricComparison::vx, &scenarios::MetricComparison::vy,
                      &scenarios::MetricComparison::pos}) {
      out << ',';
      if (p.comparison) out << num(((*p.comparison).*part).degradation_adapt);
    }
    for (auto part : {&scenarios::MetricComparison::vx, &scenarios::MetricComparison::vy,
                      &scenarios::MetricComparison::pos}) {
      out << ',';
      if (p.comparison && ((*p.comparison).*part).mitigation) out << num(*((*p.comparison).*part).mitigation);
    }
    out << '\n';
  }
}

std::vector<RunRecord> read_runs_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("tier,shift,adaptive,seed,", 0) != 0) {
    throw config::ConfigError("runs csv: unexpected header");
  }
  std::vector<RunRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() < 12) throw config::ConfigError("runs csv: short row: " + line);
    RunRecord r;
    try {
      r.tier = scenarios::tier_from_name(c[0]);
      r.shift = scenarios::shift_from_name(c[1]);
    } catch (const std::invalid_argument& e) {
      throw config::ConfigError(std::string("runs csv: ") + e.what());
    }
    r.adaptive = c[2] == "1";
    r.seed = static_cast<std::uint64_t>(parse_double(c[3]));
    auto& m = r.metrics;
    m.vx = {parse_double(c[4]), parse_double(c[5])};
    m.vy = {parse_double(c[6]), parse_double(c[7])};
    m.pos = {parse_double(c[8]), parse_double(c[9])};
    m.unconverged_steps = static_cast<int>(parse_double(c[10]));
    m.max_weight_step = parse_double(c[11]);
    out.push_back(r);
  }
  return out;
}

std::vector<CellSummary> summarize(const std::vector<PairedRecord>& rows) {
  std::vector<CellSummary> cells;
  std::vector<std::vector<const PairedRecord*>> members;
  for (const auto& p : rows) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const CellSummary& c) {
      return std::tuple(c.tier, c.shift, c.adaptive) == cell_key(p.run);
    });
    if (it == cells.end()) {
      CellSummary c;
      c.tier = p.run.tier;
      c.shift = p.run.shift;
      c.adaptive = p.run.adaptive;
      cells.push_back(c);
      members.emplace_back();
      it = cells.end() - 1;
    }
    members[static_cast<std::size_t>(it - cells.begin())].push_back(&p);
  }
  for (std::size_t k = 0; k < cells.size(); ++k) {
    auto& c = cells[k];
    const auto& ms = members[k];
    c.seeds = ms.size();
    std::vector<double> vx, vy, pos, dvx, dvy, dpos, mvx, mvy, mpos;
    int positive = 0;
    for (const auto* p : ms) {
      const auto& m = p->run.metrics;
      vx.push_back(m.vx.post);
      vy.push_back(m.vy.post);
      pos.push_back(m.pos.post);
      c.max_weight_step = std::max(c.max_weight_step, m.max_weight_step);
      c.unconverged_steps += m.unconverged_steps;
      if (!p->comparison) continue;
      const auto& cmp = *p->comparison;
      dvx.push_back(cmp.vx.degradation_adapt);
      dvy.push_back(cmp.vy.degradation_adapt);
      dpos.push_back(cmp.pos.degradation_adapt);
      if (cmp.pos.mitigation) {
        mvx.push_back(*cmp.vx.mitigation);
        mvy.push_back(*cmp.vy.mitigation);
        mpos.push_back(*cmp.pos.mitigation);
        if (*cmp.pos.mitigation > 0) ++positive;
      }
    }
    c.vx_post = scenarios::bootstrap_mean(vx);
    c.vy_post = scenarios::bootstrap_mean(vy);
    c.pos_post = scenarios::bootstrap_mean(pos);
    if (!dpos.empty()) {
      c.deg_vx = scenarios::bootstrap_mean(dvx);
      c.deg_vy = scenarios::bootstrap_mean(dvy);
      c.deg_pos = scenarios::bootstrap_mean(dpos);
    }
    if (!mpos.empty()) {
      c.mit_vx = scenarios::bootstrap_mean(mvx);
      c.mit_vy = scenarios::bootstrap_mean(mvy);
      c.mit_pos = scenarios::bootstrap_mean(mpos);
      c.positive_mitigation_fraction = static_cast<double>(positive) / static_cast<double>(mpos.size());
    }
  }
  return cells;
}

void write_metrics_csv(std::ostream& out, const std::vector<CellSummary>& cells) {
  out << "tier,shift,adaptive,seeds";
  for (const char* name : {"vx_post", "vy_post", "pos_post", "deg_vx", "deg_vy", "deg_pos", "mit_vx", "mit_vy",
                           "mit_pos"}) {
    out << ',' << name << ',' << name << "_lo," << name << "_hi";
  }
  out << ",positive_mitigation_fraction,max_weight_step,unconverged_steps\n";
  auto put = [&](const std::optional<scenarios::Interval>& v) {
    if (v) {
      out << ',' << num(v->mean) << ',' << num(v->lo) << ',' << num(v->hi);
    } else {
      out << ",,,";
    }
  };
  for (const auto& c : cells) {
    out << scenarios::tier_name(c.tier) << ',' << scenarios::shift_name(c.shift) << ',' << (c.adaptive ? 1 : 0)
        << ',' << c.seeds;
    put(c.vx_post);
    put(c.vy_post);
    put(c.pos_post);
    put(c.deg_vx);
    put(c.deg_vy);
    put(c.deg_pos);
    put(c.mit_vx);
    put(c.mit_vy);
    put(c.mit_pos);
    out << ',';
    if (c.mit_pos) out << num(c.positive_mitigation_fraction);
    out << ',' << num(c.max_weight_step) << ',' << c.unconverged_steps << '\n';
  }
}

BenchTable read_bench_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw config::ConfigError("bench csv: empty");
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "model_class") throw config::ConfigError("bench csv: unexpected header");
  BenchTable out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != header.size()) throw config::ConfigError("bench csv: ragged row: " + line);
    auto& row = out[c[0]];
    for (std::size_t i = 1; i < c.size(); ++i) row[header[i]] = parse_double(c[i]);
  }
  return out;
}

void write_summary(std::ostream& out, const BenchTable* bench, const std::vector<CellSummary>& cells) {
  out << "# Results\n";
  if (bench) {
    out << "\n## Steady-state solver cost and adaptation latency\n\n"
           "| Model class | Build (ms) | Stage nodes | Solve median (ms) | Solve p95 (ms) | Slowdown | "
           "Derivative share | Linear-solve share | Jacobian density | Adaptation median (ms) | "
           "Adaptation p95 (ms) |\n"
           "|---|---|---|---|---|---|---|---|---|---|---|\n";
    double ref = 0.0;
    if (auto it = bench->find("parametric"); it != bench->end()) ref = it->second.at("solve_median_ms");
    for (const char* name : {"parametric", "ensemble", "jit"}) {
      auto it = bench->find(name);
      if (it == bench->end()) continue;
      const auto& r = it->second;
      out << "| " << name << " | " << fixed(r.at("build_ms"), 2) << " | " << fixed(r.at("stage_nodes"), 0) << " | "
          << fixed(r.at("solve_median_ms"), 3) << " | " << fixed(r.at("solve_p95_ms"), 3) << " | "
          << (ref > 0 ? fixed(r.at("solve_median_ms") / ref, 1) + "x" : std::string("-")) << " | "
          << fixed(100.0 * r.at("derivative_share"), 1) << "% | " << fixed(100.0 * r.at("linear_share"), 1)
          << "% | " << fixed(100.0 * r.at("jacobian_density"), 2) << "% | " << fixed(r.at("adapt_median_ms"), 4)
          << " | " << fixed(r.at("adapt_p95_ms"), 4) << " |\n";
    }
    out << "\nAdaptation latency is the Governor step for the ensemble, a parameter write for the parametric "
           "model and a full rebuild for the jit class.\n";
  }
  if (!cells.empty()) {
    auto ci = [](const scenarios::Interval& v, int digits) {
      return fixed(v.mean, digits) + " [" + fixed(v.lo, digits) + ", " + fixed(v.hi, digits) + "]";
    };
    auto opt = [&](const std::optional<scenarios::Interval>& v, int digits) {
      return v ? ci(*v, digits) : std::string("-");
    };
    out << "\n## Post-shift tracking error\n\n"
           "Means over seeds with 95% bootstrap intervals. Degradation is relative to the ideal-tier "
           "non-adaptive pre-shift error of the same seed; mitigation compares each adaptive run with its "
           "non-adaptive twin.\n\n"
           "| Tier | Shift | Mode | Seeds | vx RMSE | vy RMSE | pos RMSE (m) | pos degradation (%) | "
           "vx mitigation (%) | vy mitigation (%) | pos mitigation (%) |\n"
           "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& c : cells) {
      out << "| " << scenarios::tier_name(c.tier) << " | " << scenarios::shift_name(c.shift) << " | "
          << (c.adaptive ? "adaptive" : "baseline") << " | " << c.seeds << " | " << ci(c.vx_post, 4) << " | "
          << ci(c.vy_post, 4) << " | " << ci(c.pos_post, 4) << " | " << opt(c.deg_pos, 1) << " | "
          << opt(c.mit_vx, 1) << " | " << opt(c.mit_vy, 1) << " | " << opt(c.mit_pos, 1) << " |\n";
    }
  }
}

}  // namespace wbmpc::experiment
