#include "wbmpc/run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "wbmpc/config.hpp"

namespace wbmpc::run_config {
namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string num(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw config::ConfigError("'" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

template <class E, class Parse, class Name>
Field enum_list(std::string section, std::string key, std::vector<E>& target, Parse parse, Name name) {
  return {section, key,
          [&target, key, parse](const std::string& v) {
            std::vector<E> out;
            for (const auto& item : split_list(v)) {
              try {
                out.push_back(parse(item));
              } catch (const std::invalid_argument& e) {
                throw config::ConfigError("'" + key + "': " + e.what());
              }
            }
            if (out.empty()) throw config::ConfigError("'" + key + "': empty list");
            target = std::move(out);
          },
          [&target, name] {
            std::string s;
            for (const auto& e : target) s += (s.empty() ? "" : ",") + std::string(name(e));
            return s;
          }};
}

Field real(std::string section, std::string key, double& target) {
  return {section, key, [&target, key](const std::string& v) { target = config::to_double(key, v); },
          [&target] { return num(target); }};
}

Field integer(std::string section, std::string key, int& target) {
  return {section, key, [&target, key](const std::string& v) { target = config::to_int(key, v); },
          [&target] { return std::to_string(target); }};
}

template <class U>
Field count(std::string section, std::string key, U& target) {
  return {section, key, [&target, key](const std::string& v) { target = static_cast<U>(to_u64(key, v)); },
          [&target] { return std::to_string(target); }};
}

Field flag(std::string section, std::string key, bool& target) {
  return {section, key, [&target, key](const std::string& v) { target = config::to_bool(key, v); },
          [&target] { return std::string(target ? "true" : "false"); }};
}

Field text(std::string section, std::string key, std::string& target) {
  return {section, key, [&target](const std::string& v) { target = v; }, [&target] { return target; }};
}

std::vector<Field> fields(RunConfig& c) {
  std::vector<Field> f;
  vehicle::VehicleParams::for_each_field(
      [&](const char* name, auto member) { f.push_back(real("vehicle", name, c.vehicle.*member)); });

  f.push_back(integer("ocp", "H", c.ocp.H));
  f.push_back(real("ocp", "Ts", c.ocp.Ts));
  f.push_back(real("ocp", "Q_p", c.ocp.Q_p));
  f.push_back(real("ocp", "P", c.ocp.P));
  f.push_back(real("ocp", "R_delta", c.ocp.R_delta));
  f.push_back(real("ocp", "R_D", c.ocp.R_D));
  f.push_back(real("ocp", "delta_min", c.ocp.u_min.delta));
  f.push_back(real("ocp", "delta_max", c.ocp.u_max.delta));
  f.push_back(real("ocp", "D_min", c.ocp.u_min.D));
  f.push_back(real("ocp", "D_max", c.ocp.u_max.D));
  f.push_back(real("ocp", "ddelta_max", c.ocp.ddelta_max));
  f.push_back(real("ocp", "v_ref", c.ocp.v_ref));
  f.push_back(integer("ocp", "max_iterations", c.ocp.max_iterations));
  f.push_back(real("ocp", "step_tolerance", c.ocp.step_tolerance));
  f.push_back(real("ocp", "kkt_tolerance", c.ocp.kkt_tolerance));
  f.push_back(real("ocp", "initial_damping", c.ocp.initial_damping));
  f.push_back(integer("ocp", "max_halvings", c.ocp.max_halvings));
  f.push_back(integer("ocp", "substeps", c.substeps));

  f.push_back(count("governor", "window", c.governor.window));
  f.push_back(real("governor", "alpha", c.governor.alpha));
  f.push_back({"governor", "residual",
               [&c](const std::string& v) {
                 if (v == "euler") {
                   c.governor.residual = governor::Residual::Euler;
                 } else if (v == "trapezoid") {
                   c.governor.residual = governor::Residual::Trapezoid;
                 } else {
                   throw config::ConfigError("'residual': expected euler or trapezoid, got '" + v + "'");
                 }
               },
               [&c] {
                 return std::string(c.governor.residual == governor::Residual::Euler ? "euler" : "trapezoid");
               }});

  f.push_back({"scenario", "tier",
               [&c](const std::string& v) {
                 try {
                   c.scenario.tier = scenarios::tier_from_name(v);
                 } catch (const std::invalid_argument& e) {
                   throw config::ConfigError(std::string("'tier': ") + e.what());
                 }
               },
               [&c] { return std::string(scenarios::tier_name(c.scenario.tier)); }});
  f.push_back({"scenario", "shift",
               [&c](const std::string& v) {
                 try {
                   c.scenario.shift = scenarios::shift_from_name(v);
                 } catch (const std::invalid_argument& e) {
                   throw config::ConfigError(std::string("'shift': ") + e.what());
                 }
               },
               [&c] { return std::string(scenarios::shift_name(c.scenario.shift)); }});
  f.push_back(real("scenario", "shift_time", c.scenario.shift_time));
  f.push_back(real("scenario", "duration", c.scenario.duration));
  f.push_back(real("scenario", "warmup", c.scenario.warmup));
  f.push_back(flag("scenario", "adaptive", c.scenario.adaptive));
  f.push_back(count("scenario", "seed", c.scenario.seed));
  f.push_back(real("scenario", "noise_sigma", c.scenario.noise_sigma));

  f.push_back(real("track", "straight", c.track.straight));
  f.push_back(real("track", "radius", c.track.radius));
  f.push_back(real("track", "chicane_radius", c.track.chicane_radius));
  f.push_back(real("track", "chicane_angle", c.track.chicane_angle));

  f.push_back(count("selection", "size", c.selection.size));
  f.push_back(count("selection", "states", c.selection.states));
  f.push_back(count("selection", "seed", c.selection.seed));

  f.push_back(count("training", "uniform_samples", c.training.n_uniform));
  f.push_back(count("training", "chirp_trajectories", c.training.n_chirps));
  f.push_back(count("training", "seed", c.training.seed));
  f.push_back(count("training", "threads", c.training.threads));
  f.push_back(real("training", "lambda", c.training.train.lambda));
  f.push_back(real("training", "lr", c.training.train.lr));
  f.push_back(integer("training", "batch", c.training.train.batch));
  f.push_back(integer("training", "max_epochs", c.training.train.max_epochs));
  f.push_back(integer("training", "patience", c.training.train.patience));
  f.push_back(integer("training", "lbfgs_iterations", c.training.train.lbfgs_iterations));
  f.push_back(integer("training", "lbfgs_memory", c.training.train.lbfgs_memory));
  f.push_back({"training", "hidden",
               [&c](const std::string& v) {
                 std::vector<int> dims;
                 for (const auto& item : split_list(v)) dims.push_back(config::to_int("hidden", item));
                 if (dims.empty()) throw config::ConfigError("'hidden': empty list");
                 c.training.train.hidden = dims;
               },
               [&c] {
                 std::string s;
                 for (int d : c.training.train.hidden) s += (s.empty() ? "" : ",") + std::to_string(d);
                 return s;
               }});

  f.push_back(count("matrix", "seeds", c.matrix.seed_count));
  f.push_back(count("matrix", "threads", c.matrix.threads));
  f.push_back(enum_list("matrix", "tiers", c.matrix.tiers, scenarios::tier_from_name, scenarios::tier_name));
  f.push_back(enum_list("matrix", "shifts", c.matrix.shifts, scenarios::shift_from_name, scenarios::shift_name));

  f.push_back(integer("bench", "solves", c.bench.solves));
  f.push_back(integer("bench", "adaptation_samples", c.bench.adaptation_samples));

  f.push_back(text("paths", "library", c.paths.library));
  f.push_back(text("paths", "output", c.paths.output));
  return f;
}

void assign(std::vector<Field>& fs, const std::string& section, const std::string& key, const std::string& value) {
  for (auto& f : fs) {
    if (f.section == section && f.key == key) {
      f.set(value);
      return;
    }
  }
  throw config::ConfigError("unknown setting '" + section + "." + key + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    vehicle::validate(vehicle);
    ocp.validate();
    scenario.validate();
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(e.what());
  }
  if (governor.window < 2) throw config::ConfigError("governor.window must be at least 2");
  if (!(governor.alpha > 0.0 && governor.alpha <= 1.0)) throw config::ConfigError("governor.alpha must be in (0, 1]");
  if (substeps < 1) throw config::ConfigError("ocp.substeps must be positive");
  if (selection.size < 2) throw config::ConfigError("selection.size must be at least 2");
  if (selection.states < 1) throw config::ConfigError("selection.states must be positive");
  if (training.n_uniform < 1 || training.n_chirps < 1) throw config::ConfigError("training sample counts must be positive");
  if (matrix.seed_count < 1) throw config::ConfigError("matrix.seeds must be positive");
  if (bench.solves < 1 || bench.adaptation_samples < 1) throw config::ConfigError("bench counts must be positive");
  try {
    (void)scenarios::Track::stadium(track.straight, track.radius, track.chicane_radius, track.chicane_angle);
  } catch (const std::invalid_argument& e) {
    throw config::ConfigError(std::string("track: ") + e.what());
  }
}

RunConfig parse_run_config(std::istream& in) {
  RunConfig cfg;
  auto fs = fields(cfg);
  for (const auto& [section, kv] : config::parse_sections(in)) {
    if (section.empty()) throw config::ConfigError("settings must sit inside a [section]");
    for (const auto& [k, v] : kv) assign(fs, section, k, v);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config::MissingArtifact(path);
  return parse_run_config(in);
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw config::ConfigError("override '" + assignment + "' is not section.key=value");
  }
  auto fs = fields(cfg);
  assign(fs, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
}

void write_run_config(std::ostream& out, const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string section;
  std::string s;
  for (const auto& f : fields(copy)) {
    if (f.section != section) {
      s += (section.empty() ? "[" : "\n[") + f.section + "]\n";
      section = f.section;
    }
    s += f.key + " = " + f.get() + '\n';
  }
  out << s;
}

scenarios::RunContext make_context(const RunConfig& cfg, const specialists::SpecialistLibrary& lib) {
  scenarios::RunContext ctx;
  ctx.track = scenarios::Track::stadium(cfg.track.straight, cfg.track.radius, cfg.track.chicane_radius,
                                        cfg.track.chicane_angle);
  ctx.nominal = cfg.vehicle;
  ctx.ocp = cfg.ocp;
  ctx.governor = cfg.governor;
  ctx.substeps = cfg.substeps;
  ctx.w0 = specialists::nominal_weights(lib, cfg.vehicle,
                                        specialists::validation_states(cfg.selection.states, cfg.selection.seed));
  return ctx;
}

}  // namespace wbmpc::run_config
