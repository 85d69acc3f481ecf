#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "pullsim/coupling.hpp"
#include "pullsim/equilibrium.hpp"
#include "pullsim/error.hpp"
#include "pullsim/experiment.hpp"
#include "pullsim/fluid.hpp"
#include "pullsim/sweep.hpp"

using namespace pullsim;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  unsigned jobs = 1;
};

void emit(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  f << text;
  if (!f.flush()) throw Error(ErrorCode::IoError, "write to " + path + " failed");
}

std::string render(const FlatTable& table, TableFormat format) {
  return format == TableFormat::Csv ? to_csv(table) : to_json(table);
}

std::string suffix(int a, int b) { return std::to_string(a) + "_" + std::to_string(b); }

// State file: {"x": [[x_{0,1}, ...], [x_{1,1}, ...], ...], "xi": [[xi_{1,1}, ...], ...]}
MeanFieldState read_state_file(const std::string& path, const SystemConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  const auto rows = [&](const char* key) {
    if (!doc.contains(key) || !doc.at(key).is_array()) {
      throw Error(ErrorCode::ParseError, path + ": field '" + key + "' must be an array of rows");
    }
    const auto& a = doc.at(key);
    Matrix<double> m(static_cast<Eigen::Index>(a.size()), cfg.pools());
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (!a[k].is_array() || a[k].size() != static_cast<std::size_t>(cfg.pools())) {
        throw Error(ErrorCode::DimensionMismatch, path + ": each row of '" + key + "' needs one entry per pool");
      }
      for (int j = 0; j < cfg.pools(); ++j) m(static_cast<Eigen::Index>(k), j) = a[k][j].get<double>();
    }
    return m;
  };
  MeanFieldState s{rows("x"), rows("xi")};
  if (s.routers() != cfg.routers()) throw Error(ErrorCode::DimensionMismatch, path + ": 'xi' needs one row per router");
  if (s.x.rows() < 1) throw Error(ErrorCode::DimensionMismatch, path + ": 'x' needs at least level 0");
  if (membership_defect(s, cfg.beta()) > 1e-9) throw Error(ErrorCode::BadFractions, path + ": state is not in S");
  return s;
}

// Every queue at its buffer: x_{k,j} = beta_j for 1 <= k <= B_j.
MeanFieldState max_state(const SystemConfig& cfg) {
  if (!cfg.all_finite_buffers()) {
    throw Error(ErrorCode::FullInitWithUnboundedBuffer, "the max state needs finite buffers");
  }
  BufferSize top = 0;
  for (int j = 0; j < cfg.pools(); ++j) top = std::max(top, cfg.buffer(j));
  auto s = MeanFieldState::zeros(top, cfg.pools(), cfg.routers());
  for (int j = 0; j < cfg.pools(); ++j) {
    for (BufferSize k = 0; k <= cfg.buffer(j); ++k) s.x(k, j) = cfg.beta(j);
  }
  return s;
}

int run_equilibrium(const std::string& config, const Globals& g) {
  const auto cfg = validate_config(load_parameters(config));
  const auto eq = solve_equilibrium(cfg);
  FlatTable t;
  t.columns = {"c", "iterations", "residual"};
  std::vector<Cell> row{eq.c, static_cast<double>(eq.iterations), cfg.lambda() > 0 ? Cell{equilibrium_residual(eq, cfg)} : Cell{}};
  for (int j = 0; j < cfg.pools(); ++j) {
    t.columns.push_back("nu_" + std::to_string(j + 1));
    row.emplace_back(eq.nu(j));
  }
  for (int r = 0; r < cfg.routers(); ++r) {
    for (int j = 0; j < cfg.pools(); ++j) {
      t.columns.push_back("xi_star_" + suffix(r + 1, j + 1));
      row.emplace_back(eq.s_star.xi(r, j));
    }
  }
  t.rows.push_back(std::move(row));
  emit(render(t, parse_format(g.format)), g.out);
  return 0;
}

int run_fluid(const std::string& config, const std::string& init, const std::string& state_file, double horizon,
              double h, std::int64_t every, const Globals& g) {
  const auto cfg = validate_config(load_parameters(config));
  MeanFieldState s0;
  if (init == "star") {
    s0 = solve_equilibrium(cfg).s_star;
  } else if (init == "max") {
    s0 = max_state(cfg);
  } else if (init == "file") {
    if (state_file.empty()) throw Error(ErrorCode::BadParameter, "--init file needs --state-file");
    s0 = read_state_file(state_file, cfg);
  } else {
    throw Error(ErrorCode::BadParameter, "unknown initial state '" + init + "' (star|max|file)");
  }
  FluidOptions opts;
  opts.store_every = every;
  const auto traj = integrate_fluid(s0, horizon, h, cfg, opts);

  Eigen::Index levels = 1;
  for (const auto& s : traj.states) levels = std::max(levels, s.max_level());
  FlatTable t;
  t.columns.push_back("t");
  for (Eigen::Index k = 1; k <= levels; ++k) {
    for (int j = 0; j < cfg.pools(); ++j) t.columns.push_back("x_" + suffix(static_cast<int>(k), j + 1));
  }
  for (int r = 0; r < cfg.routers(); ++r) {
    for (int j = 0; j < cfg.pools(); ++j) t.columns.push_back("xi_" + suffix(r + 1, j + 1));
  }
  for (std::size_t m = 0; m < traj.states.size(); ++m) {
    const auto& s = traj.states[m];
    std::vector<Cell> row{traj.times[m]};
    for (Eigen::Index k = 1; k <= levels; ++k) {
      for (int j = 0; j < cfg.pools(); ++j) row.emplace_back(s.level(k, j));
    }
    for (int r = 0; r < cfg.routers(); ++r) {
      for (int j = 0; j < cfg.pools(); ++j) row.emplace_back(s.xi(r, j));
    }
    t.rows.push_back(std::move(row));
  }
  emit(render(t, parse_format(g.format)), g.out);
  return 0;
}

int run_couple(const std::string& config, const std::string& policy_name, std::uint64_t events, double horizon,
               std::optional<std::int64_t> n, BufferSize high_buffer, const Globals& g) {
  auto params = load_parameters(config);
  if (n) params.n = *n;
  const auto cfg = validate_config(params);
  const auto policy = Policy::parse(policy_name);
  check_policy(policy, cfg);
  std::vector<BufferSize> high(static_cast<std::size_t>(cfg.pools()), high_buffer);
  for (int j = 0; j < cfg.pools(); ++j) high[j] = std::max(high[j], cfg.buffer(j));
  const auto seed = g.seed.value_or(1);
  const auto high_cfg = cfg.with_buffers(high);
  const auto [low, top] = ordered_pair_empty_full(cfg, high_cfg, seed);
  CouplingOptions opts;
  opts.high_buffers = high;
  opts.max_events = events;
  const auto report = coupled_simulate(cfg, policy, low, top, horizon, seed, opts);

  FlatTable t;
  t.columns = {"policy", "n", "seed", "events", "time", "violations", "first_violation", "held"};
  t.rows.push_back({policy.name(), static_cast<double>(cfg.servers()), static_cast<double>(seed),
                    static_cast<double>(report.events), report.time, static_cast<double>(report.violations),
                    report.first_violation ? Cell{static_cast<double>(*report.first_violation)} : Cell{},
                    std::string(report.held ? "true" : "false")});
  emit(render(t, parse_format(g.format)), g.out);
  return report.held ? 0 : 3;
}

int run_sweep_cmd(const std::string& spec_path, const Globals& g, bool format_given) {
  auto spec = load_spec(spec_path);
  if (g.seed) spec.seed = *g.seed;
  const auto format = format_given ? parse_format(g.format) : spec.output_format;
  const auto out = g.out.empty() ? spec.output_path : g.out;
  SweepOptions opts;
  opts.jobs = g.jobs;
  const auto table = run_sweep(spec, opts);
  if (out.empty() || out == "-") {
    std::cout << render(flatten(table), format);
  } else {
    export_table(table, format, out);
  }
  for (const auto& row : table.rows) {
    if (!row.error.empty()) {
      std::cerr << "cell " << row.policy << " n=" << row.n << " rep=" << row.replication << " failed: " << row.error
                << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pull-based load balancing: simulation, fluid limit and equilibrium"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output path (default stdout)");
  auto* format_opt = app.add_option("--format", g.format, "csv or json")->check(CLI::IsMember({"csv", "json"}, CLI::ignore_case));
  app.add_option("--jobs", g.jobs, "Worker threads for sweeps")->check(CLI::PositiveNumber);

  std::string spec_path;
  auto* sweep = app.add_subcommand("sweep", "Run an experiment spec over its (policy, n, replication) grid");
  sweep->add_option("--spec,spec", spec_path, "Experiment spec (JSON)")->required()->check(CLI::ExistingFile);

  std::string config;
  std::string init = "max";
  std::string state_file;
  double horizon = 50.0;
  double h = 1e-3;
  std::int64_t every = 100;
  auto* fluid = app.add_subcommand("fluid", "Integrate the fluid limit and write its trajectory");
  fluid->add_option("--config", config, "Model config (JSON)")->required()->check(CLI::ExistingFile);
  fluid->add_option("--init", init, "star | max | file")->capture_default_str();
  fluid->add_option("--state-file", state_file, "Initial state for --init file")->check(CLI::ExistingFile);
  fluid->add_option("--horizon", horizon, "Time horizon")->capture_default_str();
  fluid->add_option("--step", h, "RK4 step")->capture_default_str();
  fluid->add_option("--every", every, "Write every m-th step")->capture_default_str();

  auto* equilibrium = app.add_subcommand("equilibrium", "Print the equilibrium nu and s*");
  equilibrium->add_option("--config", config, "Model config (JSON)")->required()->check(CLI::ExistingFile);

  std::string policy = "PULL2";
  std::uint64_t events = 1000000;
  double couple_horizon = 1e12;
  std::optional<std::int64_t> n;
  BufferSize high_buffer = 1;
  auto* couple = app.add_subcommand("couple", "Coupled run of an ordered pair; reports dominance violations");
  couple->add_option("--config", config, "Model config (JSON)")->required()->check(CLI::ExistingFile);
  couple->add_option("--policy", policy, "PULL1 or PULL2")->capture_default_str();
  couple->add_option("--events", events, "Events to run")->capture_default_str();
  couple->add_option("--horizon", couple_horizon, "Time limit");
  couple->add_option("--n", n, "Override n");
  couple->add_option("--high-buffer", high_buffer, "Buffer of the larger system")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sweep->parsed()) return run_sweep_cmd(spec_path, g, format_opt->count() > 0);
    if (fluid->parsed()) return run_fluid(config, init, state_file, horizon, h, every, g);
    if (equilibrium->parsed()) return run_equilibrium(config, g);
    if (couple->parsed()) return run_couple(config, policy, events, couple_horizon, n, high_buffer, g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
