#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <thread>

#include "pullsim/coupling.hpp"
#include "pullsim/equilibrium.hpp"
#include "pullsim/estimate.hpp"
#include "pullsim/fluid.hpp"
#include "pullsim/sweep.hpp"

using namespace pullsim;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, what.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

// Guards a criterion so one exception does not hide the others.
void run(int id, const std::string& what, const std::function<std::pair<bool, std::string>()>& body) {
  const auto start = std::chrono::steady_clock::now();
  std::pair<bool, std::string> result;
  try {
    result = body();
  } catch (const std::exception& e) {
    result = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "; %.1fs", secs);
  report(id, result.first, what, result.second + buf);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

SystemConfig two_pool(std::int64_t n, BufferSize buffer) {
  SystemParameters p;
  p.routers = 3;
  p.beta = {0.5, 0.5};
  p.mu = {1.0, 2.0};
  p.buffer = {buffer, buffer};
  p.lambda = 1.0;
  p.n = n;
  return validate_config(p);
}

MeanFieldState unit_max_state(const SystemConfig& cfg) {
  auto s = MeanFieldState::zeros(1, cfg.pools(), cfg.routers());
  for (int j = 0; j < cfg.pools(); ++j) s.x(0, j) = s.x(1, j) = cfg.beta(j);
  return s;
}

// Replication average of one metric, per n in sweep order.
std::map<std::int64_t, double> average_by_n(const ResultTable& t, const std::function<double(const ResultRow&)>& f) {
  std::map<std::int64_t, double> sum;
  std::map<std::int64_t, int> count;
  for (const auto& row : t.rows) {
    if (!row.error.empty()) throw std::runtime_error("cell n=" + std::to_string(row.n) + " failed: " + row.error);
    sum[row.n] += f(row);
    ++count[row.n];
  }
  for (auto& [n, v] : sum) v /= count[n];
  return sum;
}

bool strictly_decreasing(const std::map<std::int64_t, double>& m, std::string& detail) {
  bool ok = true;
  double prev = INFINITY;
  for (const auto& [n, v] : m) {
    detail += "n=" + std::to_string(n) + ":" + fmt("%.4g", v) + " ";
    ok = ok && v < prev;
    prev = v;
  }
  return ok;
}

}  // namespace

int main() {
  const std::string config_dir = PULLSIM_CONFIG_DIR;
  SweepOptions sweep_opts;
  sweep_opts.jobs = std::max(1u, std::thread::hardware_concurrency());

  run(1, "equilibrium of the two-pool system", [] {
    const auto eq = solve_equilibrium(two_pool(10, kUnboundedBuffer));
    const double dc = std::abs(eq.c - (1.0 + std::sqrt(5.0)));
    const double d1 = std::abs(eq.nu(0) - 0.3819660113);
    const double d2 = std::abs(eq.nu(1) - 0.3090169944);
    return std::pair{dc <= 1e-9 && d1 <= 1e-9 && d2 <= 1e-9,
                     "|dc|=" + fmt("%.2e", dc) + " |dnu|=" + fmt("%.2e", std::max(d1, d2))};
  });

  const auto pull2_spec = load_spec(config_dir + "/acceptance_pull2.json");
  const auto pull1_spec = load_spec(config_dir + "/acceptance_pull1.json");
  ResultTable pull2;
  ResultTable pull1;

  run(2, "PULL2 distance to equilibrium shrinks with n", [&] {
    pull2 = run_sweep(pull2_spec, sweep_opts);
    const auto rho = average_by_n(pull2, [](const ResultRow& r) { return r.rho_to_star.value(); });
    const auto unpulled = average_by_n(pull2, [](const ResultRow& r) { return r.unpulled_prob.value(); });
    std::string detail = "rho ";
    const bool trend = strictly_decreasing(rho, detail);
    const double last = unpulled.at(1600);
    detail += "; unpulled@1600=" + fmt("%.4g", last);
    return std::pair{trend && last < 0.02, detail};
  });

  run(3, "PULL1 blocking shrinks with n and router balance", [&] {
    pull1 = run_sweep(pull1_spec, sweep_opts);
    const auto blocking = average_by_n(pull1, [](const ResultRow& r) { return r.blocking_prob.value(); });
    std::string detail = "blocking ";
    const bool trend = strictly_decreasing(blocking, detail);
    const double last = blocking.at(1600);
    const auto cfg = pull1_spec.config_for(1600);
    const auto eq = solve_equilibrium(cfg);
    double worst = 0.0;
    for (int r = 0; r < cfg.routers(); ++r) {
      for (int j = 0; j < cfg.pools(); ++j) {
        const auto xi = average_by_n(pull1, [&](const ResultRow& row) { return row.xi_bar(r, j); }).at(1600);
        const double target = (cfg.beta(j) - eq.nu(j)) / cfg.routers();
        worst = std::max(worst, std::abs(xi - target) / target);
      }
    }
    detail += "; max rel xi error@1600=" + fmt("%.4g", worst);
    return std::pair{trend && last < 0.02 && worst <= 0.10, detail};
  });

  run(4, "message rates per customer", [&] {
    if (pull1.rows.empty() || pull2.rows.empty()) return std::pair{false, std::string("sweeps did not run")};
    double max1 = 0.0;
    double max2 = 0.0;
    for (const auto& r : pull1.rows) max1 = std::max(max1, r.run_msgs_per_customer.value());
    for (const auto& r : pull2.rows) max2 = std::max(max2, r.run_msgs_per_customer.value());
    const auto rate = average_by_n(pull2, [](const ResultRow& r) { return r.msgs_per_customer.value(); }).at(1600);
    return std::pair{max1 <= 1.0 && max2 <= 2.0 && rate <= 1.05,
                     "PULL1 max=" + fmt("%.6g", max1) + " PULL2 max=" + fmt("%.6g", max2) +
                         " PULL2 steady@1600=" + fmt("%.5g", rate)};
  });

  run(5, "coupled ordered pairs never cross", [] {
    std::uint64_t violations = 0;
    std::uint64_t events = 0;
    for (std::uint64_t seed : {1, 2, 3}) {
      const auto unit = two_pool(100, 1);
      CouplingOptions opts;
      opts.max_events = 1000000;
      const auto [lo1, hi1] = ordered_pair_empty_full(unit, unit, seed);
      const auto a = coupled_simulate(unit, Policy::pull1(), lo1, hi1, 1e12, seed, opts);

      opts.high_buffers = {2, 2};
      const auto big = unit.with_buffers(opts.high_buffers);
      const auto [lo2, hi2] = ordered_pair_empty_full(unit, big, seed);
      const auto b = coupled_simulate(unit, Policy::pull2(), lo2, hi2, 1e12, seed, opts);
      violations += a.violations + b.violations;
      events += a.events + b.events;
    }
    return std::pair{violations == 0 && events == 6000000,
                     std::to_string(violations) + " violations in " + std::to_string(events) + " events"};
  });

  run(6, "fluid relaxation from the maximum state", [] {
    const auto cfg = two_pool(10, 1);
    const auto eq = solve_equilibrium(cfg);
    const auto fine = integrate_fluid(unit_max_state(cfg), 50.0, 1e-3, cfg);
    FluidOptions sparse;
    sparse.store_every = 1'000'000'000;
    const auto half = integrate_fluid(unit_max_state(cfg), 50.0, 5e-4, cfg, sparse);
    const double rho = state_distance(fine.back(), eq.s_star);
    const double shift = state_distance(fine.back(), half.back());
    constexpr double slack = 1e-12;
    bool monotone = true;
    for (std::size_t m = 1; m < fine.states.size(); ++m) {
      const auto& a = fine.states[m - 1];
      const auto& b = fine.states[m];
      monotone = monotone && ((b.xi - a.xi).array() >= -slack).all() &&
                 ((b.x.row(1) - a.x.row(1)).array() <= slack).all();
    }
    return std::pair{rho <= 1e-3 && monotone && shift <= 1e-8,
                     "rho(s(T),s*)=" + fmt("%.3e", rho) + " monotone=" + (monotone ? "yes" : "no") +
                         " step-halving shift=" + fmt("%.3e", shift)};
  });

  run(7, "fluid limit tracks a large simulation", [] {
    const auto cfg = two_pool(10000, kUnboundedBuffer);
    SimOptions opts;
    opts.trace_interval = 0.1;
    const auto sim = simulate(cfg, Policy::pull2(), 10.0, 777, InitialCondition::empty(), opts);
    FluidOptions fopts;
    fopts.store_every = 100;
    const auto fluid = integrate_fluid(sim.trace.front().state, 10.0, 1e-3, cfg, fopts);
    if (fluid.states.size() != sim.trace.size()) throw std::runtime_error("time grids differ");
    double worst[2] = {0.0, 0.0};
    for (std::size_t m = 0; m < sim.trace.size(); ++m) {
      for (int j = 0; j < 2; ++j) {
        worst[j] = std::max(worst[j], std::abs(sim.trace[m].state.level(1, j) - fluid.states[m].level(1, j)));
      }
    }
    return std::pair{worst[0] <= 0.02 && worst[1] <= 0.02,
                     "sup|x1 diff| pool1=" + fmt("%.4f", worst[0]) + " pool2=" + fmt("%.4f", worst[1])};
  });

  run(8, "single server reduces to M/M/1", [] {
    SystemParameters p;
    p.beta = {1.0};
    p.mu = {1.0};
    p.buffer = {kUnboundedBuffer};
    p.lambda = 0.7;
    p.n = 1;
    const auto cfg = validate_config(p);
    const double horizon = 500000.0;
    const double warmup = 50000.0;
    SimOptions opts;
    opts.trace_start = warmup;
    opts.trace_interval = (horizon - warmup) / 20;
    const auto sim = simulate(cfg, Policy::pull2(), horizon, 8, InitialCondition::empty(), opts);
    const auto est = estimate_steady_state(sim.trace, sim.metrics, warmup);
    const double gap = std::abs(est.busy_fraction.mean - 0.7);
    return std::pair{gap <= 3 * est.busy_fraction.std_error,
                     "busy=" + fmt("%.5f", est.busy_fraction.mean) + " se=" + fmt("%.5f", est.busy_fraction.std_error)};
  });

  run(9, "repeated run gives byte-identical CSV", [&] {
    auto spec = pull2_spec;
    spec.n_list = {spec.n_list.front()};
    spec.replications = 1;
    const auto a = to_csv(flatten(run_sweep(spec)));
    const auto b = to_csv(flatten(run_sweep(spec)));
    return std::pair{a == b && a.find('\n') + 1 < a.size(), std::to_string(a.size()) + " bytes"};
  });

  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
