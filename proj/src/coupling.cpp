#include "pullsim/coupling.hpp"

#include <algorithm>
#include <queue>

#include "pullsim/error.hpp"

namespace pullsim {

namespace {

enum class Clock { Off, Shared, Surplus };

struct ServiceEvent {
  double time;
  std::uint64_t seq;
  std::int64_t server;  // -1 for arrivals
  int router;
  std::uint64_t version;
};

struct Later {
  bool operator()(const ServiceEvent& a, const ServiceEvent& b) const noexcept {
    return a.time > b.time || (a.time == b.time && a.seq > b.seq);
  }
};

class CoupledRun {
 public:
  CoupledRun(const SystemConfig& low_cfg, const SystemConfig& high_cfg, const Policy& policy, const FullState& low,
             const FullState& high, std::uint64_t seed)
      : low_cfg_(low_cfg),
        high_cfg_(high_cfg),
        policy_(policy),
        rng_(seed, low_cfg.routers()),
        low_(low_cfg, low),
        high_(high_cfg, high),
        low_m_(low_cfg),
        high_m_(high_cfg),
        clock_(static_cast<std::size_t>(low_cfg.servers()), Clock::Off),
        version_(static_cast<std::size_t>(low_cfg.servers()), 0) {
    low_m_.initial_customers = low_.customers();
    high_m_.initial_customers = high_.customers();
  }

  DominanceReport run(double horizon, const CouplingOptions& opts) {
    const double router_rate = low_cfg_.total_arrival_rate() / low_cfg_.routers();
    if (router_rate > 0.0) {
      for (int r = 1; r <= low_cfg_.routers(); ++r) {
        push(rng_.arrival[static_cast<std::size_t>(r - 1)].exponential(router_rate), -1, r, 0);
      }
    }
    for (std::int64_t i = 0; i < low_cfg_.servers(); ++i) refresh_clock(i, 0.0, false);

    DominanceReport report;
    double now = 0.0;
    while (!calendar_.empty()) {
      if (opts.max_events != 0 && report.events >= opts.max_events) break;
      const auto e = calendar_.top();
      if (e.time > horizon) break;
      calendar_.pop();
      if (e.server >= 0 && e.version != version_[static_cast<std::size_t>(e.server)]) continue;
      now = e.time;
      if (e.server < 0) {
        arrival(e.router, now);
        push(now + rng_.arrival[static_cast<std::size_t>(e.router - 1)].exponential(router_rate), -1, e.router, 0);
      } else {
        completion(e.server, now);
      }
      ++report.events;
      if (!full_state_leq(low_.full(), high_.full())) {
        ++report.violations;
        if (!report.first_violation) report.first_violation = report.events;
      }
      if (opts.sample_every != 0 && report.events % opts.sample_every == 0) {
        report.samples.emplace_back(low_.full(), high_.full());
      }
    }
    report.held = report.violations == 0;
    report.time = now;
    report.final_low = low_.full();
    report.final_high = high_.full();
    report.low_counts = low_m_.counts;
    report.high_counts = high_m_.counts;
    return report;
  }

 private:
  void push(double time, std::int64_t server, int router, std::uint64_t version) {
    calendar_.push(ServiceEvent{time, seq_++, server, router, version});
  }

  // Re-evaluates the clock mode of server i; a mode change (or a firing) draws a fresh clock.
  void refresh_clock(std::int64_t i, double now, bool fired) {
    const auto u = static_cast<std::size_t>(i);
    const Clock want = high_.queue(i) == 0 ? Clock::Off : (low_.queue(i) > 0 ? Clock::Shared : Clock::Surplus);
    if (want == clock_[u] && !fired) return;
    clock_[u] = want;
    ++version_[u];
    if (want == Clock::Off) return;
    auto& stream = want == Clock::Shared ? rng_.service : rng_.surplus;
    push(now + stream.exponential(low_cfg_.mu(low_cfg_.pool_of(i))), i, 0, version_[u]);
  }

  void arrival(int r, double now) {
    const auto n = static_cast<std::uint64_t>(low_cfg_.servers());
    const auto low_held = low_.messages_at(r);
    const auto high_held = high_.messages_at(r);
    Decision low_choice;
    Decision high_choice;
    if (!low_held.empty()) {
      const auto i = low_held[rng_.chi[static_cast<std::size_t>(r - 1)].below(low_held.size())];
      low_choice = Decision::assign(i, true);
      if (!high_held.empty()) {
        high_choice = high_.holder(i) == r ? Decision::assign(i, true)
                                           : Decision::assign(high_held[rng_.extra.below(high_held.size())], true);
      } else if (policy_.kind == PolicyKind::Pull2) {
        high_choice = Decision::assign(static_cast<std::int64_t>(rng_.extra.below(n)), false);
      }
    } else if (policy_.kind == PolicyKind::Pull2) {
      // Messages in the larger system form a subset, so router r is empty there too.
      const auto i = static_cast<std::int64_t>(rng_.zeta[static_cast<std::size_t>(r - 1)].below(n));
      low_choice = Decision::assign(i, false);
      high_choice = low_choice;
    }
    apply_arrival(low_, low_choice, r, low_m_, policy_);
    apply_arrival(high_, high_choice, r, high_m_, policy_);
    for (const auto& c : {low_choice, high_choice}) {
      if (c.kind == Decision::Kind::AssignTo) refresh_clock(c.server, now, false);
    }
  }

  void completion(std::int64_t i, double now) {
    const int j = low_cfg_.pool_of(i);
    const auto routers = static_cast<std::uint64_t>(low_cfg_.routers());
    const bool low_busy = low_.queue(i) > 0;
    const bool low_was_idle = !low_busy;
    const auto high_k = high_.leave(i);
    const auto low_k = low_busy ? low_.leave(i) : 0;

    int shared_router = 0;
    if (low_busy) {
      int r = 0;
      if (low_k == 1) {
        r = static_cast<int>(rng_.pull.below(routers)) + 1;
        low_.place_message(i, r);
        ++low_m_.counts.pull_messages;
        shared_router = r;
      } else {
        r = static_cast<int>(rng_.label.below(routers)) + 1;
      }
      ++low_m_.counts.departures;
      low_m_.departures_by_class.add(low_k, j, r);
    }
    int r = 0;
    if (high_k == 1) {
      // Idle in both now: reuse the smaller system's message router (fresh or standing).
      r = low_was_idle ? low_.holder(i) : shared_router;
      high_.place_message(i, r);
      ++high_m_.counts.pull_messages;
    } else {
      r = static_cast<int>(rng_.label.below(routers)) + 1;
    }
    ++high_m_.counts.departures;
    high_m_.departures_by_class.add(high_k, j, r);
    refresh_clock(i, now, true);
  }

  const SystemConfig& low_cfg_;
  const SystemConfig& high_cfg_;
  Policy policy_;
  EventStream rng_;
  SystemState low_;
  SystemState high_;
  SimMetrics low_m_;
  SimMetrics high_m_;
  std::vector<Clock> clock_;
  std::vector<std::uint64_t> version_;
  std::priority_queue<ServiceEvent, std::vector<ServiceEvent>, Later> calendar_;
  std::uint64_t seq_ = 0;
};

}  // namespace

DominanceReport coupled_simulate(const SystemConfig& cfg, const Policy& policy, const FullState& low,
                                 const FullState& high, double horizon, std::uint64_t seed,
                                 const CouplingOptions& opts) {
  if (!policy.is_pull()) throw Error(ErrorCode::InvalidPolicy, "coupling is defined for PULL1 and PULL2 only");
  const SystemConfig high_cfg = opts.high_buffers.empty() ? cfg : cfg.with_buffers(opts.high_buffers);
  for (int j = 0; j < cfg.pools(); ++j) {
    if (high_cfg.buffer(j) < cfg.buffer(j)) {
      throw Error(ErrorCode::BadParameter, "the larger system needs buffers at least as large");
    }
  }
  check_policy(policy, cfg);
  check_policy(policy, high_cfg);
  check_full_state(low, cfg);
  check_full_state(high, high_cfg);
  if (!full_state_leq(low, high)) throw Error(ErrorCode::InitialNotOrdered, "initial states are not ordered");
  if (!(horizon >= 0.0)) throw Error(ErrorCode::BadParameter, "horizon must be nonnegative");
  CoupledRun run(cfg, high_cfg, policy, low, high, seed);
  return run.run(horizon, opts);
}

std::pair<FullState, FullState> ordered_pair_empty_full(const SystemConfig& low_cfg, const SystemConfig& high_cfg,
                                                        std::uint64_t seed) {
  EventStream rng(seed, high_cfg.routers());
  FullState high = init_state(high_cfg, InitialCondition::full(), rng);
  FullState low = init_state(low_cfg, InitialCondition::empty(), rng);
  return {std::move(low), std::move(high)};
}

std::pair<FullState, FullState> random_ordered_pair(const SystemConfig& low_cfg, const SystemConfig& high_cfg,
                                                    std::uint64_t seed, std::int64_t cap) {
  RandomStream rng(seed, 0x5EED);
  const auto n = static_cast<std::size_t>(low_cfg.servers());
  const auto routers = static_cast<std::uint64_t>(low_cfg.routers());
  FullState low{std::vector<std::int64_t>(n), std::vector<int>(n, kNoMessage)};
  FullState high = low;
  for (std::size_t i = 0; i < n; ++i) {
    const int j = low_cfg.pool_of(static_cast<std::int64_t>(i));
    const auto top = std::min<std::int64_t>(high_cfg.buffer(j), cap);
    high.q[i] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(top) + 1));
    const auto low_top = std::min<std::int64_t>(high.q[i], low_cfg.buffer(j));
    low.q[i] = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(low_top) + 1));
    if (low.q[i] == 0) low.d[i] = static_cast<int>(rng.below(routers)) + 1;
    if (high.q[i] == 0) high.d[i] = low.d[i];
  }
  return {std::move(low), std::move(high)};
}

}  // namespace pullsim
