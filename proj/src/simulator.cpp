#include "pullsim/simulator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>

#include "pullsim/error.hpp"

namespace pullsim {

namespace {

// Substream ids; router-indexed families are spaced so that R up to 2^20 cannot collide.
constexpr std::uint64_t kArrivalFamily = 1ull << 20;
constexpr std::uint64_t kChiFamily = 2ull << 20;
constexpr std::uint64_t kZetaFamily = 3ull << 20;
constexpr std::uint64_t kService = 1;
constexpr std::uint64_t kPull = 2;
constexpr std::uint64_t kLabel = 3;
constexpr std::uint64_t kInit = 4;
constexpr std::uint64_t kSurplus = 5;
constexpr std::uint64_t kExtra = 6;

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return c == '-' || c == '_' || c == ' '; }),
          s.end());
  return s;
}

}  // namespace

Policy Policy::parse(const std::string& text) {
  const auto t = upper(text);
  if (t == "PULL1") return pull1();
  if (t == "PULL2") return pull2();
  if (t == "RANDOM") return random();
  if (t.rfind("JSQ", 0) == 0) {
    auto digits = t.substr(3);
    if (!digits.empty() && digits.front() == '(' && digits.back() == ')') digits = digits.substr(1, digits.size() - 2);
    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) {
      const int d = std::stoi(digits);
      if (d >= 1) return jsq(d);
    }
  }
  throw Error(ErrorCode::InvalidPolicy, "unknown policy '" + text + "'");
}

std::string Policy::name() const {
  switch (kind) {
    case PolicyKind::Pull1: return "PULL1";
    case PolicyKind::Pull2: return "PULL2";
    case PolicyKind::JsqD: return "JSQ(" + std::to_string(d) + ")";
    case PolicyKind::Random: return "RANDOM";
  }
  return "?";
}

void check_policy(const Policy& policy, const SystemConfig& cfg) {
  if (policy.kind == PolicyKind::Pull1 && !cfg.unit_buffers()) {
    throw Error(ErrorCode::InvalidPolicy, "PULL1 requires every buffer to be 1");
  }
  if (policy.kind == PolicyKind::JsqD && policy.d < 1) throw Error(ErrorCode::InvalidPolicy, "JSQ(d) needs d >= 1");
}

EventStream::EventStream(std::uint64_t seed, int routers)
    : service(seed, kService),
      pull(seed, kPull),
      label(seed, kLabel),
      init(seed, kInit),
      surplus(seed, kSurplus),
      extra(seed, kExtra) {
  for (int r = 0; r < routers; ++r) {
    arrival.emplace_back(seed, kArrivalFamily + static_cast<std::uint64_t>(r));
    chi.emplace_back(seed, kChiFamily + static_cast<std::uint64_t>(r));
    zeta.emplace_back(seed, kZetaFamily + static_cast<std::uint64_t>(r));
  }
}

// ---------------------------------------------------------------------------------------------
// SystemState

SystemState::SystemState(const SystemConfig& cfg, FullState initial)
    : cfg_(&cfg),
      state_(std::move(initial)),
      held_(static_cast<std::size_t>(cfg.routers())),
      slot_(state_.q.size(), -1),
      levels_(Matrix<double>::Zero(2, cfg.pools())),
      idle_(Matrix<double>::Zero(cfg.routers(), cfg.pools())) {
  check_full_state(state_, cfg);
  for (std::size_t i = 0; i < state_.q.size(); ++i) {
    const auto server = static_cast<std::int64_t>(i);
    const int j = cfg.pool_of(server);
    const auto q = state_.q[i];
    if (q + 1 > levels_.rows()) levels_.conservativeResizeLike(Matrix<double>::Zero(q + 1, cfg.pools()));
    levels_.col(j).head(q + 1).array() += 1.0;
    customers_ += q;
    if (q == 0) {
      const int r = state_.d[i];
      slot_[i] = static_cast<std::int64_t>(held_[r - 1].size());
      held_[r - 1].push_back(server);
      idle_(r - 1, j) += 1.0;
    }
  }
}

void SystemState::remove_message(std::int64_t i) {
  const auto u = static_cast<std::size_t>(i);
  const int r = state_.d[u];
  auto& list = held_[static_cast<std::size_t>(r - 1)];
  const auto pos = static_cast<std::size_t>(slot_[u]);
  const auto moved = list.back();
  list[pos] = moved;
  slot_[static_cast<std::size_t>(moved)] = static_cast<std::int64_t>(pos);
  list.pop_back();
  slot_[u] = -1;
  idle_(r - 1, cfg_->pool_of(i)) -= 1.0;
  state_.d[u] = kNoMessage;
}

std::int64_t SystemState::join(std::int64_t i) {
  const auto u = static_cast<std::size_t>(i);
  const auto k = state_.q[u];
  if (k == std::numeric_limits<std::int64_t>::max() - 1) {
    throw Error(ErrorCode::InvariantViolation, "queue length overflow");
  }
  if (k == 0) remove_message(i);
  state_.q[u] = k + 1;
  if (k + 2 > levels_.rows()) levels_.conservativeResizeLike(Matrix<double>::Zero(k + 2, cfg_->pools()));
  levels_(k + 1, cfg_->pool_of(i)) += 1.0;
  ++customers_;
  return k;
}

std::int64_t SystemState::leave(std::int64_t i) {
  const auto u = static_cast<std::size_t>(i);
  const auto k = state_.q[u];
  if (k < 1) throw Error(ErrorCode::DepartureFromIdle, "departure from idle server " + std::to_string(i));
  state_.q[u] = k - 1;
  levels_(k, cfg_->pool_of(i)) -= 1.0;
  --customers_;
  return k;
}

void SystemState::place_message(std::int64_t i, int r) {
  const auto u = static_cast<std::size_t>(i);
  if (state_.q[u] != 0 || state_.d[u] != kNoMessage) {
    throw Error(ErrorCode::InvariantViolation, "pull-message placed for a busy server or twice");
  }
  state_.d[u] = r;
  slot_[u] = static_cast<std::int64_t>(held_[static_cast<std::size_t>(r - 1)].size());
  held_[static_cast<std::size_t>(r - 1)].push_back(i);
  idle_(r - 1, cfg_->pool_of(i)) += 1.0;
}

MeanFieldState SystemState::mean_field() const {
  const double inv_n = 1.0 / static_cast<double>(cfg_->servers());
  // Trim empty top levels so the projection matches mean_field_project exactly.
  Eigen::Index rows = levels_.rows();
  while (rows > 2 && levels_.row(rows - 1).isZero()) --rows;
  return {levels_.topRows(rows) * inv_n, idle_ * inv_n};
}

void SystemState::check() const {
  check_full_state(state_, *cfg_);
  std::size_t held_total = 0;
  for (std::size_t r = 0; r < held_.size(); ++r) {
    for (std::size_t pos = 0; pos < held_[r].size(); ++pos) {
      const auto i = static_cast<std::size_t>(held_[r][pos]);
      if (state_.d[i] != static_cast<int>(r + 1) || slot_[i] != static_cast<std::int64_t>(pos)) {
        throw Error(ErrorCode::InvariantViolation, "router message index out of sync");
      }
    }
    held_total += held_[r].size();
  }
  const auto idle = static_cast<std::size_t>(std::count(state_.q.begin(), state_.q.end(), std::int64_t{0}));
  if (held_total != idle) throw Error(ErrorCode::InvariantViolation, "pull-message count differs from idle count");
  const auto projected = mean_field_project(state_, *cfg_);
  if (!(projected == mean_field())) throw Error(ErrorCode::InvariantViolation, "level counts out of sync");
}

// ---------------------------------------------------------------------------------------------
// Metrics

void ClassCounter::add(std::int64_t k, int j, int r) {
  const auto stride = static_cast<std::size_t>(pools_) * static_cast<std::size_t>(routers_);
  const auto need = (static_cast<std::size_t>(k) + 1) * stride;
  if (counts_.size() < need) counts_.resize(need, 0);
  ++counts_[static_cast<std::size_t>(k) * stride + static_cast<std::size_t>(j * routers_ + (r - 1))];
}

std::uint64_t ClassCounter::at(std::int64_t k, int j, int r) const {
  const auto stride = static_cast<std::size_t>(pools_) * static_cast<std::size_t>(routers_);
  const auto idx = static_cast<std::size_t>(k) * stride + static_cast<std::size_t>(j * routers_ + (r - 1));
  return idx < counts_.size() ? counts_[idx] : 0;
}

std::int64_t ClassCounter::levels() const noexcept {
  const auto stride = static_cast<std::size_t>(pools_) * static_cast<std::size_t>(routers_);
  return stride == 0 ? 0 : static_cast<std::int64_t>(counts_.size() / stride);
}

std::uint64_t ClassCounter::total() const noexcept {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

std::uint64_t ClassCounter::total_for_router(int r) const noexcept {
  std::uint64_t t = 0;
  for (std::size_t idx = static_cast<std::size_t>(r - 1); idx < counts_.size(); idx += static_cast<std::size_t>(routers_)) {
    t += counts_[idx];
  }
  return t;
}

SimMetrics::SimMetrics(const SystemConfig& cfg)
    : arrivals_by_router(static_cast<std::size_t>(cfg.routers()), 0),
      blocked_by_router(static_cast<std::size_t>(cfg.routers()), 0),
      arrivals_by_class(cfg.pools(), cfg.routers()),
      departures_by_class(cfg.pools(), cfg.routers()),
      servers(cfg.servers()),
      integral_x(Matrix<double>::Zero(2, cfg.pools())),
      integral_xi(Matrix<double>::Zero(cfg.routers(), cfg.pools())) {}

void SimMetrics::accumulate(const SystemState& s, double dt) {
  const auto& levels = s.level_counts();
  if (integral_x.rows() < levels.rows()) {
    integral_x.conservativeResizeLike(Matrix<double>::Zero(levels.rows(), integral_x.cols()));
  }
  integral_x.topRows(levels.rows()) += dt * levels;
  integral_xi += dt * s.idle_counts();
  time += dt;
}

MeanFieldState SimMetrics::time_average() const {
  const double scale = time > 0.0 ? 1.0 / (time * static_cast<double>(servers)) : 0.0;
  return {integral_x * scale, integral_xi * scale};
}

std::uint64_t SimMetrics::customers_handled() const noexcept {
  return static_cast<std::uint64_t>(initial_customers) + counts.assigned;
}

std::optional<double> SimMetrics::messages_per_customer() const noexcept {
  const auto handled = customers_handled();
  if (handled == 0) return std::nullopt;
  return static_cast<double>(counts.messages()) / static_cast<double>(handled);
}

bool SimMetrics::operator==(const SimMetrics& o) const {
  auto same = [](const Matrix<double>& a, const Matrix<double>& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return counts == o.counts && arrivals_by_router == o.arrivals_by_router &&
         blocked_by_router == o.blocked_by_router && arrivals_by_class == o.arrivals_by_class &&
         departures_by_class == o.departures_by_class && servers == o.servers &&
         initial_customers == o.initial_customers && time == o.time && same(integral_x, o.integral_x) &&
         same(integral_xi, o.integral_xi);
}

// ---------------------------------------------------------------------------------------------
// Operations

FullState init_state(const SystemConfig& cfg, const InitialCondition& init, EventStream& rng) {
  const auto n = static_cast<std::size_t>(cfg.servers());
  FullState s;
  switch (init.kind) {
    case InitKind::Empty:
      s.q.assign(n, 0);
      s.d.resize(n);
      for (auto& d : s.d) d = static_cast<int>(rng.init.below(static_cast<std::uint64_t>(cfg.routers()))) + 1;
      return s;
    case InitKind::Full:
      if (!cfg.all_finite_buffers()) {
        throw Error(ErrorCode::FullInitWithUnboundedBuffer, "the full state needs finite buffers in every pool");
      }
      s.q.resize(n);
      for (std::size_t i = 0; i < n; ++i) s.q[i] = cfg.buffer(cfg.pool_of(static_cast<std::int64_t>(i)));
      s.d.assign(n, kNoMessage);
      return s;
    case InitKind::Explicit:
      check_full_state(init.state, cfg);
      return init.state;
  }
  return s;
}

Decision route(const Policy& policy, int r, const SystemState& s, EventStream& rng) {
  const auto n = static_cast<std::uint64_t>(s.config().servers());
  auto& zeta = rng.zeta[static_cast<std::size_t>(r - 1)];
  switch (policy.kind) {
    case PolicyKind::Pull1:
    case PolicyKind::Pull2: {
      const auto held = s.messages_at(r);
      if (!held.empty()) {
        const auto pick = rng.chi[static_cast<std::size_t>(r - 1)].below(held.size());
        return Decision::assign(held[pick], true);
      }
      if (policy.kind == PolicyKind::Pull1) return Decision::block();
      return Decision::assign(static_cast<std::int64_t>(zeta.below(n)), false);
    }
    case PolicyKind::JsqD: {
      const auto d = std::min<std::uint64_t>(static_cast<std::uint64_t>(policy.d), n);
      std::vector<std::int64_t> sample;
      sample.reserve(d);
      while (sample.size() < d) {
        const auto i = static_cast<std::int64_t>(zeta.below(n));
        if (std::find(sample.begin(), sample.end(), i) == sample.end()) sample.push_back(i);
      }
      std::int64_t best = sample.front();
      std::uint64_t ties = 1;
      for (std::size_t m = 1; m < sample.size(); ++m) {
        const auto q = s.queue(sample[m]);
        if (q < s.queue(best)) {
          best = sample[m];
          ties = 1;
        } else if (q == s.queue(best) && zeta.below(++ties) == 0) {
          best = sample[m];
        }
      }
      return Decision::assign(best, false);
    }
    case PolicyKind::Random:
      return Decision::assign(static_cast<std::int64_t>(zeta.below(n)), false);
  }
  return Decision::block();
}

ArrivalOutcome apply_arrival(SystemState& s, const Decision& decision, int r, SimMetrics& m, const Policy& policy) {
  const auto& cfg = s.config();
  ++m.counts.arrivals;
  ++m.arrivals_by_router[static_cast<std::size_t>(r - 1)];
  if (policy.kind == PolicyKind::JsqD) {
    m.counts.probe_messages += 2 * static_cast<std::uint64_t>(std::min<std::int64_t>(policy.d, cfg.servers()));
  }
  if (decision.kind == Decision::Kind::Block) {
    ++m.counts.blocked_at_router;
    ++m.blocked_by_router[static_cast<std::size_t>(r - 1)];
    return ArrivalOutcome::Blocked;
  }
  const auto i = decision.server;
  const int j = cfg.pool_of(i);
  if (policy.is_pull() && !decision.used_message) ++m.counts.unpulled;
  const auto k = s.queue(i);
  const auto buffer = cfg.buffer(j);
  if (!is_unbounded(buffer) && k >= buffer) {
    ++m.counts.blocked_at_server;
    ++m.blocked_by_router[static_cast<std::size_t>(r - 1)];
    return ArrivalOutcome::Blocked;
  }
  if (k == 0 && !decision.used_message && policy.kind == PolicyKind::Pull2 && s.holder(i) != r) {
    ++m.counts.pull_remove_messages;
  }
  s.join(i);
  ++m.counts.assigned;
  m.arrivals_by_class.add(k, j, r);
  if (k == 0) return ArrivalOutcome::StartedService;
  ++m.counts.waited;
  return ArrivalOutcome::Queued;
}

bool apply_departure(SystemState& s, std::int64_t i, EventStream& rng, SimMetrics& m, const Policy& policy) {
  const auto& cfg = s.config();
  const auto k = s.leave(i);
  const int j = cfg.pool_of(i);
  const auto routers = static_cast<std::uint64_t>(cfg.routers());
  int r = 0;
  if (k == 1) {
    r = static_cast<int>(rng.pull.below(routers)) + 1;
    s.place_message(i, r);
    if (policy.is_pull()) ++m.counts.pull_messages;
  } else {
    r = static_cast<int>(rng.label.below(routers)) + 1;
  }
  ++m.counts.departures;
  m.departures_by_class.add(k, j, r);
  return k > 1;
}

// ---------------------------------------------------------------------------------------------
// Event loop

namespace {

struct Event {
  double time;
  std::uint64_t seq;
  std::int64_t server;  // -1 for arrivals
  int router;           // 1-based, arrivals only
};

struct Later {
  bool operator()(const Event& a, const Event& b) const noexcept {
    return a.time > b.time || (a.time == b.time && a.seq > b.seq);
  }
};

class Calendar {
 public:
  void push(double time, std::int64_t server, int router) { heap_.push(Event{time, seq_++, server, router}); }
  bool empty() const noexcept { return heap_.empty(); }
  const Event& top() const { return heap_.top(); }
  void pop() { heap_.pop(); }

 private:
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t seq_ = 0;
};

TraceSample snapshot(double time, const SystemState& s, const SimMetrics& m) {
  return TraceSample{time, s.mean_field(), m.counts, m.integral_x, m.integral_xi};
}

}  // namespace

SimResult simulate(const SystemConfig& cfg, const Policy& policy, double horizon, std::uint64_t seed,
                   const InitialCondition& init, const SimOptions& opts) {
  check_policy(policy, cfg);
  if (!(horizon >= 0.0)) throw Error(ErrorCode::BadParameter, "horizon must be nonnegative");
  EventStream rng(seed, cfg.routers());
  SystemState state(cfg, init_state(cfg, init, rng));
  SimResult result;
  result.metrics = SimMetrics(cfg);
  auto& m = result.metrics;
  m.initial_customers = state.customers();

  Calendar calendar;
  const double router_rate = cfg.total_arrival_rate() / cfg.routers();
  if (router_rate > 0.0) {
    for (int r = 1; r <= cfg.routers(); ++r) {
      calendar.push(rng.arrival[static_cast<std::size_t>(r - 1)].exponential(router_rate), -1, r);
    }
  }
  for (std::int64_t i = 0; i < cfg.servers(); ++i) {
    if (state.queue(i) > 0) calendar.push(rng.service.exponential(cfg.mu(cfg.pool_of(i))), i, 0);
  }

  const bool tracing = opts.trace_interval > 0.0;
  std::int64_t next_sample = 0;
  auto sample_time = [&](std::int64_t idx) { return opts.trace_start + static_cast<double>(idx) * opts.trace_interval; };
  const double sample_limit = horizon * (1.0 + 1e-12);
  auto flush_samples = [&](double upto) {
    while (tracing && sample_time(next_sample) <= upto && sample_time(next_sample) <= sample_limit) {
      const double ts = std::min(sample_time(next_sample), horizon);
      if (ts > m.time) m.accumulate(state, ts - m.time);
      result.trace.push_back(snapshot(ts, state, m));
      ++next_sample;
    }
  };

  while (!calendar.empty()) {
    const Event e = calendar.top();
    if (e.time > horizon) break;
    if (opts.max_events != 0 && m.counts.events >= opts.max_events) break;
    calendar.pop();
    flush_samples(e.time);
    m.accumulate(state, e.time - m.time);
    if (e.server < 0) {
      const auto decision = route(policy, e.router, state, rng);
      if (apply_arrival(state, decision, e.router, m, policy) == ArrivalOutcome::StartedService) {
        const auto i = decision.server;
        calendar.push(e.time + rng.service.exponential(cfg.mu(cfg.pool_of(i))), i, 0);
      }
      auto& clock = rng.arrival[static_cast<std::size_t>(e.router - 1)];
      calendar.push(e.time + clock.exponential(router_rate), -1, e.router);
    } else if (apply_departure(state, e.server, rng, m, policy)) {
      calendar.push(e.time + rng.service.exponential(cfg.mu(cfg.pool_of(e.server))), e.server, 0);
    }
    ++m.counts.events;
    if (opts.check_invariants) state.check();
  }
  const bool truncated = opts.max_events != 0 && m.counts.events >= opts.max_events;
  if (!truncated) {
    flush_samples(horizon);
    if (horizon > m.time) m.accumulate(state, horizon - m.time);
  }
  result.final_state = state.full();
  return result;
}

}  // namespace pullsim
