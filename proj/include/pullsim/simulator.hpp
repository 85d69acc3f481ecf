#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pullsim/config.hpp"
#include "pullsim/full_state.hpp"
#include "pullsim/mean_field.hpp"
#include "pullsim/random.hpp"

namespace pullsim {

enum class PolicyKind { Pull1, Pull2, JsqD, Random };

struct Policy {
  PolicyKind kind = PolicyKind::Pull2;
  int d = 2;  // JSQ(d) sample size

  static Policy pull1() { return {PolicyKind::Pull1, 0}; }
  static Policy pull2() { return {PolicyKind::Pull2, 0}; }
  static Policy jsq(int d) { return {PolicyKind::JsqD, d}; }
  static Policy random() { return {PolicyKind::Random, 0}; }

  // Accepts "PULL1", "PULL2", "JSQ(d)" / "JSQd", "RANDOM" (case-insensitive).
  static Policy parse(const std::string& text);
  std::string name() const;
  bool is_pull() const noexcept { return kind == PolicyKind::Pull1 || kind == PolicyKind::Pull2; }

  bool operator==(const Policy&) const = default;
};

// Throws InvalidPolicy when the policy cannot run on cfg (PULL1 needs unit buffers).
void check_policy(const Policy& policy, const SystemConfig& cfg);

// Independent substreams derived from one master seed. Router-indexed streams are 0-based.
struct EventStream {
  std::vector<RandomStream> arrival;  // per router: Poisson arrivals of rate lambda n / R
  std::vector<RandomStream> chi;      // per router: choice among held pull-messages
  std::vector<RandomStream> zeta;     // per router: fallback / sampling choices
  RandomStream service;               // service-completion clocks
  RandomStream pull;                  // pull-message destinations
  RandomStream label;                 // router label of departures that leave the server busy
  RandomStream init;                  // initial pull-message placement
  RandomStream surplus;               // coupled mode: clocks running in the larger system only
  RandomStream extra;                 // coupled mode: independent redraws in the larger system

  EventStream(std::uint64_t seed, int routers);
};

// A FullState plus the indices needed to run events in O(1): the pull-messages held by each
// router and per-pool level/idle counts for the mean-field projection.
class SystemState {
 public:
  SystemState(const SystemConfig& cfg, FullState initial);

  const SystemConfig& config() const noexcept { return *cfg_; }
  const FullState& full() const noexcept { return state_; }
  std::int64_t queue(std::int64_t i) const { return state_.q[static_cast<std::size_t>(i)]; }
  int holder(std::int64_t i) const { return state_.d[static_cast<std::size_t>(i)]; }
  // Servers whose pull-message sits at router r (1-based).
  std::span<const std::int64_t> messages_at(int r) const { return held_[static_cast<std::size_t>(r - 1)]; }
  std::int64_t customers() const noexcept { return customers_; }

  // Adds one customer at server i, destroying its pull-message if it was idle.
  // Returns the queue length before the arrival.
  std::int64_t join(std::int64_t i);
  // Removes one customer from server i (Q_i >= 1); the caller places a message if it idles.
  // Returns the queue length before the departure.
  std::int64_t leave(std::int64_t i);
  void place_message(std::int64_t i, int r);

  // Counts n * x_{k,j} (rows k = 0..K) and n * xi_{r,j}.
  const Matrix<double>& level_counts() const noexcept { return levels_; }
  const Matrix<double>& idle_counts() const noexcept { return idle_; }
  MeanFieldState mean_field() const;

  // Full O(n) consistency check of state and indices; throws InvariantViolation.
  void check() const;

 private:
  void remove_message(std::int64_t i);

  const SystemConfig* cfg_;
  FullState state_;
  std::vector<std::vector<std::int64_t>> held_;
  std::vector<std::int64_t> slot_;
  Matrix<double> levels_;
  Matrix<double> idle_;
  std::int64_t customers_ = 0;
};

// Counts indexed by (k, j, r): queue length k (before the event), pool j, router r.
class ClassCounter {
 public:
  ClassCounter() = default;
  ClassCounter(int pools, int routers) : pools_(pools), routers_(routers) {}

  void add(std::int64_t k, int j, int r);
  std::uint64_t at(std::int64_t k, int j, int r) const;
  std::int64_t levels() const noexcept;
  std::uint64_t total() const noexcept;
  std::uint64_t total_for_router(int r) const noexcept;

  bool operator==(const ClassCounter&) const = default;

 private:
  int pools_ = 0;
  int routers_ = 0;
  std::vector<std::uint64_t> counts_;
};

struct Counters {
  std::uint64_t arrivals = 0;
  std::uint64_t assigned = 0;  // joined a queue
  std::uint64_t blocked_at_router = 0;
  std::uint64_t blocked_at_server = 0;
  std::uint64_t waited = 0;     // joined a busy server
  std::uint64_t unpulled = 0;   // routed without a pull-message (PULL2 fallback)
  std::uint64_t departures = 0;
  std::uint64_t pull_messages = 0;
  std::uint64_t pull_remove_messages = 0;
  std::uint64_t probe_messages = 0;  // JSQ(d) queue-length queries and replies
  std::uint64_t events = 0;

  std::uint64_t blocked() const noexcept { return blocked_at_router + blocked_at_server; }
  std::uint64_t messages() const noexcept { return pull_messages + pull_remove_messages + probe_messages; }
  bool operator==(const Counters&) const = default;
};

struct SimMetrics {
  Counters counts;
  std::vector<std::uint64_t> arrivals_by_router;
  std::vector<std::uint64_t> blocked_by_router;  // blocked at the router or at a full server
  ClassCounter arrivals_by_class;
  ClassCounter departures_by_class;
  std::int64_t servers = 0;
  std::int64_t initial_customers = 0;
  double time = 0.0;
  // Time integrals of n * x_{k,j} and n * xi_{r,j}.
  Matrix<double> integral_x;
  Matrix<double> integral_xi;

  SimMetrics() = default;
  SimMetrics(const SystemConfig& cfg);

  void accumulate(const SystemState& s, double dt);
  // Time-averaged mean-field state over [0, time].
  MeanFieldState time_average() const;
  // Every customer that was ever in the system: initial ones plus admitted arrivals.
  std::uint64_t customers_handled() const noexcept;
  // Router-server messages per handled customer; nullopt when no customer was handled.
  std::optional<double> messages_per_customer() const noexcept;

  bool operator==(const SimMetrics& o) const;
};

enum class InitKind { Empty, Full, Explicit };

struct InitialCondition {
  InitKind kind = InitKind::Empty;
  FullState state;  // used when kind == Explicit

  static InitialCondition empty() { return {InitKind::Empty, {}}; }
  static InitialCondition full() { return {InitKind::Full, {}}; }
  static InitialCondition exact(FullState s) { return {InitKind::Explicit, std::move(s)}; }
};

// Empty: all idle, each pull-message at a uniformly chosen router. Full: every queue at its
// buffer size (finite buffers only). Explicit: validated and passed through.
FullState init_state(const SystemConfig& cfg, const InitialCondition& init, EventStream& rng);

struct Decision {
  enum class Kind { AssignTo, Block };
  Kind kind = Kind::Block;
  std::int64_t server = -1;
  bool used_message = false;

  static Decision assign(std::int64_t i, bool used_message) { return {Kind::AssignTo, i, used_message}; }
  static Decision block() { return {}; }
};

Decision route(const Policy& policy, int r, const SystemState& s, EventStream& rng);

enum class ArrivalOutcome { StartedService, Queued, Blocked };

ArrivalOutcome apply_arrival(SystemState& s, const Decision& decision, int r, SimMetrics& m, const Policy& policy);

// Returns true when server i still has customers after the departure.
bool apply_departure(SystemState& s, std::int64_t i, EventStream& rng, SimMetrics& m, const Policy& policy);

// Snapshot of cumulative quantities at one sampling time.
struct TraceSample {
  double time = 0.0;
  MeanFieldState state;
  Counters counts;
  Matrix<double> integral_x;
  Matrix<double> integral_xi;
};

struct SimOptions {
  // Trace samples at trace_start + m * trace_interval <= horizon; no trace if interval <= 0.
  double trace_interval = 0.0;
  double trace_start = 0.0;
  bool check_invariants = false;
  // Stop after this many events (0 = unlimited).
  std::uint64_t max_events = 0;
};

struct SimResult {
  FullState final_state;
  SimMetrics metrics;
  std::vector<TraceSample> trace;
};

SimResult simulate(const SystemConfig& cfg, const Policy& policy, double horizon, std::uint64_t seed,
                   const InitialCondition& init, const SimOptions& opts = {});

}  // namespace pullsim
