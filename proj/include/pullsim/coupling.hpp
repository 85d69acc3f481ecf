#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pullsim/config.hpp"
#include "pullsim/full_state.hpp"
#include "pullsim/simulator.hpp"

namespace pullsim {

struct CouplingOptions {
  // Buffers of the larger system; empty means same as the smaller one. Must be >= componentwise.
  std::vector<BufferSize> high_buffers;
  std::uint64_t max_events = 0;  // 0 = run to the horizon
  // Keep a (low, high) state pair every this many events (0 = none).
  std::uint64_t sample_every = 0;
};

struct DominanceReport {
  bool held = true;
  std::optional<std::uint64_t> first_violation;  // 1-based event index
  std::uint64_t violations = 0;
  std::uint64_t events = 0;
  double time = 0.0;
  FullState final_low;
  FullState final_high;
  Counters low_counts;
  Counters high_counts;
  std::vector<std::pair<FullState, FullState>> samples;
};

// Runs a smaller and a larger PULL system on shared randomness so that the order
// low <= high survives every event:
//  - arrivals to each router are common;
//  - router r with no pull-message in either system: one common uniform server (PULL2) or
//    a common block (PULL1);
//  - messages only in the smaller system: independent choices in the two systems;
//  - messages in both: uniform choice in the smaller system, reused by the larger one when
//    that message also exists there, otherwise an independent uniform redraw among the
//    larger system's messages;
//  - each server carries one exponential clock while busy in the larger system. It is drawn
//    from the shared service stream while the server is busy in both systems and from the
//    surplus stream while only the larger system is busy; a firing serves both systems
//    wherever busy;
//  - a server idling in both systems at once sends one shared pull-message; a server idling
//    in the larger system while already idle in the smaller one reuses that message's router.
// Throws InitialNotOrdered, InvalidPolicy, BadParameter.
DominanceReport coupled_simulate(const SystemConfig& cfg, const Policy& policy, const FullState& low,
                                 const FullState& high, double horizon, std::uint64_t seed,
                                 const CouplingOptions& opts = {});

// low = all idle with uniformly placed messages, high = every queue at its (finite) buffer.
std::pair<FullState, FullState> ordered_pair_empty_full(const SystemConfig& low_cfg, const SystemConfig& high_cfg,
                                                        std::uint64_t seed);

// Random pair with low <= high: high queues uniform on 0..min(B_high, cap), low queues uniform
// on 0..min(high, B_low); servers idle in both share the pull-message router.
std::pair<FullState, FullState> random_ordered_pair(const SystemConfig& low_cfg, const SystemConfig& high_cfg,
                                                    std::uint64_t seed, std::int64_t cap = 3);

}  // namespace pullsim
