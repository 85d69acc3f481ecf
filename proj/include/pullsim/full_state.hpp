#pragma once

#include <cstdint>
#include <vector>

#include "pullsim/config.hpp"
#include "pullsim/mean_field.hpp"

namespace pullsim {

// Router labels are 1..R; kNoMessage marks a busy server.
inline constexpr int kNoMessage = 0;

// Full system state S^n = (Q_i, D_i), one entry per server.
struct FullState {
  std::vector<std::int64_t> q;
  std::vector<int> d;

  std::int64_t servers() const noexcept { return static_cast<std::int64_t>(q.size()); }
  bool operator==(const FullState&) const = default;
};

// Throws InvariantViolation if Q_i = 0 <=> D_i != 0 fails, a router label is out of
// range, or a finite buffer is exceeded.
void check_full_state(const FullState& s, const SystemConfig& cfg);

MeanFieldState mean_field_project(const FullState& s, const SystemConfig& cfg);

// S' <= S'': Q' <= Q'' componentwise and D''_i != 0 implies D'_i = D''_i.
bool full_state_leq(const FullState& lower, const FullState& upper);

}  // namespace pullsim
