#include "pullsim/full_state.hpp"

#include <algorithm>
#include <string>

#include "pullsim/error.hpp"

namespace pullsim {

void check_full_state(const FullState& s, const SystemConfig& cfg) {
  if (s.servers() != cfg.servers() || s.d.size() != s.q.size()) {
    throw Error(ErrorCode::DimensionMismatch, "state size does not match the configured server count");
  }
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    const auto where = " at server " + std::to_string(i);
    if (s.q[i] < 0) throw Error(ErrorCode::InvariantViolation, "negative queue" + where);
    if ((s.q[i] == 0) != (s.d[i] != kNoMessage)) {
      throw Error(ErrorCode::InvariantViolation, "idle <=> pull-message broken" + where);
    }
    if (s.d[i] < 0 || s.d[i] > cfg.routers()) {
      throw Error(ErrorCode::InvariantViolation, "router label out of range" + where);
    }
    const auto b = cfg.buffer(cfg.pool_of(static_cast<std::int64_t>(i)));
    if (!is_unbounded(b) && s.q[i] > b) throw Error(ErrorCode::InvariantViolation, "buffer exceeded" + where);
  }
}

MeanFieldState mean_field_project(const FullState& s, const SystemConfig& cfg) {
  const auto top = s.q.empty() ? std::int64_t{0} : *std::max_element(s.q.begin(), s.q.end());
  auto out = MeanFieldState::zeros(std::max<std::int64_t>(top, 1), cfg.pools(), cfg.routers());
  // Histogram of exact queue lengths, then a reverse cumulative sum gives x.
  Matrix<double> exact = Matrix<double>::Zero(out.x.rows(), cfg.pools());
  for (std::size_t i = 0; i < s.q.size(); ++i) {
    const int j = cfg.pool_of(static_cast<std::int64_t>(i));
    exact(s.q[i], j) += 1.0;
    if (s.q[i] == 0 && s.d[i] != kNoMessage) out.xi(s.d[i] - 1, j) += 1.0;
  }
  const double inv_n = 1.0 / static_cast<double>(cfg.servers());
  Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(cfg.pools());
  for (Eigen::Index k = out.x.rows() - 1; k >= 0; --k) {
    running += exact.row(k);
    out.x.row(k) = running * inv_n;
  }
  out.xi *= inv_n;
  // x(0, j) is N_j / n, which equals beta_j whenever beta_j * n is an integer.
  return out;
}

bool full_state_leq(const FullState& lower, const FullState& upper) {
  if (lower.q.size() != upper.q.size() || lower.d.size() != upper.d.size()) {
    throw Error(ErrorCode::DimensionMismatch, "full states have different server counts");
  }
  for (std::size_t i = 0; i < lower.q.size(); ++i) {
    if (lower.q[i] > upper.q[i]) return false;
    if (upper.d[i] != kNoMessage && lower.d[i] != upper.d[i]) return false;
  }
  return true;
}

}  // namespace pullsim
