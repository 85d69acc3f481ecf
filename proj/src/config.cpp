#include "pullsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pullsim/error.hpp"

namespace pullsim {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonSubcritical: return "NonSubcritical";
    case ErrorCode::BadFractions: return "BadFractions";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::BadParameter: return "BadParameter";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegeneratePool: return "DegeneratePool";
    case ErrorCode::EmptyRouter: return "EmptyRouter";
    case ErrorCode::PreconditionFailed: return "PreconditionFailed";
    case ErrorCode::UndefinedField: return "UndefinedField";
    case ErrorCode::FullInitWithUnboundedBuffer: return "FullInitWithUnboundedBuffer";
    case ErrorCode::InvalidPolicy: return "InvalidPolicy";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::DepartureFromIdle: return "DepartureFromIdle";
    case ErrorCode::InitialNotOrdered: return "InitialNotOrdered";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

std::vector<std::int64_t> round_pool_sizes(const std::vector<double>& beta, std::int64_t n) {
  const auto pools = beta.size();
  std::vector<std::int64_t> sizes(pools);
  std::vector<double> remainder(pools);
  std::int64_t assigned = 0;
  for (std::size_t j = 0; j < pools; ++j) {
    const double exact = beta[j] * static_cast<double>(n);
    sizes[j] = static_cast<std::int64_t>(std::floor(exact));
    remainder[j] = exact - static_cast<double>(sizes[j]);
    assigned += sizes[j];
  }
  std::vector<std::size_t> order(pools);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Ties go to the lower pool index.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t m = 0; assigned < n; m = (m + 1) % pools) {
    ++sizes[order[m]];
    ++assigned;
  }
  return sizes;
}

SystemConfig validate_config(const SystemParameters& raw) {
  const auto pools = raw.beta.size();
  if (pools == 0) throw Error(ErrorCode::BadParameter, "at least one pool is required");
  if (raw.mu.size() != pools || raw.buffer.size() != pools) {
    throw Error(ErrorCode::BadParameter, "beta, mu and buffer must have one entry per pool");
  }
  if (raw.routers < 1) throw Error(ErrorCode::BadParameter, "router count must be >= 1");
  if (raw.n < 1) throw Error(ErrorCode::BadParameter, "n must be a positive integer");
  if (!(raw.lambda >= 0.0) || !std::isfinite(raw.lambda)) {
    throw Error(ErrorCode::BadParameter, "lambda must be finite and nonnegative");
  }
  double beta_sum = 0.0;
  for (std::size_t j = 0; j < pools; ++j) {
    if (!(raw.beta[j] > 0.0)) throw Error(ErrorCode::BadFractions, "every beta_j must be positive");
    if (!(raw.mu[j] > 0.0) || !std::isfinite(raw.mu[j])) {
      throw Error(ErrorCode::BadParameter, "every mu_j must be positive and finite");
    }
    if (raw.buffer[j] < 1) throw Error(ErrorCode::BadParameter, "every buffer must be >= 1");
    beta_sum += raw.beta[j];
  }
  if (std::abs(beta_sum - 1.0) > 1e-12) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "pool fractions sum to " << beta_sum << ", expected 1";
    throw Error(ErrorCode::BadFractions, msg.str());
  }
  double capacity = 0.0;
  for (std::size_t j = 0; j < pools; ++j) capacity += raw.beta[j] * raw.mu[j];
  if (!(raw.lambda < capacity)) {
    std::ostringstream msg;
    msg << "subcritical load condition lambda < sum_j beta_j mu_j violated (lambda = " << raw.lambda
        << ", capacity = " << capacity << ")";
    throw Error(ErrorCode::NonSubcritical, msg.str());
  }

  SystemConfig cfg;
  cfg.routers_ = raw.routers;
  cfg.beta_ = raw.beta;
  cfg.mu_ = raw.mu;
  cfg.buffer_ = raw.buffer;
  cfg.lambda_ = raw.lambda;
  cfg.n_ = raw.n;
  cfg.pool_size_ = round_pool_sizes(raw.beta, raw.n);
  for (std::size_t j = 0; j < pools; ++j) {
    if (cfg.pool_size_[j] == 0) {
      throw Error(ErrorCode::EmptyPool, "pool " + std::to_string(j + 1) + " has no servers at n = " +
                                            std::to_string(raw.n));
    }
  }
  cfg.pool_offset_.resize(pools);
  cfg.server_pool_.reserve(static_cast<std::size_t>(raw.n));
  std::int64_t offset = 0;
  for (std::size_t j = 0; j < pools; ++j) {
    cfg.pool_offset_[j] = offset;
    offset += cfg.pool_size_[j];
    cfg.server_pool_.insert(cfg.server_pool_.end(), static_cast<std::size_t>(cfg.pool_size_[j]),
                            static_cast<int>(j));
  }
  return cfg;
}

bool SystemConfig::unit_buffers() const noexcept {
  return std::all_of(buffer_.begin(), buffer_.end(), [](BufferSize b) { return b == 1; });
}

bool SystemConfig::all_finite_buffers() const noexcept {
  return std::none_of(buffer_.begin(), buffer_.end(), is_unbounded);
}

double SystemConfig::capacity() const noexcept {
  double c = 0.0;
  for (std::size_t j = 0; j < beta_.size(); ++j) c += beta_[j] * mu_[j];
  return c;
}

SystemParameters SystemConfig::parameters() const {
  return SystemParameters{routers_, beta_, mu_, buffer_, lambda_, n_};
}

SystemConfig SystemConfig::with_buffers(const std::vector<BufferSize>& buffers) const {
  auto raw = parameters();
  raw.buffer = buffers;
  return validate_config(raw);
}

}  // namespace pullsim
