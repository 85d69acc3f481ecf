#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace pullsim {

using BufferSize = std::int64_t;
inline constexpr BufferSize kUnboundedBuffer = std::numeric_limits<BufferSize>::max();

inline constexpr bool is_unbounded(BufferSize b) noexcept { return b == kUnboundedBuffer; }

// Unvalidated model parameters, as read from a file or built by hand.
struct SystemParameters {
  int routers = 1;
  std::vector<double> beta;
  std::vector<double> mu;
  std::vector<BufferSize> buffer;
  double lambda = 0.0;
  std::int64_t n = 0;
};

// Validated model: pools are contiguous server ranges [offset_j, offset_j + N_j).
class SystemConfig {
 public:
  int pools() const noexcept { return static_cast<int>(beta_.size()); }
  int routers() const noexcept { return routers_; }
  std::int64_t servers() const noexcept { return n_; }
  double lambda() const noexcept { return lambda_; }
  // Total arrival rate Lambda = lambda * n.
  double total_arrival_rate() const noexcept { return lambda_ * static_cast<double>(n_); }

  const std::vector<double>& beta() const noexcept { return beta_; }
  const std::vector<double>& mu() const noexcept { return mu_; }
  const std::vector<BufferSize>& buffer() const noexcept { return buffer_; }
  const std::vector<std::int64_t>& pool_sizes() const noexcept { return pool_size_; }

  double beta(int j) const { return beta_[j]; }
  double mu(int j) const { return mu_[j]; }
  BufferSize buffer(int j) const { return buffer_[j]; }
  std::int64_t pool_size(int j) const { return pool_size_[j]; }
  std::int64_t pool_offset(int j) const { return pool_offset_[j]; }
  int pool_of(std::int64_t server) const { return server_pool_[static_cast<std::size_t>(server)]; }

  bool unit_buffers() const noexcept;
  bool all_finite_buffers() const noexcept;
  // Sum_j beta_j mu_j, the normalized service capacity.
  double capacity() const noexcept;

  SystemParameters parameters() const;

  // Same model with different buffers (used for coupled runs with larger buffers).
  SystemConfig with_buffers(const std::vector<BufferSize>& buffers) const;

 private:
  friend SystemConfig validate_config(const SystemParameters& raw);

  int routers_ = 1;
  std::vector<double> beta_;
  std::vector<double> mu_;
  std::vector<BufferSize> buffer_;
  double lambda_ = 0.0;
  std::int64_t n_ = 0;
  std::vector<std::int64_t> pool_size_;
  std::vector<std::int64_t> pool_offset_;
  std::vector<int> server_pool_;
};

// Throws Error{NonSubcritical | BadFractions | EmptyPool | BadParameter}.
SystemConfig validate_config(const SystemParameters& raw);

// Largest-remainder rounding of beta_j * n to integers summing to n.
std::vector<std::int64_t> round_pool_sizes(const std::vector<double>& beta, std::int64_t n);

}  // namespace pullsim
