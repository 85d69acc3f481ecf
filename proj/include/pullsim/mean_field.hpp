#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "pullsim/error.hpp"

namespace pullsim {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Mean-field (fluid-scale) state s = (x, xi).
//
//   x(k, j)  : fraction of all n servers that are in pool j and hold >= k customers,
//              k = 0..max_level(); rows beyond max_level() are implicitly zero.
//   xi(r, j) : fraction of all n servers that are idle in pool j with their
//              pull-message at router r (r is 0-based here).
//
// Membership in the state space S means x(0, j) = beta_j, x nonincreasing in k,
// and x(0, j) - x(1, j) = sum_r xi(r, j).
template <typename Scalar>
struct BasicMeanFieldState {
  Matrix<Scalar> x;
  Matrix<Scalar> xi;

  BasicMeanFieldState() = default;
  BasicMeanFieldState(Matrix<Scalar> x_in, Matrix<Scalar> xi_in) : x(std::move(x_in)), xi(std::move(xi_in)) {}

  // Zero state with levels 0..max_level for `pools` pools and `routers` routers.
  static BasicMeanFieldState zeros(Eigen::Index max_level, Eigen::Index pools, Eigen::Index routers) {
    return {Matrix<Scalar>::Zero(max_level + 1, pools), Matrix<Scalar>::Zero(routers, pools)};
  }

  Eigen::Index pools() const noexcept { return x.cols(); }
  Eigen::Index routers() const noexcept { return xi.rows(); }
  Eigen::Index max_level() const noexcept { return x.rows() - 1; }

  Scalar level(Eigen::Index k, Eigen::Index j) const {
    return k < x.rows() ? x(k, j) : Scalar(0);
  }
  // y_{k,j} = x_{k,j} - x_{k+1,j}: fraction in pool j with exactly k customers.
  Scalar exactly(Eigen::Index k, Eigen::Index j) const { return level(k, j) - level(k + 1, j); }

  // Per-router pull-message mass, sum_j xi(r, j).
  Vector<Scalar> router_mass() const { return xi.rowwise().sum(); }

  // Copy with levels padded with zeros up to max_level (never truncates).
  BasicMeanFieldState padded(Eigen::Index max_level) const {
    if (max_level <= this->max_level()) return *this;
    BasicMeanFieldState out = zeros(max_level, pools(), routers());
    out.x.topRows(x.rows()) = x;
    out.xi = xi;
    return out;
  }

  template <typename Other>
  BasicMeanFieldState<Other> cast() const {
    return {x.template cast<Other>(), xi.template cast<Other>()};
  }

  bool operator==(const BasicMeanFieldState& o) const {
    const auto k = std::max(max_level(), o.max_level());
    if (pools() != o.pools() || routers() != o.routers()) return false;
    const auto a = padded(k);
    const auto b = o.padded(k);
    return a.x == b.x && a.xi == b.xi;
  }
};

using MeanFieldState = BasicMeanFieldState<double>;

namespace detail {

template <typename Scalar>
void require_same_shape(const BasicMeanFieldState<Scalar>& a, const BasicMeanFieldState<Scalar>& b) {
  if (a.pools() != b.pools() || a.routers() != b.routers()) {
    throw Error(ErrorCode::DimensionMismatch, "mean-field states have different (J, R)");
  }
}

}  // namespace detail

// Largest violation of the state-space constraints (0 for a member of S).
template <typename Scalar>
Scalar membership_defect(const BasicMeanFieldState<Scalar>& s, const std::vector<double>& beta) {
  using std::abs;
  using std::max;
  Scalar worst(0);
  for (Eigen::Index j = 0; j < s.pools(); ++j) {
    worst = max(worst, abs(s.x(0, j) - Scalar(beta[static_cast<std::size_t>(j)])));
    for (Eigen::Index k = 1; k <= s.max_level(); ++k) {
      worst = max(worst, s.x(k, j) - s.x(k - 1, j));
    }
    worst = max(worst, -s.x(s.max_level(), j));
    worst = max(worst, abs(s.exactly(0, j) - s.xi.col(j).sum()));
    for (Eigen::Index r = 0; r < s.routers(); ++r) worst = max(worst, -s.xi(r, j));
  }
  return worst;
}

// The metric on S:
//   rho(s, s') = sum_j sum_k 2^-k |dx_kj| / (1 + |dx_kj|) + sum_j sum_r |dxi_rj|.
// Levels beyond both states' max_level are zero, so the k-sum is exact.
template <typename Scalar>
Scalar state_distance(const BasicMeanFieldState<Scalar>& a, const BasicMeanFieldState<Scalar>& b) {
  detail::require_same_shape(a, b);
  const auto levels = std::max(a.max_level(), b.max_level());
  const Matrix<Scalar> dx = (a.padded(levels).x - b.padded(levels).x).cwiseAbs();
  const Vector<Scalar> weight =
      Vector<Scalar>::NullaryExpr(levels + 1, [](Eigen::Index k) { return Scalar(std::ldexp(1.0, -int(k))); });
  const Scalar x_part = (weight.asDiagonal() * (dx.array() / (Scalar(1) + dx.array())).matrix()).sum();
  return x_part + (a.xi - b.xi).cwiseAbs().sum();
}

// a <= b in the mean-field order: x_a <= x_b componentwise and xi_a >= xi_b componentwise.
template <typename Scalar>
bool mean_field_leq(const BasicMeanFieldState<Scalar>& a, const BasicMeanFieldState<Scalar>& b) {
  detail::require_same_shape(a, b);
  const auto levels = std::max(a.max_level(), b.max_level());
  return (a.padded(levels).x.array() <= b.padded(levels).x.array()).all() &&
         (a.xi.array() >= b.xi.array()).all();
}

}  // namespace pullsim
