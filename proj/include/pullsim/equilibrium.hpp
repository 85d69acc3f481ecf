#pragma once

#include <cmath>
#include <string>

#include "pullsim/config.hpp"
#include "pullsim/error.hpp"
#include "pullsim/mean_field.hpp"

namespace pullsim {

// Equilibrium point s*: x*_{1,j} = nu_j, no queues beyond one customer, and the idle
// servers of every pool split evenly over the routers.
template <typename Scalar>
struct BasicEquilibriumPoint {
  Vector<Scalar> nu;
  // Common ratio nu_j mu_j / (beta_j - nu_j).
  Scalar c{0};
  BasicMeanFieldState<Scalar> s_star;
  int iterations = 0;
};

using EquilibriumPoint = BasicEquilibriumPoint<double>;

// g(c) = sum_j c beta_j mu_j / (mu_j + c): total service rate when nu_j = c beta_j / (mu_j + c).
template <typename Scalar>
Scalar equilibrium_rate(const SystemConfig& cfg, Scalar c) {
  Scalar g(0);
  for (int j = 0; j < cfg.pools(); ++j) {
    const Scalar mu(cfg.mu(j));
    g += c * Scalar(cfg.beta(j)) * mu / (mu + c);
  }
  return g;
}

template <typename Scalar>
BasicMeanFieldState<Scalar> equilibrium_state(const SystemConfig& cfg, const Vector<Scalar>& nu) {
  auto s = BasicMeanFieldState<Scalar>::zeros(1, cfg.pools(), cfg.routers());
  for (int j = 0; j < cfg.pools(); ++j) {
    const Scalar beta(cfg.beta(j));
    s.x(0, j) = beta;
    s.x(1, j) = nu(j);
    s.xi.col(j).setConstant((beta - nu(j)) / Scalar(cfg.routers()));
  }
  return s;
}

// Solves lambda = sum_j nu_j mu_j with nu_j mu_j / (beta_j - nu_j) equal across pools.
// The substitution nu_j = c beta_j / (mu_j + c) makes this the scalar equation g(c) = lambda
// with g strictly increasing from 0 towards sum_j beta_j mu_j; the root is bracketed by
// doubling and refined by bisection until |g(c) - lambda| <= tol.
template <typename Scalar = double>
BasicEquilibriumPoint<Scalar> solve_equilibrium(const SystemConfig& cfg, Scalar tol = Scalar(1e-12)) {
  using std::abs;
  const Scalar lambda(cfg.lambda());
  if (!(cfg.lambda() < cfg.capacity())) {
    throw Error(ErrorCode::NonSubcritical, "no equilibrium: lambda >= sum_j beta_j mu_j");
  }
  BasicEquilibriumPoint<Scalar> p;
  Scalar lo(0);
  Scalar hi(1);
  if (lambda > Scalar(0)) {
    while (!(equilibrium_rate(cfg, hi) > lambda)) {
      lo = hi;
      hi *= Scalar(2);
      if (++p.iterations > 200) throw Error(ErrorCode::NonSubcritical, "root bracketing did not terminate");
    }
    Scalar mid = (lo + hi) / Scalar(2);
    for (;;) {
      const Scalar g = equilibrium_rate(cfg, mid);
      if (abs(g - lambda) <= tol) break;
      (g < lambda ? lo : hi) = mid;
      const Scalar next = (lo + hi) / Scalar(2);
      if (next == mid || ++p.iterations > 200) break;  // bracket exhausted at working precision
      mid = next;
    }
    p.c = mid;
  }
  p.nu.resize(cfg.pools());
  for (int j = 0; j < cfg.pools(); ++j) {
    const Scalar mu(cfg.mu(j));
    p.nu(j) = p.c * Scalar(cfg.beta(j)) / (mu + p.c);
  }
  p.s_star = equilibrium_state(cfg, p.nu);
  return p;
}

// max(|sum_j nu_j mu_j - lambda|, max_{j,l} |ratio_j - ratio_l|), ratio_j = nu_j mu_j / (beta_j - nu_j).
template <typename Scalar>
Scalar equilibrium_residual(const Vector<Scalar>& nu, const SystemConfig& cfg) {
  using std::abs;
  using std::max;
  if (nu.size() != cfg.pools()) throw Error(ErrorCode::DimensionMismatch, "nu has the wrong length");
  Scalar flow(0);
  Scalar lo_ratio(0);
  Scalar hi_ratio(0);
  for (int j = 0; j < cfg.pools(); ++j) {
    const Scalar beta(cfg.beta(j));
    const Scalar mu(cfg.mu(j));
    if (!(nu(j) < beta)) {
      throw Error(ErrorCode::DegeneratePool, "nu_" + std::to_string(j + 1) + " >= beta_" + std::to_string(j + 1));
    }
    flow += nu(j) * mu;
    const Scalar ratio = nu(j) * mu / (beta - nu(j));
    lo_ratio = j == 0 ? ratio : std::min(lo_ratio, ratio);
    hi_ratio = j == 0 ? ratio : max(hi_ratio, ratio);
  }
  return max(abs(flow - Scalar(cfg.lambda())), hi_ratio - lo_ratio);
}

template <typename Scalar>
Scalar equilibrium_residual(const BasicEquilibriumPoint<Scalar>& p, const SystemConfig& cfg) {
  return equilibrium_residual(p.nu, cfg);
}

}  // namespace pullsim
