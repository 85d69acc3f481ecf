#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pullsim/config.hpp"
#include "pullsim/error.hpp"
#include "pullsim/mean_field.hpp"

namespace pullsim {

// Time derivative of a mean-field state; same shape as the state it belongs to.
// Row 0 of x is always zero (pool masses are conserved).
template <typename Scalar>
struct BasicStateDerivative {
  Matrix<Scalar> x;
  Matrix<Scalar> xi;
};

using StateDerivative = BasicStateDerivative<double>;

template <typename Scalar>
struct BasicFluidTrajectory {
  std::vector<Scalar> times;
  std::vector<BasicMeanFieldState<Scalar>> states;
  Scalar step{0};

  const BasicMeanFieldState<Scalar>& back() const { return states.back(); }
};

using FluidTrajectory = BasicFluidTrajectory<double>;

struct FluidOptions {
  // Below this per-router pull-message mass the boundary field is used.
  double xi_epsilon = 1e-12;
  // Keep every k-th grid state (the final state is always kept).
  std::int64_t store_every = 1;
};

// Interior field, valid while every router holds pull-message mass:
//   dx_{1,j}  = (lambda/R) sum_r xi_{r,j} / sum_l xi_{r,l} - mu_j y_{1,j}
//   dx_{k,j}  = -mu_j y_{k,j},                                  k >= 2
//   dxi_{r,j} = (1/R) mu_j y_{1,j} - (lambda/R) xi_{r,j} / sum_l xi_{r,l}
template <typename Scalar>
BasicStateDerivative<Scalar> fluid_derivative(const BasicMeanFieldState<Scalar>& s, const SystemConfig& cfg,
                                              Scalar min_router_mass = Scalar(0)) {
  if (s.pools() != cfg.pools() || s.routers() != cfg.routers()) {
    throw Error(ErrorCode::DimensionMismatch, "state shape does not match the configuration");
  }
  if (s.max_level() < 1) throw Error(ErrorCode::DimensionMismatch, "state must carry level 1");
  const Vector<Scalar> mass = s.router_mass();
  for (Eigen::Index r = 0; r < mass.size(); ++r) {
    if (!(mass(r) > min_router_mass)) {
      throw Error(ErrorCode::EmptyRouter, "router " + std::to_string(r + 1) + " holds no pull-messages");
    }
  }
  const Scalar routers(cfg.routers());
  const Scalar lambda(cfg.lambda());
  // share(r, j): fraction of router r's arrivals sent to pool j.
  const Matrix<Scalar> share = mass.cwiseInverse().asDiagonal() * s.xi;

  BasicStateDerivative<Scalar> d{Matrix<Scalar>::Zero(s.x.rows(), s.pools()),
                                 Matrix<Scalar>::Zero(s.routers(), s.pools())};
  for (Eigen::Index j = 0; j < s.pools(); ++j) {
    const Scalar mu(cfg.mu(static_cast<int>(j)));
    for (Eigen::Index k = 1; k <= s.max_level(); ++k) d.x(k, j) = -mu * s.exactly(k, j);
    const Scalar release = mu * s.exactly(1, j) / routers;
    d.x(1, j) += lambda / routers * share.col(j).sum();
    d.xi.col(j) = Vector<Scalar>::Constant(s.routers(), release) - lambda / routers * share.col(j);
  }
  return d;
}

// Right derivative at a state with no pull-messages anywhere. Requires y_{1,j} mu_j > 0 for
// every pool and sum_j y_{1,j} mu_j > lambda; arrivals then follow the newly released
// pull-messages, i.e. pool j receives the share w_j / sum_l w_l with w_j = y_{1,j} mu_j:
//   d+xi_{r,j} = (1/R) [w_j - lambda w_j / sum_l w_l] > 0
//   d+x_{1,j}  = lambda w_j / sum_l w_l - w_j
template <typename Scalar>
BasicStateDerivative<Scalar> boundary_derivative(const BasicMeanFieldState<Scalar>& s, const SystemConfig& cfg,
                                                 Scalar xi_tolerance = Scalar(0)) {
  if (s.pools() != cfg.pools() || s.routers() != cfg.routers()) {
    throw Error(ErrorCode::DimensionMismatch, "state shape does not match the configuration");
  }
  if (s.max_level() < 1) throw Error(ErrorCode::PreconditionFailed, "no busy servers in the state");
  if (s.xi.cwiseAbs().maxCoeff() > xi_tolerance) {
    throw Error(ErrorCode::PreconditionFailed, "boundary field requires xi = 0 everywhere");
  }
  const Scalar lambda(cfg.lambda());
  const Scalar routers(cfg.routers());
  Vector<Scalar> w(s.pools());
  for (Eigen::Index j = 0; j < s.pools(); ++j) {
    w(j) = s.exactly(1, j) * Scalar(cfg.mu(static_cast<int>(j)));
    if (!(w(j) > Scalar(0))) {
      throw Error(ErrorCode::PreconditionFailed, "pool " + std::to_string(j + 1) + " has no service flow y_1 mu");
    }
  }
  const Scalar total = w.sum();
  if (!(total > lambda)) throw Error(ErrorCode::PreconditionFailed, "sum_j y_{1,j} mu_j <= lambda");

  BasicStateDerivative<Scalar> d{Matrix<Scalar>::Zero(s.x.rows(), s.pools()),
                                 Matrix<Scalar>::Zero(s.routers(), s.pools())};
  for (Eigen::Index j = 0; j < s.pools(); ++j) {
    const Scalar mu(cfg.mu(static_cast<int>(j)));
    for (Eigen::Index k = 2; k <= s.max_level(); ++k) d.x(k, j) = -mu * s.exactly(k, j);
    const Scalar routed = lambda * w(j) / total;
    d.x(1, j) = routed - w(j);
    d.xi.col(j).setConstant((w(j) - routed) / routers);
  }
  return d;
}

namespace detail {

template <typename Scalar>
BasicStateDerivative<Scalar> fluid_field(const BasicMeanFieldState<Scalar>& s, const SystemConfig& cfg,
                                         Scalar eps) {
  const Vector<Scalar> mass = s.router_mass();
  if ((mass.array() > eps).all()) return fluid_derivative(s, cfg, Scalar(0));
  if ((mass.array() <= eps).all()) {
    try {
      return boundary_derivative(s, cfg, eps);
    } catch (const Error& e) {
      throw Error(ErrorCode::UndefinedField, std::string("boundary field not applicable: ") + e.what());
    }
  }
  throw Error(ErrorCode::UndefinedField, "some routers are starved of pull-messages while others are not");
}

template <typename Scalar>
BasicMeanFieldState<Scalar> advance(const BasicMeanFieldState<Scalar>& s, const BasicStateDerivative<Scalar>& d,
                                    Scalar h) {
  return {s.x + h * d.x, s.xi + h * d.xi};
}

// Clamps to nonnegative, keeps pool masses, restores monotone levels and
// x_{0,j} - x_{1,j} = sum_r xi_{r,j}.
template <typename Scalar>
void project_to_state_space(BasicMeanFieldState<Scalar>& s, const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& mass) {
  using std::min;
  s.x = s.x.cwiseMax(Scalar(0));
  s.xi = s.xi.cwiseMax(Scalar(0));
  s.x.row(0) = mass;
  for (Eigen::Index k = 1; k <= s.max_level(); ++k) s.x.row(k) = s.x.row(k).cwiseMin(s.x.row(k - 1));
  for (Eigen::Index j = 0; j < s.pools(); ++j) {
    const Scalar idle = s.exactly(0, j);
    const Scalar held = s.xi.col(j).sum();
    if (held > Scalar(0)) {
      s.xi.col(j) *= idle / held;
    } else {
      s.xi.col(j).setConstant(idle / Scalar(s.routers()));
    }
  }
}

}  // namespace detail

// Fixed-step classical Runge-Kutta integration of the fluid field from s0 over [0, T].
template <typename Scalar>
BasicFluidTrajectory<Scalar> integrate_fluid(const BasicMeanFieldState<Scalar>& s0, Scalar horizon, Scalar h,
                                             const SystemConfig& cfg, const FluidOptions& opts = {}) {
  using std::ceil;
  if (!(h > Scalar(0))) throw Error(ErrorCode::BadParameter, "integration step must be positive");
  if (!(horizon >= Scalar(0))) throw Error(ErrorCode::BadParameter, "horizon must be nonnegative");
  if (s0.pools() != cfg.pools() || s0.routers() != cfg.routers()) {
    throw Error(ErrorCode::DimensionMismatch, "initial state shape does not match the configuration");
  }
  const Scalar eps(opts.xi_epsilon);
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> mass = s0.x.row(0);
  const auto steps = static_cast<std::int64_t>(ceil(horizon / h - Scalar(1e-9)));
  const auto stride = std::max<std::int64_t>(opts.store_every, 1);

  BasicFluidTrajectory<Scalar> traj;
  traj.step = h;
  traj.times.reserve(static_cast<std::size_t>(steps / stride + 2));
  traj.states.reserve(static_cast<std::size_t>(steps / stride + 2));
  traj.times.push_back(Scalar(0));
  // Level 1 must exist for arrivals to land somewhere.
  BasicMeanFieldState<Scalar> s = s0.padded(1);
  traj.states.push_back(s);

  for (std::int64_t m = 1; m <= steps; ++m) {
    const Scalar t_prev = Scalar(m - 1) * h;
    const Scalar t_next = m == steps ? horizon : Scalar(m) * h;
    const Scalar dt = t_next - t_prev;
    const auto k1 = detail::fluid_field(s, cfg, eps);
    const auto k2 = detail::fluid_field(detail::advance(s, k1, dt / Scalar(2)), cfg, eps);
    const auto k3 = detail::fluid_field(detail::advance(s, k2, dt / Scalar(2)), cfg, eps);
    const auto k4 = detail::fluid_field(detail::advance(s, k3, dt), cfg, eps);
    s.x += dt / Scalar(6) * (k1.x + Scalar(2) * k2.x + Scalar(2) * k3.x + k4.x);
    s.xi += dt / Scalar(6) * (k1.xi + Scalar(2) * k2.xi + Scalar(2) * k3.xi + k4.xi);
    detail::project_to_state_space(s, mass);
    if (m % stride == 0 || m == steps) {
      traj.times.push_back(t_next);
      traj.states.push_back(s);
    }
  }
  return traj;
}

}  // namespace pullsim
