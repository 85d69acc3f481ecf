#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "pullsim/equilibrium.hpp"

using namespace pullsim;
using testing::make_config;

TEST_CASE("single pool: nu mu = lambda") {
  for (int routers : {1, 2, 5}) {
    const auto cfg = make_config({1.0}, {1.0}, 0.7, 10, routers);
    const auto eq = solve_equilibrium(cfg);
    CHECK(eq.nu(0) == doctest::Approx(0.7).epsilon(1e-12));
    for (int r = 0; r < routers; ++r) CHECK(eq.s_star.xi(r, 0) == doctest::Approx(0.3 / routers).epsilon(1e-11));
    CHECK(equilibrium_residual(eq, cfg) <= 1e-10);
  }
}

TEST_CASE("equal service rates: nu proportional to beta") {
  const auto cfg = make_config({0.3, 0.7}, {2.0, 2.0}, 1.5, 10, 2);
  const auto eq = solve_equilibrium(cfg);
  CHECK(eq.nu(0) == doctest::Approx(0.3 * 1.5 / 2.0).epsilon(1e-12));
  CHECK(eq.nu(1) == doctest::Approx(0.7 * 1.5 / 2.0).epsilon(1e-12));
  CHECK(equilibrium_residual(eq, cfg) <= 1e-10);
}

TEST_CASE("two pools: root of 0.5c^2 - c - 2 = 0") {
  const auto cfg = make_config({0.5, 0.5}, {1.0, 2.0}, 1.0, 10, 3);
  const auto eq = solve_equilibrium(cfg);
  CHECK(std::abs(eq.c - 3.23606797749978969641) <= 1e-9);
  CHECK(std::abs(eq.nu(0) - 0.381966011250105151796) <= 1e-9);
  CHECK(std::abs(eq.nu(1) - 0.309016994374947424102) <= 1e-9);
  CHECK(equilibrium_residual(eq, cfg) <= 1e-10);
  CHECK(eq.iterations <= 200);
  // s*: x_1 = nu, xi = (beta - nu) / R, level 0 = beta.
  CHECK(eq.s_star.x(0, 0) == 0.5);
  CHECK(eq.s_star.level(1, 1) == eq.nu(1));
  CHECK(eq.s_star.level(2, 0) == 0.0);
  CHECK(eq.s_star.xi(2, 0) == doctest::Approx((0.5 - eq.nu(0)) / 3).epsilon(1e-14));
  CHECK(membership_defect(eq.s_star, cfg.beta()) < 1e-15);
}

TEST_CASE("long double solve agrees with double") {
  const auto cfg = make_config({0.5, 0.5}, {1.0, 2.0}, 1.0, 10, 3);
  const auto eq = solve_equilibrium<long double>(cfg, 1e-15L);
  CHECK(std::abs(static_cast<double>(eq.c) - 3.23606797749978969641) <= 1e-12);
}

TEST_CASE("residual: perturbation and poor guesses") {
  const auto one = make_config({1.0}, {1.0}, 0.7, 10);
  auto eq = solve_equilibrium(one);
  eq.nu(0) += 0.01;
  CHECK(equilibrium_residual(eq, one) == doctest::Approx(0.01).epsilon(1e-9));

  const auto two = make_config({0.5, 0.5}, {1.0, 2.0}, 1.0, 10);
  Vector<double> guess(2);
  guess << 0.25, 0.25;
  // flow 0.75 misses lambda by 0.25; the pull ratios are 1 and 2.
  CHECK(equilibrium_residual(guess, two) == doctest::Approx(1.0));

  guess << 0.5, 0.1;
  CHECK_CODE(equilibrium_residual(guess, two), ErrorCode::DegeneratePool);
  CHECK_CODE(equilibrium_residual(Vector<double>(Vector<double>::Zero(3)), two), ErrorCode::DimensionMismatch);
}

TEST_CASE("zero load: c = 0 and every server idle") {
  const auto cfg = make_config({0.5, 0.5}, {1.0, 2.0}, 0.0, 10, 2);
  const auto eq = solve_equilibrium(cfg);
  CHECK(eq.c == 0.0);
  CHECK(eq.nu.isZero());
  CHECK(eq.s_star.xi(1, 1) == 0.25);
}

TEST_CASE("rate function is strictly increasing in c") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double b = u(gen);
    const double total = b + 1.0;
    const auto cfg = make_config({b / total, 1.0 / total}, {u(gen) * 3, u(gen) * 3}, 0.0, 1000);
    double c1 = u(gen) * 10;
    double c2 = c1 + u(gen);
    CHECK(equilibrium_rate(cfg, c1) < equilibrium_rate(cfg, c2));
  }
}

TEST_CASE("scaling every mu and lambda by a common factor scales c and keeps nu") {
  const auto a = make_config({0.2, 0.3, 0.5}, {0.5, 1.0, 3.0}, 1.2, 100);
  const auto b = make_config({0.2, 0.3, 0.5}, {2.5, 5.0, 15.0}, 6.0, 100);
  const auto ea = solve_equilibrium(a);
  const auto eb = solve_equilibrium(b);
  CHECK(eb.c == doctest::Approx(5.0 * ea.c).epsilon(1e-10));
  for (int j = 0; j < 3; ++j) CHECK(eb.nu(j) == doctest::Approx(ea.nu(j)).epsilon(1e-10));
}

TEST_CASE("subcritical gate") {
  SystemParameters p;
  p.beta = {0.5, 0.5};
  p.mu = {1.0, 2.0};
  p.buffer = {kUnboundedBuffer, kUnboundedBuffer};
  p.lambda = 1.49;
  p.n = 10;
  const auto eq = solve_equilibrium(validate_config(p));
  CHECK(eq.nu(0) < 0.5);
  CHECK(eq.nu(1) < 0.5);
  CHECK(eq.nu(0) + 2 * eq.nu(1) == doctest::Approx(1.49).epsilon(1e-11));
}
