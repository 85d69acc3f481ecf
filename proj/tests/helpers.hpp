#pragma once

#include <doctest.h>

#include "pullsim/config.hpp"
#include "pullsim/error.hpp"

#define CHECK_CODE(expr, expected)                                   \
  do {                                                               \
    bool thrown_ = false;                                            \
    try {                                                            \
      (void)(expr);                                                  \
    } catch (const ::pullsim::Error& e_) {                           \
      thrown_ = true;                                                \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());             \
    }                                                                \
    CHECK_MESSAGE(thrown_, "expected an exception from " #expr);     \
  } while (0)

namespace testing {

inline pullsim::SystemConfig make_config(std::vector<double> beta, std::vector<double> mu, double lambda,
                                         std::int64_t n, int routers = 1,
                                         pullsim::BufferSize buffer = pullsim::kUnboundedBuffer) {
  pullsim::SystemParameters p;
  p.routers = routers;
  p.buffer.assign(beta.size(), buffer);
  p.beta = std::move(beta);
  p.mu = std::move(mu);
  p.lambda = lambda;
  p.n = n;
  return pullsim::validate_config(p);
}

// Two-pool configuration used throughout: beta = (1/2, 1/2), mu = (1, 2), lambda = 1.
inline pullsim::SystemConfig two_pool(std::int64_t n, int routers = 3,
                                      pullsim::BufferSize buffer = pullsim::kUnboundedBuffer) {
  return make_config({0.5, 0.5}, {1.0, 2.0}, 1.0, n, routers, buffer);
}

}  // namespace testing
