#pragma once

#include <optional>
#include <vector>

#include "pullsim/mean_field.hpp"
#include "pullsim/simulator.hpp"

namespace pullsim {

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

struct SteadyStateEstimate {
  int batches = 0;
  double window = 0.0;  // post-warmup time covered
  // nullopt when the denominator is zero (e.g. no arrivals at all).
  std::optional<Estimate> blocking;
  std::optional<Estimate> waiting;
  std::optional<Estimate> messages_per_customer;  // messages per arriving customer
  std::optional<Estimate> unpulled;               // arrivals routed without a pull-message
  std::optional<Estimate> rho_to_star;            // only with a reference state
  MeanFieldState average;                         // time-averaged mean-field state
  Matrix<double> xi_se;
  Vector<double> x1_mean;
  Vector<double> x1_se;
  // Fraction of all servers that are busy, sum_j x_{1,j}.
  Estimate busy_fraction;
};

struct EstimateOptions {
  int batches = 20;
  std::optional<MeanFieldState> reference;
};

// Batch means over the trace samples at or after `warmup`: consecutive sample intervals
// are grouped into `batches` equal batches (the remainder at the end is dropped).
// Point estimates pool the whole window; standard errors come from the spread of batch
// values. Ratios: blocking = blocked / arrivals, waiting = waited / assigned.
// Throws InsufficientData with fewer than 10 batches.
SteadyStateEstimate estimate_steady_state(const std::vector<TraceSample>& trace, const SimMetrics& metrics,
                                          double warmup, const EstimateOptions& opts = {});

}  // namespace pullsim
