#include "pullsim/estimate.hpp"

#include <cmath>
#include <functional>

#include "pullsim/error.hpp"

namespace pullsim {

namespace {

double standard_error(const std::vector<double>& values) {
  const auto b = static_cast<double>(values.size());
  if (values.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= b;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (b - 1.0) / b);
}

Matrix<double> padded_rows(const Matrix<double>& m, Eigen::Index rows) {
  if (m.rows() >= rows) return m;
  Matrix<double> out = Matrix<double>::Zero(rows, m.cols());
  out.topRows(m.rows()) = m;
  return out;
}

MeanFieldState window_average(const TraceSample& from, const TraceSample& to, double servers) {
  const auto rows = std::max(from.integral_x.rows(), to.integral_x.rows());
  const double scale = 1.0 / ((to.time - from.time) * servers);
  Matrix<double> x = (padded_rows(to.integral_x, rows) - padded_rows(from.integral_x, rows)) * scale;
  // Trim trailing all-zero levels (keep at least levels 0 and 1).
  Eigen::Index keep = rows;
  while (keep > 2 && x.row(keep - 1).isZero()) --keep;
  return {x.topRows(keep), (to.integral_xi - from.integral_xi) * scale};
}

// Pooled ratio and batch-means standard error of num/den; nullopt if the pooled denominator is 0.
std::optional<Estimate> ratio(const std::vector<const TraceSample*>& edges,
                              const std::function<std::uint64_t(const Counters&)>& num,
                              const std::function<std::uint64_t(const Counters&)>& den) {
  const auto& first = edges.front()->counts;
  const auto& last = edges.back()->counts;
  const double total_den = static_cast<double>(den(last) - den(first));
  if (total_den == 0.0) return std::nullopt;
  std::vector<double> per_batch;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    const double d = static_cast<double>(den(edges[b + 1]->counts) - den(edges[b]->counts));
    if (d > 0.0) per_batch.push_back(static_cast<double>(num(edges[b + 1]->counts) - num(edges[b]->counts)) / d);
  }
  return Estimate{static_cast<double>(num(last) - num(first)) / total_den, standard_error(per_batch)};
}

}  // namespace

SteadyStateEstimate estimate_steady_state(const std::vector<TraceSample>& trace, const SimMetrics& metrics,
                                          double warmup, const EstimateOptions& opts) {
  std::vector<const TraceSample*> window;
  const double slack = 1e-9 * std::max(1.0, std::abs(warmup));
  for (const auto& s : trace) {
    if (s.time >= warmup - slack) window.push_back(&s);
  }
  const auto intervals = window.empty() ? 0 : static_cast<int>(window.size()) - 1;
  const int batches = std::min(opts.batches, intervals);
  if (batches < 10) {
    throw Error(ErrorCode::InsufficientData,
                "need at least 10 post-warmup batches, have " + std::to_string(std::max(batches, 0)));
  }
  const int per_batch = intervals / batches;
  std::vector<const TraceSample*> edges;
  for (int b = 0; b <= batches; ++b) edges.push_back(window[static_cast<std::size_t>(b * per_batch)]);
  const double servers = static_cast<double>(metrics.servers);

  SteadyStateEstimate est;
  est.batches = batches;
  est.window = edges.back()->time - edges.front()->time;
  if (!(est.window > 0.0)) throw Error(ErrorCode::InsufficientData, "post-warmup window has zero length");

  est.blocking = ratio(edges, [](const Counters& c) { return c.blocked(); }, [](const Counters& c) { return c.arrivals; });
  est.waiting = ratio(edges, [](const Counters& c) { return c.waited; }, [](const Counters& c) { return c.assigned; });
  est.messages_per_customer =
      ratio(edges, [](const Counters& c) { return c.messages(); }, [](const Counters& c) { return c.arrivals; });
  est.unpulled = ratio(edges, [](const Counters& c) { return c.unpulled; }, [](const Counters& c) { return c.arrivals; });

  est.average = window_average(*edges.front(), *edges.back(), servers);
  std::vector<MeanFieldState> batch_states;
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    batch_states.push_back(window_average(*edges[b], *edges[b + 1], servers));
  }

  const auto pools = est.average.pools();
  const auto routers = est.average.routers();
  est.x1_mean = est.average.x.row(1).transpose();
  est.x1_se.resize(pools);
  est.xi_se.resize(routers, pools);
  std::vector<double> values(batch_states.size());
  for (Eigen::Index j = 0; j < pools; ++j) {
    for (std::size_t b = 0; b < batch_states.size(); ++b) values[b] = batch_states[b].level(1, j);
    est.x1_se(j) = standard_error(values);
    for (Eigen::Index r = 0; r < routers; ++r) {
      for (std::size_t b = 0; b < batch_states.size(); ++b) values[b] = batch_states[b].xi(r, j);
      est.xi_se(r, j) = standard_error(values);
    }
  }
  for (std::size_t b = 0; b < batch_states.size(); ++b) values[b] = batch_states[b].x.row(1).sum();
  est.busy_fraction = {est.x1_mean.sum(), standard_error(values)};

  if (opts.reference) {
    for (std::size_t b = 0; b < batch_states.size(); ++b) values[b] = state_distance(batch_states[b], *opts.reference);
    est.rho_to_star = Estimate{state_distance(est.average, *opts.reference), standard_error(values)};
  }
  return est;
}

}  // namespace pullsim
