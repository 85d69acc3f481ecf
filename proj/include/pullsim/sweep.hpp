#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pullsim/experiment.hpp"
#include "pullsim/mean_field.hpp"

namespace pullsim {

// One (policy, n, replication) cell of a sweep.
struct ResultRow {
  std::string policy;
  std::int64_t n = 0;
  int replication = 0;
  std::uint64_t seed = 0;
  std::optional<double> blocking_prob;
  std::optional<double> waiting_prob;
  std::optional<double> msgs_per_customer;
  std::optional<double> rho_to_star;
  Matrix<double> xi_bar;  // R x J
  Vector<double> x1_bar;  // J
  std::optional<double> blocking_se;
  std::optional<double> waiting_se;
  std::optional<double> msgs_se;
  std::optional<double> rho_se;
  std::optional<double> unpulled_prob;
  // Whole-run messages per handled customer (exact bound checks use this one).
  std::optional<double> run_msgs_per_customer;
  Vector<double> nu;
  Matrix<double> xi_star;
  std::string error;  // empty unless the cell failed
};

struct ResultTable {
  int pools = 0;
  int routers = 0;
  std::vector<ResultRow> rows;
};

struct SweepOptions {
  unsigned jobs = 1;
};

// Seed of one cell; a pure function of the grid coordinates and the master seed.
std::uint64_t cell_seed(std::uint64_t master, std::size_t policy_index, std::int64_t n, int replication);

// Runs every (policy, n, replication) cell; rows come back ordered by policy (spec order),
// then n (spec order), then replication, regardless of `jobs`.
ResultTable run_sweep(const ExperimentSpec& spec, const SweepOptions& opts = {});

// Flattened table, the common form of the CSV and JSON exports.
//   policy, n, replication, blocking_prob, waiting_prob, msgs_per_customer, rho_to_star,
//   xi_bar_<r>_<j> (r-major), x1_bar_<j>, seed, blocking_se, waiting_se, msgs_se, rho_se,
//   unpulled_prob, run_msgs_per_customer, nu_<j>, xi_star_<r>_<j> (r-major), error
// Missing values (not applicable) are empty cells in CSV and null in JSON.
using Cell = std::variant<std::monostate, double, std::string>;

struct FlatTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  bool operator==(const FlatTable&) const = default;
};

std::vector<std::string> table_columns(int pools, int routers);
FlatTable flatten(const ResultTable& table);

// Shortest decimal representation that parses back to the same double.
std::string format_number(double v);

std::string to_csv(const FlatTable& table);
std::string to_json(const FlatTable& table);
FlatTable parse_csv(const std::string& text);
FlatTable parse_json(const std::string& text);

// Writes the table; throws IoError.
void export_table(const ResultTable& table, TableFormat format, const std::filesystem::path& path);

}  // namespace pullsim
