#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pullsim/config.hpp"
#include "pullsim/simulator.hpp"

namespace pullsim {

enum class TableFormat { Csv, Json };

TableFormat parse_format(const std::string& text);

// One sweep: a model without n, the n values to run, and run controls.
struct ExperimentSpec {
  SystemParameters base;  // base.n is ignored
  std::vector<std::int64_t> n_list;
  std::vector<Policy> policies;
  double horizon = 0.0;
  double warmup = 0.0;
  int replications = 1;
  int batches = 20;
  std::uint64_t seed = 1;
  InitKind init = InitKind::Empty;
  std::string output_path;  // empty = stdout
  TableFormat output_format = TableFormat::Csv;

  SystemConfig config_for(std::int64_t n) const;
};

// JSON document schema (keys not listed are rejected):
//   lambda (number), beta (number[]), mu (number[]), routers (int, default 1),
//   buffer (int | "inf" | (int | "inf")[], default "inf"), n (int | int[]),
//   policies (string | string[], default ["PULL2"]), horizon (number),
//   warmup (number, default 0.2 * horizon), replications (int, default 1),
//   batches (int, default 20), seed (int, default 1), init ("empty" | "full", default "empty"),
//   output ({"path": string, "format": "csv" | "json"}, optional).
// Throws ParseError (with line/field) or ValidationError.
ExperimentSpec parse_spec(const std::string& text);
ExperimentSpec load_spec(const std::filesystem::path& path);

// Model parameters only (the same document; n may be a single value, defaults to 1000).
SystemParameters parse_parameters(const std::string& text);
SystemParameters load_parameters(const std::filesystem::path& path);

}  // namespace pullsim
