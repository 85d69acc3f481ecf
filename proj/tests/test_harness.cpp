#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "pullsim/estimate.hpp"
#include "pullsim/experiment.hpp"
#include "pullsim/sweep.hpp"

using namespace pullsim;
using testing::make_config;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / ("pullsim_test_" + name);
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentSpec small_spec() {
  return parse_spec(R"js({
    "lambda": 1.0, "beta": [0.5, 0.5], "mu": [1, 2], "routers": 2,
    "n": [20, 40], "policies": ["PULL2", "JSQ(2)"],
    "horizon": 60, "warmup": 10, "replications": 2, "seed": 5
  })js");
}

}  // namespace

TEST_CASE("load_spec: minimal file gets defaults") {
  const auto path = write_temp("minimal.json", R"js({"lambda": 0.7, "beta": [1], "mu": [1], "n": 100, "horizon": 50})js");
  const auto spec = load_spec(path);
  CHECK(spec.n_list == std::vector<std::int64_t>{100});
  CHECK(spec.policies == std::vector<Policy>{Policy::pull2()});
  CHECK(spec.warmup == doctest::Approx(10.0));
  CHECK(spec.batches == 20);
  CHECK(spec.replications == 1);
  CHECK(spec.base.routers == 1);
  CHECK(is_unbounded(spec.base.buffer[0]));
  CHECK(spec.output_format == TableFormat::Csv);
}

TEST_CASE("load_spec: full schema") {
  const auto spec = parse_spec(R"js({
    "lambda": 1.0, "beta": [0.5, 0.5], "mu": [1, 2], "routers": 3, "buffer": [1, "inf"],
    "n": [10, 20], "policies": ["pull2", "JSQ(3)"], "horizon": 100, "warmup": 30,
    "replications": 4, "batches": 12, "seed": 99, "init": "empty",
    "output": {"path": "out.json", "format": "json"}
  })js");
  CHECK(spec.base.buffer[0] == 1);
  CHECK(is_unbounded(spec.base.buffer[1]));
  CHECK(spec.policies[1] == Policy::jsq(3));
  CHECK(spec.replications == 4);
  CHECK(spec.batches == 12);
  CHECK(spec.seed == 99);
  CHECK(spec.output_path == "out.json");
  CHECK(spec.output_format == TableFormat::Json);
}

TEST_CASE("load_spec: errors") {
  CHECK_CODE(parse_spec(R"js({"lambda": 1.6, "beta": [0.5, 0.5], "mu": [1, 2], "n": 100, "horizon": 10})js"),
             ErrorCode::ValidationError);
  try {
    parse_spec(R"js({"lambda": 1.6, "beta": [0.5, 0.5], "mu": [1, 2], "n": 100, "horizon": 10})js");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("NonSubcritical") != std::string::npos);
  }
  try {
    parse_spec(R"js({"lambda": 0.5, "beta": [0.99, 0.01], "mu": [1, 1], "n": [1000, 10], "horizon": 10})js");
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ValidationError);
    CHECK(std::string(e.what()).find("EmptyPool") != std::string::npos);
    CHECK(std::string(e.what()).find("n = 10") != std::string::npos);
  }
  try {
    parse_spec("{\n\"lambda\": 0.5,\n\"beta\": [1\n}");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  CHECK_CODE(parse_spec(R"js({"lambda": 0.5, "beta": [1], "mu": [1], "n": 10, "horizon": 10, "colour": 1})js"),
             ErrorCode::ParseError);
  CHECK_CODE(parse_spec(R"js({"lambda": 0.5, "beta": [1], "mu": [1], "n": 10, "horizon": 10, "warmup": 10})js"),
             ErrorCode::ValidationError);
  CHECK_CODE(parse_spec(R"js({"lambda": 0.5, "beta": [1], "mu": [1], "n": 10, "horizon": 10, "policies": ["PULL1"]})js"),
             ErrorCode::ValidationError);
  CHECK_CODE(parse_spec(R"js({"lambda": 0.5, "beta": [1], "mu": [1], "n": 10, "horizon": 10, "replications": 0})js"),
             ErrorCode::ValidationError);
  CHECK_CODE(load_spec("/nonexistent/spec.json"), ErrorCode::IoError);
}

TEST_CASE("estimator: constant trace has zero standard error") {
  const auto cfg = make_config({1.0}, {1.0}, 0.5, 10, 1);
  SimMetrics m(cfg);
  std::vector<TraceSample> trace;
  SystemState s(cfg, FullState{{1, 1, 1, 1, 0, 0, 0, 0, 0, 0}, {0, 0, 0, 0, 1, 1, 1, 1, 1, 1}});
  for (int t = 0; t <= 30; ++t) {
    if (t > 0) m.accumulate(s, 1.0);
    m.counts.arrivals += 10;
    m.counts.assigned += 10;
    m.counts.waited += 2;
    trace.push_back({static_cast<double>(t), s.mean_field(), m.counts, m.integral_x, m.integral_xi});
  }
  const auto est = estimate_steady_state(trace, m, 10.0);
  CHECK(est.batches == 20);
  CHECK(est.window == 20.0);
  CHECK(est.busy_fraction.mean == doctest::Approx(0.4));
  CHECK(est.busy_fraction.std_error <= 1e-15);
  REQUIRE(est.waiting);
  CHECK(est.waiting->mean == doctest::Approx(0.2));
  CHECK(est.waiting->std_error <= 1e-15);
  CHECK(est.blocking->mean == 0.0);
  CHECK(est.xi_se.cwiseAbs().maxCoeff() <= 1e-15);
  CHECK_FALSE(est.rho_to_star);
}

TEST_CASE("estimator: zero load reports no ratios") {
  const auto cfg = make_config({1.0}, {1.0}, 0.0, 10, 1);
  SimOptions opts;
  opts.trace_interval = 1.0;
  opts.trace_start = 10.0;
  const auto res = simulate(cfg, Policy::pull2(), 40.0, 1, InitialCondition::empty(), opts);
  const auto est = estimate_steady_state(res.trace, res.metrics, 10.0);
  CHECK_FALSE(est.blocking);
  CHECK_FALSE(est.waiting);
  CHECK_FALSE(est.messages_per_customer);
  CHECK(est.busy_fraction.mean == 0.0);
}

TEST_CASE("estimator: too few batches") {
  const auto cfg = make_config({1.0}, {1.0}, 0.5, 10, 1);
  SimOptions opts;
  opts.trace_interval = 1.0;
  const auto res = simulate(cfg, Policy::pull2(), 15.0, 1, InitialCondition::empty(), opts);
  CHECK_CODE(estimate_steady_state(res.trace, res.metrics, 8.0), ErrorCode::InsufficientData);
}

TEST_CASE("estimator: M/M/1 busy fraction") {
  const auto cfg = make_config({1.0}, {1.0}, 0.7, 1, 1);
  const double horizon = 200000.0;
  const double warmup = 20000.0;
  SimOptions opts;
  opts.trace_start = warmup;
  opts.trace_interval = (horizon - warmup) / 20;
  const auto res = simulate(cfg, Policy::pull2(), horizon, 2024, InitialCondition::empty(), opts);
  const auto est = estimate_steady_state(res.trace, res.metrics, warmup);
  CHECK(est.busy_fraction.std_error > 0.0);
  CHECK(std::abs(est.busy_fraction.mean - 0.7) <= 3 * est.busy_fraction.std_error);
}

TEST_CASE("estimator: batch standard errors match the spread across replications") {
  const auto cfg = testing::two_pool(100, 3);
  const double horizon = 500.0;
  const double warmup = 100.0;
  SimOptions opts;
  opts.trace_start = warmup;
  opts.trace_interval = (horizon - warmup) / 20;
  const int reps = 20;
  std::vector<double> means;
  double mean_var = 0.0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto res = simulate(cfg, Policy::pull2(), horizon, cell_seed(7, 0, 100, rep), InitialCondition::empty(), opts);
    const auto est = estimate_steady_state(res.trace, res.metrics, warmup);
    means.push_back(est.x1_mean(0));
    mean_var += est.x1_se(0) * est.x1_se(0) / reps;
  }
  double avg = 0.0;
  for (double v : means) avg += v / reps;
  double across = 0.0;
  for (double v : means) across += (v - avg) * (v - avg) / (reps - 1);
  CHECK(across / mean_var < 3.0);
  CHECK(across / mean_var > 1.0 / 3.0);
}

TEST_CASE("cell seeds are distinct and reproducible") {
  std::set<std::uint64_t> seeds;
  for (std::size_t p = 0; p < 3; ++p) {
    for (std::int64_t n : {100, 400, 1600}) {
      for (int rep = 0; rep < 5; ++rep) seeds.insert(cell_seed(1, p, n, rep));
    }
  }
  CHECK(seeds.size() == 45);
  CHECK(cell_seed(1, 0, 100, 0) == cell_seed(1, 0, 100, 0));
  CHECK(cell_seed(1, 0, 100, 0) != cell_seed(2, 0, 100, 0));
  CHECK(cell_seed(1, 0, 100, 0) < (std::uint64_t{1} << 53));
}

TEST_CASE("run_sweep: grid order and determinism across thread counts") {
  const auto spec = small_spec();
  const auto serial = run_sweep(spec);
  REQUIRE(serial.rows.size() == 8);
  CHECK(serial.rows[0].policy == "PULL2");
  CHECK(serial.rows[0].n == 20);
  CHECK(serial.rows[1].replication == 1);
  CHECK(serial.rows[2].n == 40);
  CHECK(serial.rows[4].policy == "JSQ(2)");
  for (const auto& row : serial.rows) {
    CHECK(row.error.empty());
    REQUIRE(row.rho_to_star);
    CHECK(*row.rho_to_star >= 0.0);
    CHECK(row.nu(0) == doctest::Approx(0.3819660113));
  }
  SweepOptions opts;
  opts.jobs = 4;
  const auto parallel = run_sweep(spec, opts);
  CHECK(to_csv(flatten(serial)) == to_csv(flatten(parallel)));
}

TEST_CASE("run_sweep: empty n list gives an empty table") {
  auto spec = small_spec();
  spec.n_list.clear();
  const auto table = run_sweep(spec);
  CHECK(table.rows.empty());
  const auto csv = to_csv(flatten(table));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1);
}

TEST_CASE("run_sweep: a failing cell is recorded, not fatal") {
  auto spec = small_spec();
  spec.batches = 5;
  const auto table = run_sweep(spec);
  for (const auto& row : table.rows) {
    CHECK(row.error.find("InsufficientData") != std::string::npos);
    CHECK_FALSE(row.blocking_prob);
  }
  const auto flat = flatten(table);
  CHECK(std::holds_alternative<std::string>(flat.rows[0].back()));
}

TEST_CASE("export: header order and column count") {
  const auto cols = table_columns(2, 3);
  CHECK(cols[0] == "policy");
  CHECK(cols[6] == "rho_to_star");
  CHECK(cols[7] == "xi_bar_1_1");
  CHECK(cols[8] == "xi_bar_1_2");
  CHECK(cols[9] == "xi_bar_2_1");
  CHECK(cols[13] == "x1_bar_1");
  CHECK(cols[14] == "x1_bar_2");
  CHECK(cols.back() == "error");
  CHECK(cols.size() == 7 + 6 + 2 + 7 + 2 + 6 + 1);
}

TEST_CASE("export: empty table is a header-only CSV") {
  ResultTable table;
  table.pools = 1;
  table.routers = 1;
  const auto path = std::filesystem::temp_directory_path() / "pullsim_test_empty.csv";
  export_table(table, TableFormat::Csv, path);
  const auto text = slurp(path);
  CHECK(text.rfind("policy,n,replication,blocking_prob", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(parse_csv(text).rows.empty());
}

TEST_CASE("export: one row, fields in documented order") {
  auto spec = small_spec();
  spec.n_list = {20};
  spec.policies = {Policy::pull2()};
  spec.replications = 1;
  const auto table = run_sweep(spec);
  const auto csv = to_csv(flatten(table));
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
  const auto parsed = parse_csv(csv);
  REQUIRE(parsed.rows.size() == 1);
  CHECK(std::get<std::string>(parsed.rows[0][0]) == "PULL2");
  CHECK(std::get<double>(parsed.rows[0][1]) == 20.0);
  CHECK(std::get<double>(parsed.rows[0][2]) == 0.0);
  CHECK(std::get<double>(parsed.rows[0][6]) == *table.rows[0].rho_to_star);
}

TEST_CASE("export: CSV and JSON round trips are exact") {
  const auto table = run_sweep(small_spec());
  const auto flat = flatten(table);
  CHECK(parse_csv(to_csv(flat)) == flat);
  CHECK(parse_json(to_json(flat)) == flat);

  const auto dir = std::filesystem::temp_directory_path();
  export_table(table, TableFormat::Json, dir / "pullsim_test_rt.json");
  CHECK(parse_json(slurp(dir / "pullsim_test_rt.json")) == flat);
  CHECK_CODE(export_table(table, TableFormat::Csv, "/nonexistent/dir/out.csv"), ErrorCode::IoError);
}

TEST_CASE("export: missing values and quoting") {
  FlatTable t;
  t.columns = {"policy", "value", "error"};
  t.rows.push_back({std::string("PULL2"), Cell{}, std::string("Bad, \"quoted\"\nline")});
  t.rows.push_back({std::string("PULL1"), 0.1, Cell{}});
  const auto csv = to_csv(t);
  CHECK(parse_csv(csv) == t);
  CHECK(parse_json(to_json(t)) == t);
  CHECK(to_json(t).find("null") != std::string::npos);
}

TEST_CASE("format_number: shortest exact form") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(1600.0) == "1600");
  CHECK(format_number(1.0 / 3) == "0.3333333333333333");
  CHECK(std::stod(format_number(0.30901699437494745)) == 0.30901699437494745);
}
