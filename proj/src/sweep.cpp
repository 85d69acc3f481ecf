#include "pullsim/sweep.hpp"

#include <atomic>
#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pullsim/equilibrium.hpp"
#include "pullsim/error.hpp"
#include "pullsim/estimate.hpp"
#include "pullsim/random.hpp"

namespace pullsim {

std::uint64_t cell_seed(std::uint64_t master, std::size_t policy_index, std::int64_t n, int replication) {
  const std::uint64_t coords = (static_cast<std::uint64_t>(policy_index) << 48) ^
                               (static_cast<std::uint64_t>(n) << 12) ^ static_cast<std::uint64_t>(replication);
  // 53 bits so the seed survives a round trip through a JSON/CSV double.
  return splitmix64(splitmix64(master) ^ splitmix64(coords)) & ((std::uint64_t{1} << 53) - 1);
}

namespace {

struct Cell_ {
  std::size_t policy;
  std::size_t n;
  int replication;
};

std::optional<double> mean_of(const std::optional<Estimate>& e) {
  return e ? std::optional<double>(e->mean) : std::nullopt;
}
std::optional<double> se_of(const std::optional<Estimate>& e) {
  return e ? std::optional<double>(e->std_error) : std::nullopt;
}

ResultRow run_cell(const ExperimentSpec& spec, const Cell_& cell) {
  ResultRow row;
  const auto& policy = spec.policies[cell.policy];
  row.policy = policy.name();
  row.n = spec.n_list[cell.n];
  row.replication = cell.replication;
  row.seed = cell_seed(spec.seed, cell.policy, row.n, cell.replication);
  const int pools = static_cast<int>(spec.base.beta.size());
  row.xi_bar = Matrix<double>::Constant(spec.base.routers, pools, std::numeric_limits<double>::quiet_NaN());
  row.x1_bar = Vector<double>::Constant(pools, std::numeric_limits<double>::quiet_NaN());
  row.nu = row.x1_bar;
  row.xi_star = row.xi_bar;
  try {
    const auto cfg = spec.config_for(row.n);
    const auto eq = solve_equilibrium(cfg);
    row.nu = eq.nu;
    row.xi_star = eq.s_star.xi;

    SimOptions opts;
    opts.trace_start = spec.warmup;
    opts.trace_interval = (spec.horizon - spec.warmup) / spec.batches;
    const auto init = spec.init == InitKind::Full ? InitialCondition::full() : InitialCondition::empty();
    const auto sim = simulate(cfg, policy, spec.horizon, row.seed, init, opts);
    EstimateOptions est_opts;
    est_opts.batches = spec.batches;
    est_opts.reference = eq.s_star;
    const auto est = estimate_steady_state(sim.trace, sim.metrics, spec.warmup, est_opts);

    row.blocking_prob = mean_of(est.blocking);
    row.waiting_prob = mean_of(est.waiting);
    row.msgs_per_customer = mean_of(est.messages_per_customer);
    row.rho_to_star = mean_of(est.rho_to_star);
    row.xi_bar = est.average.xi;
    row.x1_bar = est.x1_mean;
    row.blocking_se = se_of(est.blocking);
    row.waiting_se = se_of(est.waiting);
    row.msgs_se = se_of(est.messages_per_customer);
    row.rho_se = se_of(est.rho_to_star);
    row.unpulled_prob = mean_of(est.unpulled);
    row.run_msgs_per_customer = sim.metrics.messages_per_customer();
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

}  // namespace

ResultTable run_sweep(const ExperimentSpec& spec, const SweepOptions& opts) {
  ResultTable table;
  table.pools = static_cast<int>(spec.base.beta.size());
  table.routers = spec.base.routers;
  std::vector<Cell_> cells;
  for (std::size_t p = 0; p < spec.policies.size(); ++p) {
    for (std::size_t k = 0; k < spec.n_list.size(); ++k) {
      for (int rep = 0; rep < spec.replications; ++rep) cells.push_back({p, k, rep});
    }
  }
  table.rows.resize(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto idx = next++; idx < cells.size(); idx = next++) table.rows[idx] = run_cell(spec, cells[idx]);
  };
  const auto jobs = std::max(1u, std::min<unsigned>(opts.jobs, static_cast<unsigned>(cells.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> threads;
    for (unsigned t = 0; t < jobs; ++t) threads.emplace_back(worker);
  }
  return table;
}

// ---------------------------------------------------------------------------------------------
// Flat table and export

std::vector<std::string> table_columns(int pools, int routers) {
  std::vector<std::string> cols{"policy",        "n", "replication", "blocking_prob", "waiting_prob",
                                "msgs_per_customer", "rho_to_star"};
  for (int r = 1; r <= routers; ++r) {
    for (int j = 1; j <= pools; ++j) cols.push_back("xi_bar_" + std::to_string(r) + "_" + std::to_string(j));
  }
  for (int j = 1; j <= pools; ++j) cols.push_back("x1_bar_" + std::to_string(j));
  for (const char* c : {"seed", "blocking_se", "waiting_se", "msgs_se", "rho_se", "unpulled_prob",
                        "run_msgs_per_customer"}) {
    cols.emplace_back(c);
  }
  for (int j = 1; j <= pools; ++j) cols.push_back("nu_" + std::to_string(j));
  for (int r = 1; r <= routers; ++r) {
    for (int j = 1; j <= pools; ++j) cols.push_back("xi_star_" + std::to_string(r) + "_" + std::to_string(j));
  }
  cols.emplace_back("error");
  return cols;
}

namespace {

Cell value(double v) { return std::isnan(v) ? Cell{} : Cell{v}; }
Cell value(const std::optional<double>& v) { return v ? value(*v) : Cell{}; }

bool is_text_column(const std::string& name) { return name == "policy" || name == "error"; }

}  // namespace

FlatTable flatten(const ResultTable& table) {
  FlatTable flat;
  flat.columns = table_columns(table.pools, table.routers);
  for (const auto& row : table.rows) {
    std::vector<Cell> cells{row.policy,
                            static_cast<double>(row.n),
                            static_cast<double>(row.replication),
                            value(row.blocking_prob),
                            value(row.waiting_prob),
                            value(row.msgs_per_customer),
                            value(row.rho_to_star)};
    for (int r = 0; r < table.routers; ++r) {
      for (int j = 0; j < table.pools; ++j) cells.push_back(value(row.xi_bar(r, j)));
    }
    for (int j = 0; j < table.pools; ++j) cells.push_back(value(row.x1_bar(j)));
    cells.push_back(static_cast<double>(row.seed));
    for (const auto& v : {row.blocking_se, row.waiting_se, row.msgs_se, row.rho_se, row.unpulled_prob,
                          row.run_msgs_per_customer}) {
      cells.push_back(value(v));
    }
    for (int j = 0; j < table.pools; ++j) cells.push_back(value(row.nu(j)));
    for (int r = 0; r < table.routers; ++r) {
      for (int j = 0; j < table.pools; ++j) cells.push_back(value(row.xi_star(r, j)));
    }
    cells.push_back(row.error.empty() ? Cell{} : Cell{row.error});
    flat.rows.push_back(std::move(cells));
  }
  return flat;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_field(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return {};
  if (const auto* d = std::get_if<double>(&c)) return format_number(*d);
  const auto& s = std::get<std::string>(c);
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    any = true;
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      fields.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(fields));
      fields.clear();
      any = false;
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (quoted) throw Error(ErrorCode::ParseError, "unterminated quoted CSV field");
  if (any) {
    fields.push_back(std::move(field));
    records.push_back(std::move(fields));
  }
  return records;
}

Cell parse_cell(const std::string& column, const std::string& text) {
  if (text.empty()) return {};
  if (is_text_column(column)) return text;
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::ParseError, "column '" + column + "': not a number: " + text);
  }
  return v;
}

}  // namespace

std::string to_csv(const FlatTable& table) {
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) out += (c ? "," : "") + table.columns[c];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + csv_field(row[c]);
    out += '\n';
  }
  return out;
}

FlatTable parse_csv(const std::string& text) {
  const auto records = split_csv(text);
  if (records.empty()) throw Error(ErrorCode::ParseError, "CSV has no header");
  FlatTable table;
  table.columns = records.front();
  for (std::size_t line = 1; line < records.size(); ++line) {
    const auto& rec = records[line];
    if (rec.size() != table.columns.size()) {
      throw Error(ErrorCode::ParseError, "CSV line " + std::to_string(line + 1) + " has the wrong field count");
    }
    std::vector<Cell> row;
    for (std::size_t c = 0; c < rec.size(); ++c) row.push_back(parse_cell(table.columns[c], rec[c]));
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_json(const FlatTable& table) {
  // Numbers are spliced in with format_number so both exports print identical digits.
  std::string out = "[";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    out += i ? ",\n  {" : "\n  {";
    const auto& row = table.rows[i];
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += (c ? ", " : "") + nlohmann::json(table.columns[c]).dump() + ": ";
      if (std::holds_alternative<std::monostate>(row[c])) {
        out += "null";
      } else if (const auto* d = std::get_if<double>(&row[c])) {
        out += format_number(*d);
      } else {
        out += nlohmann::json(std::get<std::string>(row[c])).dump();
      }
    }
    out += "}";
  }
  out += table.rows.empty() ? "]\n" : "\n]\n";
  return out;
}

FlatTable parse_json(const std::string& text) {
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_array()) throw Error(ErrorCode::ParseError, "expected a JSON array of rows");
  FlatTable table;
  for (const auto& obj : doc) {
    if (!obj.is_object()) throw Error(ErrorCode::ParseError, "expected row objects");
    if (table.columns.empty()) {
      for (const auto& [key, v] : obj.items()) table.columns.push_back(key);
    }
    std::vector<Cell> row;
    for (const auto& col : table.columns) {
      if (!obj.contains(col)) throw Error(ErrorCode::ParseError, "row misses column '" + col + "'");
      const auto& v = obj.at(col);
      if (v.is_null()) {
        row.emplace_back();
      } else if (v.is_number()) {
        row.emplace_back(v.get<double>());
      } else if (v.is_string()) {
        row.emplace_back(v.get<std::string>());
      } else {
        throw Error(ErrorCode::ParseError, "column '" + col + "': unsupported value");
      }
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void export_table(const ResultTable& table, TableFormat format, const std::filesystem::path& path) {
  const auto flat = flatten(table);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out << (format == TableFormat::Csv ? to_csv(flat) : to_json(flat));
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "write to " + path.string() + " failed");
}

}  // namespace pullsim
