#include "pullsim/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "pullsim/error.hpp"

namespace pullsim {

using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::ParseError, "field '" + field + "': " + what);
}

json parse_document(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": " + e.what());
  }
}

double number(const json& doc, const std::string& field) {
  if (!doc.contains(field)) field_error(field, "missing");
  const auto& v = doc.at(field);
  if (!v.is_number()) field_error(field, "expected a number");
  return v.get<double>();
}

std::int64_t integer(const json& v, const std::string& field) {
  if (!v.is_number_integer()) field_error(field, "expected an integer");
  return v.get<std::int64_t>();
}

std::vector<double> numbers(const json& doc, const std::string& field) {
  if (!doc.contains(field)) field_error(field, "missing");
  const auto& v = doc.at(field);
  if (!v.is_array() || v.empty()) field_error(field, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) field_error(field, "expected a nonempty array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

BufferSize buffer_value(const json& v) {
  if (v.is_string()) {
    auto s = v.get<std::string>();
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (s == "inf" || s == "infinity" || s == "unbounded") return kUnboundedBuffer;
    field_error("buffer", "unknown buffer value '" + v.get<std::string>() + "'");
  }
  const auto b = integer(v, "buffer");
  if (b < 1) field_error("buffer", "buffer sizes must be >= 1");
  return b;
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed) {
  if (!doc.is_object()) throw Error(ErrorCode::ParseError, "line 1: top level must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!allowed.count(key)) field_error(key, "unknown field");
  }
}

const std::set<std::string> kModelFields{"lambda", "beta", "mu", "routers", "buffer", "n"};
const std::set<std::string> kSpecFields{"lambda",       "beta",    "mu",   "routers", "buffer", "n",     "policies",
                                        "horizon",      "warmup",  "seed", "init",    "output", "batches",
                                        "replications"};

SystemParameters model_from(const json& doc) {
  SystemParameters p;
  p.lambda = number(doc, "lambda");
  p.beta = numbers(doc, "beta");
  p.mu = numbers(doc, "mu");
  if (p.mu.size() != p.beta.size()) field_error("mu", "needs one entry per pool (" + std::to_string(p.beta.size()) + ")");
  p.routers = doc.contains("routers") ? static_cast<int>(integer(doc.at("routers"), "routers")) : 1;
  if (p.routers < 1) field_error("routers", "must be >= 1");
  p.buffer.assign(p.beta.size(), kUnboundedBuffer);
  if (doc.contains("buffer")) {
    const auto& b = doc.at("buffer");
    if (b.is_array()) {
      if (b.size() != p.beta.size()) field_error("buffer", "needs one entry per pool");
      for (std::size_t j = 0; j < b.size(); ++j) p.buffer[j] = buffer_value(b[j]);
    } else {
      p.buffer.assign(p.beta.size(), buffer_value(b));
    }
  }
  return p;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

TableFormat parse_format(const std::string& text) {
  const auto t = lower(text);
  if (t == "csv") return TableFormat::Csv;
  if (t == "json") return TableFormat::Json;
  throw Error(ErrorCode::ParseError, "unknown output format '" + text + "'");
}

SystemConfig ExperimentSpec::config_for(std::int64_t n) const {
  auto raw = base;
  raw.n = n;
  return validate_config(raw);
}

ExperimentSpec parse_spec(const std::string& text) {
  const json doc = parse_document(text);
  reject_unknown(doc, kSpecFields);
  ExperimentSpec spec;
  spec.base = model_from(doc);

  if (!doc.contains("n")) field_error("n", "missing");
  const auto& n = doc.at("n");
  if (n.is_array()) {
    for (const auto& v : n) spec.n_list.push_back(integer(v, "n"));
  } else {
    spec.n_list.push_back(integer(n, "n"));
  }

  if (doc.contains("policies")) {
    const auto& p = doc.at("policies");
    const auto add = [&](const json& v) {
      if (!v.is_string()) field_error("policies", "expected policy names");
      try {
        spec.policies.push_back(Policy::parse(v.get<std::string>()));
      } catch (const Error& e) {
        field_error("policies", e.what());
      }
    };
    if (p.is_array()) {
      for (const auto& v : p) add(v);
    } else {
      add(p);
    }
  } else {
    spec.policies.push_back(Policy::pull2());
  }

  spec.horizon = number(doc, "horizon");
  spec.warmup = doc.contains("warmup") ? number(doc, "warmup") : 0.2 * spec.horizon;
  if (doc.contains("replications")) spec.replications = static_cast<int>(integer(doc.at("replications"), "replications"));
  if (doc.contains("batches")) spec.batches = static_cast<int>(integer(doc.at("batches"), "batches"));
  if (doc.contains("seed")) {
    const auto& s = doc.at("seed");
    if (!s.is_number_unsigned() && !s.is_number_integer()) field_error("seed", "expected an integer");
    spec.seed = s.get<std::uint64_t>();
  }
  if (doc.contains("init")) {
    const auto& v = doc.at("init");
    const auto t = v.is_string() ? lower(v.get<std::string>()) : std::string{};
    if (t == "empty") {
      spec.init = InitKind::Empty;
    } else if (t == "full") {
      spec.init = InitKind::Full;
    } else {
      field_error("init", "expected \"empty\" or \"full\"");
    }
  }
  if (doc.contains("output")) {
    const auto& out = doc.at("output");
    if (!out.is_object()) field_error("output", "expected an object");
    if (out.contains("path")) {
      if (!out.at("path").is_string()) field_error("output.path", "expected a string");
      spec.output_path = out.at("path").get<std::string>();
    }
    if (out.contains("format")) {
      if (!out.at("format").is_string()) field_error("output.format", "expected a string");
      spec.output_format = parse_format(out.at("format").get<std::string>());
    }
  }

  // Validation.
  if (!(spec.horizon > 0.0)) throw Error(ErrorCode::ValidationError, "horizon must be positive");
  if (!(spec.warmup >= 0.0 && spec.warmup < spec.horizon)) {
    throw Error(ErrorCode::ValidationError, "warmup must satisfy 0 <= warmup < horizon");
  }
  if (spec.replications < 1) throw Error(ErrorCode::ValidationError, "replications must be >= 1");
  if (spec.batches < 10) throw Error(ErrorCode::ValidationError, "batches must be >= 10");
  for (const auto n_value : spec.n_list) {
    try {
      const auto cfg = spec.config_for(n_value);
      for (const auto& policy : spec.policies) check_policy(policy, cfg);
      if (spec.init == InitKind::Full && !cfg.all_finite_buffers()) {
        throw Error(ErrorCode::FullInitWithUnboundedBuffer, "init \"full\" needs finite buffers");
      }
    } catch (const Error& e) {
      throw Error(ErrorCode::ValidationError, "n = " + std::to_string(n_value) + ": " + e.what());
    }
  }
  return spec;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExperimentSpec load_spec(const std::filesystem::path& path) { return parse_spec(read_file(path)); }

SystemParameters parse_parameters(const std::string& text) {
  const json doc = parse_document(text);
  reject_unknown(doc, kSpecFields);
  auto p = model_from(doc);
  p.n = 1000;
  if (doc.contains("n")) {
    const auto& n = doc.at("n");
    p.n = n.is_array() ? (n.empty() ? p.n : integer(n.front(), "n")) : integer(n, "n");
  }
  try {
    validate_config(p);
  } catch (const Error& e) {
    throw Error(ErrorCode::ValidationError, e.what());
  }
  return p;
}

SystemParameters load_parameters(const std::filesystem::path& path) { return parse_parameters(read_file(path)); }

}  // namespace pullsim
