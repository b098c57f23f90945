#include "cvtslam/run_log.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cvtslam {

std::string format_fixed(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

void write_run_log_header(std::ostream& os) { os << kRunLogHeader << '\n'; }

void write_run_log(std::ostream& os, const RunLog& log) {
  for (const auto& r : log.records) {
    os << log.run_id << ',' << r.slot << ',' << (r.type == EntityType::vehicle ? "vehicle" : "cvt") << ',' << r.entity_id;
    for (int k = 0; k < 3; ++k) os << ',' << format_fixed(r.truth[k]);
    for (int k = 0; k < 3; ++k) os << ',' << format_fixed(r.estimate[k]);
    os << ',' << format_fixed(r.error) << '\n';
  }
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void fail(std::size_t row, const std::string& what) {
  throw std::runtime_error("raw run log, row " + std::to_string(row) + ": " + what);
}

template <typename T, typename F>
T parse_number(const std::string& s, std::size_t row, const char* column, F convert) {
  try {
    std::size_t used = 0;
    T v = convert(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(row, std::string("column ") + column + " is not a number: '" + s + "'");
  }
}

}  // namespace

std::vector<RunLog> read_run_logs(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("raw run log, row 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunLogHeader) fail(1, "header mismatch, expected '" + std::string(kRunLogHeader) + "'");

  std::vector<RunLog> logs;
  std::map<std::string, std::size_t> index;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 11) fail(row, "expected 11 fields, got " + std::to_string(f.size()));

    LogRecord r;
    r.slot = parse_number<int>(f[1], row, "slot", [](const std::string& s, std::size_t* n) { return std::stoi(s, n); });
    if (f[2] == "vehicle")
      r.type = EntityType::vehicle;
    else if (f[2] == "cvt")
      r.type = EntityType::cvt;
    else
      fail(row, "entity_type must be 'vehicle' or 'cvt', got '" + f[2] + "'");
    r.entity_id = parse_number<int>(f[3], row, "entity_id", [](const std::string& s, std::size_t* n) { return std::stoi(s, n); });
    auto dbl = [](const std::string& s, std::size_t* n) { return std::stod(s, n); };
    static constexpr const char* names[] = {"true_x", "true_y", "true_z", "est_x", "est_y", "est_z"};
    for (int k = 0; k < 3; ++k) r.truth[k] = parse_number<double>(f[4 + k], row, names[k], dbl);
    for (int k = 0; k < 3; ++k) r.estimate[k] = parse_number<double>(f[7 + k], row, names[3 + k], dbl);
    r.error = parse_number<double>(f[10], row, "error_m", dbl);

    auto [it, inserted] = index.try_emplace(f[0], logs.size());
    if (inserted) logs.push_back(RunLog{f[0], {}});
    logs[it->second].records.push_back(r);
  }
  return logs;
}

}  // namespace cvtslam
