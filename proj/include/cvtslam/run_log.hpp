#pragma once

#include "cvtslam/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cvtslam {

enum class EntityType { vehicle, cvt };

struct LogRecord {
  int slot = 0;
  EntityType type = EntityType::vehicle;
  int entity_id = 0;
  Vector3<double> truth = Vector3<double>::Zero();
  Vector3<double> estimate = Vector3<double>::Zero();
  double error = 0.0;
};

struct RunLog {
  std::string run_id;
  std::vector<LogRecord> records;
};

inline constexpr const char* kRunLogHeader = "run_id,slot,entity_type,entity_id,true_x,true_y,true_z,est_x,est_y,est_z,error_m";

/// Fixed six-decimal formatting used by every CSV artifact; NaN prints as "nan".
std::string format_fixed(double value);

void write_run_log_header(std::ostream& os);
void write_run_log(std::ostream& os, const RunLog& log);

/// Parse a raw_runs.csv stream back into logs (in order of first run_id
/// appearance). Throws std::runtime_error naming the offending row.
std::vector<RunLog> read_run_logs(std::istream& is);

}  // namespace cvtslam
