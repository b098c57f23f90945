#pragma once

#include "cvtslam/orchestrator.hpp"
#include "cvtslam/run_log.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cvtslam {

/// Road scenario: base station, facades, lanes and spawn rules.
struct SceneConfig {
  Vector3<double> bs_position{70.0, 0.0, 8.0};
  Vector2<double> road_x{0.0, 140.0};
  Vector2<double> road_y{-16.0, 16.0};
  int lanes = 8;
  double lane_width = 4.0;
  double antenna_height = 0.0;
  std::vector<double> facades_y{16.0, -16.0};
  Vector2<double> facade_z{0.0, 20.0};
  double speed = 10.0;
  Vector2<double> spawn_forward{0.0, 40.0};    // initial x of +x vehicles
  Vector2<double> spawn_backward{100.0, 140.0};  // initial x of -x vehicles
  double spawn_headway = 5.0;
  int spawn_retries = 100;

  Scene<double> build() const;
};

struct ExperimentConfig {
  std::vector<int> densities{1, 2, 4, 6, 8};
  int runs = 200;
  int slots = 100;
  std::uint64_t seed = 1;
  int parallel = 1;
  SceneConfig scene;
  EstimatorConfig estimator;

  void validate() const;
};

struct Scenario {
  Scene<double> scene;
  FleetSpec fleet;
};

/// Vehicles alternate direction (ceil(rho/2) heading +x), lanes are filled
/// round-robin per direction, initial x is uniform in the direction's spawn
/// interval with a minimum same-lane headway. Deterministic in (seed, density, run).
Scenario build_scenario(const ExperimentConfig& cfg, int density, int run_index);

std::uint64_t run_seed(std::uint64_t seed, int density, int run_index);
std::string make_run_id(int density, int run_index);
/// Density encoded in a run id produced by make_run_id().
std::optional<int> density_of(const std::string& run_id);

struct TimePoint {
  int density = 0;
  int slot = 0;
  double mean_vehicle_err = 0.0;
  double mean_cvt_err = 0.0;
};

struct DensitySummary {
  int density = 0;
  int runs = 0;
  double mean_vehicle_err = 0.0;    // final slot, over runs and vehicles
  double mean_cvt_err = 0.0;        // final slot, over runs and clusters
  double median_vehicle_err = 0.0;  // median over runs of the per-run final-slot mean
  double median_cvt_err = 0.0;
  double improvement = 0.0;         // 1 - err / err(density 1); NaN without a density-1 batch
  std::vector<double> cdf_samples;  // sorted final-slot vehicle errors
};

struct AggregateReport {
  std::vector<TimePoint> over_time;
  std::vector<DensitySummary> by_density;
  std::vector<int> incomplete_densities;

  const DensitySummary* density(int rho) const;
  std::vector<TimePoint> curve(int rho) const;
};

struct RunFailure {
  int density = 0;
  int run_index = 0;
  std::string message;
};

struct ExperimentResult {
  std::vector<RunLog> logs;
  AggregateReport report;
  std::vector<RunFailure> failures;
};

/// Aggregate raw logs; independent of record and log order.
AggregateReport summarize(std::span<const RunLog> logs);

/// All densities x runs, spread over cfg.parallel worker threads.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

void write_error_over_time(std::ostream& os, const AggregateReport& report);
void write_cdf_final(std::ostream& os, const AggregateReport& report);
void write_error_vs_density(std::ostream& os, const AggregateReport& report);
void write_raw_runs(std::ostream& os, std::span<const RunLog> logs);

/// raw_runs.csv (when logs are given) plus the three aggregate CSVs.
void write_outputs(const std::filesystem::path& dir, std::span<const RunLog> logs, const AggregateReport& report);

/// Load a key-value (TOML-style) experiment config; unknown keys are errors.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(std::istream& is, const std::string& source = "<config>");

}  // namespace cvtslam
