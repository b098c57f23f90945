// Command-line harness for the cooperative multipath SLAM experiments.
//
//   cvtslam run       --config cfg.toml --out-dir out/ [--runs N] [--density 1,2,4]
//   cvtslam single    --seed 7 --density 8 --out-dir out/
//   cvtslam summarize out/raw_runs.csv --out-dir out/

#include "cvtslam/experiment.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<int> densities;
  std::optional<int> runs;
  std::optional<int> slots;
  std::optional<int> parallel;
  std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config file (TOML-style key = value)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--density", f.densities, "Vehicle densities, e.g. 1,2,4,6,8")->delimiter(',');
  cmd->add_option("--runs", f.runs, "Monte Carlo runs per density");
  cmd->add_option("--slots", f.slots, "Time slots per run");
  cmd->add_option("--parallel", f.parallel, "Worker threads");
  cmd->add_option("--out-dir", f.out_dir, "Output directory");
}

cvtslam::ExperimentConfig resolve(const CommonFlags& f) {
  auto cfg = f.config.empty() ? cvtslam::ExperimentConfig{} : cvtslam::load_experiment_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.densities.empty()) cfg.densities = f.densities;
  if (f.runs) cfg.runs = *f.runs;
  if (f.slots) cfg.slots = *f.slots;
  if (f.parallel) cfg.parallel = *f.parallel;
  cfg.validate();
  return cfg;
}

void print_density_table(const cvtslam::AggregateReport& report) {
  std::printf("%8s %10s %10s %12s\n", "density", "veh_err_m", "cvt_err_m", "improvement");
  for (const auto& d : report.by_density)
    std::printf("%8d %10.3f %10.3f %11.1f%%\n", d.density, d.mean_vehicle_err, d.mean_cvt_err, 100.0 * d.improvement);
}

int cmd_run(const CommonFlags& f) {
  const auto cfg = resolve(f);
  const auto result = cvtslam::run_experiment(cfg);
  cvtslam::write_outputs(f.out_dir, result.logs, result.report);
  for (const auto& fail : result.failures)
    std::fprintf(stderr, "run failed: density %d run %d: %s\n", fail.density, fail.run_index, fail.message.c_str());
  for (int d : result.report.incomplete_densities) std::fprintf(stderr, "density %d is incomplete\n", d);
  print_density_table(result.report);
  return 0;
}

int cmd_single(const CommonFlags& f) {
  auto cfg = resolve(f);
  const int density = cfg.densities.front();
  const auto scenario = cvtslam::build_scenario(cfg, density, 0);
  const auto log = cvtslam::run(scenario.scene, scenario.fleet, cfg.estimator, cfg.slots, cvtslam::run_seed(cfg.seed, density, 0),
                                cvtslam::make_run_id(density, 0));
  const std::vector<cvtslam::RunLog> logs{log};
  const auto report = cvtslam::summarize(logs);
  cvtslam::write_outputs(f.out_dir, logs, report);
  std::printf("%6s %10s %10s\n", "slot", "veh_err_m", "cvt_err_m");
  for (const auto& p : report.over_time) std::printf("%6d %10.3f %10.3f\n", p.slot, p.mean_vehicle_err, p.mean_cvt_err);
  return 0;
}

int cmd_summarize(const std::string& input, const std::string& out_dir) {
  std::ifstream is(input);
  if (!is) throw std::runtime_error("cannot open " + input);
  const auto logs = cvtslam::read_run_logs(is);
  if (logs.empty()) throw std::runtime_error(input + ": no run records");
  const auto report = cvtslam::summarize(logs);
  cvtslam::write_outputs(out_dir, {}, report);
  print_density_table(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multipath SLAM simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags, single_flags;
  auto* run = app.add_subcommand("run", "Full Monte Carlo experiment over all densities");
  add_common(run, run_flags);
  auto* single = app.add_subcommand("single", "One seeded run with a per-slot log");
  add_common(single, single_flags);

  std::string summarize_in;
  std::string summarize_out = "out";
  auto* summarize = app.add_subcommand("summarize", "Re-aggregate a raw_runs.csv");
  summarize->add_option("input", summarize_in, "raw_runs.csv")->required()->check(CLI::ExistingFile);
  summarize->add_option("--out-dir", summarize_out, "Output directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_flags);
    if (*single) return cmd_single(single_flags);
    if (*summarize) return cmd_summarize(summarize_in, summarize_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
