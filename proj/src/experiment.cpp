#include "cvtslam/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace cvtslam {

Scene<double> SceneConfig::build() const {
  Scene<double> scene;
  scene.bs_position = bs_position;
  scene.road_x = road_x;
  scene.road_y = road_y;
  scene.lanes = lanes;
  scene.lane_width = lane_width;
  for (double y : facades_y)
    scene.reflectors.push_back(ReflectorPlane<double>::facade_y(y, road_x[0], road_x[1], facade_z[0], facade_z[1]));
  scene.validate();
  return scene;
}

void ExperimentConfig::validate() const {
  if (densities.empty()) throw std::invalid_argument("config: density list is empty");
  for (int d : densities)
    if (d < 1) throw std::invalid_argument("config: densities must be >= 1");
  if (runs < 1) throw std::invalid_argument("config: runs must be >= 1");
  if (slots < 0) throw std::invalid_argument("config: slots must be >= 0");
  if (parallel < 1) throw std::invalid_argument("config: parallel must be >= 1");
  if (!(scene.speed >= 0)) throw std::invalid_argument("config: speed must be non-negative");
  if (scene.spawn_forward[0] > scene.spawn_forward[1] || scene.spawn_backward[0] > scene.spawn_backward[1])
    throw std::invalid_argument("config: spawn intervals must be ordered");
  if (scene.spawn_headway < 0 || scene.spawn_retries < 1) throw std::invalid_argument("config: invalid spawn rule");
  scene.build();
  estimator.validate();
}

std::uint64_t run_seed(std::uint64_t seed, int density, int run_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(density),
                    static_cast<std::uint32_t>(run_index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::string make_run_id(int density, int run_index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "rho%d-run%04d", density, run_index);
  return buf;
}

std::optional<int> density_of(const std::string& run_id) {
  int density = 0, index = 0, consumed = 0;
  if (std::sscanf(run_id.c_str(), "rho%d-run%d%n", &density, &index, &consumed) == 2 &&
      consumed == static_cast<int>(run_id.size()))
    return density;
  return std::nullopt;
}

Scenario build_scenario(const ExperimentConfig& cfg, int density, int run_index) {
  if (density < 1) throw std::invalid_argument("build_scenario: density must be >= 1");
  const SceneConfig& sc = cfg.scene;
  Scenario out{sc.build(), {}};

  // lanes below the road center run +x, the others -x; nearest-to-center first
  const double mid = 0.5 * (sc.road_y[0] + sc.road_y[1]);
  std::vector<double> forward, backward;
  for (int i = 0; i < sc.lanes; ++i) {
    const double y = out.scene.lane_center(i);
    (y < mid ? forward : backward).push_back(y);
  }
  if (forward.empty()) forward = backward;
  if (backward.empty()) backward = forward;
  auto by_center = [mid](double a, double b) { return std::abs(a - mid) < std::abs(b - mid); };
  std::stable_sort(forward.begin(), forward.end(), by_center);
  std::stable_sort(backward.begin(), backward.end(), by_center);

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(density), static_cast<std::uint32_t>(run_index), 0x5ce7u};
  Rng rng(seq);

  int n_forward = 0, n_backward = 0;
  for (int k = 0; k < density; ++k) {
    const bool plus_x = k % 2 == 0;
    const int slot_in_dir = plus_x ? n_forward++ : n_backward++;
    const auto& lanes = plus_x ? forward : backward;
    const double lane_y = lanes[static_cast<std::size_t>(slot_in_dir) % lanes.size()];
    const Vector2<double>& interval = plus_x ? sc.spawn_forward : sc.spawn_backward;
    std::uniform_real_distribution<double> spawn_x(interval[0], interval[1]);

    VehicleSpec v;
    v.id = k;
    v.initial.antenna_height = sc.antenna_height;
    v.initial.velocity = {plus_x ? sc.speed : -sc.speed, 0.0};
    bool placed = false;
    for (int attempt = 0; attempt < sc.spawn_retries && !placed; ++attempt) {
      const double x = spawn_x(rng);
      placed = std::none_of(out.fleet.begin(), out.fleet.end(), [&](const VehicleSpec& o) {
        return o.initial.position.y() == lane_y && std::abs(o.initial.position.x() - x) < sc.spawn_headway;
      });
      if (placed) v.initial.position = {x, lane_y};
    }
    if (!placed)
      throw std::runtime_error("build_scenario: cannot place vehicle " + std::to_string(k) + " with " +
                               std::to_string(sc.spawn_headway) + " m headway");
    out.fleet.push_back(v);
  }
  return out;
}

const DensitySummary* AggregateReport::density(int rho) const {
  for (const auto& d : by_density)
    if (d.density == rho) return &d;
  return nullptr;
}

std::vector<TimePoint> AggregateReport::curve(int rho) const {
  std::vector<TimePoint> out;
  for (const auto& p : over_time)
    if (p.density == rho) out.push_back(p);
  return out;
}

namespace {

double mean_or_nan(double sum, std::size_t n) { return n ? sum / double(n) : std::numeric_limits<double>::quiet_NaN(); }

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool record_less(const LogRecord& a, const LogRecord& b) {
  return std::tie(a.slot, a.type, a.entity_id) < std::tie(b.slot, b.type, b.entity_id);
}

}  // namespace

AggregateReport summarize(std::span<const RunLog> logs) {
  // canonical order so sums do not depend on input order
  std::map<int, std::map<std::string, std::vector<LogRecord>>> batches;
  for (const auto& log : logs) {
    auto& recs = batches[density_of(log.run_id).value_or(0)][log.run_id];
    recs.insert(recs.end(), log.records.begin(), log.records.end());
  }

  AggregateReport report;
  for (auto& [rho, runs] : batches) {
    struct Acc {
      double v_sum = 0, c_sum = 0;
      std::size_t v_n = 0, c_n = 0;
    };
    std::map<int, Acc> per_slot;
    DensitySummary ds;
    ds.density = rho;
    ds.runs = static_cast<int>(runs.size());
    Acc final_acc;
    std::vector<double> run_vehicle, run_cvt;
    for (auto& [id, recs] : runs) {
      std::sort(recs.begin(), recs.end(), record_less);
      int last = std::numeric_limits<int>::min();
      for (const auto& r : recs) last = std::max(last, r.slot);
      Acc run_acc;
      for (const auto& r : recs) {
        auto& acc = per_slot[r.slot];
        const bool veh = r.type == EntityType::vehicle;
        (veh ? acc.v_sum : acc.c_sum) += r.error;
        ++(veh ? acc.v_n : acc.c_n);
        if (r.slot != last) continue;
        (veh ? run_acc.v_sum : run_acc.c_sum) += r.error;
        ++(veh ? run_acc.v_n : run_acc.c_n);
        if (veh) ds.cdf_samples.push_back(r.error);
      }
      final_acc.v_sum += run_acc.v_sum;
      final_acc.v_n += run_acc.v_n;
      final_acc.c_sum += run_acc.c_sum;
      final_acc.c_n += run_acc.c_n;
      if (run_acc.v_n) run_vehicle.push_back(run_acc.v_sum / double(run_acc.v_n));
      if (run_acc.c_n) run_cvt.push_back(run_acc.c_sum / double(run_acc.c_n));
    }
    for (const auto& [slot, acc] : per_slot)
      report.over_time.push_back({rho, slot, mean_or_nan(acc.v_sum, acc.v_n), mean_or_nan(acc.c_sum, acc.c_n)});
    std::sort(ds.cdf_samples.begin(), ds.cdf_samples.end());
    ds.mean_vehicle_err = mean_or_nan(final_acc.v_sum, final_acc.v_n);
    ds.mean_cvt_err = mean_or_nan(final_acc.c_sum, final_acc.c_n);
    ds.median_vehicle_err = median(run_vehicle);
    ds.median_cvt_err = median(run_cvt);
    report.by_density.push_back(std::move(ds));
  }

  const DensitySummary* base = report.density(1);
  for (auto& ds : report.by_density)
    ds.improvement = base ? 1.0 - ds.mean_vehicle_err / base->mean_vehicle_err : std::numeric_limits<double>::quiet_NaN();
  return report;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  struct Job {
    int density;
    int run_index;
  };
  std::vector<Job> jobs;
  for (int d : cfg.densities)
    for (int r = 0; r < cfg.runs; ++r) jobs.push_back({d, r});

  std::vector<std::optional<RunLog>> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto [d, r] = jobs[i];
      try {
        const auto scenario = build_scenario(cfg, d, r);
        results[i] = run(scenario.scene, scenario.fleet, cfg.estimator, cfg.slots, run_seed(cfg.seed, d, r), make_run_id(d, r));
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int threads = std::min<int>(cfg.parallel, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentResult out;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (results[i])
      out.logs.push_back(std::move(*results[i]));
    else
      out.failures.push_back({jobs[i].density, jobs[i].run_index, errors[i]});
  }
  out.report = summarize(out.logs);
  for (const auto& f : out.failures)
    if (std::find(out.report.incomplete_densities.begin(), out.report.incomplete_densities.end(), f.density) ==
        out.report.incomplete_densities.end())
      out.report.incomplete_densities.push_back(f.density);
  return out;
}

void write_error_over_time(std::ostream& os, const AggregateReport& report) {
  os << "density,slot,mean_vehicle_err,mean_cvt_err\n";
  for (const auto& p : report.over_time)
    os << p.density << ',' << p.slot << ',' << format_fixed(p.mean_vehicle_err) << ',' << format_fixed(p.mean_cvt_err) << '\n';
}

void write_cdf_final(std::ostream& os, const AggregateReport& report) {
  os << "density,error_sample\n";
  for (const auto& d : report.by_density)
    for (double e : d.cdf_samples) os << d.density << ',' << format_fixed(e) << '\n';
}

void write_error_vs_density(std::ostream& os, const AggregateReport& report) {
  os << "density,mean_vehicle_err,mean_cvt_err,improvement_pct\n";
  for (const auto& d : report.by_density)
    os << d.density << ',' << format_fixed(d.mean_vehicle_err) << ',' << format_fixed(d.mean_cvt_err) << ','
       << format_fixed(100.0 * d.improvement) << '\n';
}

void write_raw_runs(std::ostream& os, std::span<const RunLog> logs) {
  write_run_log_header(os);
  for (const auto& log : logs) write_run_log(os, log);
}

void write_outputs(const std::filesystem::path& dir, std::span<const RunLog> logs, const AggregateReport& report) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream os(dir / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
    return os;
  };
  if (!logs.empty()) {
    auto os = open("raw_runs.csv");
    write_raw_runs(os, logs);
  }
  {
    auto os = open("error_over_time.csv");
    write_error_over_time(os, report);
  }
  {
    auto os = open("cdf_final.csv");
    write_cdf_final(os, report);
  }
  {
    auto os = open("error_vs_density.csv");
    write_error_vs_density(os, report);
  }
}

}  // namespace cvtslam
