#include "cvtslam/orchestrator.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace cvtslam;

namespace {

VehicleSpec vehicle(int id, Vector2<double> p, Vector2<double> v) {
  VehicleSpec s;
  s.id = id;
  s.initial.position = p;
  s.initial.velocity = v;
  return s;
}

FleetSpec two_way_fleet() {
  return {vehicle(0, {10, -6}, {10, 0}), vehicle(1, {130, 6}, {-10, 0}), vehicle(2, {25, -10}, {10, 0})};
}

double mean_error(const SimulationState& st) {
  double e = 0;
  for (const auto& v : st.vehicles) e += (v.estimate - v.truth.position).norm();
  return e / double(st.vehicles.size());
}

}  // namespace

TEST(Orchestrator, LosOnlyExactTracking) {
  Scene<double> scene;  // no reflectors
  EstimatorConfig cfg;
  cfg.noise = NoiseConfig<double>::zero();
  cfg.cvt_init_spread = 0.0;
  const FleetSpec fleet{vehicle(0, {20, -2}, {10, 0})};
  const auto log = run(scene, fleet, cfg, 30, 5);
  for (const auto& r : log.records)
    if (r.type == EntityType::vehicle) EXPECT_LE(r.error, 1e-6) << "slot " << r.slot;
}

TEST(Orchestrator, ZeroNoiseContraction) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  cfg.noise.sigma_d = 0;
  cfg.noise.sigma_alpha = 0;
  cfg.noise.sigma_v = 0;
  cfg.noise.sigma_omega = 0;
  cfg.kernel_scale = 1.0;  // the noise-derived scale would collapse to the 1 cm floor
  const FleetSpec fleet{vehicle(0, {15, -6}, {10, 0}), vehicle(1, {125, 6}, {-10, 0})};
  std::vector<double> initial, final_;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto log = run(scene, fleet, cfg, 20, seed);
    double e0 = 0, e1 = 0;
    for (const auto& r : log.records) {
      if (r.type != EntityType::vehicle) continue;
      if (r.slot == 0) e0 += r.error;
      if (r.slot == 20) e1 += r.error;
    }
    initial.push_back(e0 / 2);
    final_.push_back(e1 / 2);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[9] + v[10]);
  };
  EXPECT_LT(median(final_), median(initial));
}

TEST(Orchestrator, DeterministicForFixedSeed) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  const auto a = run(scene, two_way_fleet(), cfg, 10, 77);
  const auto b = run(scene, two_way_fleet(), cfg, 10, 77);
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].estimate, b.records[i].estimate);
    EXPECT_EQ(a.records[i].entity_id, b.records[i].entity_id);
  }
  const auto c = run(scene, two_way_fleet(), cfg, 10, 78);
  EXPECT_NE(a.records.back().estimate, c.records.back().estimate);
}

TEST(Orchestrator, ZeroSlotsLogsInitializationOnly) {
  auto scene = Scene<double>::default_road();
  const auto log = run(scene, two_way_fleet(), EstimatorConfig{}, 0, 1);
  ASSERT_EQ(log.records.size(), 3u);
  for (const auto& r : log.records) {
    EXPECT_EQ(r.slot, 0);
    EXPECT_EQ(r.type, EntityType::vehicle);
  }
}

TEST(Orchestrator, InvariantsHoldAfterEveryStep) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  Rng rng(3);
  auto st = initialize(scene, two_way_fleet(), cfg, rng);
  for (int k = 0; k < 40; ++k) {
    step(st, scene, cfg, rng);
    const auto issues = check_invariants(st);
    EXPECT_TRUE(issues.empty()) << issues.front();
    std::size_t paths = 0;
    for (const auto& v : st.vehicles) paths += v.observations.size();
    EXPECT_LE(st.clusters.size(), paths);
    for (const auto& c : st.clusters) EXPECT_NEAR(c.particles.weights.sum(), 1.0, 1e-9);
    for (const auto& v : st.vehicles) EXPECT_NEAR(v.particles.weights.sum(), 1.0, 1e-9);
  }
}

TEST(Orchestrator, NoiselessClusterCountAtMostThree) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  cfg.noise = NoiseConfig<double>::zero();
  Rng rng(4);
  auto st = initialize(scene, two_way_fleet(), cfg, rng);
  for (int k = 0; k < 10; ++k) step(st, scene, cfg, rng);
  EXPECT_LE(st.clusters.size(), 3u);
}

TEST(Orchestrator, LogCompleteness) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  Rng rng(5);
  auto st = initialize(scene, two_way_fleet(), cfg, rng);
  RunLog log;
  for (int k = 0; k < 5; ++k) {
    step(st, scene, cfg, rng);
    const auto before = log.records.size();
    log_slot(st, scene, log);
    const auto vehicles = std::count_if(log.records.begin() + static_cast<std::ptrdiff_t>(before), log.records.end(),
                                        [](const LogRecord& r) { return r.type == EntityType::vehicle; });
    EXPECT_EQ(static_cast<std::size_t>(vehicles), st.vehicles.size());
    EXPECT_EQ(log.records.size() - before - st.vehicles.size(), st.clusters.size());
  }
}

TEST(Orchestrator, VehicleLeavingRoadIsUnobserved) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  Rng rng(6);
  auto st = initialize(scene, FleetSpec{vehicle(0, {139.5, 0}, {10, 0})}, cfg, rng);
  step(st, scene, cfg, rng);
  EXPECT_TRUE(st.vehicles[0].observations.empty());
  EXPECT_TRUE(st.clusters.empty());
  EXPECT_TRUE(std::any_of(st.events.begin(), st.events.end(), [](const Event& e) { return e.kind == EventKind::vehicle_unobserved; }));
}

TEST(Orchestrator, CooperationReducesError) {
  auto scene = Scene<double>::default_road();
  EstimatorConfig cfg;
  double alone = 0, together = 0;
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    Rng a(seed), b(seed);
    auto s1 = initialize(scene, FleetSpec{vehicle(0, {10, -6}, {10, 0})}, cfg, a);
    auto s3 = initialize(scene, two_way_fleet(), cfg, b);
    for (int k = 0; k < 10; ++k) {
      step(s1, scene, cfg, a);
      step(s3, scene, cfg, b);
    }
    alone += mean_error(s1);
    together += mean_error(s3);
  }
  EXPECT_LT(together, alone);
}

TEST(Orchestrator, DuplicateVehicleIdRejected) {
  auto scene = Scene<double>::default_road();
  Rng rng(1);
  EXPECT_THROW(initialize(scene, FleetSpec{vehicle(0, {1, 1}, {1, 0}), vehicle(0, {5, 1}, {1, 0})}, EstimatorConfig{}, rng),
               std::invalid_argument);
}

TEST(EstimatorConfig, Validation) {
  EstimatorConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = cfg;
  bad.particles_cvt = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.dt = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.ap.lambda = 1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.kernel_scale = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

// The default CVT initial spread covers the true VT of a freshly observed
// path (single vehicle, GPS-seeded position estimate, default noise) in at
// least 99% of trials: every axis of the offset within the truncated support.
TEST(CvtInitSpread, DefaultCoversTrueVt) {
  auto scene = Scene<double>::default_road();
  const EstimatorConfig cfg;
  Rng rng(2024);
  std::uniform_real_distribution<double> ux(0, 140), uy(-16, 16);
  int inside = 0, total = 0;
  for (int t = 0; t < 5000; ++t) {
    VehicleState<double> v;
    v.position = {ux(rng), uy(rng)};
    Vector2<double> est = v.position;
    for (int k = 0; k < 2; ++k) est[k] += truncated_gaussian(rng, cfg.noise.sigma_eps, cfg.noise.truncation);
    for (const auto& o : observe(trace_paths(scene, v), cfg.noise, rng)) {
      const Vector3<double> offset = back_project_vt(lift(est, 0.0), o, 0.0) - true_vt(scene, o.path_id).position;
      inside += offset.cwiseAbs().maxCoeff() <= cfg.noise.truncation * cfg.cvt_init_spread ? 1 : 0;
      ++total;
    }
  }
  EXPECT_GE(double(inside) / total, 0.99);
}
