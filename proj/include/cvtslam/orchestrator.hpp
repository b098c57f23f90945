#pragma once

#include "cvtslam/clustering.hpp"
#include "cvtslam/filters.hpp"
#include "cvtslam/measurement.hpp"
#include "cvtslam/particles.hpp"
#include "cvtslam/run_log.hpp"
#include "cvtslam/scene.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cvtslam {

struct EstimatorConfig {
  Eigen::Index particles_vehicle = 120;
  Eigen::Index particles_cvt = 120;
  double dt = 0.1;
  NoiseConfig<double> noise;
  ApOptions ap;
  std::optional<double> kernel_scale;  // empty: sigma_d + range * sigma_alpha
  double min_kernel_scale = 0.01;
  double cvt_init_spread = 3.5;
  double cvt_roughening = 0.0;
  ResamplePolicy resample;
  VelocityNoiseMode velocity_noise = VelocityNoiseMode::heading_relative;

  LikelihoodConfig<double> likelihood() const;
  void validate() const;
};

struct VehicleSpec {
  int id = 0;
  VehicleState<double> initial;
};

using FleetSpec = std::vector<VehicleSpec>;

struct VehicleTrack {
  int id = 0;
  VehicleState<double> truth;
  VehicleParticles<double> particles;
  Vector2<double> estimate = Vector2<double>::Zero();
  Vector2<double> odometry = Vector2<double>::Zero();  // last noisy velocity reading
  std::vector<PathObservation<double>> observations;
};

struct ClusterTrack {
  CvtCluster<double> cluster;
  CvtParticles<double> particles;
  Vector4<double> estimate = Vector4<double>::Zero();
};

struct PathRecord {
  bool active = false;
  int cluster_id = -1;
};

using PathKey = std::pair<int, PathId>;  // (vehicle id, path id)

enum class EventKind { path_appeared, path_lost, cluster_retired, cvt_degenerate, vehicle_degenerate, vehicle_unobserved };

struct Event {
  int slot = 0;
  EventKind kind = EventKind::path_appeared;
  int id = 0;
};

struct SimulationState {
  int slot_index = 0;
  std::vector<VehicleTrack> vehicles;
  std::vector<ClusterTrack> clusters;
  std::map<PathKey, PathRecord> path_registry;
  int next_cluster_id = 0;
  std::vector<Event> events;

  const VehicleTrack* vehicle(int id) const;
  const ClusterTrack* cluster(int id) const;
};

/// Slot-0 state: GPS fixes drawn around the true start positions, vehicle
/// particles drawn around the fixes, no clusters yet.
SimulationState initialize(const Scene<double>& scene, const FleetSpec& fleet, const EstimatorConfig& cfg, Rng& rng);

/// One time slot: truth motion and observation, path lifecycle, clustering,
/// CVT phase, vehicle phase.
void step(SimulationState& state, const Scene<double>& scene, const EstimatorConfig& cfg, Rng& rng);

/// Records for the current slot of `state` (vehicles, then clusters).
void log_slot(const SimulationState& state, const Scene<double>& scene, RunLog& log);

/// Full run: initialization plus `slots` steps, everything drawn from `seed`.
RunLog run(const Scene<double>& scene, const FleetSpec& fleet, const EstimatorConfig& cfg, int slots, std::uint64_t seed,
           std::string run_id = "run");

/// Oracle VT of a cluster: the true VT of its most common member path.
Vector3<double> cluster_truth(const CvtCluster<double>& cluster, const Scene<double>& scene);

/// Violations of the membership invariants (empty when consistent): one
/// member per vehicle per cluster, every active path in exactly one
/// cluster, V(u) and C(m) mutually consistent.
std::vector<std::string> check_invariants(const SimulationState& state);

}  // namespace cvtslam
