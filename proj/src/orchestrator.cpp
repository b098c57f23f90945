#include "cvtslam/orchestrator.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace cvtslam {

LikelihoodConfig<double> EstimatorConfig::likelihood() const {
  LikelihoodConfig<double> lc;
  lc.kernel_scale = kernel_scale;
  lc.sigma_d = noise.sigma_d;
  lc.sigma_alpha = noise.sigma_alpha;
  lc.min_scale = min_kernel_scale;
  return lc;
}

void EstimatorConfig::validate() const {
  noise.validate();
  if (particles_vehicle < 1 || particles_cvt < 1) throw std::invalid_argument("estimator: particle counts must be >= 1");
  if (!(dt > 0)) throw std::invalid_argument("estimator: dt must be positive");
  if (!(ap.lambda > 0 && ap.lambda < 1)) throw std::invalid_argument("estimator: ap lambda must be in (0,1)");
  if (ap.n_iter < 1) throw std::invalid_argument("estimator: ap iterations must be >= 1");
  if (kernel_scale && !(*kernel_scale > 0)) throw std::invalid_argument("estimator: kernel_scale must be positive");
  if (!(min_kernel_scale > 0)) throw std::invalid_argument("estimator: min_kernel_scale must be positive");
  if (cvt_init_spread < 0 || cvt_roughening < 0) throw std::invalid_argument("estimator: spreads must be non-negative");
  if (!(resample.ess_threshold > 0)) throw std::invalid_argument("estimator: ess threshold must be positive");
}

const VehicleTrack* SimulationState::vehicle(int id) const {
  for (const auto& v : vehicles)
    if (v.id == id) return &v;
  return nullptr;
}

const ClusterTrack* SimulationState::cluster(int id) const {
  for (const auto& c : clusters)
    if (c.cluster.cluster_id == id) return &c;
  return nullptr;
}

SimulationState initialize(const Scene<double>& scene, const FleetSpec& fleet, const EstimatorConfig& cfg, Rng& rng) {
  scene.validate();
  cfg.validate();
  SimulationState state;
  std::set<int> ids;
  for (const auto& spec : fleet) {
    if (!ids.insert(spec.id).second) throw std::invalid_argument("fleet: duplicate vehicle id " + std::to_string(spec.id));
    VehicleTrack v;
    v.id = spec.id;
    v.truth = spec.initial;
    Vector2<double> gps = spec.initial.position;
    for (int k = 0; k < 2; ++k) gps[k] += truncated_gaussian(rng, cfg.noise.sigma_eps, cfg.noise.truncation);
    v.particles = init_vehicle_particles(gps, cfg.noise, cfg.particles_vehicle, rng);
    v.estimate = estimate_state(v.particles);
    v.odometry = perturb_velocity(spec.initial.velocity, cfg.noise, cfg.velocity_noise, rng);
    state.vehicles.push_back(std::move(v));
  }
  return state;
}

namespace {

struct ActivePath {
  std::size_t vehicle;  // index into state.vehicles
  const PathObservation<double>* obs;
};

ClusterTrack* find_cluster(std::vector<ClusterTrack>& clusters, int id) {
  for (auto& c : clusters)
    if (c.cluster.cluster_id == id) return &c;
  return nullptr;
}

VtEstimate<double> vt_estimate(const VehicleTrack& v, const PathObservation<double>& obs, double d_vt) {
  VtEstimate<double> e;
  e.member = {v.id, obs.path_index, obs.path_id};
  e.additional_distance = std::clamp(d_vt, 0.0, obs.range);
  e.position = back_project_vt(lift(v.estimate, v.truth.antenna_height), obs, e.additional_distance);
  return e;
}

// Truth motion, dead reckoning of the particles, and observation.
void advance_vehicles(SimulationState& state, const Scene<double>& scene, const EstimatorConfig& cfg, Rng& rng) {
  for (auto& v : state.vehicles) {
    v.truth.position += v.truth.velocity * cfg.dt;
    MotionCommand<double> cmd{v.odometry, perturb_velocity(v.truth.velocity, cfg.noise, cfg.velocity_noise, rng), cfg.dt};
    v.odometry = cmd.v_curr;
    v.particles = propagate_vehicle(std::move(v.particles), cmd, cfg.noise, rng, cfg.velocity_noise);
    v.estimate = estimate_state(v.particles);
    v.observations.clear();
    if (scene.inside_road(v.truth.position)) v.observations = observe(trace_paths(scene, v.truth), cfg.noise, rng, v.id);
  }
}

// New paths get a singleton cluster; lost paths leave their cluster, and
// clusters left without members are retired.
void update_path_lifecycle(SimulationState& state, const EstimatorConfig& cfg, Rng& rng) {
  std::set<PathKey> seen;
  for (const auto& v : state.vehicles)
    for (const auto& obs : v.observations) {
      const PathKey key{v.id, obs.path_id};
      seen.insert(key);
      auto& rec = state.path_registry[key];
      if (rec.active) {
        // path index may shift when other paths of the vehicle come or go
        if (auto* c = find_cluster(state.clusters, rec.cluster_id))
          for (auto& m : c->cluster.members)
            if (m.key() == key) m.path_index = obs.path_index;
        continue;
      }
      const auto est = vt_estimate(v, obs, 0.0);
      ClusterTrack track;
      track.cluster.position = est.position;
      track.cluster.additional_distance = est.additional_distance;
      track.cluster.members = {est.member};
      track.cluster.cluster_id = state.next_cluster_id++;
      track.particles = init_cvt_particles<double>(std::span(&est, 1), cfg.cvt_init_spread, cfg.noise.truncation, cfg.particles_cvt, rng);
      track.estimate = estimate_state(track.particles);
      rec = {true, track.cluster.cluster_id};
      state.clusters.push_back(std::move(track));
      state.events.push_back({state.slot_index, EventKind::path_appeared, v.id});
    }

  for (auto& [key, rec] : state.path_registry) {
    if (!rec.active || seen.count(key)) continue;
    if (auto* c = find_cluster(state.clusters, rec.cluster_id)) {
      auto& members = c->cluster.members;
      members.erase(std::remove_if(members.begin(), members.end(), [&](const ClusterMember& m) { return m.key() == key; }),
                    members.end());
    }
    rec = {false, -1};
    state.events.push_back({state.slot_index, EventKind::path_lost, key.first});
  }

  for (const auto& c : state.clusters)
    if (c.cluster.members.empty()) state.events.push_back({state.slot_index, EventKind::cluster_retired, c.cluster.cluster_id});
  state.clusters.erase(std::remove_if(state.clusters.begin(), state.clusters.end(),
                                      [](const ClusterTrack& c) { return c.cluster.members.empty(); }),
                       state.clusters.end());
}

// Affinity propagation over the current VT back-projections, then identity
// carry-over; surviving ids keep their particle sets.
void recluster(SimulationState& state, const EstimatorConfig& cfg, Rng& rng) {
  std::vector<VtEstimate<double>> estimates;
  for (const auto& v : state.vehicles)
    for (const auto& obs : v.observations) {
      const auto& rec = state.path_registry.at({v.id, obs.path_id});
      const ClusterTrack* owner = state.cluster(rec.cluster_id);
      estimates.push_back(vt_estimate(v, obs, owner ? owner->estimate[3] : 0.0));
    }
  if (estimates.empty()) {
    state.clusters.clear();
    return;
  }

  std::vector<Vector3<double>> points;
  for (const auto& e : estimates) points.push_back(e.position);
  const auto sim = build_similarity<double>(points, cfg.ap.preference, cfg.ap.rule);
  const auto ap = affinity_propagation(sim, cfg.ap.lambda, cfg.ap.n_iter, cfg.ap.damping);
  auto formed = form_clusters<double>(ap.exemplar, estimates);

  std::vector<CvtCluster<double>> prev;
  for (const auto& c : state.clusters) {
    auto p = c.cluster;
    p.position = c.estimate.head<3>();
    prev.push_back(std::move(p));
  }
  const auto carry = carry_over_identity(prev, formed, state.next_cluster_id);
  for (int id : carry.retired) state.events.push_back({state.slot_index, EventKind::cluster_retired, id});

  std::vector<ClusterTrack> next;
  for (auto& c : formed) {
    ClusterTrack track;
    if (auto* old = find_cluster(state.clusters, c.cluster_id)) {
      track.particles = std::move(old->particles);
      track.estimate = old->estimate;
    } else {
      std::vector<VtEstimate<double>> members;
      for (const auto& m : c.members)
        for (const auto& e : estimates)
          if (e.member.key() == m.key()) members.push_back(e);
      track.particles = init_cvt_particles<double>(members, cfg.cvt_init_spread, cfg.noise.truncation, cfg.particles_cvt, rng);
      track.estimate = estimate_state(track.particles);
    }
    for (const auto& m : c.members) state.path_registry[m.key()] = {true, c.cluster_id};
    track.cluster = std::move(c);
    next.push_back(std::move(track));
  }
  state.clusters = std::move(next);
}

const PathObservation<double>* observation_of(const VehicleTrack& v, PathId id) {
  for (const auto& o : v.observations)
    if (o.path_id == id) return &o;
  return nullptr;
}

void cvt_phase(SimulationState& state, const EstimatorConfig& cfg, const LikelihoodConfig<double>& lc, Rng& rng) {
  for (auto& c : state.clusters) {
    std::vector<VehicleLink<double>> links;
    for (const auto& m : c.cluster.members) {
      const VehicleTrack* v = state.vehicle(m.vehicle_id);
      const auto* obs = v ? observation_of(*v, m.path_id) : nullptr;
      if (!obs) throw std::logic_error("cvt phase: member path without observation");
      links.push_back({v->id, &v->particles, *obs, v->truth.antenna_height});
    }
    auto drawn = propagate_cvt(std::move(c.particles), cfg.cvt_roughening, cfg.noise.truncation, rng);
    auto upd = cvt_weight_update<double>(drawn, links, lc);
    if (upd.degenerate) state.events.push_back({state.slot_index, EventKind::cvt_degenerate, c.cluster.cluster_id});
    c.particles = maybe_resample(upd.particles, cfg.resample, rng);
    c.estimate = estimate_state(c.particles);
  }
}

void vehicle_phase(SimulationState& state, const EstimatorConfig& cfg, const LikelihoodConfig<double>& lc, Rng& rng) {
  for (auto& v : state.vehicles) {
    std::vector<CvtLink<double>> links;
    for (const auto& obs : v.observations) {
      const auto& rec = state.path_registry.at({v.id, obs.path_id});
      const ClusterTrack* c = state.cluster(rec.cluster_id);
      if (!c) throw std::logic_error("vehicle phase: active path without cluster");
      links.push_back({c->cluster.cluster_id, &c->particles, obs});
    }
    if (links.empty()) {
      state.events.push_back({state.slot_index, EventKind::vehicle_unobserved, v.id});
      v.estimate = estimate_state(v.particles);
      continue;
    }
    auto upd = vehicle_weight_update<double>(v.particles, links, lc);
    if (upd.degenerate) state.events.push_back({state.slot_index, EventKind::vehicle_degenerate, v.id});
    v.particles = maybe_resample(upd.particles, cfg.resample, rng);
    v.estimate = estimate_state(v.particles);
  }
}

}  // namespace

void step(SimulationState& state, const Scene<double>& scene, const EstimatorConfig& cfg, Rng& rng) {
  ++state.slot_index;
  const auto lc = cfg.likelihood();
  advance_vehicles(state, scene, cfg, rng);
  update_path_lifecycle(state, cfg, rng);
  recluster(state, cfg, rng);
  cvt_phase(state, cfg, lc, rng);
  vehicle_phase(state, cfg, lc, rng);
}

Vector3<double> cluster_truth(const CvtCluster<double>& cluster, const Scene<double>& scene) {
  std::map<PathId, int> votes;
  for (const auto& m : cluster.members) ++votes[m.path_id];
  PathId best = kLosPath;
  int best_votes = -1;
  for (const auto& [id, n] : votes)
    if (n > best_votes) {
      best = id;
      best_votes = n;
    }
  return true_vt(scene, best).position;
}

void log_slot(const SimulationState& state, const Scene<double>& scene, RunLog& log) {
  for (const auto& v : state.vehicles) {
    LogRecord r;
    r.slot = state.slot_index;
    r.type = EntityType::vehicle;
    r.entity_id = v.id;
    r.truth = v.truth.antenna();
    r.estimate = lift(v.estimate, v.truth.antenna_height);
    r.error = (v.estimate - v.truth.position).norm();
    log.records.push_back(r);
  }
  for (const auto& c : state.clusters) {
    LogRecord r;
    r.slot = state.slot_index;
    r.type = EntityType::cvt;
    r.entity_id = c.cluster.cluster_id;
    r.truth = cluster_truth(c.cluster, scene);
    r.estimate = c.estimate.head<3>();
    r.error = (r.estimate - r.truth).norm();
    log.records.push_back(r);
  }
}

RunLog run(const Scene<double>& scene, const FleetSpec& fleet, const EstimatorConfig& cfg, int slots, std::uint64_t seed,
           std::string run_id) {
  if (slots < 0) throw std::invalid_argument("run: slot count must be non-negative");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  Rng rng(seq);
  RunLog log{std::move(run_id), {}};
  auto state = initialize(scene, fleet, cfg, rng);
  log_slot(state, scene, log);
  for (int k = 0; k < slots; ++k) {
    step(state, scene, cfg, rng);
    log_slot(state, scene, log);
  }
  return log;
}

std::vector<std::string> check_invariants(const SimulationState& state) {
  std::vector<std::string> issues;
  std::map<PathKey, int> owners;
  std::map<int, std::set<int>> v_of_u;  // V(u)
  std::map<int, std::set<int>> c_of_m;  // C(m)
  for (const auto& c : state.clusters) {
    std::set<int> vehicles;
    for (const auto& m : c.cluster.members) {
      if (!vehicles.insert(m.vehicle_id).second)
        issues.push_back("cluster " + std::to_string(c.cluster.cluster_id) + " holds two paths of vehicle " + std::to_string(m.vehicle_id));
      ++owners[m.key()];
      const auto it = state.path_registry.find(m.key());
      if (it == state.path_registry.end() || it->second.cluster_id != c.cluster.cluster_id)
        issues.push_back("registry disagrees with cluster " + std::to_string(c.cluster.cluster_id));
    }
    v_of_u[c.cluster.cluster_id] = vehicles;
  }
  for (const auto& v : state.vehicles)
    for (const auto& obs : v.observations) {
      const PathKey key{v.id, obs.path_id};
      if (owners[key] != 1)
        issues.push_back("path (" + std::to_string(v.id) + "," + std::to_string(obs.path_id) + ") is in " +
                         std::to_string(owners[key]) + " clusters");
      const auto it = state.path_registry.find(key);
      if (it != state.path_registry.end()) c_of_m[v.id].insert(it->second.cluster_id);
    }
  for (const auto& [u, vs] : v_of_u)
    for (int m : vs)
      if (!c_of_m[m].count(u)) issues.push_back("vehicle " + std::to_string(m) + " in V(" + std::to_string(u) + ") but not C(m)");
  for (const auto& [m, us] : c_of_m)
    for (int u : us)
      if (!v_of_u[u].count(m)) issues.push_back("cluster " + std::to_string(u) + " in C(" + std::to_string(m) + ") but not V(u)");
  return issues;
}

}  // namespace cvtslam
