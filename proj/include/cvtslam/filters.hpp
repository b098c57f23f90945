#pragma once

#include "cvtslam/clustering.hpp"
#include "cvtslam/measurement.hpp"
#include "cvtslam/particles.hpp"
#include "cvtslam/types.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace cvtslam {

/// Odometry for one slot: velocities at the previous and current slot.
template <typename Scalar>
struct MotionCommand {
  Vector2<Scalar> v_prev = Vector2<Scalar>::Zero();
  Vector2<Scalar> v_curr = Vector2<Scalar>::Zero();
  Scalar dt = Scalar(0.1);
};

enum class VelocityNoiseMode {
  heading_relative,  // noise vector of length n_v pointing along heading + n_omega
  absolute,          // noise vector of length n_v pointing along n_omega
};

/// v + n_v e^{j n_omega}, with n_v and n_omega truncated Gaussians.
template <typename Scalar, typename Urbg>
Vector2<Scalar> perturb_velocity(const Vector2<Scalar>& v, const NoiseConfig<Scalar>& noise, VelocityNoiseMode mode, Urbg& rng) {
  const Scalar n_v = truncated_gaussian(rng, noise.sigma_v, noise.truncation);
  const Scalar n_w = truncated_gaussian(rng, noise.sigma_omega, noise.truncation);
  if (n_v == Scalar(0)) return v;
  Scalar angle = n_w;
  if (mode == VelocityNoiseMode::heading_relative && v.squaredNorm() > Scalar(0)) angle += std::atan2(v.y(), v.x());
  return v + n_v * Vector2<Scalar>(std::cos(angle), std::sin(angle));
}

/// Trapezoidal dead reckoning r += (v_prev + v_curr) dt / 2, each velocity
/// independently perturbed per particle. Weights are untouched.
template <typename Scalar, typename Urbg>
VehicleParticles<Scalar> propagate_vehicle(VehicleParticles<Scalar> ps, const MotionCommand<Scalar>& cmd, const NoiseConfig<Scalar>& noise,
                                           Urbg& rng, VelocityNoiseMode mode = VelocityNoiseMode::heading_relative) {
  if (!(cmd.dt > Scalar(0))) throw std::invalid_argument("propagate_vehicle: dt must be positive");
  for (Eigen::Index j = 0; j < ps.count(); ++j) {
    const Vector2<Scalar> v0 = perturb_velocity(cmd.v_prev, noise, mode, rng);
    const Vector2<Scalar> v1 = perturb_velocity(cmd.v_curr, noise, mode, rng);
    ps.states.col(j) += (v0 + v1) * (cmd.dt / Scalar(2));
  }
  return ps;
}

/// CVTs are static; the optional roughening jitters positions (not the
/// additional distance) with a truncated Gaussian of scale `roughening`.
template <typename Scalar, typename Urbg>
CvtParticles<Scalar> propagate_cvt(CvtParticles<Scalar> ps, Scalar roughening, Scalar truncation, Urbg& rng) {
  if (roughening <= Scalar(0)) return ps;
  for (Eigen::Index a = 0; a < ps.count(); ++a)
    for (int k = 0; k < 3; ++k) ps.states(k, a) += truncated_gaussian(rng, roughening, truncation);
  return ps;
}

template <typename Scalar>
CvtParticles<Scalar> propagate_cvt(CvtParticles<Scalar> ps) {
  return ps;
}

/// Scale of the Gaussian kernel comparing back-projected and particle
/// positions. A fixed scale, or first-order error propagation
/// sigma_d + range * sigma_alpha per observation.
template <typename Scalar>
struct LikelihoodConfig {
  std::optional<Scalar> kernel_scale;
  Scalar sigma_d = Scalar(0.2);
  Scalar sigma_alpha = deg2rad(Scalar(1));
  Scalar min_scale = Scalar(0.01);

  Scalar scale_for(Scalar range) const {
    if (kernel_scale) return *kernel_scale;
    return std::max(min_scale, sigma_d + range * sigma_alpha);
  }

  static LikelihoodConfig fixed(Scalar scale) {
    LikelihoodConfig cfg;
    cfg.kernel_scale = scale;
    return cfg;
  }
};

/// One vehicle's contribution to a CVT update: its particles and its
/// observation of the member path.
template <typename Scalar>
struct VehicleLink {
  int vehicle_id = 0;
  const VehicleParticles<Scalar>* particles = nullptr;
  PathObservation<Scalar> obs;
  Scalar antenna_height = Scalar(0);
};

/// One cluster's contribution to a vehicle update.
template <typename Scalar>
struct CvtLink {
  int cluster_id = 0;
  const CvtParticles<Scalar>* particles = nullptr;
  PathObservation<Scalar> obs;
};

template <typename Scalar, int Dim>
struct WeightUpdate {
  ParticleSet<Scalar, Dim> particles;
  bool degenerate = false;  // every likelihood vanished; weights reset to uniform
};

namespace detail {

/// log((1/N) sum_j exp(x_j)), stable for large negative arguments.
template <typename Derived>
typename Derived::Scalar log_mean_exp(const Eigen::ArrayBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x - m).exp().sum()) - std::log(Scalar(x.size()));
}

template <typename Scalar, int Dim>
WeightUpdate<Scalar, Dim> apply_log_likelihood(ParticleSet<Scalar, Dim> ps, const VectorX<Scalar>& loglik) {
  VectorX<Scalar> logw = ps.weights.array().log().matrix() + loglik;
  const Scalar m = logw.maxCoeff();
  if (!std::isfinite(m)) {
    ps.weights.setConstant(Scalar(1) / Scalar(ps.count()));
    return {std::move(ps), true};
  }
  ps.weights = (logw.array() - m).exp().matrix();
  ps.normalize();
  return {std::move(ps), false};
}

}  // namespace detail

/// Per-particle log-likelihood of a CVT particle set given the vehicles that
/// observe it: sum over vehicles of log (1/N_V) sum_j exp(-|r_C - r_hat|^2 / 2s^2)
/// with r_hat = r_V^(j) + (d_hat - d_C) R(alpha_hat).
template <typename Scalar>
VectorX<Scalar> cvt_log_likelihood(const CvtParticles<Scalar>& cvt, std::span<const VehicleLink<Scalar>> vehicles,
                                   const LikelihoodConfig<Scalar>& cfg) {
  VectorX<Scalar> loglik = VectorX<Scalar>::Zero(cvt.count());
  for (const auto& link : vehicles) {
    const auto& xv = link.particles->states;
    const Vector3<Scalar> dir = link.obs.direction();
    const Scalar s = cfg.scale_for(link.obs.range);
    const Scalar inv_two_var = Scalar(1) / (Scalar(2) * s * s);
    for (Eigen::Index a = 0; a < cvt.count(); ++a) {
      const Vector3<Scalar> c = cvt.states.col(a).template head<3>() - (link.obs.range - cvt.states(3, a)) * dir;
      const Scalar dz = c.z() - link.antenna_height;
      const auto d2 = (xv.row(0).array() - c.x()).square() + (xv.row(1).array() - c.y()).square() + dz * dz;
      loglik[a] += detail::log_mean_exp((-d2 * inv_two_var).eval());
    }
  }
  return loglik;
}

template <typename Scalar>
WeightUpdate<Scalar, 4> cvt_weight_update(const CvtParticles<Scalar>& cvt, std::span<const VehicleLink<Scalar>> vehicles,
                                          const LikelihoodConfig<Scalar>& cfg) {
  if (vehicles.empty()) throw std::invalid_argument("cvt_weight_update: cluster has no observing vehicle");
  return detail::apply_log_likelihood(cvt, cvt_log_likelihood(cvt, vehicles, cfg));
}

/// Per-particle log-likelihood of a vehicle particle set given the clusters
/// holding its paths, r_hat = r_C^(a) - (d_hat - d_C^(a)) R(alpha_hat)
/// compared in the x-y plane.
template <typename Scalar>
VectorX<Scalar> vehicle_log_likelihood(const VehicleParticles<Scalar>& veh, std::span<const CvtLink<Scalar>> clusters,
                                       const LikelihoodConfig<Scalar>& cfg) {
  VectorX<Scalar> loglik = VectorX<Scalar>::Zero(veh.count());
  for (const auto& link : clusters) {
    const auto& xc = link.particles->states;
    const Vector3<Scalar> dir = link.obs.direction();
    const Scalar s = cfg.scale_for(link.obs.range);
    const Scalar inv_two_var = Scalar(1) / (Scalar(2) * s * s);
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> delta = link.obs.range - xc.row(3).array();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> cx = xc.row(0).array() - delta * dir.x();
    const Eigen::Array<Scalar, 1, Eigen::Dynamic> cy = xc.row(1).array() - delta * dir.y();
    for (Eigen::Index j = 0; j < veh.count(); ++j) {
      const auto d2 = (cx - veh.states(0, j)).square() + (cy - veh.states(1, j)).square();
      loglik[j] += detail::log_mean_exp((-d2 * inv_two_var).eval());
    }
  }
  return loglik;
}

template <typename Scalar>
WeightUpdate<Scalar, 2> vehicle_weight_update(const VehicleParticles<Scalar>& veh, std::span<const CvtLink<Scalar>> clusters,
                                              const LikelihoodConfig<Scalar>& cfg) {
  if (clusters.empty()) throw std::invalid_argument("vehicle_weight_update: vehicle has no cluster");
  return detail::apply_log_likelihood(veh, vehicle_log_likelihood(veh, clusters, cfg));
}

/// GPS-seeded vehicle particles: gps + per-axis truncated Gaussian offsets.
template <typename Scalar, typename Urbg>
VehicleParticles<Scalar> init_vehicle_particles(const Vector2<Scalar>& gps, const NoiseConfig<Scalar>& noise, Eigen::Index count, Urbg& rng) {
  if (count < 1) throw std::invalid_argument("init_vehicle_particles: count must be >= 1");
  typename VehicleParticles<Scalar>::States s(2, count);
  for (Eigen::Index j = 0; j < count; ++j)
    for (int k = 0; k < 2; ++k) s(k, j) = gps[k] + truncated_gaussian(rng, noise.sigma_eps, noise.truncation);
  return VehicleParticles<Scalar>::uniform(std::move(s));
}

/// CVT particles around the member mean position with isotropic truncated
/// Gaussian spread; the additional distance starts at the member mean.
template <typename Scalar, typename Urbg>
CvtParticles<Scalar> init_cvt_particles(std::span<const VtEstimate<Scalar>> members, Scalar spread, Scalar truncation, Eigen::Index count,
                                        Urbg& rng) {
  if (members.empty()) throw std::invalid_argument("init_cvt_particles: need at least one member estimate");
  if (count < 1) throw std::invalid_argument("init_cvt_particles: count must be >= 1");
  Vector3<Scalar> mean = Vector3<Scalar>::Zero();
  Scalar d = Scalar(0);
  for (const auto& m : members) {
    mean += m.position;
    d += m.additional_distance;
  }
  mean /= Scalar(members.size());
  d /= Scalar(members.size());

  typename CvtParticles<Scalar>::States s(4, count);
  for (Eigen::Index a = 0; a < count; ++a) {
    for (int k = 0; k < 3; ++k) s(k, a) = mean[k] + truncated_gaussian(rng, spread, truncation);
    s(3, a) = d;
  }
  return CvtParticles<Scalar>::uniform(std::move(s));
}

}  // namespace cvtslam
