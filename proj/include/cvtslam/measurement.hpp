#pragma once

#include "cvtslam/scene.hpp"
#include "cvtslam/types.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

namespace cvtslam {

/// One ToA/AoA multipath measurement at a vehicle receiver. ToA is carried
/// directly as range in meters.
template <typename Scalar>
struct PathObservation {
  Scalar polar_angle = Scalar(0);
  Scalar azimuth_angle = Scalar(0);
  Scalar range = Scalar(0);
  PathId path_id = kLosPath;
  int vehicle_id = 0;
  int path_index = 0;  // 1-based position in this slot's observation list

  Vector3<Scalar> direction() const { return cvtslam::direction(polar_angle, azimuth_angle); }
};

template <typename Scalar>
struct NoiseConfig {
  Scalar sigma_d = Scalar(0.2);                    // range, m
  Scalar sigma_alpha = deg2rad(Scalar(1));         // polar and azimuth, rad
  Scalar sigma_eps = Scalar(3);                    // GPS initialization, m per axis
  Scalar sigma_v = Scalar(0.1);                    // speed, m/s
  Scalar sigma_omega = deg2rad(Scalar(0.1));       // speed orientation, rad
  Scalar truncation = Scalar(2);                   // in multiples of sigma

  static NoiseConfig zero() { return {Scalar(0), Scalar(0), Scalar(0), Scalar(0), Scalar(0), Scalar(2)}; }

  void validate() const {
    if (sigma_d < 0 || sigma_alpha < 0 || sigma_eps < 0 || sigma_v < 0 || sigma_omega < 0)
      throw std::invalid_argument("noise: standard deviations must be non-negative");
    if (!(truncation > 0)) throw std::invalid_argument("noise: truncation must be positive");
  }
};

/// Draw from N(0, sigma^2) conditioned on |x| <= cut * sigma (exact, by rejection).
template <typename Scalar, typename Urbg>
Scalar truncated_gaussian(Urbg& rng, Scalar sigma, Scalar cut) {
  if (sigma == Scalar(0)) return Scalar(0);
  std::normal_distribution<Scalar> standard(Scalar(0), Scalar(1));
  for (;;) {
    const Scalar z = standard(rng);
    if (std::abs(z) <= cut) return sigma * z;
  }
}

/// Map (polar, azimuth) back into polar in (-pi, pi], azimuth in [0, pi]
/// without changing the direction they describe.
template <typename Scalar>
void canonicalize_angles(Scalar& polar, Scalar& azimuth) {
  const Scalar pi = kPi<Scalar>;
  const Scalar two_pi = Scalar(2) * pi;
  azimuth = std::remainder(azimuth, two_pi);
  if (azimuth < Scalar(0)) {
    azimuth = -azimuth;
    polar += pi;
  }
  polar = std::remainder(polar, two_pi);
  if (polar <= -pi) polar += two_pi;
}

/// Noisy ToA/AoA synthesis: independent truncated-Gaussian noise on range,
/// polar angle and azimuth angle. Path identity is passed through.
template <typename Scalar, typename Urbg>
std::vector<PathObservation<Scalar>> observe(const std::vector<TracedPath<Scalar>>& paths, const NoiseConfig<Scalar>& noise,
                                             Urbg& rng, int vehicle_id = 0) {
  std::vector<PathObservation<Scalar>> out;
  out.reserve(paths.size());
  const Scalar cut = noise.truncation;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    PathObservation<Scalar> o;
    o.range = p.true_range + truncated_gaussian(rng, noise.sigma_d, cut);
    o.polar_angle = p.polar + truncated_gaussian(rng, noise.sigma_alpha, cut);
    o.azimuth_angle = p.azimuth + truncated_gaussian(rng, noise.sigma_alpha, cut);
    canonicalize_angles(o.polar_angle, o.azimuth_angle);
    o.path_id = p.path_id;
    o.vehicle_id = vehicle_id;
    o.path_index = static_cast<int>(i) + 1;
    out.push_back(o);
  }
  return out;
}

/// VT position seen from `vehicle_position`: r_V + (d - d_VT) R(polar, azimuth).
template <typename Scalar>
Vector3<Scalar> back_project_vt(const Vector3<Scalar>& vehicle_position, const PathObservation<Scalar>& obs,
                                Scalar additional_distance) {
  if (additional_distance < Scalar(0) || obs.range < additional_distance)
    throw std::domain_error("back_project_vt: additional distance outside [0, range]");
  return vehicle_position + (obs.range - additional_distance) * obs.direction();
}

}  // namespace cvtslam
