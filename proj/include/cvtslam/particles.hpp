#pragma once

#include "cvtslam/types.hpp"

#include <random>
#include <stdexcept>

namespace cvtslam {

/// Weighted particle ensemble; one column per particle.
template <typename Scalar, int Dim>
struct ParticleSet {
  using State = Eigen::Matrix<Scalar, Dim, 1>;
  using States = Eigen::Matrix<Scalar, Dim, Eigen::Dynamic>;

  States states;
  VectorX<Scalar> weights;

  Eigen::Index count() const { return states.cols(); }

  static ParticleSet uniform(States s) {
    const Eigen::Index n = s.cols();
    return {std::move(s), VectorX<Scalar>::Constant(n, Scalar(1) / Scalar(n))};
  }

  void normalize() {
    const Scalar total = weights.sum();
    if (!(total > Scalar(0))) throw std::domain_error("ParticleSet::normalize: weights sum to zero");
    weights /= total;
  }

  Scalar effective_sample_size() const { return Scalar(1) / weights.squaredNorm(); }
};

template <typename Scalar> using VehicleParticles = ParticleSet<Scalar, 2>;
/// CVT particle: (x, y, z, additional distance).
template <typename Scalar> using CvtParticles = ParticleSet<Scalar, 4>;

/// Weighted mean of the particle states.
template <typename Scalar, int Dim>
Eigen::Matrix<Scalar, Dim, 1> estimate_state(const ParticleSet<Scalar, Dim>& ps) {
  return ps.states * ps.weights;
}

/// Systematic resampling to uniform weights. Particle i gets floor or ceil
/// of N w_i offspring; equal weights reproduce the input exactly.
template <typename Scalar, int Dim, typename Urbg>
ParticleSet<Scalar, Dim> resample(const ParticleSet<Scalar, Dim>& ps, Urbg& rng) {
  const Eigen::Index n = ps.count();
  if (n == 0) return ps;
  std::uniform_real_distribution<Scalar> unit(Scalar(0), Scalar(1));
  const Scalar step = Scalar(1) / Scalar(n);
  const Scalar start = unit(rng) * step;

  typename ParticleSet<Scalar, Dim>::States out(ps.states.rows(), n);
  Scalar cumulative = ps.weights[0];
  Eigen::Index i = 0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Scalar u = start + Scalar(k) * step;
    while (u >= cumulative && i + 1 < n) cumulative += ps.weights[++i];
    out.col(k) = ps.states.col(i);
  }
  return ParticleSet<Scalar, Dim>::uniform(std::move(out));
}

struct ResamplePolicy {
  /// Resample when ESS < threshold * N. 1.0 (the default) resamples every slot.
  double ess_threshold = 1.0;
};

template <typename Scalar, int Dim, typename Urbg>
ParticleSet<Scalar, Dim> maybe_resample(const ParticleSet<Scalar, Dim>& ps, const ResamplePolicy& policy, Urbg& rng) {
  if (policy.ess_threshold >= 1.0 || ps.effective_sample_size() < Scalar(policy.ess_threshold) * Scalar(ps.count()))
    return resample(ps, rng);
  return ps;
}

}  // namespace cvtslam
