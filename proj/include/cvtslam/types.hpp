#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace cvtslam {

template <typename Scalar> using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar> using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar> using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Rng = std::mt19937_64;

template <typename Scalar> constexpr Scalar kPi = Scalar(3.141592653589793238462643383279502884L);

template <typename Scalar> constexpr Scalar deg2rad(Scalar deg) { return deg * kPi<Scalar> / Scalar(180); }

/// Unit vector of polar angle `polar` (in the x-y plane, from +x) and
/// azimuth angle `azimuth` (from +z): (cos a sin b, sin a sin b, cos b).
template <typename Scalar>
Vector3<Scalar> direction(Scalar polar, Scalar azimuth) {
  using std::cos;
  using std::sin;
  return {cos(polar) * sin(azimuth), sin(polar) * sin(azimuth), cos(azimuth)};
}

/// Inverse of direction(): returns (polar, azimuth) of a non-zero vector.
/// polar lies in (-pi, pi], azimuth in [0, pi].
template <typename Scalar>
Vector2<Scalar> angles_of(const Vector3<Scalar>& v) {
  using std::atan2;
  using std::hypot;
  return {atan2(v.y(), v.x()), atan2(hypot(v.x(), v.y()), v.z())};
}

template <typename Scalar>
Vector3<Scalar> lift(const Vector2<Scalar>& xy, Scalar z) {
  return {xy.x(), xy.y(), z};
}

}  // namespace cvtslam
