#pragma once

#include "cvtslam/types.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvtslam {

/// Finite vertical reflecting plane (a building facade). The extent is the
/// world-frame box the plane patch lives in; for a vertical plane its
/// intersection with the box is the rectangular facade.
template <typename Scalar>
struct ReflectorPlane {
  Vector3<Scalar> point_on_plane = Vector3<Scalar>::Zero();
  Vector3<Scalar> unit_normal = Vector3<Scalar>::UnitY();
  Vector3<Scalar> extent_min = Vector3<Scalar>::Constant(-std::numeric_limits<Scalar>::infinity());
  Vector3<Scalar> extent_max = Vector3<Scalar>::Constant(std::numeric_limits<Scalar>::infinity());

  Scalar signed_distance(const Vector3<Scalar>& p) const { return (p - point_on_plane).dot(unit_normal); }

  bool contains(const Vector3<Scalar>& p, Scalar tol = Scalar(1e-9)) const {
    return ((p - extent_min).array() >= -tol).all() && ((extent_max - p).array() >= -tol).all();
  }

  /// Facade y = `y` facing the road (normal points towards y = 0), spanning
  /// x in [x_min, x_max] and z in [z_min, z_max].
  static ReflectorPlane facade_y(Scalar y, Scalar x_min, Scalar x_max, Scalar z_min, Scalar z_max) {
    ReflectorPlane plane;
    plane.point_on_plane = {x_min, y, z_min};
    plane.unit_normal = {Scalar(0), y > Scalar(0) ? Scalar(-1) : Scalar(1), Scalar(0)};
    plane.extent_min = {x_min, y, z_min};
    plane.extent_max = {x_max, y, z_max};
    return plane;
  }
};

template <typename Scalar>
struct Scene {
  Vector3<Scalar> bs_position{Scalar(70), Scalar(0), Scalar(8)};
  std::vector<ReflectorPlane<Scalar>> reflectors;
  Vector2<Scalar> road_x{Scalar(0), Scalar(140)};
  Vector2<Scalar> road_y{Scalar(-16), Scalar(16)};
  int lanes = 8;
  Scalar lane_width = Scalar(4);

  bool inside_road(const Vector2<Scalar>& p) const {
    return p.x() >= road_x[0] && p.x() <= road_x[1] && p.y() >= road_y[0] && p.y() <= road_y[1];
  }

  /// Center line (y) of lane `index`, counted from road_y[0].
  Scalar lane_center(int index) const { return road_y[0] + lane_width * (Scalar(index) + Scalar(0.5)); }

  void validate() const {
    if (road_x[0] >= road_x[1] || road_y[0] >= road_y[1])
      throw std::invalid_argument("scene: road extent must be non-empty");
    if (!inside_road(bs_position.template head<2>()))
      throw std::invalid_argument("scene: base station must lie inside the road footprint");
    if (lanes < 1 || lane_width <= Scalar(0))
      throw std::invalid_argument("scene: need at least one lane of positive width");
    for (std::size_t k = 0; k < reflectors.size(); ++k) {
      const auto& n = reflectors[k].unit_normal;
      using std::abs;
      if (abs(n.norm() - Scalar(1)) > Scalar(1e-12))
        throw std::invalid_argument("scene: reflector " + std::to_string(k) + " normal is not unit length");
      if (abs(n.z()) > Scalar(1e-12))
        throw std::invalid_argument("scene: reflector " + std::to_string(k) + " is not vertical");
    }
  }

  /// Reference road: base station on the separator, facades along both road edges.
  static Scene default_road() {
    Scene scene;
    scene.reflectors.push_back(ReflectorPlane<Scalar>::facade_y(Scalar(16), Scalar(0), Scalar(140), Scalar(0), Scalar(20)));
    scene.reflectors.push_back(ReflectorPlane<Scalar>::facade_y(Scalar(-16), Scalar(0), Scalar(140), Scalar(0), Scalar(20)));
    return scene;
  }
};

template <typename Scalar>
struct VehicleState {
  Vector2<Scalar> position = Vector2<Scalar>::Zero();
  Vector2<Scalar> velocity = Vector2<Scalar>::Zero();
  Scalar antenna_height = Scalar(0);

  Vector3<Scalar> antenna() const { return lift(position, antenna_height); }
};

enum class VtOrigin { los, reflection, scatter };

/// Identity of a propagation path, stable over time: 0 is the LOS path,
/// k + 1 is the specular reflection off scene reflector k.
using PathId = int;
constexpr PathId kLosPath = 0;
constexpr PathId reflection_path(std::size_t plane_index) { return static_cast<PathId>(plane_index) + 1; }

template <typename Scalar>
struct VirtualTransmitter {
  Vector3<Scalar> position = Vector3<Scalar>::Zero();
  Scalar additional_distance = Scalar(0);
  VtOrigin origin = VtOrigin::los;
  int plane = -1;  // reflector index for VtOrigin::reflection
};

template <typename Scalar>
struct TracedPath {
  PathId path_id = kLosPath;
  VirtualTransmitter<Scalar> vt;
  Scalar true_range = Scalar(0);
  Scalar polar = Scalar(0);
  Scalar azimuth = Scalar(0);
};

/// Mirror image of `bs` across `plane`: p - 2((p - q).n) n.
template <typename Scalar>
VirtualTransmitter<Scalar> mirror_vt(const Vector3<Scalar>& bs, const ReflectorPlane<Scalar>& plane, int plane_index = -1) {
  VirtualTransmitter<Scalar> vt;
  vt.position = bs - Scalar(2) * plane.signed_distance(bs) * plane.unit_normal;
  vt.additional_distance = Scalar(0);
  vt.origin = VtOrigin::reflection;
  vt.plane = plane_index;
  return vt;
}

/// True virtual transmitter of a path id in `scene`, independent of any receiver.
template <typename Scalar>
VirtualTransmitter<Scalar> true_vt(const Scene<Scalar>& scene, PathId id) {
  if (id == kLosPath) return VirtualTransmitter<Scalar>{scene.bs_position, Scalar(0), VtOrigin::los, -1};
  const auto k = static_cast<std::size_t>(id - 1);
  if (k >= scene.reflectors.size()) throw std::out_of_range("true_vt: unknown path id " + std::to_string(id));
  return mirror_vt(scene.bs_position, scene.reflectors[k], static_cast<int>(k));
}

template <typename Scalar>
TracedPath<Scalar> make_path(PathId id, const VirtualTransmitter<Scalar>& vt, const Vector3<Scalar>& antenna) {
  const Vector3<Scalar> d = vt.position - antenna;
  const Vector2<Scalar> ang = angles_of<Scalar>(d);
  return {id, vt, d.norm() + vt.additional_distance, ang[0], ang[1]};
}

/// Single-bounce specular ray tracing: the LOS path plus one path per
/// reflector whose reflection point falls inside its extent. No occlusion.
template <typename Scalar>
std::vector<TracedPath<Scalar>> trace_paths(const Scene<Scalar>& scene, const VehicleState<Scalar>& vehicle) {
  std::vector<TracedPath<Scalar>> paths;
  const Vector3<Scalar> rx = vehicle.antenna();
  const Scalar eps = Scalar(1e-12);

  if ((scene.bs_position - rx).norm() > eps)
    paths.push_back(make_path<Scalar>(kLosPath, true_vt(scene, kLosPath), rx));

  for (std::size_t k = 0; k < scene.reflectors.size(); ++k) {
    const auto& plane = scene.reflectors[k];
    const Scalar s_bs = plane.signed_distance(scene.bs_position);
    const Scalar s_rx = plane.signed_distance(rx);
    // both ends strictly on the same side, otherwise there is no bounce
    if (s_bs * s_rx <= eps) continue;
    const auto vt = mirror_vt(scene.bs_position, plane, static_cast<int>(k));
    const Vector3<Scalar> seg = vt.position - rx;
    const Scalar t = s_rx / (s_rx - plane.signed_distance(vt.position));
    const Vector3<Scalar> hit = rx + t * seg;
    if (!plane.contains(hit)) continue;
    paths.push_back(make_path<Scalar>(reflection_path(k), vt, rx));
  }
  return paths;
}

}  // namespace cvtslam
