#pragma once

#include <optional>

#include <Eigen/Dense>

#include "rfusion/rigid_transform.hpp"

namespace rfusion {

/// Pinhole camera. The pose maps camera to world; the camera looks down its
/// local -Z with +Y up. Pixel (0, 0) is the top-left corner and pixel
/// centers sit at half-integer coordinates.
struct CameraModel {
  RigidTransformd pose;
  double vertical_fov_deg = 60.0;
  double aspect = 1.0;  // width / height of the frustum
  double near_plane = 0.01;
  double far_plane = 100.0;
  int width = 256;
  int height = 256;

  static CameraModel Make(const RigidTransformd& pose, double vertical_fov_deg, int width, int height,
                          double near_plane = 0.01, double far_plane = 100.0) {
    return CameraModel{pose, vertical_fov_deg, static_cast<double>(width) / height, near_plane, far_plane, width,
                       height};
  }

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;

  double focal_y() const;
  double focal_x() const;
  Eigen::Vector2d principal_point() const { return {0.5 * width, 0.5 * height}; }
  Eigen::Vector3d position() const { return pose.translation(); }

  /// Projection of a world point: pixel coordinates and positive view depth,
  /// or nullopt if the point is not in front of the near plane.
  struct Projection {
    Eigen::Vector2d pixel;
    double depth;
  };
  std::optional<Projection> project(const Eigen::Vector3d& world) const;
};

}  // namespace rfusion
