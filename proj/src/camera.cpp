#include "rfusion/camera.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rfusion {

void CameraModel::validate() const {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("camera viewport has zero area");
  }
  if (!(near_plane > 0.0 && near_plane < far_plane)) {
    throw std::invalid_argument("camera requires 0 < near < far");
  }
  if (!(vertical_fov_deg > 0.0 && vertical_fov_deg < 180.0)) {
    throw std::invalid_argument("camera vertical fov must lie in (0, 180) degrees");
  }
  if (!(aspect > 0.0) || !std::isfinite(aspect)) {
    throw std::invalid_argument("camera aspect must be positive");
  }
  pose.require_invertible();
}

double CameraModel::focal_y() const {
  return 0.5 * height / std::tan(0.5 * vertical_fov_deg * std::numbers::pi / 180.0);
}

double CameraModel::focal_x() const { return focal_y() * (static_cast<double>(width) / height) / aspect; }

std::optional<CameraModel::Projection> CameraModel::project(const Eigen::Vector3d& world) const {
  const Eigen::Vector3d p = pose.inverse().apply(world);
  const double z = -p.z();
  if (!(z > near_plane)) return std::nullopt;
  const Eigen::Vector2d c = principal_point();
  return Projection{{c.x() + focal_x() * p.x() / z, c.y() - focal_y() * p.y() / z}, z};
}

}  // namespace rfusion
