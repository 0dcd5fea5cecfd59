#pragma once

#include <cstdint>

#include "rfusion/camera.hpp"
#include "rfusion/splat_scene.hpp"

namespace rfusion {

struct RandomSceneOptions {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double extent = 1.0;  // half-width of the cube splat centers are drawn from
  double min_scale = 0.01;
  double max_scale = 0.08;
  double min_opacity = 0.2;
  double max_opacity = 1.0;
  int sh_degree = 1;
  Convention convention = Convention::kEngine;
};

/// Uniformly scattered splats with random orientation, log-uniform scale and
/// small random SH. Deterministic per seed.
SplatScene random_scene(std::size_t count, std::uint64_t seed, const RandomSceneOptions& options = {});

/// Camera on the +Z side of the scene bounds looking at their center, far
/// enough back that the bounding sphere fits the vertical field of view.
CameraModel frame_scene(const SplatScene& scene, int width, int height, double vertical_fov_deg = 60.0);

}  // namespace rfusion
