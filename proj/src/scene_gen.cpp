#include "rfusion/scene_gen.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace rfusion {

SplatScene random_scene(std::size_t count, std::uint64_t seed, const RandomSceneOptions& options) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n_coeffs = sh_coeff_count(options.sh_degree);
  std::vector<Splat> splats(count);
  for (auto& s : splats) {
    s.position = (options.center + options.extent * Eigen::Vector3d(unit(rng), unit(rng), unit(rng))).cast<float>();
    Eigen::Quaterniond q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    s.rotation = q.normalized().cast<float>();
    s.rotation.normalize();
    const double log_lo = std::log(options.min_scale);
    const double log_hi = std::log(options.max_scale);
    for (int a = 0; a < 3; ++a) s.scale[a] = static_cast<float>(std::exp(log_lo + (log_hi - log_lo) * u01(rng)));
    s.opacity = static_cast<float>(options.min_opacity + (options.max_opacity - options.min_opacity) * u01(rng));
    s.sh = ShCoeffs<float>::Zero(n_coeffs, 3);
    for (int c = 0; c < 3; ++c) s.sh(0, c) = static_cast<float>(1.5 * unit(rng));
    for (int k = 1; k < n_coeffs; ++k) {
      for (int c = 0; c < 3; ++c) s.sh(k, c) = static_cast<float>(0.2 * unit(rng));
    }
  }
  return SplatScene(std::move(splats), options.convention);
}

CameraModel frame_scene(const SplatScene& scene, int width, int height, double vertical_fov_deg) {
  const Bounds b = scene.world_bounds();
  const double radius = std::max(0.5 * b.diagonal(), 1e-3);
  const double half_fov = 0.5 * vertical_fov_deg * std::numbers::pi / 180.0;
  const double distance = radius / std::sin(half_fov);
  const Eigen::Vector3d target = b.center();
  const Eigen::Vector3d eye = target + Eigen::Vector3d(0.0, 0.0, distance);
  return CameraModel::Make(look_at<double>(eye, target, Eigen::Vector3d::UnitY()), vertical_fov_deg, width, height,
                           std::max(1e-3, 0.01 * distance), distance + 4.0 * radius);
}

}  // namespace rfusion
