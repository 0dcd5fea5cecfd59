#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rfusion/camera.hpp"
#include "rfusion/splat_scene.hpp"

namespace rfusion {

inline constexpr int kTileSize = 16;
inline constexpr float kFootprintSigmas = 3.0f;
inline constexpr float kMinAlpha = 1.0f / 255.0f;
inline constexpr float kTransmittanceCutoff = 1.0f / 255.0f;
inline constexpr float kMaxSplatAlpha = 0.99f;
/// Screen-space low-pass added to the 2D covariance diagonal (pixels^2).
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr float kDepthCrossingAlpha = 0.5f;

/// R * S * S^T * R^T for per-axis standard deviations `scale`.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> compute_covariance(const Eigen::Matrix<Scalar, 3, 1>& scale,
                                               const Eigen::Quaternion<Scalar>& rotation) {
  const Eigen::Matrix<Scalar, 3, 3> m = rotation.normalized().toRotationMatrix() * scale.asDiagonal();
  return m * m.transpose();
}

/// Screen-space footprint of one splat.
struct ProjectedSplat {
  Eigen::Vector2f mean2d;
  Eigen::Matrix2f cov2d;
  Eigen::Vector3f conic;  // inverse cov2d as (a, b, c) of [[a b] [b c]]
  float view_depth = 0.0f;
  Eigen::Vector3f color;  // linear RGB
  float opacity = 0.0f;
  float radius = 0.0f;  // pixels, 3 sigma of the major axis
  std::uint32_t index = 0;
};

/// Projects a model-space splat. Returns nullopt when it lies at or behind
/// the near plane, beyond the far plane, or its footprint misses the viewport.
std::optional<ProjectedSplat> project_splat(const Splat& splat, const CameraModel& camera,
                                            const RigidTransformd& world_from_model = RigidTransformd::Identity(),
                                            int sh_degree = -1);

/// Opacity-weighted Gaussian falloff of `s` at pixel center `px`, already
/// clamped to kMaxSplatAlpha. Zero outside the 3 sigma ellipse or below
/// kMinAlpha.
inline float splat_alpha(const ProjectedSplat& s, const Eigen::Vector2f& px) {
  const Eigen::Vector2f d = px - s.mean2d;
  const float m2 = s.conic.x() * d.x() * d.x() + 2.0f * s.conic.y() * d.x() * d.y() + s.conic.z() * d.y() * d.y();
  if (!(m2 >= 0.0f) || m2 > kFootprintSigmas * kFootprintSigmas) return 0.0f;
  const float alpha = std::min(kMaxSplatAlpha, s.opacity * std::exp(-0.5f * m2));
  return alpha < kMinAlpha ? 0.0f : alpha;
}

/// Linear RGB premultiplied by alpha, plus coverage and occlusion depth.
struct RenderTarget {
  int width = 0;
  int height = 0;
  Eigen::Matrix3Xf color;  // one column per pixel, row-major pixel order
  Eigen::VectorXf alpha;
  Eigen::VectorXf depth;  // +inf where nothing crossed the 0.5 coverage mark

  RenderTarget() = default;
  RenderTarget(int w, int h);

  Eigen::Index index(int x, int y) const { return static_cast<Eigen::Index>(y) * width + x; }
  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  bool bitwise_equal(const RenderTarget& other) const;
};

struct RenderOptions {
  /// Tile worker threads; 0 selects std::thread::hardware_concurrency().
  int workers = 0;
};

/// Tiled rasterizer: global depth sort (ties by splat index), 16x16 tile
/// binning, front-to-back compositing. Output is bit-identical for any
/// worker count. Throws std::invalid_argument for an invalid camera.
RenderTarget render(const SplatScene& scene, const CameraModel& camera, const RenderOptions& options = {});

/// Brute-force oracle: every pixel visits every projected splat in global
/// depth order, with no tiling and no loop exit.
RenderTarget render_reference(const SplatScene& scene, const CameraModel& camera);

/// Projected, culled and depth-sorted splats, as both renderers see them.
std::vector<ProjectedSplat> project_and_sort(const SplatScene& scene, const CameraModel& camera, int workers = 1);

struct BenchReport {
  std::size_t splat_count = 0;
  int width = 0;
  int height = 0;
  int frames = 0;
  int warmup_frames = 0;
  int workers = 0;
  double mean_ms = 0.0;
  double p95_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double fps = 0.0;
  double splats_per_second = 0.0;
};

/// Times `frames` renders after `warmup` untimed ones. Requires frames >= 10.
BenchReport bench(const SplatScene& scene, const CameraModel& camera, int frames, int warmup = 2,
                  const RenderOptions& options = {});

}  // namespace rfusion
