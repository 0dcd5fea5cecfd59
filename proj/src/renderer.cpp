#include "rfusion/renderer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "parallel.hpp"

namespace rfusion {

RenderTarget::RenderTarget(int w, int h)
    : width(w),
      height(h),
      color(Eigen::Matrix3Xf::Zero(3, static_cast<Eigen::Index>(w) * h)),
      alpha(Eigen::VectorXf::Zero(static_cast<Eigen::Index>(w) * h)),
      depth(Eigen::VectorXf::Constant(static_cast<Eigen::Index>(w) * h, std::numeric_limits<float>::infinity())) {}

bool RenderTarget::bitwise_equal(const RenderTarget& other) const {
  if (width != other.width || height != other.height) return false;
  const auto n = static_cast<std::size_t>(pixel_count());
  return std::memcmp(color.data(), other.color.data(), 3 * n * sizeof(float)) == 0 &&
         std::memcmp(alpha.data(), other.alpha.data(), n * sizeof(float)) == 0 &&
         std::memcmp(depth.data(), other.depth.data(), n * sizeof(float)) == 0;
}

std::optional<ProjectedSplat> project_splat(const Splat& splat, const CameraModel& camera,
                                            const RigidTransformd& world_from_model, int sh_degree) {
  const Eigen::Vector3d p_world = world_from_model.apply(splat.position.cast<double>());
  const RigidTransformd camera_from_world = camera.pose.inverse();
  const Eigen::Vector3d p_cam = camera_from_world.apply(p_world);
  const double z = -p_cam.z();
  if (!(z > camera.near_plane) || !(z < camera.far_plane)) return std::nullopt;

  const double fx = camera.focal_x();
  const double fy = camera.focal_y();
  const Eigen::Vector2d c = camera.principal_point();

  // Clamp the Jacobian's lateral ratio just past the frustum so that splats
  // far outside the view do not produce huge footprints.
  const double lim_x = 1.3 * (0.5 * camera.width / fx);
  const double lim_y = 1.3 * (0.5 * camera.height / fy);
  const double tx = std::clamp(p_cam.x() / z, -lim_x, lim_x) * z;
  const double ty = std::clamp(p_cam.y() / z, -lim_y, lim_y) * z;
  Eigen::Matrix<double, 2, 3> jac;
  jac << fx / z, 0.0, fx * tx / (z * z), 0.0, -fy / z, -fy * ty / (z * z);

  const Eigen::Matrix3d cov_model = compute_covariance<double>(splat.scale.cast<double>(), splat.rotation.cast<double>());
  const Eigen::Matrix3d to_cam = camera_from_world.linear() * world_from_model.linear();
  const Eigen::Matrix3d cov_cam = to_cam * cov_model * to_cam.transpose();
  Eigen::Matrix2d cov2d = jac * cov_cam * jac.transpose();
  cov2d = 0.5 * (cov2d + cov2d.transpose());
  cov2d.diagonal().array() += kCovarianceDilation;

  const double det = cov2d.determinant();
  if (!(det > 0.0)) return std::nullopt;
  const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
  const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
  const double radius = std::ceil(kFootprintSigmas * std::sqrt(lambda_max));

  const Eigen::Vector2d mean2d(c.x() + fx * p_cam.x() / z, c.y() - fy * p_cam.y() / z);
  if (mean2d.x() + radius < 0.0 || mean2d.x() - radius > camera.width || mean2d.y() + radius < 0.0 ||
      mean2d.y() - radius > camera.height) {
    return std::nullopt;
  }

  const int degree = sh_degree < 0 ? splat.sh_degree() : sh_degree;
  const Eigen::Vector3d dir_world = (p_world - camera.position()).normalized();
  const Eigen::Vector3d dir_model = world_from_model.rotation().conjugate() * dir_world;

  ProjectedSplat out;
  out.mean2d = mean2d.cast<float>();
  out.cov2d = cov2d.cast<float>();
  out.conic = Eigen::Vector3d(cov2d(1, 1) / det, -cov2d(0, 1) / det, cov2d(0, 0) / det).cast<float>();
  out.view_depth = static_cast<float>(z);
  out.color = eval_sh<float>(splat.sh, dir_model.cast<float>(), degree);
  out.opacity = splat.opacity;
  out.radius = static_cast<float>(radius);
  return out;
}

std::vector<ProjectedSplat> project_and_sort(const SplatScene& scene, const CameraModel& camera, int workers) {
  camera.validate();
  const std::size_t n = scene.size();
  std::vector<std::optional<ProjectedSplat>> slots(n);
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  detail::parallel_for(chunks, workers, [&](std::size_t chunk) {
    const std::size_t end = std::min(n, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      slots[i] = project_splat(scene[i], camera, scene.world_from_model(), scene.sh_degree());
      if (slots[i]) slots[i]->index = static_cast<std::uint32_t>(i);
    }
  });
  std::vector<ProjectedSplat> kept;
  kept.reserve(n);
  for (auto& s : slots) {
    if (s) kept.push_back(*s);
  }
  std::sort(kept.begin(), kept.end(), [](const ProjectedSplat& a, const ProjectedSplat& b) {
    if (a.view_depth != b.view_depth) return a.view_depth < b.view_depth;
    return a.index < b.index;
  });
  return kept;
}

namespace {

struct PixelAccumulator {
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  float transmittance = 1.0f;
  float depth = std::numeric_limits<float>::infinity();

  bool saturated() const { return transmittance < kTransmittanceCutoff; }

  void blend(const ProjectedSplat& s, float alpha) {
    color += s.color * (alpha * transmittance);
    const float next = transmittance * (1.0f - alpha);
    if (std::isinf(depth) && 1.0f - next >= kDepthCrossingAlpha) depth = s.view_depth;
    transmittance = next;
  }

  void store(RenderTarget& target, Eigen::Index idx) const {
    target.color.col(idx) = color;
    target.alpha(idx) = 1.0f - transmittance;
    target.depth(idx) = depth;
  }
};

Eigen::Vector2f pixel_center(int x, int y) { return {static_cast<float>(x) + 0.5f, static_cast<float>(y) + 0.5f}; }

}  // namespace

RenderTarget render(const SplatScene& scene, const CameraModel& camera, const RenderOptions& options) {
  camera.validate();
  const int workers = detail::resolve_workers(options.workers);
  const std::vector<ProjectedSplat> sorted = project_and_sort(scene, camera, workers);

  const int tiles_x = (camera.width + kTileSize - 1) / kTileSize;
  const int tiles_y = (camera.height + kTileSize - 1) / kTileSize;
  const std::size_t tile_count = static_cast<std::size_t>(tiles_x) * tiles_y;

  struct TileRange {
    int x0, x1, y0, y1;
  };
  auto tile_range = [&](const ProjectedSplat& s) {
    // One pixel of slack so every pixel center inside the footprint square is covered.
    auto lo = [](float v, int max) { return std::clamp(static_cast<int>(std::floor((v - 1.0f) / kTileSize)), 0, max); };
    auto hi = [](float v, int max) { return std::clamp(static_cast<int>(std::floor((v + 1.0f) / kTileSize)), 0, max); };
    return TileRange{lo(s.mean2d.x() - s.radius, tiles_x - 1), hi(s.mean2d.x() + s.radius, tiles_x - 1),
                     lo(s.mean2d.y() - s.radius, tiles_y - 1), hi(s.mean2d.y() + s.radius, tiles_y - 1)};
  };

  // Compressed per-tile lists; filling in global order keeps each list depth-sorted.
  std::vector<std::uint32_t> offsets(tile_count + 1, 0);
  for (const auto& s : sorted) {
    const TileRange r = tile_range(s);
    for (int ty = r.y0; ty <= r.y1; ++ty) {
      for (int tx = r.x0; tx <= r.x1; ++tx) ++offsets[static_cast<std::size_t>(ty) * tiles_x + tx + 1];
    }
  }
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  std::vector<std::uint32_t> entries(offsets.back());
  std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
  for (std::uint32_t i = 0; i < sorted.size(); ++i) {
    const TileRange r = tile_range(sorted[i]);
    for (int ty = r.y0; ty <= r.y1; ++ty) {
      for (int tx = r.x0; tx <= r.x1; ++tx) entries[cursor[static_cast<std::size_t>(ty) * tiles_x + tx]++] = i;
    }
  }

  RenderTarget target(camera.width, camera.height);
  detail::parallel_for(tile_count, workers, [&](std::size_t tile) {
    const int tx = static_cast<int>(tile % tiles_x);
    const int ty = static_cast<int>(tile / tiles_x);
    const std::uint32_t begin = offsets[tile];
    const std::uint32_t end = offsets[tile + 1];
    for (int y = ty * kTileSize; y < std::min(camera.height, (ty + 1) * kTileSize); ++y) {
      for (int x = tx * kTileSize; x < std::min(camera.width, (tx + 1) * kTileSize); ++x) {
        PixelAccumulator acc;
        const Eigen::Vector2f px = pixel_center(x, y);
        for (std::uint32_t e = begin; e < end && !acc.saturated(); ++e) {
          const ProjectedSplat& s = sorted[entries[e]];
          const float a = splat_alpha(s, px);
          if (a > 0.0f) acc.blend(s, a);
        }
        acc.store(target, target.index(x, y));
      }
    }
  });
  return target;
}

RenderTarget render_reference(const SplatScene& scene, const CameraModel& camera) {
  camera.validate();
  const std::vector<ProjectedSplat> sorted = project_and_sort(scene, camera, 1);
  RenderTarget target(camera.width, camera.height);
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      PixelAccumulator acc;
      const Eigen::Vector2f px = pixel_center(x, y);
      for (const auto& s : sorted) {
        // Saturated pixels keep visiting splats; they just stop accumulating.
        if (acc.saturated()) continue;
        const float a = splat_alpha(s, px);
        if (a > 0.0f) acc.blend(s, a);
      }
      acc.store(target, target.index(x, y));
    }
  }
  return target;
}

BenchReport bench(const SplatScene& scene, const CameraModel& camera, int frames, int warmup,
                  const RenderOptions& options) {
  if (frames < 10) {
    throw std::invalid_argument("bench requires at least 10 frames");
  }
  camera.validate();
  for (int i = 0; i < warmup; ++i) (void)render(scene, camera, options);
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(frames));
  for (int i = 0; i < frames; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const RenderTarget t = render(scene, camera, options);
    const auto t1 = std::chrono::steady_clock::now();
    (void)t;
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  BenchReport r;
  r.splat_count = scene.size();
  r.width = camera.width;
  r.height = camera.height;
  r.frames = frames;
  r.warmup_frames = warmup;
  r.workers = detail::resolve_workers(options.workers);
  r.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / frames;
  std::vector<double> sorted_ms = ms;
  std::sort(sorted_ms.begin(), sorted_ms.end());
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * frames)) - 1;
  r.p95_ms = sorted_ms[rank];
  r.min_ms = sorted_ms.front();
  r.max_ms = sorted_ms.back();
  r.fps = r.mean_ms > 0.0 ? 1000.0 / r.mean_ms : 0.0;
  r.splats_per_second = r.fps * static_cast<double>(r.splat_count);
  return r;
}

}  // namespace rfusion
