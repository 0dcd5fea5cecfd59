#include "rfusion/depth_fusion.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace rfusion {

StereoIntrinsics StereoIntrinsics::FromFov(int width, int height, double h_fov_deg, double v_fov_deg,
                                           double baseline) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  StereoIntrinsics in;
  in.width = width;
  in.height = height;
  in.h_fov_deg = h_fov_deg;
  in.v_fov_deg = v_fov_deg;
  in.baseline = baseline;
  in.focal = 0.5 * height / std::tan(0.5 * v_fov_deg * kDeg);
  const double focal_x = 0.5 * width / std::tan(0.5 * h_fov_deg * kDeg);
  in.aspect = in.focal / focal_x;
  return in;
}

void StereoIntrinsics::validate() const {
  if (!(aspect > 0.0) || !(baseline > 0.0) || !(focal > 0.0)) {
    throw std::invalid_argument("stereo intrinsics require a > 0, b > 0, f > 0");
  }
  if (width < 1 || height < 1) {
    throw std::invalid_argument("stereo intrinsics require a non-empty image");
  }
}

void DepthFrame::validate() const {
  if (width < 1 || height < 1) {
    throw std::invalid_argument("depth frame has zero area");
  }
  if (disparity.size() != pixel_count() || color.cols() != pixel_count()) {
    throw std::invalid_argument("depth frame buffers do not match its size");
  }
  if (!disparity.allFinite() || (disparity.array() < 0.0f).any()) {
    throw std::invalid_argument("depth frame disparity must be finite and >= 0");
  }
}

float srgb8_to_linear(std::uint8_t v) {
  static const std::array<float, 256> kTable = [] {
    std::array<float, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double s = i / 255.0;
      t[static_cast<std::size_t>(i)] =
          static_cast<float>(s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4));
    }
    return t;
  }();
  return kTable[v];
}

WorldPointCloud frame_to_cloud(const DepthFrame& frame, const StereoIntrinsics& intrinsics,
                               const RigidTransformd& t_offset, int stride, const RigidTransformd& view_chain) {
  intrinsics.validate();
  frame.validate();
  if (frame.width != intrinsics.width || frame.height != intrinsics.height) {
    throw std::invalid_argument("frame size " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                                " does not match intrinsics " + std::to_string(intrinsics.width) + "x" +
                                std::to_string(intrinsics.height));
  }
  if (stride < 1) {
    throw std::invalid_argument("frame_to_cloud: stride must be >= 1");
  }
  const RigidTransformd chain = view_chain * t_offset * frame.camera_pose_at_capture;
  WorldPointCloud cloud;
  cloud.source_seq = frame.seq;
  cloud.points.resize(3, frame.valid_count());
  cloud.colors.resize(3, frame.valid_count());
  Eigen::Index n = 0;
  for (int row = 0; row < frame.height; row += stride) {
    for (int col = 0; col < frame.width; col += stride) {
      const Eigen::Index i = frame.index(col, row);
      const float d = frame.disparity(i);
      if (!(d > 0.0f)) continue;
      const Eigen::Vector2d s = intrinsics.pixel_to_sensor(col, row);
      const Eigen::Vector3d p = unproject<double>({s.x(), s.y(), static_cast<double>(d)}, intrinsics);
      cloud.points.col(n) = chain.apply(p);
      cloud.colors.col(n) = frame.color.col(i);
      ++n;
    }
  }
  cloud.points.conservativeResize(3, n);
  cloud.colors.conservativeResize(3, n);
  return cloud;
}

RenderTarget composite(const RenderTarget& splat_target, const WorldPointCloud& cloud, const CameraModel& camera,
                       int point_px) {
  if (splat_target.width != camera.width || splat_target.height != camera.height) {
    throw std::invalid_argument("composite: render target and camera viewport differ");
  }
  RenderTarget out = splat_target;
  if (cloud.size() == 0) return out;
  const int half = std::max(0, point_px - 1);
  const RigidTransformd camera_from_world = camera.pose.inverse();
  const double fx = camera.focal_x(), fy = camera.focal_y();
  const Eigen::Vector2d c = camera.principal_point();
  for (Eigen::Index i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d p = camera_from_world.apply(cloud.points.col(i));
    const double z = -p.z();
    if (!(z > camera.near_plane) || !(z < camera.far_plane)) continue;
    const int px = static_cast<int>(std::floor(c.x() + fx * p.x() / z));
    const int py = static_cast<int>(std::floor(c.y() - fy * p.y() / z));
    const float depth = static_cast<float>(z);
    const Eigen::Vector3f rgb(srgb8_to_linear(cloud.colors(0, i)), srgb8_to_linear(cloud.colors(1, i)),
                              srgb8_to_linear(cloud.colors(2, i)));
    for (int y = std::max(0, py - half); y <= std::min(camera.height - 1, py + half); ++y) {
      for (int x = std::max(0, px - half); x <= std::min(camera.width - 1, px + half); ++x) {
        const Eigen::Index idx = out.index(x, y);
        if (depth <= out.depth(idx)) {
          out.color.col(idx) = rgb;
          out.alpha(idx) = 1.0f;
          out.depth(idx) = depth;
        }
      }
    }
  }
  return out;
}

}  // namespace rfusion
