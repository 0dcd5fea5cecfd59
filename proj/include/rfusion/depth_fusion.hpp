#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

#include "rfusion/camera.hpp"
#include "rfusion/renderer.hpp"
#include "rfusion/rigid_transform.hpp"

namespace rfusion {

/// Stereo sensor model.
///
/// Sensor coordinates (x_d, y_d) are pixel offsets from the image center,
/// with x_d growing to the left and y_d growing downward; `d` is the stereo
/// disparity in pixels. `focal` is the vertical focal length in pixels and
/// `aspect` rescales x_d to the same units (focal / horizontal focal).
struct StereoIntrinsics {
  double aspect = 1.0;
  double baseline = 0.063;  // meters
  double focal = 1.0;       // pixels
  int width = 320;
  int height = 180;
  double h_fov_deg = 85.0;
  double v_fov_deg = 54.0;

  static StereoIntrinsics FromFov(int width, int height, double h_fov_deg = 85.0, double v_fov_deg = 54.0,
                                  double baseline = 0.063);

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;

  Eigen::Vector2d pixel_to_sensor(int col, int row) const {
    return {0.5 * width - (col + 0.5), (row + 0.5) - 0.5 * height};
  }

  /// Disparity that places a surface at metric camera depth z (> 0).
  double disparity_for_depth(double z) const { return focal * baseline / z; }
};

/// The 4x4 map from homogeneous (x_d, y_d, d, 1) to homogeneous camera space.
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 4> stereo_projection_matrix(const StereoIntrinsics& in) {
  Eigen::Matrix<Scalar, 4, 4> m = Eigen::Matrix<Scalar, 4, 4>::Zero();
  m(0, 0) = Scalar(in.aspect);
  m(1, 1) = Scalar(1);
  m(2, 3) = Scalar(in.focal);
  m(3, 2) = Scalar(-1) / Scalar(in.baseline);
  return m;
}

/// Camera-space point for sensor coordinates and disparity:
/// (-a x_d b / d, -y_d b / d, -f b / d). The camera looks down -Z.
/// Throws std::domain_error for d <= 0.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> unproject(const Eigen::Matrix<Scalar, 3, 1>& pixel, const StereoIntrinsics& in) {
  const Scalar x_d = pixel.x(), y_d = pixel.y(), d = pixel.z();
  if (!(d > Scalar(0))) {
    throw std::domain_error("unproject: disparity must be positive");
  }
  const Scalar a = Scalar(in.aspect), b = Scalar(in.baseline), f = Scalar(in.focal);
  return {-a * x_d * b / d, -y_d * b / d, -f * b / d};
}

/// Applies the placement chain: view_chain * t_offset * m_camera * p.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> to_world(const Eigen::Matrix<Scalar, 3, 1>& p, const RigidTransform<Scalar>& m_camera,
                                     const RigidTransform<Scalar>& t_offset,
                                     const RigidTransform<Scalar>& view_chain = RigidTransform<Scalar>::Identity()) {
  return view_chain.apply(t_offset.apply(m_camera.apply(p)));
}

using Rgb8Matrix = Eigen::Matrix<std::uint8_t, 3, Eigen::Dynamic>;

/// One captured stereo frame. Disparity 0 marks an invalid pixel.
struct DepthFrame {
  std::uint64_t seq = 0;
  std::uint64_t timestamp_us = 0;
  int width = 0;
  int height = 0;
  Eigen::VectorXf disparity;  // row-major pixel order
  Rgb8Matrix color;           // one column per pixel
  RigidTransformd camera_pose_at_capture;

  DepthFrame() = default;
  DepthFrame(int w, int h)
      : width(w),
        height(h),
        disparity(Eigen::VectorXf::Zero(static_cast<Eigen::Index>(w) * h)),
        color(Rgb8Matrix::Zero(3, static_cast<Eigen::Index>(w) * h)) {}

  Eigen::Index index(int col, int row) const { return static_cast<Eigen::Index>(row) * width + col; }
  Eigen::Index pixel_count() const { return static_cast<Eigen::Index>(width) * height; }
  Eigen::Index valid_count() const { return (disparity.array() > 0.0f).count(); }

  /// Throws std::invalid_argument for inconsistent sizes or invalid values.
  void validate() const;
};

struct WorldPointCloud {
  Eigen::Matrix3Xd points;
  Rgb8Matrix colors;
  std::uint64_t source_seq = 0;

  Eigen::Index size() const { return points.cols(); }
};

/// Unprojects every valid pixel (every `stride`-th row and column) and places
/// it in the world with the frame's capture pose. Throws
/// std::invalid_argument when frame and intrinsics disagree on size.
WorldPointCloud frame_to_cloud(const DepthFrame& frame, const StereoIntrinsics& intrinsics,
                               const RigidTransformd& t_offset = RigidTransformd::Identity(), int stride = 1,
                               const RigidTransformd& view_chain = RigidTransformd::Identity());

/// Draws cloud points as opaque squares of half-size `point_px - 1` pixels,
/// z-tested against the target's depth (points win ties).
RenderTarget composite(const RenderTarget& splat_target, const WorldPointCloud& cloud, const CameraModel& camera,
                       int point_px = 2);

float srgb8_to_linear(std::uint8_t v);

}  // namespace rfusion
