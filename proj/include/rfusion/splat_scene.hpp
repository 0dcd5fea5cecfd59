#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfusion/rigid_transform.hpp"
#include "rfusion/spherical_harmonics.hpp"

namespace rfusion {

/// One activated 3D Gaussian in model space.
template <typename Scalar>
struct GaussianSplat {
  Eigen::Matrix<Scalar, 3, 1> position = Eigen::Matrix<Scalar, 3, 1>::Zero();
  Eigen::Quaternion<Scalar> rotation = Eigen::Quaternion<Scalar>::Identity();
  Eigen::Matrix<Scalar, 3, 1> scale = Eigen::Matrix<Scalar, 3, 1>::Constant(Scalar(0.01));
  Scalar opacity = Scalar(1);
  ShCoeffs<Scalar> sh = ShCoeffs<Scalar>::Zero(1, 3);

  int sh_degree() const { return sh_degree_for_count(static_cast<int>(sh.rows())); }
};

using Splat = GaussianSplat<float>;

enum class Convention { kColmap, kEngine };

const char* to_string(Convention c);

/// Axis-aligned bounds of world-space splat centers.
struct Bounds {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  Eigen::Vector3d max = Eigen::Vector3d::Zero();

  double diagonal() const { return (max - min).norm(); }
  Eigen::Vector3d center() const { return 0.5 * (min + max); }
};

class SplatSceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Immutable splat collection plus its model-to-world registration.
///
/// Splat storage is shared between scenes derived by registration, so
/// registering never copies splats. All accessors are const and safe to call
/// concurrently.
class SplatScene {
 public:
  /// Validates every splat. Throws SplatSceneError on an empty list, mixed SH
  /// degrees or a splat violating its invariants.
  SplatScene(std::vector<Splat> splats, Convention convention,
             RigidTransformd world_from_model = RigidTransformd::Identity());

  std::size_t size() const { return splats_->size(); }
  std::span<const Splat> splats() const { return *splats_; }
  const Splat& operator[](std::size_t i) const { return (*splats_)[i]; }
  int sh_degree() const { return sh_degree_; }
  Convention convention() const { return convention_; }
  const RigidTransformd& world_from_model() const { return world_from_model_; }

  Eigen::Vector3d world_position(std::size_t i) const;
  Bounds world_bounds() const;

  /// Same splats (shared storage), different registration.
  SplatScene with_world_from_model(const RigidTransformd& world_from_model) const;

 private:
  SplatScene(std::shared_ptr<const std::vector<Splat>> splats, Convention convention,
             RigidTransformd world_from_model, int sh_degree);

  std::shared_ptr<const std::vector<Splat>> splats_;
  Convention convention_;
  RigidTransformd world_from_model_;
  int sh_degree_ = 0;
};

/// Throws SplatSceneError describing the first violated invariant.
void validate_splat(const Splat& s);

/// Logistic sigmoid used for raw PLY opacities.
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// COLMAP (Y-down) to engine (Y-up) basis change: half turn about Z.
const Eigen::Quaterniond& colmap_to_engine_rotation();

/// Re-expresses a COLMAP scene in engine convention. Throws SplatSceneError if
/// the scene is already in engine convention.
SplatScene convert_convention(const SplatScene& scene);

/// Inverse of convert_convention (engine back to COLMAP).
SplatScene revert_convention(const SplatScene& scene);

/// Composes `reference` onto the scene's current registration:
/// world_from_model' = reference * world_from_model.
/// Throws std::invalid_argument for a non-invertible reference and
/// SplatSceneError for a scene not in engine convention.
SplatScene register_scene(const SplatScene& scene, const RigidTransformd& reference);

}  // namespace rfusion
