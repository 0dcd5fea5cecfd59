#include "rfusion/splat_scene.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace rfusion {

const char* to_string(Convention c) { return c == Convention::kColmap ? "colmap" : "engine"; }

void validate_splat(const Splat& s) {
  std::ostringstream msg;
  if (!s.position.allFinite()) {
    throw SplatSceneError("splat position is not finite");
  }
  const float qn = s.rotation.norm();
  if (!std::isfinite(qn) || std::abs(qn - 1.0f) > 1e-6f) {
    msg << "splat rotation is not a unit quaternion (norm " << qn << ")";
    throw SplatSceneError(msg.str());
  }
  if (!s.scale.allFinite() || (s.scale.array() <= 0.0f).any()) {
    throw SplatSceneError("splat scale must be finite and > 0");
  }
  if (!(s.opacity >= 0.0f && s.opacity <= 1.0f)) {
    throw SplatSceneError("splat opacity outside [0, 1]");
  }
  if (sh_degree_for_count(static_cast<int>(s.sh.rows())) < 0) {
    throw SplatSceneError("splat SH coefficient count must be 1, 4, 9 or 16");
  }
  if (!s.sh.allFinite()) {
    throw SplatSceneError("splat SH coefficients are not finite");
  }
}

SplatScene::SplatScene(std::vector<Splat> splats, Convention convention, RigidTransformd world_from_model)
    : convention_(convention), world_from_model_(world_from_model) {
  if (splats.empty()) {
    throw SplatSceneError("scene has zero splats");
  }
  world_from_model_.require_invertible();
  sh_degree_ = splats.front().sh_degree();
  for (const auto& s : splats) {
    validate_splat(s);
    if (s.sh_degree() != sh_degree_) {
      throw SplatSceneError("all splats in a scene must share one SH degree");
    }
  }
  splats_ = std::make_shared<const std::vector<Splat>>(std::move(splats));
  const Bounds bounds = world_bounds();
  if (!bounds.min.allFinite() || !bounds.max.allFinite()) {
    throw SplatSceneError("scene bounding box is not finite");
  }
}

SplatScene::SplatScene(std::shared_ptr<const std::vector<Splat>> splats, Convention convention,
                       RigidTransformd world_from_model, int sh_degree)
    : splats_(std::move(splats)), convention_(convention), world_from_model_(world_from_model), sh_degree_(sh_degree) {}

Eigen::Vector3d SplatScene::world_position(std::size_t i) const {
  return world_from_model_.apply((*splats_)[i].position.cast<double>());
}

Bounds SplatScene::world_bounds() const {
  Bounds b;
  b.min.setConstant(std::numeric_limits<double>::infinity());
  b.max.setConstant(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < size(); ++i) {
    const Eigen::Vector3d p = world_position(i);
    b.min = b.min.cwiseMin(p);
    b.max = b.max.cwiseMax(p);
  }
  return b;
}

SplatScene SplatScene::with_world_from_model(const RigidTransformd& world_from_model) const {
  world_from_model.require_invertible();
  return SplatScene(splats_, convention_, world_from_model, sh_degree_);
}

const Eigen::Quaterniond& colmap_to_engine_rotation() {
  static const Eigen::Quaterniond q(0.0, 0.0, 0.0, 1.0);
  return q;
}

namespace {

// The basis change is a half turn about Z, which is its own inverse, so the
// same re-expression serves both directions.
SplatScene apply_basis_change(const SplatScene& scene, Convention target) {
  const Eigen::Quaternionf q = colmap_to_engine_rotation().cast<float>();
  std::vector<Splat> out(scene.splats().begin(), scene.splats().end());
  for (auto& s : out) {
    s.position = q * s.position;
    s.rotation = q * s.rotation;
    for (Eigen::Index k = 0; k < s.sh.rows(); ++k) {
      s.sh.row(k) *= static_cast<float>(kShHalfTurnZSigns[static_cast<std::size_t>(k)]);
    }
  }
  return SplatScene(std::move(out), target, scene.world_from_model());
}

}  // namespace

SplatScene convert_convention(const SplatScene& scene) {
  if (scene.convention() != Convention::kColmap) {
    throw SplatSceneError("convert_convention: scene is already in engine convention");
  }
  return apply_basis_change(scene, Convention::kEngine);
}

SplatScene revert_convention(const SplatScene& scene) {
  if (scene.convention() != Convention::kEngine) {
    throw SplatSceneError("revert_convention: scene is already in COLMAP convention");
  }
  return apply_basis_change(scene, Convention::kColmap);
}

SplatScene register_scene(const SplatScene& scene, const RigidTransformd& reference) {
  reference.require_invertible();
  if (scene.convention() != Convention::kEngine) {
    throw SplatSceneError("register_scene: scene must be converted to engine convention first");
  }
  return scene.with_world_from_model(reference.normalized() * scene.world_from_model());
}

}  // namespace rfusion
