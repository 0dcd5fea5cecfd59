#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace rfusion {

/// Similarity transform restricted to a uniform scale: x -> s * R * x + t.
///
/// Used for scene registration, camera poses and the sensor placement chain.
/// Composition follows column-vector convention, so `(a * b).apply(x)` equals
/// `a.apply(b.apply(x))`.
template <typename Scalar>
class RigidTransform {
 public:
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
  using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;
  using Quaternion = Eigen::Quaternion<Scalar>;

  RigidTransform() : rotation_(Quaternion::Identity()), translation_(Vector3::Zero()) {}

  RigidTransform(const Quaternion& rotation, const Vector3& translation, Scalar uniform_scale = Scalar(1))
      : rotation_(rotation), translation_(translation), scale_(uniform_scale) {}

  static RigidTransform Identity() { return RigidTransform(); }

  static RigidTransform FromTranslation(const Vector3& t) { return RigidTransform(Quaternion::Identity(), t); }

  static RigidTransform FromRotation(const Quaternion& q) { return RigidTransform(q, Vector3::Zero()); }

  const Quaternion& rotation() const { return rotation_; }
  const Vector3& translation() const { return translation_; }
  Scalar uniform_scale() const { return scale_; }

  /// False for zero/negative/non-finite scale or a degenerate quaternion.
  bool invertible() const {
    using std::isfinite;
    const Scalar qn = rotation_.norm();
    return isfinite(static_cast<double>(scale_)) && scale_ > Scalar(0) && isfinite(static_cast<double>(qn)) &&
           qn > Scalar(1e-8) && translation_.allFinite();
  }

  /// Throws std::invalid_argument when the transform cannot be inverted.
  void require_invertible() const {
    if (!invertible()) {
      throw std::invalid_argument("non-invertible transform (scale must be > 0, rotation non-degenerate)");
    }
  }

  RigidTransform normalized() const { return RigidTransform(rotation_.normalized(), translation_, scale_); }

  Vector3 apply(const Vector3& p) const { return scale_ * (rotation_ * p) + translation_; }

  /// Rotation and scale only; translation is ignored.
  Vector3 apply_vector(const Vector3& v) const { return scale_ * (rotation_ * v); }

  RigidTransform inverse() const {
    const Quaternion inv_rot = rotation_.conjugate().normalized();
    const Scalar inv_scale = Scalar(1) / scale_;
    return RigidTransform(inv_rot, -(inv_scale * (inv_rot * translation_)), inv_scale);
  }

  RigidTransform operator*(const RigidTransform& rhs) const {
    return RigidTransform((rotation_ * rhs.rotation_).normalized(), apply(rhs.translation_), scale_ * rhs.scale_);
  }

  Matrix3 linear() const { return scale_ * rotation_.toRotationMatrix(); }

  Matrix4 matrix() const {
    Matrix4 m = Matrix4::Identity();
    m.template topLeftCorner<3, 3>() = linear();
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  template <typename Other>
  RigidTransform<Other> cast() const {
    return RigidTransform<Other>(rotation_.template cast<Other>(), translation_.template cast<Other>(),
                                 static_cast<Other>(scale_));
  }

  bool isApprox(const RigidTransform& other, Scalar tol) const {
    // q and -q encode the same rotation
    const Scalar dq = std::min((rotation_.coeffs() - other.rotation_.coeffs()).cwiseAbs().maxCoeff(),
                               (rotation_.coeffs() + other.rotation_.coeffs()).cwiseAbs().maxCoeff());
    return dq <= tol && (translation_ - other.translation_).cwiseAbs().maxCoeff() <= tol &&
           std::abs(scale_ - other.scale_) <= tol;
  }

 private:
  Quaternion rotation_;
  Vector3 translation_;
  Scalar scale_ = Scalar(1);
};

using RigidTransformd = RigidTransform<double>;
using RigidTransformf = RigidTransform<float>;

/// Rotation by `angle` radians about the unit axis.
template <typename Scalar>
Eigen::Quaternion<Scalar> axis_angle(Scalar angle, const Eigen::Matrix<Scalar, 3, 1>& axis) {
  return Eigen::Quaternion<Scalar>(Eigen::AngleAxis<Scalar>(angle, axis.normalized()));
}

/// Camera-to-world pose looking from `eye` toward `target`. The camera looks
/// down its local -Z with +Y up.
template <typename Scalar>
RigidTransform<Scalar> look_at(const Eigen::Matrix<Scalar, 3, 1>& eye, const Eigen::Matrix<Scalar, 3, 1>& target,
                               const Eigen::Matrix<Scalar, 3, 1>& up) {
  using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
  const Vector3 back = (eye - target).normalized();
  Vector3 right = up.cross(back);
  if (right.norm() < Scalar(1e-9)) {
    right = Vector3::UnitX().cross(back);
  }
  right.normalize();
  const Vector3 cam_up = back.cross(right);
  Eigen::Matrix<Scalar, 3, 3> r;
  r.col(0) = right;
  r.col(1) = cam_up;
  r.col(2) = back;
  return RigidTransform<Scalar>(Eigen::Quaternion<Scalar>(r).normalized(), eye);
}

}  // namespace rfusion
