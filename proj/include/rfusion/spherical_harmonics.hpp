#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>

#include <Eigen/Dense>

namespace rfusion {

constexpr int kMaxShDegree = 3;
constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Degree for a coefficient count in {1, 4, 9, 16}, or -1.
constexpr int sh_degree_for_count(int count) {
  for (int d = 0; d <= kMaxShDegree; ++d) {
    if (sh_coeff_count(d) == count) return d;
  }
  return -1;
}

/// One RGB triple per row, band-major (DC first). Fixed max size, no heap.
template <typename Scalar>
using ShCoeffs = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor, kMaxShCoeffs, 3>;

namespace sh_constants {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2 = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                              -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3 = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                              0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                              -0.5900435899266435};
}  // namespace sh_constants

/// Real SH basis values for a unit direction, band-major, up to `degree`.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxShCoeffs, 1> sh_basis(const Eigen::Matrix<Scalar, 3, 1>& dir,
                                                                     int degree) {
  using namespace sh_constants;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1, 0, kMaxShCoeffs, 1> b(sh_coeff_count(degree));
  const Scalar x = dir.x(), y = dir.y(), z = dir.z();
  b(0) = Scalar(kC0);
  if (degree > 0) {
    b(1) = Scalar(-kC1) * y;
    b(2) = Scalar(kC1) * z;
    b(3) = Scalar(-kC1) * x;
  }
  if (degree > 1) {
    const Scalar xx = x * x, yy = y * y, zz = z * z;
    b(4) = Scalar(kC2[0]) * x * y;
    b(5) = Scalar(kC2[1]) * y * z;
    b(6) = Scalar(kC2[2]) * (Scalar(2) * zz - xx - yy);
    b(7) = Scalar(kC2[3]) * x * z;
    b(8) = Scalar(kC2[4]) * (xx - yy);
    if (degree > 2) {
      b(9) = Scalar(kC3[0]) * y * (Scalar(3) * xx - yy);
      b(10) = Scalar(kC3[1]) * x * y * z;
      b(11) = Scalar(kC3[2]) * y * (Scalar(4) * zz - xx - yy);
      b(12) = Scalar(kC3[3]) * z * (Scalar(2) * zz - Scalar(3) * xx - Scalar(3) * yy);
      b(13) = Scalar(kC3[4]) * x * (Scalar(4) * zz - xx - yy);
      b(14) = Scalar(kC3[5]) * z * (xx - yy);
      b(15) = Scalar(kC3[6]) * x * (xx - Scalar(3) * yy);
    }
  }
  return b;
}

/// View-dependent linear RGB: 0.5 + sum(basis * coeff), clamped below at 0.
/// Only the first (degree+1)^2 coefficient rows are used.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> eval_sh(const ShCoeffs<Scalar>& coeffs, const Eigen::Matrix<Scalar, 3, 1>& view_dir,
                                    int degree) {
  if (degree < 0 || degree > kMaxShDegree || coeffs.rows() < sh_coeff_count(degree)) {
    throw std::invalid_argument("eval_sh: degree exceeds available coefficients");
  }
  const auto basis = sh_basis<Scalar>(view_dir, degree);
  const int n = sh_coeff_count(degree);
  Eigen::Matrix<Scalar, 3, 1> rgb = (basis.transpose() * coeffs.topRows(n)).transpose();
  rgb.array() += Scalar(0.5);
  return rgb.cwiseMax(Scalar(0));
}

/// Per-coefficient sign under (x, y, z) -> (-x, -y, z), a half turn about Z.
/// Basis functions odd in (x, y) flip sign.
inline constexpr std::array<int, kMaxShCoeffs> kShHalfTurnZSigns = {+1, -1, +1, -1, +1, -1, +1, -1,
                                                                    +1, -1, +1, -1, +1, -1, +1, -1};

}  // namespace rfusion
