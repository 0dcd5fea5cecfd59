#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "rfusion/spherical_harmonics.hpp"
#include "rfusion/splat_scene.hpp"

using namespace rfusion;
using rfusion::testing::Gen;

namespace {

SplatScene one_splat_scene(Convention c) {
  Splat s;
  s.position = {1.0f, 2.0f, 3.0f};
  return SplatScene({s}, c);
}

}  // namespace

TEST(Activation, SigmoidOfZeroIsHalf) { EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5); }

TEST(Activation, LogitInvertsSigmoid) {
  Gen g(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = g.uniform(-8.0, 8.0);
    EXPECT_NEAR(logit(sigmoid(x)), x, 1e-9);
  }
}

TEST(SplatScene, RejectsEmptyAndInvalidSplats) {
  EXPECT_THROW(SplatScene({}, Convention::kEngine), SplatSceneError);
  Splat bad;
  bad.scale = {0.1f, 0.0f, 0.1f};
  EXPECT_THROW(SplatScene({bad}, Convention::kEngine), SplatSceneError);
  bad = Splat{};
  bad.opacity = 1.5f;
  EXPECT_THROW(SplatScene({bad}, Convention::kEngine), SplatSceneError);
  bad = Splat{};
  bad.rotation = Eigen::Quaternionf(2.0f, 0.0f, 0.0f, 0.0f);
  EXPECT_THROW(SplatScene({bad}, Convention::kEngine), SplatSceneError);
}

TEST(SplatScene, RejectsMixedShDegrees) {
  Gen g(2);
  auto v = g.splats(3, 1);
  v[1] = g.splat(2);
  EXPECT_THROW(SplatScene(v, Convention::kEngine), SplatSceneError);
}

TEST(SplatScene, RejectsNonInvertibleRegistration) {
  Splat s;
  EXPECT_THROW(SplatScene({s}, Convention::kEngine, RigidTransformd(Eigen::Quaterniond::Identity(),
                                                                     Eigen::Vector3d::Zero(), 0.0)),
               std::invalid_argument);
}

TEST(Convert, ColmapToEngineExample) {
  const SplatScene engine = convert_convention(one_splat_scene(Convention::kColmap));
  EXPECT_EQ(engine.convention(), Convention::kEngine);
  EXPECT_FLOAT_EQ(engine[0].position.x(), -1.0f);
  EXPECT_FLOAT_EQ(engine[0].position.y(), -2.0f);
  EXPECT_FLOAT_EQ(engine[0].position.z(), 3.0f);
}

TEST(Convert, SecondConversionIsAnError) {
  const SplatScene engine = convert_convention(one_splat_scene(Convention::kColmap));
  EXPECT_THROW(convert_convention(engine), SplatSceneError);
  EXPECT_THROW(revert_convention(one_splat_scene(Convention::kColmap)), SplatSceneError);
}

TEST(Convert, RoundTripRestoresSplats) {
  Gen g(3);
  const SplatScene colmap(g.splats(50, 3), Convention::kColmap);
  const SplatScene back = revert_convention(convert_convention(colmap));
  for (std::size_t i = 0; i < colmap.size(); ++i) {
    EXPECT_TRUE(back[i].position.isApprox(colmap[i].position, 1e-6f));
    EXPECT_NEAR(std::abs(back[i].rotation.dot(colmap[i].rotation)), 1.0f, 1e-6f);
    EXPECT_EQ(back[i].sh, colmap[i].sh);
  }
}

TEST(Convert, CovarianceIsRotatedByTheBasisChange) {
  Gen g(4);
  const SplatScene colmap(g.splats(20, 0), Convention::kColmap);
  const SplatScene engine = convert_convention(colmap);
  const Eigen::Matrix3d r = Eigen::Vector3d(-1, -1, 1).asDiagonal();
  for (std::size_t i = 0; i < colmap.size(); ++i) {
    const Eigen::Matrix3d m = colmap[i].rotation.cast<double>().toRotationMatrix() *
                              colmap[i].scale.cast<double>().asDiagonal();
    const Eigen::Matrix3d e = engine[i].rotation.cast<double>().toRotationMatrix() *
                              engine[i].scale.cast<double>().asDiagonal();
    const Eigen::Matrix3d expected = r * (m * m.transpose()) * r.transpose();
    EXPECT_TRUE((e * e.transpose()).isApprox(expected, 1e-5));
  }
}

// Colour seen from direction d in COLMAP space equals the colour seen from
// the rotated direction in engine space.
TEST(Convert, ShColorIsEquivariantUnderTheBasisChange) {
  Gen g(5);
  for (int degree = 0; degree <= kMaxShDegree; ++degree) {
    const SplatScene colmap(g.splats(10, degree), Convention::kColmap);
    const SplatScene engine = convert_convention(colmap);
    for (std::size_t i = 0; i < colmap.size(); ++i) {
      for (int k = 0; k < 20; ++k) {
        const Eigen::Vector3f d = g.unit_vector().cast<float>();
        const Eigen::Vector3f rd(-d.x(), -d.y(), d.z());
        const Eigen::Vector3f a = eval_sh<float>(colmap[i].sh, d, degree);
        const Eigen::Vector3f b = eval_sh<float>(engine[i].sh, rd, degree);
        EXPECT_TRUE(a.isApprox(b, 1e-5f) || (a - b).norm() < 1e-6f);
      }
    }
  }
}

TEST(Sh, DegreeZeroIsConstant) {
  ShCoeffs<double> c = ShCoeffs<double>::Zero(1, 3);
  c.row(0) << 1.0, -2.0, 0.0;
  Gen g(6);
  for (int i = 0; i < 100; ++i) {
    const Eigen::Vector3d rgb = eval_sh<double>(c, g.unit_vector(), 0);
    EXPECT_NEAR(rgb.x(), 0.5 + sh_constants::kC0, 1e-12);
    EXPECT_DOUBLE_EQ(rgb.y(), 0.0);  // clamped below at zero
    EXPECT_DOUBLE_EQ(rgb.z(), 0.5);
  }
}

// Basis orthonormality over the sphere, integrated by Monte Carlo.
TEST(Sh, BasisIsOrthonormalOnTheSphere) {
  Gen g(7);
  const int n = 200000;
  Eigen::Matrix<double, 16, 16> gram = Eigen::Matrix<double, 16, 16>::Zero();
  for (int i = 0; i < n; ++i) {
    const auto b = sh_basis<double>(g.unit_vector(), 3);
    gram += b * b.transpose();
  }
  gram *= 4.0 * M_PI / n;
  EXPECT_LT((gram - Eigen::Matrix<double, 16, 16>::Identity()).cwiseAbs().maxCoeff(), 0.03);
}

TEST(Sh, DegreeBeyondCoefficientsThrows) {
  const ShCoeffs<float> c = ShCoeffs<float>::Zero(4, 3);
  EXPECT_THROW(eval_sh<float>(c, Eigen::Vector3f::UnitZ(), 2), std::invalid_argument);
}

TEST(Register, ComposesReferenceOntoCurrent) {
  Gen g(8);
  const SplatScene scene(g.splats(30, 1), Convention::kEngine, g.rigid());
  const RigidTransformd ref = g.rigid();
  const SplatScene reg = register_scene(scene, ref);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    const Eigen::Vector3d expected = ref.apply(scene.world_position(i));
    EXPECT_TRUE(reg.world_position(i).isApprox(expected, 1e-9));
  }
  EXPECT_EQ(reg.splats().data(), scene.splats().data());  // storage shared, not copied
}

TEST(Register, RegisteringTwiceComposes) {
  Gen g(9);
  const SplatScene scene(g.splats(10, 0), Convention::kEngine);
  const RigidTransformd a = g.rigid(), b = g.rigid();
  const SplatScene twice = register_scene(register_scene(scene, a), b);
  const SplatScene once = register_scene(scene, b * a);
  for (std::size_t i = 0; i < scene.size(); ++i) {
    EXPECT_TRUE(twice.world_position(i).isApprox(once.world_position(i), 1e-9));
  }
}

TEST(Register, RejectsColmapSceneAndBadReference) {
  EXPECT_THROW(register_scene(one_splat_scene(Convention::kColmap), RigidTransformd::Identity()), SplatSceneError);
  const RigidTransformd bad(Eigen::Quaterniond::Identity(), Eigen::Vector3d::Zero(), -1.0);
  EXPECT_THROW(register_scene(one_splat_scene(Convention::kEngine), bad), std::invalid_argument);
}

TEST(RigidTransform, InverseComposesToIdentity) {
  Gen g(10);
  for (int i = 0; i < 200; ++i) {
    const RigidTransformd t(g.rotation(), g.vec3(-3, 3), g.uniform(0.2, 3.0));
    const Eigen::Vector3d p = g.vec3(-5, 5);
    EXPECT_TRUE((t.inverse() * t).apply(p).isApprox(p, 1e-9));
    EXPECT_TRUE(t.inverse().apply(t.apply(p)).isApprox(p, 1e-9));
  }
}

TEST(Convert, YFlipExample) {
  Splat s;
  s.position = {0.0f, 1.0f, 0.0f};
  const SplatScene e = convert_convention(SplatScene({s}, Convention::kColmap));
  EXPECT_EQ(e[0].position, Eigen::Vector3f(0.0f, -1.0f, 0.0f));
  EXPECT_EQ(e[0].rotation.coeffs(), colmap_to_engine_rotation().cast<float>().coeffs());
}

TEST(Convert, RoundTripIsExactUpToQuaternionSign) {
  Gen g(11);
  const SplatScene colmap(g.splats(200, 3), Convention::kColmap);
  const SplatScene back = revert_convention(convert_convention(colmap));
  for (std::size_t i = 0; i < colmap.size(); ++i) {
    EXPECT_LE((back[i].position - colmap[i].position).cwiseAbs().maxCoeff(), 1e-9);
    const Eigen::Vector4f a = back[i].rotation.coeffs(), b = colmap[i].rotation.coeffs();
    EXPECT_LE(std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff()), 1e-9);
    EXPECT_EQ(back[i].scale, colmap[i].scale);
    EXPECT_EQ(back[i].opacity, colmap[i].opacity);
  }
}

TEST(Register, IdentityAndTranslationExamples) {
  Gen g(12);
  const SplatScene scene(g.splats(20, 0), Convention::kEngine);
  const SplatScene same = register_scene(scene, RigidTransformd::Identity());
  for (std::size_t i = 0; i < scene.size(); ++i) {
    EXPECT_EQ(same.world_position(i), scene[i].position.cast<double>());
  }
  Splat origin;
  origin.position.setZero();
  const SplatScene moved = register_scene(SplatScene({origin}, Convention::kEngine),
                                          RigidTransformd::FromTranslation({1.0, 0.0, 0.0}));
  EXPECT_EQ(moved.world_position(0), Eigen::Vector3d(1.0, 0.0, 0.0));
}

TEST(Register, UniformScaleDoublesBoundsDiagonal) {
  Gen g(13);
  const SplatScene scene(g.splats(100, 0), Convention::kEngine);
  const SplatScene big =
      register_scene(scene, RigidTransformd(Eigen::Quaterniond::Identity(), Eigen::Vector3d::Zero(), 2.0));
  // Recompute the box from the raw positions rather than trusting world_bounds.
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(1e30), hi = -lo;
  for (const auto& s : scene.splats()) {
    lo = lo.cwiseMin(2.0 * s.position.cast<double>());
    hi = hi.cwiseMax(2.0 * s.position.cast<double>());
  }
  EXPECT_NEAR(big.world_bounds().diagonal(), (hi - lo).norm(), 1e-9);
  EXPECT_NEAR(big.world_bounds().diagonal(), 2.0 * scene.world_bounds().diagonal(), 1e-9);
}

TEST(Register, LoadConvertRegisterPreservesCount) {
  Gen g(14);
  for (std::size_t n : {1u, 7u, 333u}) {
    const SplatScene scene = register_scene(convert_convention(SplatScene(g.splats(n, 1), Convention::kColmap)),
                                            g.rigid());
    EXPECT_EQ(scene.size(), n);
  }
}

TEST(Sh, ZeroCoefficientsGiveMidGray) {
  const ShCoeffs<float> c = ShCoeffs<float>::Zero(16, 3);
  EXPECT_EQ(eval_sh<float>(c, Eigen::Vector3f::UnitX(), 3), Eigen::Vector3f::Constant(0.5f));
}

TEST(Sh, DcForFullIntensity) {
  const double y00 = 1.0 / (2.0 * std::sqrt(M_PI));
  EXPECT_NEAR(y00, 0.2820948, 1e-7);
  ShCoeffs<double> c = ShCoeffs<double>::Zero(1, 3);
  c.row(0).setConstant(1.0 / (2.0 * y00));
  EXPECT_TRUE(eval_sh<double>(c, Eigen::Vector3d::UnitY(), 0).isApprox(Eigen::Vector3d::Ones(), 1e-12));
}
