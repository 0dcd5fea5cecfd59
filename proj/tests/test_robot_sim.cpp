#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "generators.hpp"
#include "rfusion/robot_sim.hpp"

using namespace rfusion;
using rfusion::testing::Gen;

namespace {

/// Runs `total` seconds as equal steps no longer than the step limit.
RobotState run_for(RobotState s, double v, double w, double total, int min_steps = 1) {
  const int n = std::max(min_steps, static_cast<int>(std::ceil(total / kMaxStepDt)));
  for (int i = 0; i < n; ++i) s = step(s, {v, w, 0}, total / n);
  return s;
}

/// Classical RK4 on the unicycle ODE.
Pose2 rk4(Pose2 p, double v, double w, double total, int n) {
  const double h = total / n;
  auto f = [&](const Eigen::Vector3d& s) { return Eigen::Vector3d(v * std::cos(s.z()), v * std::sin(s.z()), w); };
  Eigen::Vector3d s(p.x, p.y, p.theta);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d k1 = f(s), k2 = f(s + 0.5 * h * k1), k3 = f(s + 0.5 * h * k2), k4 = f(s + h * k3);
    s += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  return {s.x(), s.y(), s.z()};
}

double angle_diff(double a, double b) { return std::abs(wrap_angle(a - b)); }

/// Distance from a point to the surface of an axis-aligned box.
double box_surface_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  const Eigen::Vector3d outside = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  if (outside.norm() > 0.0) return outside.norm();
  return std::min((p - lo).minCoeff(), (hi - p).minCoeff());
}

/// Nearest maze surface, computed from the layout fields directly.
double maze_distance(const MazeSpec& m, const Eigen::Vector3d& w) {
  const Rect2 fl = m.floor();
  const double mx = w.x(), my = -w.z();
  double best = std::numeric_limits<double>::infinity();
  if (mx >= fl.min.x() && mx <= fl.max.x() && my >= fl.min.y() && my <= fl.max.y()) best = std::abs(w.y());
  for (const Block& b : m.solids()) {
    const Eigen::Vector3d lo(b.footprint.min.x(), 0.0, -b.footprint.max.y());
    const Eigen::Vector3d hi(b.footprint.max.x(), b.height, -b.footprint.min.y());
    best = std::min(best, box_surface_distance(w, lo, hi));
  }
  return best;
}

StereoIntrinsics odd_sensor() { return StereoIntrinsics::FromFov(161, 91); }

}  // namespace

TEST(Kinematics, StraightExample) {
  RobotState s;
  s = run_for(s, 0.05, 0.0, 1.0);
  EXPECT_NEAR(s.pose.x, 0.05, 1e-15);
  EXPECT_EQ(s.pose.y, 0.0);
  EXPECT_EQ(s.pose.theta, 0.0);
}

TEST(Kinematics, TurnInPlaceExample) {
  RobotState s;
  s = run_for(s, 0.0, 0.5, M_PI);
  EXPECT_NEAR(s.pose.theta, 1.5708, 1e-4);
  EXPECT_NEAR(s.pose.theta, M_PI / 2, 1e-12);
  EXPECT_EQ(s.pose.x, 0.0);
}

TEST(Kinematics, QuarterArcExample) {
  RobotState s;
  s = run_for(s, 0.1, 0.5, M_PI);  // theta reaches pi/2 at t = pi
  EXPECT_NEAR(s.pose.x, 0.2, 1e-12);
  EXPECT_NEAR(s.pose.y, 0.2, 1e-12);
  const Pose2 r = rk4({}, 0.1, 0.5, M_PI, 20000);
  EXPECT_NEAR(s.pose.x, r.x, 1e-10);
  EXPECT_NEAR(s.pose.y, r.y, 1e-10);
}

TEST(Kinematics, ArcAgreesWithRk4FromRandomStarts) {
  Gen g(51);
  for (int i = 0; i < 50; ++i) {
    const Pose2 p{g.uniform(-1, 1), g.uniform(-1, 1), g.uniform(-M_PI, M_PI)};
    const double v = g.uniform(-0.22, 0.22), w = g.uniform(-2.8, 2.8), dt = g.uniform(1e-3, 0.1);
    const Pose2 a = integrate_arc(p, v, w, dt);
    const Pose2 b = rk4(p, v, w, dt, 200);
    EXPECT_NEAR(a.x, b.x, 1e-11);
    EXPECT_NEAR(a.y, b.y, 1e-11);
    EXPECT_LT(angle_diff(a.theta, b.theta), 1e-11);
  }
}

TEST(Kinematics, FullCircleReturnsToStart) {
  const double v = 0.1, w = 0.5;
  const int n = 640;
  RobotState s;
  s.pose = {0.3, -0.2, 0.7};
  const Pose2 start = s.pose;
  for (int i = 0; i < n; ++i) s = step(s, {v, w, 0}, (2 * M_PI / w) / n);
  EXPECT_NEAR(s.pose.x, start.x, 1e-6);
  EXPECT_NEAR(s.pose.y, start.y, 1e-6);
  EXPECT_LT(angle_diff(s.pose.theta, start.theta), 1e-6);
}

TEST(Kinematics, SubdivisionIsConsistent) {
  Gen g(52);
  for (int i = 0; i < 2000; ++i) {
    const Pose2 p{g.uniform(-1, 1), g.uniform(-1, 1), g.uniform(-M_PI, M_PI)};
    const double v = g.uniform(-0.22, 0.22), dt = g.uniform(1e-3, 0.1);
    const double w = (i % 10 == 0) ? 0.0 : g.uniform(-2.84, 2.84);
    const Pose2 whole = integrate_arc(p, v, w, dt);
    Pose2 half = integrate_arc(integrate_arc(p, v, w, dt / 2), v, w, dt / 2);
    EXPECT_NEAR(whole.x, half.x, 1e-9);
    EXPECT_NEAR(whole.y, half.y, 1e-9);
    EXPECT_LT(angle_diff(whole.theta, half.theta), 1e-9);
  }
}

TEST(Kinematics, RejectsBadStepArguments) {
  RobotState s;
  EXPECT_THROW(step(s, {0.1, 0, 0}, 0.0), std::invalid_argument);
  EXPECT_THROW(step(s, {0.1, 0, 0}, 0.11), std::invalid_argument);
  EXPECT_THROW(step(s, {0.1, 0, 0}, -0.01), std::invalid_argument);
  EXPECT_THROW(step(s, {std::nan(""), 0, 0}, 0.02), std::invalid_argument);
  EXPECT_THROW(step(s, {0, std::numeric_limits<double>::infinity(), 0}, 0.02), std::invalid_argument);
  EXPECT_NO_THROW(step(s, {0.1, 0, 0}, 0.1));
}

TEST(Clamp, PropertiesHold) {
  Gen g(53);
  for (int i = 0; i < 5000; ++i) {
    const VelocityLimits lim{g.uniform(0.01, 1), g.uniform(0.01, 3)};
    const TwistCommand c{g.uniform(-2, 2), g.uniform(-6, 6), 0};
    const TwistCommand o = clamp_twist(c, lim);
    EXPECT_LE(std::abs(o.linear), lim.v_max);
    EXPECT_LE(std::abs(o.angular), lim.omega_max);
    EXPECT_GE(o.linear * c.linear, 0.0);
    EXPECT_GE(o.angular * c.angular, 0.0);
    EXPECT_EQ(clamp_twist(o, lim), o);
    if (std::abs(c.linear) <= lim.v_max) {
      EXPECT_EQ(o.linear, c.linear);
    }
  }
}

TEST(Clamp, SessionLimitsApplyThroughStep) {
  RobotState s;
  s.limits = kSessionLimits;
  s = step(s, {1.0, -3.0, 0}, 0.02);
  EXPECT_EQ(s.v, 0.05);
  EXPECT_EQ(s.omega, -0.5);
}

TEST(WrapAngle, StaysInHalfOpenRange) {
  Gen g(54);
  for (int i = 0; i < 1000; ++i) {
    const double a = g.uniform(-50, 50);
    const double w = wrap_angle(a);
    EXPECT_GT(w, -M_PI);
    EXPECT_LE(w, M_PI);
    EXPECT_NEAR(std::cos(w), std::cos(a), 1e-9);
    EXPECT_NEAR(std::sin(w), std::sin(a), 1e-9);
  }
  EXPECT_DOUBLE_EQ(wrap_angle(-M_PI), M_PI);
}

TEST(Odometry, ZeroNoiseTracksGroundTruthExactly) {
  Gen g(55);
  RobotState truth;
  OdometryState odom(truth.pose, 0.0, 0.0, 3);
  for (int i = 0; i < 1000; ++i) {
    const TwistCommand c{g.uniform(-0.2, 0.2), g.uniform(-2, 2), 0};
    truth = step(truth, c, 0.02);
    odom = update_odometry(odom, truth.v, truth.omega, 0.02);
    ASSERT_EQ(odom.pose_est, truth.pose);
  }
}

TEST(Odometry, SameSeedSameEstimate) {
  OdometryState a({}, 0.01, 0.01, 77), b({}, 0.01, 0.01, 77), c({}, 0.01, 0.01, 78);
  for (int i = 0; i < 500; ++i) {
    a = update_odometry(a, 0.1, 0.2, 0.02);
    b = update_odometry(b, 0.1, 0.2, 0.02);
    c = update_odometry(c, 0.1, 0.2, 0.02);
  }
  EXPECT_EQ(a.pose_est, b.pose_est);
  EXPECT_NE(a.pose_est, c.pose_est);
}

TEST(Odometry, DriftGrowsWithPathLength) {
  double drift100 = 0.0, drift1000 = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    RobotState truth;
    OdometryState odom(truth.pose, 0.01, 0.01, seed);
    for (int i = 1; i <= 1000; ++i) {
      truth = step(truth, {0.1, 0.0, 0}, 0.02);
      odom = update_odometry(odom, truth.v, truth.omega, 0.02);
      const double e = (odom.pose_est.position() - truth.pose.position()).norm();
      if (i == 100) drift100 += e;
      if (i == 1000) drift1000 += e;
    }
  }
  EXPECT_GT(drift1000 / 100, drift100 / 100);
}

// Linear velocity noise alone gives along-track error with std noise_v * sqrt(n) * dt.
TEST(Odometry, AlongTrackSpreadMatchesRandomWalk) {
  const int n = 400, runs = 2000;
  const double dt = 0.02, sv = 0.05;
  double sum2 = 0.0;
  for (int r = 0; r < runs; ++r) {
    OdometryState odom({}, sv, 0.0, 1000 + r);
    for (int i = 0; i < n; ++i) odom = update_odometry(odom, 0.1, 0.0, dt);
    const double e = odom.pose_est.x - 0.1 * n * dt;
    sum2 += e * e;
  }
  const double expect = sv * std::sqrt(static_cast<double>(n)) * dt;
  EXPECT_NEAR(std::sqrt(sum2 / runs), expect, 0.06 * expect);
}

TEST(Maze, CanonicalDimensions) {
  const MazeSpec m = MazeSpec::Canonical();
  EXPECT_NO_THROW(m.validate());
  EXPECT_DOUBLE_EQ(m.outer_size, 2.2);
  ASSERT_EQ(m.entrances.size(), 4u);
  ASSERT_EQ(m.obstacles.size(), 3u);
  for (const Block& b : m.obstacles) {
    EXPECT_NEAR(b.footprint.size().x(), 0.6, 1e-12);
    EXPECT_NEAR(b.footprint.size().y(), 0.15, 1e-12);
  }
  ASSERT_EQ(m.pathways.size(), 2u);
  for (const Rect2& p : m.pathways) {
    EXPECT_NEAR(p.size().x(), 0.6, 1e-12);
    EXPECT_NEAR(p.size().y(), 0.875, 1e-12);
  }
  EXPECT_TRUE(m.reconstructed);
}

TEST(Maze, JsonRoundTrip) {
  const MazeSpec m = MazeSpec::Canonical();
  const auto path = std::filesystem::temp_directory_path() / "rfusion_maze_test.json";
  save_maze(m, path);
  const MazeSpec back = load_maze(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.to_json(), m.to_json());
  nlohmann::json bad = m.to_json();
  bad["schema"] = "other";
  EXPECT_THROW(MazeSpec::FromJson(bad), std::invalid_argument);
  bad = m.to_json();
  bad["entrances"][0]["width"] = 5.0;
  EXPECT_THROW(MazeSpec::FromJson(bad), std::invalid_argument);
  bad = m.to_json();
  bad.erase("obstacles");
  EXPECT_THROW(MazeSpec::FromJson(bad), std::invalid_argument);
}

TEST(Maze, WallsLeaveEntranceGaps) {
  const MazeSpec m = MazeSpec::Canonical();
  for (const Entrance& e : m.entrances) {
    const Eigen::Vector2d p = m.entrance_point(e);
    EXPECT_NEAR(p.cwiseAbs().maxCoeff(), 1.1, 1e-12);
    EXPECT_FALSE(check_collision(m, {p.x(), p.y(), 0.0}, 0.25));
    EXPECT_TRUE(check_collision(m, {p.x(), p.y(), 0.0}, 0.31));
  }
}

TEST(Maze, QuarterTurnMapsSolidsOntoRotatedSolids) {
  const MazeSpec m = MazeSpec::Canonical();
  const MazeSpec r = m.rotated_quarter_turn();
  Gen g(56);
  for (int i = 0; i < 3000; ++i) {
    const Eigen::Vector2d p(g.uniform(-1.2, 1.2), g.uniform(-1.2, 1.2));
    const double rad = g.uniform(0.01, 0.2);
    EXPECT_EQ(check_collision(m, {p.x(), p.y(), 0}, rad), check_collision(r, {-p.y(), p.x(), 0}, rad));
  }
}

TEST(Collision, OpenAndBlockedExamples) {
  const MazeSpec m = MazeSpec::Canonical();
  EXPECT_FALSE(check_collision(m, {0.7, 0.0, 0.0}, 0.05));
  EXPECT_FALSE(check_collision(m, {-0.7, -0.7, 0.0}, 0.05));
  EXPECT_TRUE(check_collision(m, {0.0, 0.0, 0.0}, 0.05));  // central island
  EXPECT_TRUE(check_collision(m, {0.35, 0.0, 0.0}, 0.1));  // brushing the island side
  EXPECT_TRUE(check_collision(m, {1.05, 0.8, 0.0}, 0.1));  // east wall
}

TEST(Collision, PathwayCenterlineSweepIsFree) {
  const MazeSpec m = MazeSpec::Canonical();
  const double r = 0.1;
  for (const Rect2& p : m.pathways) {
    const double x = p.center().x();
    // Clear of the closed end by the footprint radius; the open end leads out through an entrance.
    const bool north = p.center().y() > 0;
    const double y0 = north ? p.min.y() + r + 1e-9 : p.min.y();
    const double y1 = north ? p.max.y() : p.max.y() - r - 1e-9;
    for (int i = 0; i <= 1000; ++i) {
      const double y = y0 + (y1 - y0) * i / 1000.0;
      EXPECT_FALSE(check_collision(m, {x, y, 0.0}, r)) << y;
    }
    EXPECT_GT(p.size().x(), 2 * r);
  }
}

TEST(Collision, HeldPoseIsBitwiseUnchanged) {
  const MazeSpec m = MazeSpec::Canonical();
  RobotState s;
  s.pose = {0.9, 0.8, 0.0};  // facing the east wall
  s.limits = kPlatformLimits;
  int collisions = 0;
  for (int i = 0; i < 200; ++i) {
    const Pose2 before = s.pose;
    const StepResult r = step(s, {0.2, 0.0, 0}, 0.02, m);
    if (r.collided) {
      ++collisions;
      EXPECT_EQ(std::memcmp(&r.state.pose, &before, sizeof(Pose2)), 0);
    }
    s = r.state;
    EXPECT_FALSE(check_collision(m, s.pose));
  }
  EXPECT_GT(collisions, 100);
  EXPECT_LE(s.pose.x + kFootprintRadius, 1.1);
}

TEST(Frames, MazeToWorldAxes) {
  EXPECT_EQ(maze_to_world({1.0, 2.0}, 0.5), Eigen::Vector3d(1.0, 0.5, -2.0));
  // Body +x is the heading direction.
  for (double th : {0.0, 0.5, M_PI / 2, -2.0}) {
    const Eigen::Vector3d fwd = body_to_world({0.1, 0.2, th}).apply_vector(Eigen::Vector3d::UnitX());
    EXPECT_TRUE(fwd.isApprox(maze_to_world({std::cos(th), std::sin(th)}), 1e-12));
  }
  // Camera looks along the heading.
  const Eigen::Vector3d look = robot_camera_pose({0, 0, 0.3}).apply_vector(-Eigen::Vector3d::UnitZ());
  EXPECT_TRUE(look.isApprox(maze_to_world({std::cos(0.3), std::sin(0.3)}), 1e-12));
}

TEST(DepthCamera, WallAtOneMeterGivesFocalTimesBaseline) {
  const MazeSpec m = MazeSpec::Canonical();
  const StereoIntrinsics in = odd_sensor();
  const double cam_x = robot_camera_pose({0, 0, 0}).translation().x();
  const Pose2 robot{1.1 - 1.0 - cam_x, 0.7, 0.0};
  const DepthFrame f = render_depth(m, robot_camera_pose(robot), in);
  EXPECT_NEAR(f.disparity(f.index(80, 45)), in.focal * in.baseline / 1.0, 1e-5);
}

TEST(DepthCamera, OpenEntranceCenterIsInvalid) {
  const MazeSpec m = MazeSpec::Canonical();
  const StereoIntrinsics in = odd_sensor();
  const DepthFrame f = render_depth(m, robot_camera_pose({0.6, 0.0, 0.0}), in);
  EXPECT_EQ(f.disparity(f.index(80, 45)), 0.0f);
  EXPECT_GT(f.valid_count(), 0);
}

TEST(DepthCamera, CameraOutsideMazeThrows) {
  EXPECT_THROW(render_depth(MazeSpec::Canonical(), robot_camera_pose({3.0, 0.0, 0.0}), odd_sensor()),
               std::invalid_argument);
}

TEST(DepthCamera, DownwardViewOfFloorIsPlanar) {
  MazeSpec m = MazeSpec::Canonical();
  m.obstacles.clear();
  m.pathways.clear();
  const StereoIntrinsics in = StereoIntrinsics::FromFov(64, 48);
  const RigidTransformd cam = look_at<double>({0.5, 0.3, -0.5}, {0.5, 0.0, -0.5}, -Eigen::Vector3d::UnitZ());
  const DepthFrame f = render_depth(m, cam, in);
  ASSERT_EQ(f.valid_count(), f.pixel_count());
  DepthFrame posed = f;
  posed.camera_pose_at_capture = cam;
  const WorldPointCloud c = frame_to_cloud(posed, in);
  EXPECT_LE(c.points.row(1).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(DepthCamera, SurveyedPosesCloseTheLoop) {
  const MazeSpec m = MazeSpec::Canonical();
  const StereoIntrinsics in = StereoIntrinsics::FromFov(160, 90);
  for (const Pose2 p : {Pose2{0.0, -0.7, M_PI / 2}, Pose2{0.7, 0.7, 2.4}, Pose2{-0.8, 0.1, -0.3}}) {
    DepthFrame f = render_depth(m, robot_camera_pose(p), in);
    f.camera_pose_at_capture = robot_camera_pose(p);
    const WorldPointCloud c = frame_to_cloud(f, in);
    ASSERT_GT(c.size(), f.pixel_count() / 2);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) worst = std::max(worst, maze_distance(m, c.points.col(i)));
    EXPECT_LE(worst, 1e-4);
    double lib = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) lib = std::max(lib, distance_to_maze_surface(m, c.points.col(i)));
    EXPECT_NEAR(lib, worst, 1e-9);
  }
}

TEST(MazeScene, SplatsLieOnMazeSurfaces) {
  const MazeSpec m = MazeSpec::Canonical();
  const SplatScene s = make_maze_scene(m, 0.05);
  EXPECT_EQ(s.convention(), Convention::kEngine);
  EXPECT_GT(s.size(), 1000u);
  for (std::size_t i = 0; i < s.size(); i += 7) EXPECT_LE(maze_distance(m, s.world_position(i)), 1e-5);
  EXPECT_THROW(make_maze_scene(m, 0.0), std::invalid_argument);
}
