#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rfusion/depth_fusion.hpp"
#include "rfusion/rigid_transform.hpp"
#include "rfusion/splat_scene.hpp"

namespace rfusion {

/// Planar pose in the maze frame: x east, y north, heading counterclockwise
/// from +x. The 3D engine frame maps (x, y) to (x, 0, -y) with +Y up.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Eigen::Vector2d position() const { return {x, y}; }
  bool operator==(const Pose2&) const = default;
};

double wrap_angle(double a);

struct VelocityLimits {
  double v_max = 0.22;
  double omega_max = 2.84;
};

inline constexpr VelocityLimits kPlatformLimits{0.22, 2.84};
inline constexpr VelocityLimits kSessionLimits{0.05, 0.5};
inline constexpr double kFootprintRadius = 0.105;
inline constexpr double kMaxStepDt = 0.1;

struct TwistCommand {
  double linear = 0.0;   // m/s
  double angular = 0.0;  // rad/s
  std::uint64_t stamp_us = 0;

  bool operator==(const TwistCommand&) const = default;
};

struct RobotState {
  Pose2 pose;
  double v = 0.0;
  double omega = 0.0;
  VelocityLimits limits = kPlatformLimits;

  bool operator==(const RobotState&) const = default;
};

/// Clamps magnitude per axis, preserving sign. Throws std::invalid_argument
/// for non-finite commands.
TwistCommand clamp_twist(const TwistCommand& cmd, const VelocityLimits& limits);

/// Exact unicycle arc over dt; straight line when |omega| < 1e-9.
Pose2 integrate_arc(const Pose2& pose, double v, double omega, double dt);

/// Free-space step. Throws std::invalid_argument for dt outside (0, 0.1] or a
/// non-finite command.
RobotState step(const RobotState& state, const TwistCommand& cmd, double dt);

struct MazeSpec;

struct StepResult {
  RobotState state;
  bool collided = false;
};

/// Step against maze geometry: when the new pose collides, the pose is held
/// bitwise unchanged and `collided` is set.
StepResult step(const RobotState& state, const TwistCommand& cmd, double dt, const MazeSpec& maze,
                double footprint_radius = kFootprintRadius);

/// Dead-reckoned pose estimate from noisy wheel velocities.
struct OdometryState {
  Pose2 pose_est;
  double noise_v = 0.0;      // std-dev of additive linear velocity noise, m/s
  double noise_omega = 0.0;  // std-dev of additive angular velocity noise, rad/s
  std::uint64_t seed = 0;
  std::mt19937_64 rng;

  OdometryState() = default;
  OdometryState(const Pose2& start, double noise_v, double noise_omega, std::uint64_t seed)
      : pose_est(start), noise_v(noise_v), noise_omega(noise_omega), seed(seed), rng(seed) {}
};

/// Integrates the applied (v, omega) plus Gaussian noise with the same arc
/// formula as step(). Deterministic per seed.
OdometryState update_odometry(const OdometryState& odom, double v_applied, double omega_applied, double dt);

/// Axis-aligned rectangle in the maze plane.
struct Rect2 {
  Eigen::Vector2d min = Eigen::Vector2d::Zero();
  Eigen::Vector2d max = Eigen::Vector2d::Zero();

  Eigen::Vector2d size() const { return max - min; }
  Eigen::Vector2d center() const { return 0.5 * (min + max); }
  /// True when the open interiors overlap.
  bool overlaps(const Rect2& o) const {
    return min.x() < o.max.x() && o.min.x() < max.x() && min.y() < o.max.y() && o.min.y() < max.y();
  }
  bool contains(const Rect2& o) const {
    return (o.min.array() >= min.array()).all() && (o.max.array() <= max.array()).all();
  }
};

/// Solid box standing on the floor.
struct Block {
  Rect2 footprint;
  double height = 0.3;
};

enum class Side { kEast = 0, kNorth = 1, kWest = 2, kSouth = 3 };

struct Entrance {
  Side side = Side::kEast;
  double offset = 0.0;  // center along the wall, from the wall midpoint
  double width = 0.6;
};

/// Maze layout: square outer wall with entrance gaps, obstacle blocks and the
/// pathway corridors used for task design. The interior is centered at the
/// origin.
struct MazeSpec {
  double outer_size = 2.2;
  double wall_thickness = 0.05;
  double wall_height = 0.3;
  std::vector<Entrance> entrances;
  std::vector<Block> obstacles;
  std::vector<Rect2> pathways;
  bool reconstructed = true;

  /// The shipped layout: 2.2 m square, four centered 0.6 m entrances, three
  /// 0.6 x 0.15 m blocks forming a central island, two 0.6 x 0.875 m pathways.
  static MazeSpec Canonical();

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;

  double half_size() const { return 0.5 * outer_size; }
  Rect2 interior() const;
  /// Wall segments around the interior, split at entrances.
  std::vector<Block> walls() const;
  /// Walls followed by obstacles.
  std::vector<Block> solids() const;
  /// Floor extent (interior plus the wall band).
  Rect2 floor() const;
  /// Center point of an entrance gap on the interior boundary.
  Eigen::Vector2d entrance_point(const Entrance& e) const;

  /// Same layout rotated a quarter turn counterclockwise about the origin.
  MazeSpec rotated_quarter_turn() const;

  nlohmann::json to_json() const;
  static MazeSpec FromJson(const nlohmann::json& j);
};

MazeSpec load_maze(const std::filesystem::path& path);
void save_maze(const MazeSpec& maze, const std::filesystem::path& path);

/// True iff a disc at the pose intersects a wall or obstacle.
bool check_collision(const MazeSpec& maze, const Pose2& pose, double footprint_radius = kFootprintRadius);

/// Engine-frame helpers.
Eigen::Vector3d maze_to_world(const Eigen::Vector2d& p, double height = 0.0);
RigidTransformd body_to_world(const Pose2& pose);
/// Forward-facing stereo camera on the robot body (camera-to-body).
RigidTransformd camera_mount();
RigidTransformd robot_camera_pose(const Pose2& pose);

/// Ray-casts the maze (floor, walls, obstacles) from the camera and converts
/// the nearest hit depth z to disparity f * b / z; no hit gives 0.
/// Throws std::invalid_argument if the camera is outside the maze bounds.
DepthFrame render_depth(const MazeSpec& maze, const RigidTransformd& camera_pose, const StereoIntrinsics& intrinsics,
                        std::uint64_t seq = 0, std::uint64_t timestamp_us = 0);

/// Shortest distance from a world point to the maze surfaces (floor, walls,
/// obstacles).
double distance_to_maze_surface(const MazeSpec& maze, const Eigen::Vector3d& world);

/// Synthetic splat stand-in for a reconstruction of the maze, in engine
/// convention, with roughly `spacing`-meter splat spacing on every surface.
SplatScene make_maze_scene(const MazeSpec& maze, double spacing = 0.03);

}  // namespace rfusion
