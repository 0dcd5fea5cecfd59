#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rfusion/camera.hpp"
#include "rfusion/depth_fusion.hpp"
#include "rfusion/renderer.hpp"
#include "rfusion/robot_sim.hpp"
#include "rfusion/splat_scene.hpp"
#include "rfusion/teleop_net.hpp"

namespace rfusion {

/// Steering-law traversal time T = a + b * A / W for a tunnel of length A and
/// width W. Throws std::invalid_argument for W <= 0 or A < 0.
double steering_time(double length, double width, double a = 0.0, double b = 1.0);

struct Subpath {
  std::vector<Eigen::Vector2d> centerline;
  double width = 0.0;
  double length = 0.0;

  /// A / W
  double difficulty() const { return length / width; }
};

struct TrajectorySpec {
  int entrance_id = 1;  // 1..4
  Pose2 start;
  std::array<Subpath, 3> subpaths;
  std::array<Pose2, 3> goals;

  double difficulty() const;
  /// Start point followed by every subpath vertex, without repeats.
  std::vector<Eigen::Vector2d> centerline() const;
};

/// Radius of the ring the trajectories follow around the central island.
inline constexpr double kTrajectoryRingRadius = 0.7;

/// Four trajectories, each entering at one entrance and leaving through the
/// next one counterclockwise, split into three subpaths of equal length.
/// Throws std::invalid_argument unless the maze has one entrance per side.
std::array<TrajectorySpec, 4> generate_trajectories(const MazeSpec& maze,
                                                    double ring_radius = kTrajectoryRingRadius);

inline constexpr double kGoalTolerance = 0.05;

struct GoalProgress {
  int index = 1;  // 1-based current goal; goals.size() + 1 once complete
  bool reached = false;
};

/// Advances at most one goal when the position lies within `tolerance` of
/// the current goal. Throws std::invalid_argument for tolerance <= 0.
GoalProgress goal_step(int current_goal, const Pose2& pose, std::span<const Pose2> goals,
                       double tolerance = kGoalTolerance);

enum class ViewMode { kExoFusion, kEgoFusion, kExoCloudOnly };

const char* to_string(ViewMode mode);
/// Accepts "exo", "ego" and "cloud". Throws std::invalid_argument otherwise.
ViewMode parse_view_mode(const std::string& s);

/// Camera behind and above the robot, pitched 15 degrees down (body frame).
RigidTransformd default_ego_offset();

struct EgoView {
  RigidTransformd pose;
  bool half_indicator = true;  // draw only the lower half of the robot indicator
};

/// Camera pose = body_to_world(robot) * offset.
EgoView ego_camera(const Pose2& robot, const RigidTransformd& offset = default_ego_offset());

struct ExoUpdate {
  CameraModel camera;
  bool forward_twist = false;
};

/// Trigger released: the input translates the camera (world frame). Trigger
/// held: the camera stays put and the input goes to the robot.
ExoUpdate exo_camera(const CameraModel& current, const Eigen::Vector3d& user_move, bool trigger_held);

/// Overview camera looking at the maze from the south.
CameraModel default_exo_camera(int width, int height);

/// Robot state indicator: a cylinder with a heading wedge at the pose.
WorldPointCloud robot_indicator_cloud(const Pose2& pose, bool lower_half_only);
/// Flat blue ring on the floor at the goal.
WorldPointCloud goal_marker_cloud(const Pose2& goal);

/// Twist held from `t_us` until the next row.
struct ScriptRow {
  std::uint64_t t_us = 0;
  double linear = 0.0;
  double angular = 0.0;

  bool operator==(const ScriptRow&) const = default;
};

/// CSV with a `t,linear,angular` header; t in seconds.
std::vector<ScriptRow> load_twist_csv(const std::filesystem::path& path);
std::vector<ScriptRow> parse_twist_csv(std::istream& in);
void save_twist_csv(const std::vector<ScriptRow>& rows, const std::filesystem::path& path);

/// Turn-in-place and straight-drive script along the trajectory centerline
/// at `speed_scale` times the limits, quantized to ticks (the last tick of
/// each motion runs at the fractional speed that lands it exactly).
std::vector<ScriptRow> optimal_script(const TrajectorySpec& trajectory, const VelocityLimits& limits,
                                      std::uint64_t tick_us = 20'000, double speed_scale = 1.0);

struct SessionMetrics {
  bool completed = false;
  double elapsed_s = 0.0;
  std::vector<double> splits_s;
  int collisions = 0;
  int commands = 0;
  std::uint64_t ticks = 0;
  std::uint64_t frames_captured = 0;
  std::uint64_t frames_delivered = 0;
  std::vector<Pose2> truth_path;
  Pose2 final_estimate;

  bool operator==(const SessionMetrics&) const = default;
};

nlohmann::json metrics_to_json(const SessionMetrics& m, bool include_path = false);
SessionMetrics metrics_from_json(const nlohmann::json& j);
/// Plain-text table of a metrics document.
std::string metrics_table(const SessionMetrics& m);

struct SessionConfig {
  ViewMode mode = ViewMode::kExoFusion;
  MazeSpec maze = MazeSpec::Canonical();
  int trajectory = 1;  // 1..4
  LinkModel link = LinkModel::Calibrated();
  std::uint64_t odometry_seed = 11;
  double odometry_noise_v = 0.002;
  double odometry_noise_omega = 0.01;
  VelocityLimits limits = kSessionLimits;
  std::uint64_t tick_us = 20'000;
  int capture_fps = 30;
  StereoIntrinsics sensor = StereoIntrinsics::FromFov(320, 180);
  double goal_tolerance = kGoalTolerance;
  double timeout_s = 600.0;
  RigidTransformd ego_offset = default_ego_offset();
  /// Splat scene for the fused view; null renders point clouds only.
  std::shared_ptr<const SplatScene> scene;
  /// Produce a fused view on every delivered frame. Off for headless runs.
  bool render = false;
  int view_width = 320;
  int view_height = 240;
  int render_workers = 1;
};

/// Control message due at `t_us` on the operator-to-robot channel.
struct TimedControl {
  std::uint64_t t_us = 0;
  ControlMessage message;
};

std::vector<TimedControl> script_to_controls(const std::vector<ScriptRow>& rows);

/// One teleoperation session on a virtual clock. Each tick: ingest operator
/// messages, step the robot, capture and ship a depth frame when due, fuse
/// the newest delivered frame into the operator view, then check the goal.
class Session {
 public:
  explicit Session(SessionConfig config);

  /// Operator-side endpoint for messages to the robot.
  ControlSender& uplink() { return uplink_tx_; }
  /// Messages the robot side sent to the operator since the last call.
  std::vector<ControlMessage> take_operator_messages();

  void tick();
  bool complete() const { return goal_index_ > 3; }
  bool timed_out() const;
  std::uint64_t now_us() const { return tick_index_ * config_.tick_us; }

  const SessionConfig& config() const { return config_; }
  const TrajectorySpec& trajectory() const { return trajectory_; }
  ViewMode mode() const { return mode_; }
  int goal_index() const { return goal_index_; }
  const RobotState& robot() const { return robot_; }
  const OdometryState& odometry() const { return odometry_; }
  /// Robot indicator pose as known on the operator side.
  const Pose2& indicator_pose() const { return indicator_; }
  const CameraModel& view_camera() const { return view_camera_; }
  /// Latest fused view and its source frame seq (0 before the first present).
  const RenderTarget& view() const { return view_; }
  std::uint64_t view_seq() const { return view_seq_; }
  std::uint64_t view_version() const { return view_version_; }
  SessionMetrics metrics() const;
  const std::vector<TraceEvent>& trace() const { return trace_; }

 private:
  void ingest();
  void capture();
  void receive();
  void present();

  SessionConfig config_;
  TrajectorySpec trajectory_;
  ViewMode mode_;
  std::uint64_t tick_index_ = 0;

  ControlSender uplink_tx_;
  ControlReceiver uplink_rx_;
  ControlSender downlink_tx_;
  ControlReceiver downlink_rx_;
  FrameSender<std::vector<std::uint8_t>> frame_tx_;
  FrameReceiver<std::vector<std::uint8_t>> frame_rx_;
  CaptureClock capture_clock_;

  RobotState robot_;
  OdometryState odometry_;
  TwistCommand latched_;
  int goal_index_ = 1;
  std::uint64_t last_reach_us_ = 0;
  std::vector<std::uint64_t> splits_us_;
  std::uint64_t elapsed_us_ = 0;
  int collisions_ = 0;
  int commands_ = 0;
  std::uint64_t frame_seq_ = 0;
  RigidTransformd last_capture_pose_;
  std::uint64_t frames_delivered_ = 0;
  std::vector<Pose2> truth_path_;

  Pose2 indicator_;
  std::map<std::uint64_t, RigidTransformd> capture_poses_;
  std::optional<DepthFrame> latest_frame_;
  std::vector<ControlMessage> operator_inbox_;
  CameraModel exo_camera_;
  CameraModel view_camera_;
  RenderTarget view_;
  std::uint64_t view_seq_ = 0;
  std::uint64_t view_version_ = 0;
  bool view_dirty_ = true;
  std::vector<TraceEvent> trace_;
};

/// Runs a session to completion or timeout, feeding `input` on the uplink at
/// the listed times.
SessionMetrics run_session(const SessionConfig& config, const std::vector<TimedControl>& input);

/// Composes the operator view: splats (unless cloud-only), the sensor cloud,
/// the robot indicator and the goal marker.
RenderTarget compose_view(const SplatScene* scene, const CameraModel& camera, ViewMode mode,
                          const WorldPointCloud* sensor_cloud, const Pose2& indicator, const Pose2* goal,
                          int workers = 1);

}  // namespace rfusion
