#include "rfusion/mission_harness.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rfusion {

double steering_time(double length, double width, double a, double b) {
  if (!(width > 0.0)) {
    throw std::invalid_argument("steering_time: tunnel width must be positive");
  }
  if (!(length >= 0.0)) {
    throw std::invalid_argument("steering_time: tunnel length must be >= 0");
  }
  return a + b * length / width;
}

double TrajectorySpec::difficulty() const {
  double sum = 0.0;
  for (const auto& s : subpaths) sum += s.difficulty();
  return sum;
}

std::vector<Eigen::Vector2d> TrajectorySpec::centerline() const {
  std::vector<Eigen::Vector2d> out{start.position()};
  for (const auto& s : subpaths) {
    for (const auto& p : s.centerline) {
      if ((p - out.back()).norm() > 1e-12) out.push_back(p);
    }
  }
  return out;
}

namespace {

Eigen::Vector2d side_normal(Side s) {
  switch (s) {
    case Side::kEast:
      return {1.0, 0.0};
    case Side::kNorth:
      return {0.0, 1.0};
    case Side::kWest:
      return {-1.0, 0.0};
    case Side::kSouth:
      return {0.0, -1.0};
  }
  return {1.0, 0.0};
}

double heading(const Eigen::Vector2d& from, const Eigen::Vector2d& to) {
  return std::atan2(to.y() - from.y(), to.x() - from.x());
}

// Cuts a polyline into `parts` pieces of equal arc length.
std::vector<std::vector<Eigen::Vector2d>> split_polyline(const std::vector<Eigen::Vector2d>& poly, int parts) {
  double total = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) total += (poly[i] - poly[i - 1]).norm();
  std::vector<std::vector<Eigen::Vector2d>> out(static_cast<std::size_t>(parts));
  std::size_t seg = 1;
  double seg_start = 0.0;  // arc length at poly[seg - 1]
  Eigen::Vector2d cursor = poly.front();
  for (int k = 0; k < parts; ++k) {
    auto& piece = out[static_cast<std::size_t>(k)];
    piece.push_back(cursor);
    const double end = total * (k + 1) / parts;
    while (seg < poly.size()) {
      const double len = (poly[seg] - poly[seg - 1]).norm();
      if (seg_start + len < end - 1e-12 || (k == parts - 1 && seg + 1 < poly.size())) {
        piece.push_back(poly[seg]);
        seg_start += len;
        ++seg;
        continue;
      }
      const double f = (end - seg_start) / len;
      cursor = k == parts - 1 ? poly.back() : Eigen::Vector2d(poly[seg - 1] + f * (poly[seg] - poly[seg - 1]));
      piece.push_back(cursor);
      break;
    }
  }
  return out;
}

double polyline_length(const std::vector<Eigen::Vector2d>& poly) {
  double len = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) len += (poly[i] - poly[i - 1]).norm();
  return len;
}

}  // namespace

std::array<TrajectorySpec, 4> generate_trajectories(const MazeSpec& maze, double ring_radius) {
  maze.validate();
  std::array<const Entrance*, 4> by_side{};
  for (const auto& e : maze.entrances) {
    auto& slot = by_side[static_cast<std::size_t>(e.side)];
    if (slot != nullptr) throw std::invalid_argument("generate_trajectories: more than one entrance on a side");
    slot = &e;
  }
  for (const auto* e : by_side) {
    if (e == nullptr) throw std::invalid_argument("generate_trajectories: every side needs an entrance");
  }
  const double h = maze.half_size();
  if (!(ring_radius > 0.0 && ring_radius < h)) {
    throw std::invalid_argument("generate_trajectories: ring radius must lie inside the maze");
  }

  std::array<TrajectorySpec, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    const Entrance& in = *by_side[k];
    const Entrance& exit = *by_side[(k + 1) % 4];
    const Eigen::Vector2d n_in = side_normal(in.side);
    const Eigen::Vector2d n_out = side_normal(exit.side);
    const Eigen::Vector2d entry = maze.entrance_point(in);
    const Eigen::Vector2d leave = maze.entrance_point(exit);
    const Eigen::Vector2d p1 = entry - (h - ring_radius) * n_in;
    const Eigen::Vector2d p3 = leave - (h - ring_radius) * n_out;
    const Eigen::Vector2d corner = p1 + (p3 - p1).dot(n_out) * n_out;
    const std::vector<Eigen::Vector2d> poly{entry, p1, corner, p3, leave};

    TrajectorySpec& t = out[k];
    t.entrance_id = static_cast<int>(k) + 1;
    t.start = Pose2{entry.x(), entry.y(), heading(entry, p1)};
    const auto pieces = split_polyline(poly, 3);
    const double width = std::min(in.width, exit.width);
    for (std::size_t i = 0; i < 3; ++i) {
      Subpath& s = t.subpaths[i];
      s.centerline = pieces[i];
      s.width = width;
      s.length = polyline_length(pieces[i]);
      const auto& c = s.centerline;
      const Eigen::Vector2d& end = c.back();
      t.goals[i] = Pose2{end.x(), end.y(), heading(c[c.size() - 2], end)};
    }
  }
  return out;
}

GoalProgress goal_step(int current_goal, const Pose2& pose, std::span<const Pose2> goals, double tolerance) {
  if (!(tolerance > 0.0)) {
    throw std::invalid_argument("goal_step: tolerance must be positive");
  }
  if (current_goal < 1 || current_goal > static_cast<int>(goals.size())) return {current_goal, false};
  const Pose2& g = goals[static_cast<std::size_t>(current_goal - 1)];
  if ((pose.position() - g.position()).norm() <= tolerance) return {current_goal + 1, true};
  return {current_goal, false};
}

const char* to_string(ViewMode mode) {
  switch (mode) {
    case ViewMode::kExoFusion:
      return "exo";
    case ViewMode::kEgoFusion:
      return "ego";
    case ViewMode::kExoCloudOnly:
      return "cloud";
  }
  return "exo";
}

ViewMode parse_view_mode(const std::string& s) {
  if (s == "exo") return ViewMode::kExoFusion;
  if (s == "ego") return ViewMode::kEgoFusion;
  if (s == "cloud") return ViewMode::kExoCloudOnly;
  throw std::invalid_argument("unknown view mode '" + s + "' (expected exo, ego or cloud)");
}

RigidTransformd default_ego_offset() {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const Eigen::Quaterniond r = axis_angle<double>(-90.0 * kDeg, Eigen::Vector3d::UnitY()) *
                               axis_angle<double>(-15.0 * kDeg, Eigen::Vector3d::UnitX());
  return RigidTransformd(r.normalized(), Eigen::Vector3d(-0.3, 0.25, 0.0));
}

EgoView ego_camera(const Pose2& robot, const RigidTransformd& offset) {
  return EgoView{body_to_world(robot) * offset, true};
}

ExoUpdate exo_camera(const CameraModel& current, const Eigen::Vector3d& user_move, bool trigger_held) {
  if (trigger_held) return {current, true};
  CameraModel moved = current;
  moved.pose = RigidTransformd(current.pose.rotation(), current.pose.translation() + user_move,
                               current.pose.uniform_scale());
  return {moved, false};
}

CameraModel default_exo_camera(int width, int height) {
  const RigidTransformd pose =
      look_at<double>(Eigen::Vector3d(0.0, 2.0, 2.4), Eigen::Vector3d(0.0, 0.0, -0.1), Eigen::Vector3d::UnitY());
  return CameraModel::Make(pose, 60.0, width, height);
}

namespace {

void push_point(WorldPointCloud& c, Eigen::Index& n, const Eigen::Vector3d& p, std::array<std::uint8_t, 3> rgb) {
  if (n == c.points.cols()) {
    c.points.conservativeResize(3, std::max<Eigen::Index>(64, 2 * n));
    c.colors.conservativeResize(3, std::max<Eigen::Index>(64, 2 * n));
  }
  c.points.col(n) = p;
  c.colors.col(n) << rgb[0], rgb[1], rgb[2];
  ++n;
}

void shrink(WorldPointCloud& c, Eigen::Index n) {
  c.points.conservativeResize(3, n);
  c.colors.conservativeResize(3, n);
}

}  // namespace

WorldPointCloud robot_indicator_cloud(const Pose2& pose, bool lower_half_only) {
  constexpr double kHeight = 0.19;
  constexpr std::array<std::uint8_t, 3> kBody{70, 70, 75};
  constexpr std::array<std::uint8_t, 3> kWedge{230, 80, 40};
  const double top = lower_half_only ? 0.5 * kHeight : kHeight;
  const RigidTransformd b2w = body_to_world(pose);
  WorldPointCloud c;
  Eigen::Index n = 0;
  for (double y = 0.0; y <= top + 1e-9; y += 0.015) {
    for (int a = 0; a < 48; ++a) {
      const double phi = 2.0 * std::numbers::pi * a / 48.0;
      push_point(c, n, b2w.apply(Eigen::Vector3d(kFootprintRadius * std::cos(phi), y, kFootprintRadius * std::sin(phi))),
                 kBody);
    }
  }
  // Cap at the cut height with a wedge pointing forward (body +X).
  for (double r = 0.0; r <= kFootprintRadius + 1e-9; r += 0.012) {
    for (int a = 0; a < 36; ++a) {
      const double phi = 2.0 * std::numbers::pi * a / 36.0;
      const Eigen::Vector3d local(r * std::cos(phi), top, r * std::sin(phi));
      const bool wedge = std::abs(local.z()) < 0.35 * local.x();
      push_point(c, n, b2w.apply(local), wedge ? kWedge : kBody);
    }
  }
  shrink(c, n);
  return c;
}

WorldPointCloud goal_marker_cloud(const Pose2& goal) {
  constexpr std::array<std::uint8_t, 3> kBlue{30, 90, 255};
  WorldPointCloud c;
  Eigen::Index n = 0;
  for (double r = 0.06; r <= 0.09 + 1e-9; r += 0.01) {
    for (int a = 0; a < 64; ++a) {
      const double phi = 2.0 * std::numbers::pi * a / 64.0;
      push_point(c, n, maze_to_world(goal.position() + r * Eigen::Vector2d(std::cos(phi), std::sin(phi)), 0.005),
                 kBlue);
    }
  }
  shrink(c, n);
  return c;
}

// ---------------------------------------------------------------------------
// Scripts

std::vector<ScriptRow> parse_twist_csv(std::istream& in) {
  std::vector<ScriptRow> rows;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::array<double, 3> v{};
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    bool numeric = true;
    while (std::getline(ss, cell, ',') && col < 3) {
      try {
        std::size_t used = 0;
        v[static_cast<std::size_t>(col)] = std::stod(cell, &used);
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      ++col;
    }
    if (!numeric && rows.empty() && n == 1) continue;  // header
    if (!numeric || col != 3) {
      throw std::invalid_argument("twist script line " + std::to_string(n) + ": expected t,linear,angular");
    }
    if (!(v[0] >= 0.0) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
      throw std::invalid_argument("twist script line " + std::to_string(n) + ": bad value");
    }
    const auto t = static_cast<std::uint64_t>(std::llround(v[0] * 1e6));
    if (!rows.empty() && t < rows.back().t_us) {
      throw std::invalid_argument("twist script line " + std::to_string(n) + ": time goes backwards");
    }
    rows.push_back({t, v[1], v[2]});
  }
  return rows;
}

std::vector<ScriptRow> load_twist_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open twist script '" + path.string() + "'");
  return parse_twist_csv(in);
}

void save_twist_csv(const std::vector<ScriptRow>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write twist script '" + path.string() + "'");
  out << "t,linear,angular\n" << std::setprecision(17);
  for (const auto& r : rows) {
    out << static_cast<double>(r.t_us) / 1e6 << "," << r.linear << "," << r.angular << "\n";
  }
}

std::vector<ScriptRow> optimal_script(const TrajectorySpec& trajectory, const VelocityLimits& limits,
                                      std::uint64_t tick_us, double speed_scale) {
  if (!(speed_scale > 0.0) || tick_us == 0) {
    throw std::invalid_argument("optimal_script: speed scale and tick must be positive");
  }
  const double dt = static_cast<double>(tick_us) / 1e6;
  const double v = limits.v_max * speed_scale;
  const double w = limits.omega_max * speed_scale;
  std::vector<ScriptRow> rows;
  std::uint64_t tick = 0;
  auto emit = [&](double duration, double lin, double ang) {
    const auto full = static_cast<std::uint64_t>(std::floor(duration / dt));
    for (std::uint64_t i = 0; i < full; ++i) rows.push_back({(tick++) * tick_us, lin, ang});
    const double frac = duration - static_cast<double>(full) * dt;
    if (frac > 1e-12) rows.push_back({(tick++) * tick_us, lin * frac / dt, ang * frac / dt});
  };
  const auto line = trajectory.centerline();
  double theta = trajectory.start.theta;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Eigen::Vector2d d = line[i] - line[i - 1];
    const double turn = wrap_angle(std::atan2(d.y(), d.x()) - theta);
    if (std::abs(turn) > 1e-12) emit(std::abs(turn) / w, 0.0, std::copysign(w, turn));
    theta += turn;
    emit(d.norm() / v, v, 0.0);
  }
  rows.push_back({tick * tick_us, 0.0, 0.0});
  return rows;
}

std::vector<TimedControl> script_to_controls(const std::vector<ScriptRow>& rows) {
  std::vector<TimedControl> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back({r.t_us, ControlMessage{r.t_us, TwistBody{r.linear, r.angular}}});
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

namespace {

nlohmann::json pose_json(const Pose2& p) { return {p.x, p.y, p.theta}; }
Pose2 parse_pose(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

nlohmann::json metrics_to_json(const SessionMetrics& m, bool include_path) {
  nlohmann::json j;
  j["schema"] = "rfusion.metrics/1";
  j["completed"] = m.completed;
  j["elapsed_s"] = m.elapsed_s;
  j["splits_s"] = m.splits_s;
  j["collisions"] = m.collisions;
  j["commands"] = m.commands;
  j["ticks"] = m.ticks;
  j["frames_captured"] = m.frames_captured;
  j["frames_delivered"] = m.frames_delivered;
  j["final_estimate"] = pose_json(m.final_estimate);
  j["final_truth"] = m.truth_path.empty() ? nlohmann::json(nullptr) : pose_json(m.truth_path.back());
  if (include_path) {
    j["truth_path"] = nlohmann::json::array();
    for (const auto& p : m.truth_path) j["truth_path"].push_back(pose_json(p));
  }
  return j;
}

SessionMetrics metrics_from_json(const nlohmann::json& j) {
  try {
    SessionMetrics m;
    m.completed = j.at("completed").get<bool>();
    m.elapsed_s = j.at("elapsed_s").get<double>();
    m.splits_s = j.at("splits_s").get<std::vector<double>>();
    m.collisions = j.at("collisions").get<int>();
    m.commands = j.at("commands").get<int>();
    m.ticks = j.value("ticks", std::uint64_t{0});
    m.frames_captured = j.value("frames_captured", std::uint64_t{0});
    m.frames_delivered = j.value("frames_delivered", std::uint64_t{0});
    if (j.contains("final_estimate")) m.final_estimate = parse_pose(j.at("final_estimate"));
    if (j.contains("truth_path")) {
      for (const auto& p : j.at("truth_path")) m.truth_path.push_back(parse_pose(p));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed metrics document: ") + e.what());
  }
}

std::string metrics_table(const SessionMetrics& m) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "completed         " << (m.completed ? "yes" : "no") << "\n";
  out << "elapsed (s)       " << m.elapsed_s << "\n";
  for (std::size_t i = 0; i < m.splits_s.size(); ++i) {
    out << "goal " << i + 1 << " split (s)  " << m.splits_s[i] << "\n";
  }
  out << "collisions        " << m.collisions << "\n";
  out << "commands          " << m.commands << "\n";
  out << "ticks             " << m.ticks << "\n";
  out << "frames captured   " << m.frames_captured << "\n";
  out << "frames delivered  " << m.frames_delivered << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Session

namespace {

bool inside_floor(const MazeSpec& maze, const Eigen::Vector3d& world) {
  const Rect2 f = maze.floor();
  const Eigen::Vector2d p(world.x(), -world.z());
  return world.y() > 0.0 && (p.array() >= f.min.array()).all() && (p.array() <= f.max.array()).all();
}

}  // namespace

Session::Session(SessionConfig config)
    : config_(std::move(config)),
      mode_(config_.mode),
      uplink_tx_(nullptr),
      uplink_rx_(nullptr),
      downlink_tx_(nullptr),
      downlink_rx_(nullptr),
      frame_tx_(nullptr),
      frame_rx_(nullptr),
      capture_clock_(config_.tick_us, config_.capture_fps) {
  if (config_.trajectory < 1 || config_.trajectory > 4) {
    throw std::invalid_argument("session trajectory must be 1..4");
  }
  if (config_.tick_us == 0 || static_cast<double>(config_.tick_us) / 1e6 > kMaxStepDt) {
    throw std::invalid_argument("session tick must lie in (0, 0.1] seconds");
  }
  config_.sensor.validate();
  trajectory_ = generate_trajectories(config_.maze)[static_cast<std::size_t>(config_.trajectory - 1)];
  std::tie(uplink_tx_, uplink_rx_) = control_channel();
  std::tie(downlink_tx_, downlink_rx_) = control_channel();
  std::tie(frame_tx_, frame_rx_) = frame_channel(config_.link);

  robot_.pose = trajectory_.start;
  robot_.limits = config_.limits;
  odometry_ = OdometryState(trajectory_.start, config_.odometry_noise_v, config_.odometry_noise_omega,
                            config_.odometry_seed);
  indicator_ = trajectory_.start;
  exo_camera_ = default_exo_camera(config_.view_width, config_.view_height);
  view_camera_ = exo_camera_;
  view_ = RenderTarget(config_.view_width, config_.view_height);
}

std::vector<ControlMessage> Session::take_operator_messages() {
  std::vector<ControlMessage> out;
  out.swap(operator_inbox_);
  return out;
}

bool Session::timed_out() const {
  return static_cast<double>(now_us()) >= config_.timeout_s * 1e6;
}

void Session::ingest() {
  for (const auto& msg : uplink_rx_.poll(now_us())) {
    if (const auto* t = std::get_if<TwistBody>(&msg.body)) {
      latched_ = TwistCommand{t->linear, t->angular, msg.stamp_us};
      ++commands_;
      trace_.push_back({TraceEventKind::kInput, msg.stamp_us, static_cast<std::uint64_t>(commands_), 0});
    } else if (const auto* c = std::get_if<CameraBody>(&msg.body)) {
      if (mode_ != ViewMode::kEgoFusion) {
        exo_camera_ = exo_camera(exo_camera_, {c->dx, c->dy, c->dz}, false).camera;
        view_dirty_ = true;
      }
    } else if (const auto* m = std::get_if<ModeBody>(&msg.body)) {
      mode_ = parse_view_mode(m->mode);
      view_dirty_ = true;
    }
  }
}

void Session::capture() {
  const std::uint64_t now = now_us();
  if (capture_clock_.due(tick_index_)) {
    const RigidTransformd cam = robot_camera_pose(robot_.pose);
    if (inside_floor(config_.maze, cam.translation())) {
      const DepthFrame frame = render_depth(config_.maze, cam, config_.sensor, ++frame_seq_, now);
      last_capture_pose_ = cam;
      trace_.push_back({TraceEventKind::kCapture, now, frame_seq_, static_cast<std::uint64_t>(commands_)});
      frame_tx_.send(frame_seq_, encode_frame(frame), now);
    }
  }
  OdomBody odom;
  odom.x = odometry_.pose_est.x;
  odom.y = odometry_.pose_est.y;
  odom.theta = odometry_.pose_est.theta;
  odom.v = robot_.v;
  odom.omega = robot_.omega;
  odom.frame_seq = frame_seq_;
  odom.camera_rotation = last_capture_pose_.rotation();
  odom.camera_translation = last_capture_pose_.translation();
  downlink_tx_.send(ControlMessage{now, odom}, now);
}

void Session::receive() {
  const std::uint64_t now = now_us();
  for (auto& msg : downlink_rx_.poll(now)) {
    if (const auto* o = std::get_if<OdomBody>(&msg.body)) {
      indicator_ = Pose2{o->x, o->y, o->theta};
      if (o->frame_seq > 0) {
        capture_poses_[o->frame_seq] = RigidTransformd(o->camera_rotation, o->camera_translation);
      }
    }
    operator_inbox_.push_back(std::move(msg));
  }
  if (operator_inbox_.size() > 4096) {
    operator_inbox_.erase(operator_inbox_.begin(), operator_inbox_.end() - 4096);
  }

  auto delivered = frame_rx_.poll(now);
  frames_delivered_ += delivered.size();
  for (const auto& d : delivered) trace_.push_back({TraceEventKind::kDeliver, now, d.seq, 0});
  if (delivered.empty()) return;
  const auto& newest = delivered.back();
  const auto pose = capture_poses_.find(newest.seq);
  if (pose == capture_poses_.end()) return;
  DepthFrame frame = decode_frame(newest.payload);
  frame.camera_pose_at_capture = pose->second;
  capture_poses_.erase(capture_poses_.begin(), std::next(pose));
  latest_frame_ = std::move(frame);
  trace_.push_back({TraceEventKind::kPresent, now, newest.seq, 0});
  view_dirty_ = true;
}

void Session::present() {
  if (mode_ == ViewMode::kEgoFusion) {
    view_camera_ = CameraModel::Make(ego_camera(indicator_, config_.ego_offset).pose, 75.0, config_.view_width,
                                     config_.view_height);
  } else {
    view_camera_ = exo_camera_;
  }
  if (!config_.render || !view_dirty_) return;
  view_dirty_ = false;
  std::optional<WorldPointCloud> cloud;
  if (latest_frame_) cloud = frame_to_cloud(*latest_frame_, config_.sensor);
  const Pose2* goal = complete() ? nullptr : &trajectory_.goals[static_cast<std::size_t>(goal_index_ - 1)];
  view_ = compose_view(config_.scene.get(), view_camera_, mode_, cloud ? &*cloud : nullptr, indicator_, goal,
                       config_.render_workers);
  view_seq_ = latest_frame_ ? latest_frame_->seq : 0;
  ++view_version_;
}

void Session::tick() {
  if (tick_index_ == 0) {
    // Announce the first goal; later GOAL messages report reaches.
    const Pose2& first = trajectory_.goals.front();
    downlink_tx_.send(ControlMessage{0, GoalBody{goal_index_, first.x, first.y, false}}, now_us());
  }
  ingest();
  if (!complete()) {
    const double dt = static_cast<double>(config_.tick_us) / 1e6;
    StepResult r = step(robot_, latched_, dt, config_.maze);
    if (r.collided) {
      ++collisions_;
      r.state.v = 0.0;
      r.state.omega = 0.0;
    }
    robot_ = r.state;
    odometry_ = update_odometry(odometry_, robot_.v, robot_.omega, dt);
  }
  truth_path_.push_back(robot_.pose);
  capture();
  receive();
  if (!complete()) {
    const GoalProgress g = goal_step(goal_index_, robot_.pose, trajectory_.goals, config_.goal_tolerance);
    if (g.reached) {
      const std::uint64_t t = (tick_index_ + 1) * config_.tick_us;
      splits_us_.push_back(t - last_reach_us_);
      last_reach_us_ = t;
      const Pose2& reached = trajectory_.goals[static_cast<std::size_t>(goal_index_ - 1)];
      goal_index_ = g.index;
      if (complete()) elapsed_us_ = t;
      downlink_tx_.send(ControlMessage{t, GoalBody{goal_index_, reached.x, reached.y, true}}, now_us());
      view_dirty_ = true;
    }
  }
  present();
  ++tick_index_;
}

SessionMetrics Session::metrics() const {
  SessionMetrics m;
  m.completed = complete();
  m.elapsed_s = static_cast<double>(complete() ? elapsed_us_ : now_us()) / 1e6;
  for (auto s : splits_us_) m.splits_s.push_back(static_cast<double>(s) / 1e6);
  m.collisions = collisions_;
  m.commands = commands_;
  m.ticks = tick_index_;
  m.frames_captured = frame_seq_;
  m.frames_delivered = frames_delivered_;
  m.truth_path = truth_path_;
  m.final_estimate = odometry_.pose_est;
  return m;
}

SessionMetrics run_session(const SessionConfig& config, const std::vector<TimedControl>& input) {
  Session session(config);
  std::size_t next = 0;
  while (!session.complete() && !session.timed_out()) {
    while (next < input.size() && input[next].t_us <= session.now_us()) {
      session.uplink().send(input[next].message, input[next].t_us);
      ++next;
    }
    session.tick();
    session.take_operator_messages();
  }
  return session.metrics();
}

RenderTarget compose_view(const SplatScene* scene, const CameraModel& camera, ViewMode mode,
                          const WorldPointCloud* sensor_cloud, const Pose2& indicator, const Pose2* goal,
                          int workers) {
  RenderTarget target = scene != nullptr && mode != ViewMode::kExoCloudOnly
                            ? render(*scene, camera, RenderOptions{workers})
                            : RenderTarget(camera.width, camera.height);
  if (sensor_cloud != nullptr) target = composite(target, *sensor_cloud, camera, 2);
  target = composite(target, robot_indicator_cloud(indicator, mode == ViewMode::kEgoFusion), camera, 2);
  if (goal != nullptr) target = composite(target, goal_marker_cloud(*goal), camera, 2);
  return target;
}

}  // namespace rfusion
