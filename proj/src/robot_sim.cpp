#include "rfusion/robot_sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>

namespace rfusion {

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, kTwoPi);
  if (a <= 0.0) a += kTwoPi;
  return a - std::numbers::pi;
}

TwistCommand clamp_twist(const TwistCommand& cmd, const VelocityLimits& limits) {
  if (!std::isfinite(cmd.linear) || !std::isfinite(cmd.angular)) {
    throw std::invalid_argument("twist command is not finite");
  }
  TwistCommand out = cmd;
  out.linear = std::clamp(cmd.linear, -limits.v_max, limits.v_max);
  out.angular = std::clamp(cmd.angular, -limits.omega_max, limits.omega_max);
  return out;
}

Pose2 integrate_arc(const Pose2& pose, double v, double omega, double dt) {
  Pose2 out;
  if (std::abs(omega) < 1e-9) {
    out.x = pose.x + v * dt * std::cos(pose.theta);
    out.y = pose.y + v * dt * std::sin(pose.theta);
    out.theta = pose.theta;
  } else {
    // Chord form of x + (v/w)(sin th' - sin th), y - (v/w)(cos th' - cos th);
    // identical in exact arithmetic and free of cancellation for small w.
    const double half = 0.5 * omega * dt;
    const double chord = v * dt * std::sin(half) / half;
    const double mid = pose.theta + half;
    out.x = pose.x + chord * std::cos(mid);
    out.y = pose.y + chord * std::sin(mid);
    out.theta = pose.theta + omega * dt;
  }
  out.theta = wrap_angle(out.theta);
  return out;
}

namespace {

void require_dt(double dt) {
  if (!(dt > 0.0 && dt <= kMaxStepDt)) {
    throw std::invalid_argument("step dt must lie in (0, 0.1] seconds");
  }
}

}  // namespace

RobotState step(const RobotState& state, const TwistCommand& cmd, double dt) {
  require_dt(dt);
  const TwistCommand c = clamp_twist(cmd, state.limits);
  RobotState out = state;
  out.v = c.linear;
  out.omega = c.angular;
  out.pose = integrate_arc(state.pose, c.linear, c.angular, dt);
  return out;
}

StepResult step(const RobotState& state, const TwistCommand& cmd, double dt, const MazeSpec& maze,
                double footprint_radius) {
  StepResult r{step(state, cmd, dt), false};
  if (check_collision(maze, r.state.pose, footprint_radius)) {
    r.state.pose = state.pose;
    r.collided = true;
  }
  return r;
}

OdometryState update_odometry(const OdometryState& odom, double v_applied, double omega_applied, double dt) {
  require_dt(dt);
  OdometryState out = odom;
  std::normal_distribution<double> unit(0.0, 1.0);
  const double ev = unit(out.rng);
  const double ew = unit(out.rng);
  const double v = v_applied + (odom.noise_v > 0.0 ? odom.noise_v * ev : 0.0);
  const double w = omega_applied + (odom.noise_omega > 0.0 ? odom.noise_omega * ew : 0.0);
  out.pose_est = integrate_arc(odom.pose_est, v, w, dt);
  return out;
}

// ---------------------------------------------------------------------------
// Maze layout

MazeSpec MazeSpec::Canonical() {
  MazeSpec m;
  m.outer_size = 2.2;
  m.wall_thickness = 0.05;
  m.wall_height = 0.3;
  for (Side s : {Side::kEast, Side::kNorth, Side::kWest, Side::kSouth}) m.entrances.push_back({s, 0.0, 0.6});
  for (double y0 : {-0.225, -0.075, 0.075}) {
    m.obstacles.push_back({Rect2{{-0.3, y0}, {0.3, y0 + 0.15}}, 0.3});
  }
  m.pathways.push_back(Rect2{{-0.3, 0.225}, {0.3, 1.1}});
  m.pathways.push_back(Rect2{{-0.3, -1.1}, {0.3, -0.225}});
  m.reconstructed = true;
  return m;
}

Rect2 MazeSpec::interior() const {
  const double h = half_size();
  return Rect2{{-h, -h}, {h, h}};
}

Rect2 MazeSpec::floor() const {
  const double h = half_size() + wall_thickness;
  return Rect2{{-h, -h}, {h, h}};
}

Eigen::Vector2d MazeSpec::entrance_point(const Entrance& e) const {
  const double h = half_size();
  switch (e.side) {
    case Side::kEast:
      return {h, e.offset};
    case Side::kNorth:
      return {-e.offset, h};
    case Side::kWest:
      return {-h, -e.offset};
    case Side::kSouth:
      return {e.offset, -h};
  }
  return {0.0, 0.0};
}

std::vector<Block> MazeSpec::walls() const {
  const double h = half_size();
  const double t = wall_thickness;
  std::vector<Block> out;
  for (Side side : {Side::kEast, Side::kNorth, Side::kWest, Side::kSouth}) {
    // Span along the wall in world coordinates; east/west walls own the corners.
    const bool vertical = side == Side::kEast || side == Side::kWest;
    const double lo = vertical ? -h - t : -h;
    const double hi = vertical ? h + t : h;
    std::vector<std::pair<double, double>> gaps;
    for (const auto& e : entrances) {
      if (e.side != side) continue;
      const Eigen::Vector2d c = entrance_point(e);
      const double along = vertical ? c.y() : c.x();
      gaps.emplace_back(along - 0.5 * e.width, along + 0.5 * e.width);
    }
    std::sort(gaps.begin(), gaps.end());
    double cursor = lo;
    auto emit = [&](double a, double b) {
      if (b - a <= 1e-12) return;
      Rect2 r;
      switch (side) {
        case Side::kEast:
          r = Rect2{{h, a}, {h + t, b}};
          break;
        case Side::kWest:
          r = Rect2{{-h - t, a}, {-h, b}};
          break;
        case Side::kNorth:
          r = Rect2{{a, h}, {b, h + t}};
          break;
        case Side::kSouth:
          r = Rect2{{a, -h - t}, {b, -h}};
          break;
      }
      out.push_back({r, wall_height});
    };
    for (const auto& [g0, g1] : gaps) {
      emit(cursor, g0);
      cursor = std::max(cursor, g1);
    }
    emit(cursor, hi);
  }
  return out;
}

std::vector<Block> MazeSpec::solids() const {
  std::vector<Block> out = walls();
  out.insert(out.end(), obstacles.begin(), obstacles.end());
  return out;
}

void MazeSpec::validate() const {
  if (!(outer_size > 0.0) || !(wall_thickness > 0.0) || !(wall_height > 0.0)) {
    throw std::invalid_argument("maze dimensions must be positive");
  }
  const Rect2 in = interior();
  for (const auto& e : entrances) {
    if (!(e.width > 0.0) || std::abs(e.offset) + 0.5 * e.width > half_size()) {
      throw std::invalid_argument("maze entrance does not fit its wall");
    }
  }
  for (const auto& o : obstacles) {
    if (!(o.height > 0.0) || !(o.footprint.size().array() > 0.0).all()) {
      throw std::invalid_argument("maze obstacle must have positive size");
    }
    if (!in.contains(o.footprint)) {
      throw std::invalid_argument("maze obstacle lies outside the outer bounds");
    }
  }
  for (const auto& p : pathways) {
    if (!in.contains(p)) {
      throw std::invalid_argument("maze pathway lies outside the outer bounds");
    }
    for (const auto& o : obstacles) {
      if (p.overlaps(o.footprint)) {
        throw std::invalid_argument("maze pathway overlaps an obstacle");
      }
    }
  }
}

MazeSpec MazeSpec::rotated_quarter_turn() const {
  MazeSpec m = *this;
  auto rot = [](const Rect2& r) { return Rect2{{-r.max.y(), r.min.x()}, {-r.min.y(), r.max.x()}}; };
  for (auto& e : m.entrances) e.side = static_cast<Side>((static_cast<int>(e.side) + 1) % 4);
  for (auto& o : m.obstacles) o.footprint = rot(o.footprint);
  for (auto& p : m.pathways) p = rot(p);
  return m;
}

namespace {

const char* side_name(Side s) {
  switch (s) {
    case Side::kEast:
      return "east";
    case Side::kNorth:
      return "north";
    case Side::kWest:
      return "west";
    case Side::kSouth:
      return "south";
  }
  return "east";
}

Side parse_side(const std::string& s) {
  if (s == "east") return Side::kEast;
  if (s == "north") return Side::kNorth;
  if (s == "west") return Side::kWest;
  if (s == "south") return Side::kSouth;
  throw std::invalid_argument("unknown maze side '" + s + "'");
}

nlohmann::json rect_json(const Rect2& r) {
  return {{"min", {r.min.x(), r.min.y()}}, {"max", {r.max.x(), r.max.y()}}};
}

Rect2 parse_rect(const nlohmann::json& j) {
  return Rect2{{j.at("min").at(0).get<double>(), j.at("min").at(1).get<double>()},
               {j.at("max").at(0).get<double>(), j.at("max").at(1).get<double>()}};
}

}  // namespace

nlohmann::json MazeSpec::to_json() const {
  nlohmann::json j;
  j["schema"] = "rfusion.maze/1";
  j["reconstructed"] = reconstructed;
  j["outer_size"] = outer_size;
  j["wall"] = {{"thickness", wall_thickness}, {"height", wall_height}};
  j["entrances"] = nlohmann::json::array();
  for (const auto& e : entrances) {
    j["entrances"].push_back({{"side", side_name(e.side)}, {"offset", e.offset}, {"width", e.width}});
  }
  j["obstacles"] = nlohmann::json::array();
  for (const auto& o : obstacles) {
    auto r = rect_json(o.footprint);
    r["height"] = o.height;
    j["obstacles"].push_back(r);
  }
  j["pathways"] = nlohmann::json::array();
  for (const auto& p : pathways) j["pathways"].push_back(rect_json(p));
  return j;
}

MazeSpec MazeSpec::FromJson(const nlohmann::json& j) {
  try {
    if (j.value("schema", std::string{}) != "rfusion.maze/1") {
      throw std::invalid_argument("maze file schema must be 'rfusion.maze/1'");
    }
    MazeSpec m;
    m.reconstructed = j.value("reconstructed", false);
    m.outer_size = j.at("outer_size").get<double>();
    m.wall_thickness = j.at("wall").at("thickness").get<double>();
    m.wall_height = j.at("wall").at("height").get<double>();
    for (const auto& e : j.at("entrances")) {
      m.entrances.push_back({parse_side(e.at("side").get<std::string>()), e.value("offset", 0.0),
                             e.at("width").get<double>()});
    }
    for (const auto& o : j.at("obstacles")) m.obstacles.push_back({parse_rect(o), o.at("height").get<double>()});
    for (const auto& p : j.value("pathways", nlohmann::json::array())) m.pathways.push_back(parse_rect(p));
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed maze file: ") + e.what());
  }
}

MazeSpec load_maze(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::invalid_argument("cannot open maze file '" + path.string() + "'");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("malformed maze file '" + path.string() + "': " + e.what());
  }
  return MazeSpec::FromJson(j);
}

void save_maze(const MazeSpec& maze, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::invalid_argument("cannot write maze file '" + path.string() + "'");
  }
  out << maze.to_json().dump(2) << "\n";
}

bool check_collision(const MazeSpec& maze, const Pose2& pose, double footprint_radius) {
  const Eigen::Vector2d c = pose.position();
  const double r2 = footprint_radius * footprint_radius;
  for (const auto& b : maze.solids()) {
    const Eigen::Vector2d nearest = c.cwiseMax(b.footprint.min).cwiseMin(b.footprint.max);
    if ((nearest - c).squaredNorm() < r2) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Engine-frame geometry

Eigen::Vector3d maze_to_world(const Eigen::Vector2d& p, double height) { return {p.x(), height, -p.y()}; }

RigidTransformd body_to_world(const Pose2& pose) {
  return RigidTransformd(axis_angle<double>(pose.theta, Eigen::Vector3d::UnitY()),
                         maze_to_world(pose.position(), 0.0));
}

RigidTransformd camera_mount() {
  // Camera -Z (view direction) onto body +X (forward), 3 cm ahead of the
  // wheel axis at 20 cm height.
  return RigidTransformd(axis_angle<double>(-0.5 * std::numbers::pi, Eigen::Vector3d::UnitY()),
                         Eigen::Vector3d(0.03, 0.20, 0.0));
}

RigidTransformd robot_camera_pose(const Pose2& pose) { return body_to_world(pose) * camera_mount(); }

namespace {

struct Aabb {
  Eigen::Vector3d min;
  Eigen::Vector3d max;
  std::array<std::uint8_t, 3> rgb;
};

Aabb block_box(const Block& b, std::array<std::uint8_t, 3> rgb) {
  return Aabb{{b.footprint.min.x(), 0.0, -b.footprint.max.y()}, {b.footprint.max.x(), b.height, -b.footprint.min.y()},
              rgb};
}

constexpr std::array<std::uint8_t, 3> kWallRgb = {225, 215, 190};
constexpr std::array<std::uint8_t, 3> kObstacleRgb = {60, 110, 200};

std::vector<Aabb> maze_boxes(const MazeSpec& maze) {
  std::vector<Aabb> boxes;
  for (const auto& w : maze.walls()) boxes.push_back(block_box(w, kWallRgb));
  for (const auto& o : maze.obstacles) boxes.push_back(block_box(o, kObstacleRgb));
  return boxes;
}

std::array<std::uint8_t, 3> floor_rgb(double x, double y) {
  const long cell = static_cast<long>(std::floor(x / 0.2)) + static_cast<long>(std::floor(y / 0.2));
  return (cell & 1) != 0 ? std::array<std::uint8_t, 3>{200, 200, 200} : std::array<std::uint8_t, 3>{150, 150, 150};
}

// Slab test; returns entry distance and the axis of the entry face.
std::optional<std::pair<double, int>> ray_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Aabb& box) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return std::nullopt;
      continue;
    }
    double ta = (box.min[a] - o[a]) / d[a];
    double tb = (box.max[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis = a;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (axis < 0) return std::nullopt;  // origin inside the box
  return std::make_pair(t0, axis);
}

std::uint8_t shade(std::uint8_t c, double f) { return static_cast<std::uint8_t>(std::lround(c * f)); }

}  // namespace

DepthFrame render_depth(const MazeSpec& maze, const RigidTransformd& camera_pose, const StereoIntrinsics& intrinsics,
                        std::uint64_t seq, std::uint64_t timestamp_us) {
  intrinsics.validate();
  const Rect2 floor = maze.floor();
  const Eigen::Vector3d origin = camera_pose.translation();
  const Eigen::Vector2d origin2(origin.x(), -origin.z());
  if ((origin2.array() < floor.min.array()).any() || (origin2.array() > floor.max.array()).any() ||
      origin.y() <= 0.0) {
    throw std::invalid_argument("render_depth: camera lies outside the maze bounds");
  }
  const std::vector<Aabb> boxes = maze_boxes(maze);
  const Eigen::Matrix3d rot = camera_pose.rotation().toRotationMatrix();

  DepthFrame frame(intrinsics.width, intrinsics.height);
  frame.seq = seq;
  frame.timestamp_us = timestamp_us;
  frame.camera_pose_at_capture = camera_pose;
  for (int row = 0; row < intrinsics.height; ++row) {
    for (int col = 0; col < intrinsics.width; ++col) {
      const Eigen::Vector2d s = intrinsics.pixel_to_sensor(col, row);
      const Eigen::Vector3d dir_cam = unproject<double>({s.x(), s.y(), 1.0}, intrinsics).normalized();
      const Eigen::Vector3d dir = rot * dir_cam;

      double best = std::numeric_limits<double>::infinity();
      std::array<std::uint8_t, 3> rgb{0, 0, 0};
      if (dir.y() < 0.0) {
        const double t = -origin.y() / dir.y();
        const Eigen::Vector3d hit = origin + t * dir;
        const Eigen::Vector2d h2(hit.x(), -hit.z());
        if ((h2.array() >= floor.min.array()).all() && (h2.array() <= floor.max.array()).all()) {
          best = t;
          rgb = floor_rgb(h2.x(), h2.y());
        }
      }
      for (const auto& box : boxes) {
        const auto hit = ray_box(origin, dir, box);
        if (hit && hit->first < best) {
          best = hit->first;
          const double f = hit->second == 1 ? 1.0 : (hit->second == 0 ? 0.85 : 0.7);
          rgb = {shade(box.rgb[0], f), shade(box.rgb[1], f), shade(box.rgb[2], f)};
        }
      }
      if (!std::isfinite(best)) continue;
      const double z = best * -dir_cam.z();
      const Eigen::Index i = frame.index(col, row);
      frame.disparity(i) = static_cast<float>(intrinsics.disparity_for_depth(z));
      frame.color.col(i) << rgb[0], rgb[1], rgb[2];
    }
  }
  return frame;
}

double distance_to_maze_surface(const MazeSpec& maze, const Eigen::Vector3d& world) {
  double best = std::numeric_limits<double>::infinity();
  const Rect2 floor = maze.floor();
  {
    const Eigen::Vector2d p2(world.x(), -world.z());
    const Eigen::Vector2d nearest = p2.cwiseMax(floor.min).cwiseMin(floor.max);
    best = std::min(best, std::hypot((p2 - nearest).norm(), world.y()));
  }
  for (const auto& box : maze_boxes(maze)) {
    const Eigen::Vector3d nearest = world.cwiseMax(box.min).cwiseMin(box.max);
    const double outside = (world - nearest).norm();
    if (outside > 0.0) {
      best = std::min(best, outside);
    } else {
      const double inside =
          std::min((world - box.min).minCoeff(), (box.max - world).minCoeff());
      best = std::min(best, inside);
    }
  }
  return best;
}

SplatScene make_maze_scene(const MazeSpec& maze, double spacing) {
  if (!(spacing > 0.0)) {
    throw std::invalid_argument("make_maze_scene: spacing must be positive");
  }
  std::vector<Splat> splats;
  const double c0 = 0.28209479177387814;
  auto add = [&](const Eigen::Vector3d& p, const Eigen::Quaterniond& q, std::array<std::uint8_t, 3> rgb) {
    Splat s;
    s.position = p.cast<float>();
    s.rotation = q.cast<float>();
    s.rotation.normalize();
    s.scale = Eigen::Vector3f(0.6f * spacing, 0.6f * spacing, 0.1f * spacing);
    s.opacity = 0.95f;
    s.sh = ShCoeffs<float>::Zero(1, 3);
    for (int c = 0; c < 3; ++c) {
      s.sh(0, c) = static_cast<float>((srgb8_to_linear(rgb[static_cast<std::size_t>(c)]) - 0.5) / c0);
    }
    splats.push_back(s);
  };
  // Thin axis (local Z) onto each face normal.
  const Eigen::Quaterniond up = axis_angle<double>(-0.5 * std::numbers::pi, Eigen::Vector3d::UnitX());
  const Eigen::Quaterniond side_x = axis_angle<double>(0.5 * std::numbers::pi, Eigen::Vector3d::UnitY());
  const Eigen::Quaterniond side_z = Eigen::Quaterniond::Identity();

  auto samples = [spacing](double lo, double hi) {
    std::vector<double> v;
    const int n = std::max(1, static_cast<int>(std::round((hi - lo) / spacing)));
    for (int i = 0; i < n; ++i) v.push_back(lo + (i + 0.5) * (hi - lo) / n);
    return v;
  };

  const Rect2 floor = maze.floor();
  for (double x : samples(floor.min.x(), floor.max.x())) {
    for (double y : samples(floor.min.y(), floor.max.y())) add(maze_to_world({x, y}), up, floor_rgb(x, y));
  }
  auto add_block = [&](const Block& b, std::array<std::uint8_t, 3> rgb) {
    const Aabb box = block_box(b, rgb);
    for (double x : samples(box.min.x(), box.max.x())) {
      for (double z : samples(box.min.z(), box.max.z())) add({x, box.max.y(), z}, up, rgb);
    }
    for (double h : samples(0.0, box.max.y())) {
      for (double x : samples(box.min.x(), box.max.x())) {
        add({x, h, box.min.z()}, side_z, {shade(rgb[0], 0.7), shade(rgb[1], 0.7), shade(rgb[2], 0.7)});
        add({x, h, box.max.z()}, side_z, {shade(rgb[0], 0.7), shade(rgb[1], 0.7), shade(rgb[2], 0.7)});
      }
      for (double z : samples(box.min.z(), box.max.z())) {
        add({box.min.x(), h, z}, side_x, {shade(rgb[0], 0.85), shade(rgb[1], 0.85), shade(rgb[2], 0.85)});
        add({box.max.x(), h, z}, side_x, {shade(rgb[0], 0.85), shade(rgb[1], 0.85), shade(rgb[2], 0.85)});
      }
    }
  };
  for (const auto& w : maze.walls()) add_block(w, kWallRgb);
  for (const auto& o : maze.obstacles) add_block(o, kObstacleRgb);
  return SplatScene(std::move(splats), Convention::kEngine);
}

}  // namespace rfusion
