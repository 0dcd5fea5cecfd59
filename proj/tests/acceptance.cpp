// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rfusion/depth_fusion.hpp"
#include "rfusion/mission_harness.hpp"
#include "rfusion/renderer.hpp"
#include "rfusion/robot_sim.hpp"
#include "rfusion/scene_gen.hpp"
#include "rfusion/teleop_net.hpp"

using namespace rfusion;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c, d);
  return buf;
}

Outcome rasterizer_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  float worst = 0.0f;
  std::mt19937_64 rng(2024);
  for (std::uint64_t s = 0; s < 20; ++s) {
    RandomSceneOptions opt;
    opt.sh_degree = static_cast<int>(s % 4);
    const std::size_t n = 1 + rng() % 200;
    const SplatScene scene = random_scene(n, 100 + s, opt);
    const CameraModel cam = frame_scene(scene, 128, 128);
    const RenderTarget a = render(scene, cam, {2});
    const RenderTarget b = render_reference(scene, cam);
    worst = std::max({worst, (a.color - b.color).cwiseAbs().maxCoeff(), (a.alpha - b.alpha).cwiseAbs().maxCoeff()});
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-5f && secs < 60.0, fmt("max diff %.3g over 20 scenes, %.2f s", worst, secs)};
}

Outcome rasterizer_determinism() {
  const SplatScene scene = random_scene(10'000, 77);
  const CameraModel cam = frame_scene(scene, 256, 256);
  const RenderTarget one = render(scene, cam, {1});
  const bool same = render(scene, cam, {2}).bitwise_equal(one) && render(scene, cam, {8}).bitwise_equal(one);
  return {same, same ? "1, 2 and 8 workers bit-identical" : "outputs differ across worker counts"};
}

Outcome unprojection_round_trip() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  bool axis_exact = true;
  for (int i = 0; i < 100'000; ++i) {
    const StereoIntrinsics in = StereoIntrinsics::FromFov(16 + static_cast<int>(u(rng) * 640),
                                                          16 + static_cast<int>(u(rng) * 480), 40 + 80 * u(rng),
                                                          30 + 60 * u(rng), 0.02 + 0.3 * u(rng));
    const Eigen::Vector3d p(6 * u(rng) - 3, 6 * u(rng) - 3, -(0.1 + 10 * u(rng)));
    const Eigen::Vector4d h = stereo_projection_matrix<double>(in).inverse() * p.homogeneous();
    const Eigen::Vector3d px = h.head<3>() / h.w();
    worst = std::max(worst, (unproject<double>(px, in) - p).cwiseAbs().maxCoeff());
    const double d = 0.01 + 200 * u(rng);
    const Eigen::Vector3d c = unproject<double>({0.0, 0.0, d}, in);
    axis_exact = axis_exact && c.x() == 0.0 && c.y() == 0.0 && c.z() == -in.focal * in.baseline / d;
  }
  return {worst <= 1e-9 && axis_exact, fmt("max error %.3g m over 1e5 samples; principal point ", worst) +
                                           (axis_exact ? "exact" : "NOT exact")};
}

Outcome sensor_closure() {
  const MazeSpec maze = MazeSpec::Canonical();
  const StereoIntrinsics in = StereoIntrinsics::FromFov(320, 180);
  double worst = 0.0;
  Eigen::Index points = 0;
  for (const Pose2 pose : {Pose2{0.0, -0.7, M_PI / 2}, Pose2{0.7, 0.7, 2.4}, Pose2{-0.8, 0.1, -0.3}}) {
    DepthFrame f = render_depth(maze, robot_camera_pose(pose), in);
    f.camera_pose_at_capture = robot_camera_pose(pose);
    const WorldPointCloud c = frame_to_cloud(f, in);
    points += c.size();
    for (Eigen::Index i = 0; i < c.size(); ++i) worst = std::max(worst, distance_to_maze_surface(maze, c.points.col(i)));
  }
  return {worst <= 1e-4 && points > 0, fmt("%.0f points, max distance %.3g m", static_cast<double>(points), worst)};
}

Outcome kinematics() {
  RobotState s;
  s.pose = {0.3, -0.2, 0.7};
  const Pose2 start = s.pose;
  const double v = 0.1, w = 0.5;
  const int n = 640;
  for (int i = 0; i < n; ++i) s = step(s, {v, w, 0}, (2 * M_PI / w) / n);
  const double closure = std::max({std::abs(s.pose.x - start.x), std::abs(s.pose.y - start.y),
                                   std::abs(wrap_angle(s.pose.theta - start.theta))});
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double sub = 0.0;
  for (int i = 0; i < 10'000; ++i) {
    const Pose2 p{u(rng), u(rng), M_PI * u(rng)};
    const double vv = 0.22 * u(rng), ww = 2.84 * u(rng), dt = 0.05 * (u(rng) + 1.0) + 1e-3;
    const Pose2 a = integrate_arc(p, vv, ww, dt);
    const Pose2 b = integrate_arc(integrate_arc(p, vv, ww, dt / 2), vv, ww, dt / 2);
    sub = std::max({sub, std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(wrap_angle(a.theta - b.theta))});
  }
  return {closure <= 1e-6 && sub <= 1e-9, fmt("circle closure %.3g, subdivision %.3g", closure, sub)};
}

Outcome odometry_drift() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  RobotState truth;
  OdometryState exact(truth.pose, 0.0, 0.0, 1);
  bool identical = true;
  for (int i = 0; i < 1000; ++i) {
    truth = step(truth, {0.2 * u(rng), 2.0 * u(rng), 0}, 0.02);
    exact = update_odometry(exact, truth.v, truth.omega, 0.02);
    identical = identical && exact.pose_est == truth.pose;
  }
  double d100 = 0.0, d1000 = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    RobotState t;
    OdometryState o(t.pose, 0.01, 0.01, seed);
    for (int i = 1; i <= 1000; ++i) {
      t = step(t, {0.1, 0.0, 0}, 0.02);
      o = update_odometry(o, t.v, t.omega, 0.02);
      const double e = (o.pose_est.position() - t.pose.position()).norm();
      if (i == 100) d100 += e / 100;
      if (i == 1000) d1000 += e / 100;
    }
  }
  std::ostringstream os;
  os << "zero-noise estimate " << (identical ? "identical" : "DIFFERS") << "; mean drift " << d100
     << " m at step 100, " << d1000 << " m at step 1000";
  return {identical && d1000 > d100, os.str()};
}

Outcome wire_formats() {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  bool frames_ok = true;
  for (int k = 0; k < 200; ++k) {
    DepthFrame f(1 + static_cast<int>(u(rng) * 64), 1 + static_cast<int>(u(rng) * 48));
    f.seq = rng();
    f.timestamp_us = rng() & FrameWireHeader::kMaxTimestamp;
    for (Eigen::Index i = 0; i < f.pixel_count(); ++i) {
      f.disparity(i) = quantize_disparity(static_cast<float>(u(rng) * 200.0));
      for (int c = 0; c < 3; ++c) f.color(c, i) = static_cast<std::uint8_t>(rng());
    }
    const auto bytes = encode_frame(f);
    const DepthFrame b = decode_frame(bytes);
    frames_ok = frames_ok && b.seq == f.seq && b.timestamp_us == f.timestamp_us && b.width == f.width &&
                b.height == f.height && b.color == f.color &&
                std::memcmp(b.disparity.data(), f.disparity.data(), f.disparity.size() * sizeof(float)) == 0 &&
                encode_frame(b) == bytes;
  }
  const bool size_ok = encode_frame(DepthFrame(2, 2)).size() == 47;

  bool control_ok = true;
  for (int k = 0; k < 500; ++k) {
    ControlMessage m;
    m.stamp_us = rng() >> 20;
    switch (k % 5) {
      case 0:
        m.body = TwistBody{u(rng), -u(rng)};
        break;
      case 1: {
        OdomBody o;
        o.x = u(rng);
        o.y = -u(rng);
        o.theta = u(rng) * 3;
        o.v = u(rng) * 0.05;
        o.omega = u(rng);
        o.frame_seq = rng() >> 40;
        o.camera_rotation = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized();
        o.camera_translation = {u(rng), u(rng), u(rng)};
        m.body = o;
        break;
      }
      case 2:
        m.body = GoalBody{1 + k % 3, u(rng), u(rng), k % 2 == 0};
        break;
      case 3:
        m.body = ModeBody{k % 2 ? "ego" : "cloud"};
        break;
      default:
        m.body = CameraBody{u(rng), u(rng), u(rng)};
    }
    control_ok = control_ok && parse_control_line(to_json_line(m)) == m;
  }

  LinkModel link;
  link.one_way_delay_mean_ms = 80.0;
  link.jitter_std_ms = 60.0;
  link.seed = 4;
  auto [tx, rx] = frame_channel<int>(link);
  std::uint64_t last = 0;
  bool monotone = true;
  for (std::uint64_t k = 0; k < 6000; ++k) {
    if (k < 5000) tx.send(k + 1, 0, k * 10'000);
    for (const auto& d : rx.poll(k * 10'000)) {
      monotone = monotone && d.seq > last;
      last = d.seq;
    }
  }
  const ChannelStats st = rx.stats();
  std::ostringstream os;
  os << "frames " << (frames_ok ? "ok" : "MISMATCH") << ", control " << (control_ok ? "ok" : "MISMATCH")
     << ", 2x2 size " << (size_ok ? "47" : "wrong") << ", delivered seq " << (monotone ? "strictly increasing" : "NOT monotone")
     << " (" << st.stale_dropped << " stale drops)";
  return {frames_ok && control_ok && size_ok && monotone && st.stale_dropped > 0, os.str()};
}

Outcome latency_calibration() {
  const auto t0 = std::chrono::steady_clock::now();
  PipelineConfig cfg;
  cfg.frames = 1000;
  cfg.link = LinkModel::Calibrated();
  const M2pStats s = measure_m2p(simulate_m2p_trace(cfg));
  const double secs = seconds_since(t0);
  const bool ok = std::abs(s.mean_ms - kTargetM2pMeanMs) <= 5.0 &&
                  std::abs(s.std_ms - kTargetM2pStdMs) <= 0.2 * kTargetM2pStdMs && secs < 10.0;
  return {ok, fmt("mean %.2f ms, std %.2f ms over %.0f pairs, %.2f s", s.mean_ms, s.std_ms,
                  static_cast<double>(s.pairs), secs)};
}

Outcome equal_difficulty() {
  const auto t = generate_trajectories(MazeSpec::Canonical());
  double lo = 1e300, hi = -1e300;
  int subpaths = 0;
  for (const auto& tr : t) {
    double sum = 0.0;
    for (const auto& s : tr.subpaths) {
      sum += s.length / s.width;
      ++subpaths;
    }
    lo = std::min(lo, sum);
    hi = std::max(hi, sum);
  }
  const double st = steering_time(0.875, 0.6, 0.0, 1.0);
  return {hi - lo <= 1e-9 && subpaths == 12 && std::abs(st - 1.4583) <= 1e-4,
          fmt("sum A/W in [%.12f, %.12f]; steering_time(0,1,0.875,0.6) = %.6f", lo, hi, st)};
}

Outcome session_determinism() {
  SessionConfig c;
  c.trajectory = 1;
  c.sensor = StereoIntrinsics::FromFov(80, 45);
  c.render = true;
  c.view_width = 64;
  c.view_height = 48;
  c.scene = std::make_shared<const SplatScene>(make_maze_scene(c.maze, 0.08));
  const auto traj = generate_trajectories(c.maze)[0];
  const auto input = script_to_controls(optimal_script(traj, c.limits, c.tick_us));
  SessionConfig c1 = c, c2 = c;
  c1.mode = ViewMode::kExoCloudOnly;
  c2.mode = ViewMode::kExoFusion;
  const SessionMetrics a = run_session(c2, input);
  const SessionMetrics b = run_session(c2, input);
  const SessionMetrics m1 = run_session(c1, input);
  const bool same = a == b;
  const bool paths = m1.truth_path == a.truth_path;
  std::ostringstream os;
  os << "repeat runs " << (same ? "identical" : "DIFFER") << ", C1/C2 truth paths " << (paths ? "identical" : "DIFFER")
     << " (" << a.truth_path.size() << " poses, completed " << (a.completed ? "yes" : "no") << ", elapsed "
     << a.elapsed_s << " s)";
  return {same && paths && a.completed, os.str()};
}

Outcome throughput() {
  const SplatScene scene = random_scene(100'000, 42);
  const CameraModel cam = frame_scene(scene, 512, 512);
  const BenchReport r = bench(scene, cam, 10, 1, {0});
  return {r.fps > 0.0 && r.p95_ms > 0.0,
          fmt("100k splats 512x512: %.1f ms mean, p95 %.1f ms, %.2f fps (CPU; not comparable to GPU figures)",
              r.mean_ms, r.p95_ms, r.fps)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"rasterizer oracle equivalence", rasterizer_equivalence},
      {"rasterizer determinism", rasterizer_determinism},
      {"stereo unprojection round trip", unprojection_round_trip},
      {"sensor-to-world closure", sensor_closure},
      {"kinematics closure and subdivision", kinematics},
      {"odometry drift", odometry_drift},
      {"wire formats", wire_formats},
      {"latency calibration", latency_calibration},
      {"equal-difficulty trajectories", equal_difficulty},
      {"scripted session determinism", session_determinism},
      {"throughput report", throughput},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
