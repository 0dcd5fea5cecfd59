#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rfusion/depth_fusion.hpp"
#include "rfusion/image_io.hpp"
#include "rfusion/mission_harness.hpp"
#include "rfusion/ply_io.hpp"
#include "rfusion/pose_io.hpp"
#include "rfusion/renderer.hpp"
#include "rfusion/robot_sim.hpp"
#include "rfusion/scene_gen.hpp"
#include "rfusion/server.hpp"
#include "rfusion/splat_scene.hpp"
#include "rfusion/teleop_net.hpp"

using namespace rfusion;

namespace {

std::pair<int, int> parse_size(const std::string& s) {
  int w = 0, h = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> w >> x >> h) || (x != 'x' && x != 'X') || w < 1 || h < 1) {
    throw std::invalid_argument("size must look like WxH, got '" + s + "'");
  }
  return {w, h};
}

/// PLY files hold the reconstruction convention; caches record their own.
SplatScene load_engine_scene(const std::string& path) {
  SplatScene scene = load_scene(path);
  if (scene.convention() == Convention::kColmap) scene = convert_convention(scene);
  return scene;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

nlohmann::json bench_json(const BenchReport& r) {
  return {{"splats", r.splat_count},
          {"width", r.width},
          {"height", r.height},
          {"frames", r.frames},
          {"warmup_frames", r.warmup_frames},
          {"workers", r.workers},
          {"mean_ms", r.mean_ms},
          {"p95_ms", r.p95_ms},
          {"min_ms", r.min_ms},
          {"max_ms", r.max_ms},
          {"fps", r.fps},
          {"splats_per_second", r.splats_per_second},
          {"note",
           "CPU software rasterizer; not comparable to GPU splatting frame rates (such as 40-45 fps on a "
           "large industrial scene)"}};
}

nlohmann::json m2p_json(const M2pStats& s) {
  return {{"mean_ms", s.mean_ms}, {"std_ms", s.std_ms}, {"pairs", s.pairs}};
}

nlohmann::json link_json(const LinkModel& l) {
  return {{"one_way_delay_mean_ms", l.one_way_delay_mean_ms},
          {"jitter_std_ms", l.jitter_std_ms},
          {"loss_rate", l.loss_rate},
          {"seed", l.seed}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Splat and depth-sensor fusion engine for robot teleoperation"};
  app.require_subcommand(1);

  // convert
  std::string conv_in, conv_ref, conv_out;
  auto* convert = app.add_subcommand("convert", "Convert a PLY scene to engine convention and cache it");
  convert->add_option("--input", conv_in, "Input PLY")->required();
  convert->add_option("--reference", conv_ref, "Pose file placing the model in the world");
  convert->add_option("--output", conv_out, "Output scene cache")->required();

  // render
  std::string ren_scene, ren_camera, ren_size = "512x512", ren_out;
  int ren_workers = 0;
  auto* render_cmd = app.add_subcommand("render", "Render a scene to PNG");
  render_cmd->add_option("--scene", ren_scene, "PLY or scene cache")->required();
  render_cmd->add_option("--camera", ren_camera, "Camera file (default: frame the scene)");
  render_cmd->add_option("--size", ren_size, "WxH");
  render_cmd->add_option("--out", ren_out, "Output PNG")->required();
  render_cmd->add_option("--workers", ren_workers, "Tile workers (0 = all cores)");

  // bench
  std::string bench_scene, bench_size = "512x512", bench_camera;
  int bench_frames = 30, bench_workers = 0, bench_warmup = 2;
  bool bench_json_flag = false;
  auto* bench_cmd = app.add_subcommand("bench", "Time repeated renders");
  bench_cmd->add_option("--scene", bench_scene, "PLY or scene cache")->required();
  bench_cmd->add_option("--frames", bench_frames, "Timed frames (>= 10)");
  bench_cmd->add_option("--warmup", bench_warmup, "Untimed warm-up frames");
  bench_cmd->add_option("--size", bench_size, "WxH");
  bench_cmd->add_option("--camera", bench_camera, "Camera file (default: frame the scene)");
  bench_cmd->add_option("--workers", bench_workers, "Tile workers (0 = all cores)");
  bench_cmd->add_flag("--json", bench_json_flag, "Print the report as JSON");

  // fuse
  std::string fuse_scene, fuse_frame, fuse_frame_pose, fuse_camera, fuse_out, fuse_size = "640x480",
                                                                               fuse_mode = "exo";
  int fuse_point_px = 2;
  auto* fuse = app.add_subcommand("fuse", "Composite a depth frame over a splat render");
  fuse->add_option("--scene", fuse_scene, "PLY or scene cache");
  fuse->add_option("--frame", fuse_frame, "Depth frame in wire format")->required();
  fuse->add_option("--frame-pose", fuse_frame_pose, "Sensor pose at capture (default: identity)");
  fuse->add_option("--camera", fuse_camera, "View camera file")->required();
  fuse->add_option("--size", fuse_size, "WxH");
  fuse->add_option("--mode", fuse_mode, "exo (splats + cloud) or cloud (cloud only)");
  fuse->add_option("--point-px", fuse_point_px, "Point size in pixels");
  fuse->add_option("--out", fuse_out, "Output PNG")->required();

  // simulate
  std::string sim_maze, sim_script, sim_controls, sim_out = "-", sim_mode = "exo", sim_sensor = "320x180";
  int sim_traj = 1;
  std::uint64_t sim_seed = 11, sim_link_seed = 1;
  bool sim_path = false;
  double sim_timeout = 600.0;
  auto* simulate = app.add_subcommand("simulate", "Run a headless scripted session");
  simulate->add_option("--maze", sim_maze, "Maze layout file (default: canonical)");
  auto* script_opt = simulate->add_option("--script", sim_script, "Twist CSV (t,linear,angular)");
  simulate->add_option("--controls", sim_controls, "JSON-lines control log")->excludes(script_opt);
  simulate->add_option("--trajectory", sim_traj, "Trajectory 1..4");
  simulate->add_option("--mode", sim_mode, "exo, ego or cloud");
  simulate->add_option("--seed", sim_seed, "Odometry noise seed");
  simulate->add_option("--link-seed", sim_link_seed, "Frame link seed");
  simulate->add_option("--sensor", sim_sensor, "Depth sensor WxH");
  simulate->add_option("--timeout", sim_timeout, "Session timeout in seconds");
  simulate->add_flag("--path", sim_path, "Include the ground-truth path");
  simulate->add_option("--out", sim_out, "Metrics JSON (- for stdout)");

  // netprobe
  std::string np_trace, np_write;
  bool np_simulate = false, np_calibrate = false;
  std::uint64_t np_frames = 1000;
  LinkModel np_link = LinkModel::Calibrated();
  auto* netprobe = app.add_subcommand("netprobe", "Motion-to-photon statistics from a trace");
  auto* trace_opt = netprobe->add_option("--trace", np_trace, "JSON-lines event trace");
  netprobe->add_flag("--simulate", np_simulate, "Generate the trace with the pipeline model")->excludes(trace_opt);
  netprobe->add_flag("--calibrate", np_calibrate, "Fit the link to 153.47 +- 33.33 ms first");
  netprobe->add_option("--frames", np_frames, "Captured frames when simulating");
  netprobe->add_option("--delay-ms", np_link.one_way_delay_mean_ms, "One-way delay mean");
  netprobe->add_option("--jitter-ms", np_link.jitter_std_ms, "Delay standard deviation");
  netprobe->add_option("--loss", np_link.loss_rate, "Loss probability");
  netprobe->add_option("--seed", np_link.seed, "Link seed");
  netprobe->add_option("--write-trace", np_write, "Save the simulated trace");

  // serve
  std::string srv_scene, srv_maze, srv_mode = "exo", srv_static, srv_record, srv_addr = "127.0.0.1",
                                             srv_view = "320x240";
  unsigned short srv_port = 8080;
  int srv_traj = 1, srv_workers = 0;
  auto* serve = app.add_subcommand("serve", "Start the operator service");
  serve->add_option("--scene", srv_scene, "PLY or scene cache (default: point clouds only)");
  serve->add_option("--maze", srv_maze, "Maze layout file (default: canonical)");
  serve->add_option("--mode", srv_mode, "exo, ego or cloud");
  serve->add_option("--trajectory", srv_traj, "Trajectory 1..4");
  serve->add_option("--port", srv_port, "TCP port");
  serve->add_option("--address", srv_addr, "Bind address");
  serve->add_option("--view", srv_view, "Fused view WxH");
  serve->add_option("--workers", srv_workers, "Render workers (0 = all cores)");
  serve->add_option("--static", srv_static, "Directory served at /");
  serve->add_option("--record", srv_record, "Control log for replay");

  // report
  std::string rep_metrics;
  auto* report = app.add_subcommand("report", "Print a metrics document as a table");
  report->add_option("--metrics", rep_metrics, "Metrics JSON")->required();

  // generate
  auto* generate = app.add_subcommand("generate", "Write synthetic inputs");
  generate->require_subcommand(1);
  std::string gen_out;
  std::size_t gen_count = 100000;
  std::uint64_t gen_seed = 1;
  int gen_degree = 1;
  auto* gen_scene = generate->add_subcommand("scene", "Random splat scene (PLY)");
  gen_scene->add_option("--count", gen_count, "Splat count");
  gen_scene->add_option("--seed", gen_seed, "Seed");
  gen_scene->add_option("--sh-degree", gen_degree, "SH degree 0..3");
  gen_scene->add_option("--out", gen_out, "Output PLY")->required();
  std::string gen_maze_file;
  double gen_spacing = 0.03;
  auto* gen_maze_scene = generate->add_subcommand("maze-scene", "Splat stand-in for the maze (PLY)");
  gen_maze_scene->add_option("--maze", gen_maze_file, "Maze layout file (default: canonical)");
  gen_maze_scene->add_option("--spacing", gen_spacing, "Splat spacing in meters");
  gen_maze_scene->add_option("--out", gen_out, "Output PLY")->required();
  auto* gen_maze = generate->add_subcommand("maze", "Canonical maze layout file");
  gen_maze->add_option("--out", gen_out, "Output JSON")->required();
  int gen_traj = 1;
  double gen_speed = 1.0;
  auto* gen_script = generate->add_subcommand("script", "Optimal twist script for a trajectory");
  gen_script->add_option("--maze", gen_maze_file, "Maze layout file (default: canonical)");
  gen_script->add_option("--trajectory", gen_traj, "Trajectory 1..4");
  gen_script->add_option("--speed", gen_speed, "Fraction of the session speed limits");
  gen_script->add_option("--out", gen_out, "Output CSV")->required();

  // capture
  std::string cap_maze, cap_out, cap_pose_out, cap_size = "320x180";
  double cap_x = 0.0, cap_y = -0.7, cap_theta = 1.5707963267948966;
  auto* capture_cmd = app.add_subcommand("capture", "Render a simulated depth frame at a robot pose");
  capture_cmd->add_option("--maze", cap_maze, "Maze layout file (default: canonical)");
  capture_cmd->add_option("--x", cap_x, "Robot x (m)");
  capture_cmd->add_option("--y", cap_y, "Robot y (m)");
  capture_cmd->add_option("--theta", cap_theta, "Robot heading (rad)");
  capture_cmd->add_option("--size", cap_size, "Sensor WxH");
  capture_cmd->add_option("--out", cap_out, "Frame file (wire format)")->required();
  capture_cmd->add_option("--pose-out", cap_pose_out, "Sensor pose file");

  CLI11_PARSE(app, argc, argv);

  auto load_maze_or_default = [](const std::string& path) {
    return path.empty() ? MazeSpec::Canonical() : load_maze(path);
  };

  try {
    if (*convert) {
      SplatScene scene = load_ply(conv_in);
      scene = convert_convention(scene);
      if (!conv_ref.empty()) scene = register_scene(scene, load_transform(conv_ref));
      save_scene_cache(scene, conv_out);
      std::cout << "wrote " << scene.size() << " splats (degree " << scene.sh_degree() << ") to " << conv_out
                << "\n";
    } else if (*render_cmd) {
      const auto [w, h] = parse_size(ren_size);
      const SplatScene scene = load_engine_scene(ren_scene);
      const CameraModel cam = ren_camera.empty() ? frame_scene(scene, w, h) : load_camera(ren_camera, w, h);
      write_png(render(scene, cam, RenderOptions{ren_workers}), ren_out);
    } else if (*bench_cmd) {
      const auto [w, h] = parse_size(bench_size);
      const SplatScene scene = load_engine_scene(bench_scene);
      const CameraModel cam = bench_camera.empty() ? frame_scene(scene, w, h) : load_camera(bench_camera, w, h);
      const BenchReport r = bench(scene, cam, bench_frames, bench_warmup, RenderOptions{bench_workers});
      if (bench_json_flag) {
        std::cout << bench_json(r).dump(2) << "\n";
      } else {
        std::printf("%zu splats at %dx%d: mean %.2f ms, p95 %.2f ms, %.2f fps\n", r.splat_count, r.width,
                    r.height, r.mean_ms, r.p95_ms, r.fps);
      }
    } else if (*fuse) {
      const auto [w, h] = parse_size(fuse_size);
      const ViewMode mode = parse_view_mode(fuse_mode);
      const auto bytes = read_bytes(fuse_frame);
      DepthFrame frame = decode_frame(bytes);
      if (!fuse_frame_pose.empty()) frame.camera_pose_at_capture = load_transform(fuse_frame_pose);
      const CameraModel cam = load_camera(fuse_camera, w, h);
      const StereoIntrinsics intr = StereoIntrinsics::FromFov(frame.width, frame.height);
      RenderTarget target(w, h);
      if (!fuse_scene.empty() && mode != ViewMode::kExoCloudOnly) {
        target = render(load_engine_scene(fuse_scene), cam);
      }
      target = composite(target, frame_to_cloud(frame, intr), cam, fuse_point_px);
      write_png(target, fuse_out);
    } else if (*simulate) {
      SessionConfig cfg;
      cfg.maze = load_maze_or_default(sim_maze);
      cfg.trajectory = sim_traj;
      cfg.mode = parse_view_mode(sim_mode);
      cfg.odometry_seed = sim_seed;
      cfg.link.seed = sim_link_seed;
      cfg.timeout_s = sim_timeout;
      const auto [sw, sh] = parse_size(sim_sensor);
      cfg.sensor = StereoIntrinsics::FromFov(sw, sh);
      std::vector<TimedControl> input;
      if (!sim_controls.empty()) {
        std::ifstream in(sim_controls);
        if (!in) throw std::invalid_argument("cannot open '" + sim_controls + "'");
        for (auto& m : parse_control_stream(in)) input.push_back({m.stamp_us, std::move(m)});
      } else if (!sim_script.empty()) {
        input = script_to_controls(load_twist_csv(sim_script));
      } else {
        const auto traj = generate_trajectories(cfg.maze)[static_cast<std::size_t>(std::clamp(sim_traj, 1, 4) - 1)];
        input = script_to_controls(optimal_script(traj, cfg.limits, cfg.tick_us));
      }
      write_json(sim_out, metrics_to_json(run_session(cfg, input), sim_path));
    } else if (*netprobe) {
      nlohmann::json out;
      std::vector<TraceEvent> trace;
      if (np_simulate || np_trace.empty()) {
        PipelineConfig pc;
        pc.frames = np_frames;
        pc.link = np_link;
        if (np_calibrate) {
          pc.link = calibrate_link(kTargetM2pMeanMs, kTargetM2pStdMs, pc);
          out["calibrated"] = true;
        }
        out["link"] = link_json(pc.link);
        trace = simulate_m2p_trace(pc);
        if (!np_write.empty()) {
          std::ofstream t(np_write);
          write_trace(t, trace);
        }
      } else {
        std::ifstream in(np_trace);
        if (!in) throw std::invalid_argument("cannot open '" + np_trace + "'");
        trace = read_trace(in);
      }
      out["m2p"] = m2p_json(measure_m2p(trace));
      out["target"] = {{"mean_ms", kTargetM2pMeanMs}, {"std_ms", kTargetM2pStdMs}};
      std::cout << out.dump(2) << "\n";
    } else if (*serve) {
      ServerConfig sc;
      sc.address = srv_addr;
      sc.port = srv_port;
      sc.static_dir = srv_static;
      sc.record_path = srv_record;
      sc.session.maze = load_maze_or_default(srv_maze);
      sc.session.mode = parse_view_mode(srv_mode);
      sc.session.trajectory = srv_traj;
      sc.session.render = true;
      sc.session.render_workers = srv_workers;
      const auto [vw, vh] = parse_size(srv_view);
      sc.session.view_width = vw;
      sc.session.view_height = vh;
      if (!srv_scene.empty()) sc.session.scene = std::make_shared<const SplatScene>(load_engine_scene(srv_scene));
      OperatorServer server(sc);
      const unsigned short port = server.start();
      std::cout << "listening on http://" << srv_addr << ":" << port << std::endl;
      server.wait();
    } else if (*report) {
      std::ifstream in(rep_metrics);
      if (!in) throw std::invalid_argument("cannot open '" + rep_metrics + "'");
      std::cout << metrics_table(metrics_from_json(nlohmann::json::parse(in)));
    } else if (*gen_scene) {
      RandomSceneOptions opts;
      opts.sh_degree = gen_degree;
      save_ply(revert_convention(random_scene(gen_count, gen_seed, opts)), gen_out);
    } else if (*gen_maze_scene) {
      save_ply(revert_convention(make_maze_scene(load_maze_or_default(gen_maze_file), gen_spacing)), gen_out);
    } else if (*gen_maze) {
      save_maze(MazeSpec::Canonical(), gen_out);
    } else if (*gen_script) {
      const MazeSpec maze = load_maze_or_default(gen_maze_file);
      if (gen_traj < 1 || gen_traj > 4) throw std::invalid_argument("trajectory must be 1..4");
      const auto traj = generate_trajectories(maze)[static_cast<std::size_t>(gen_traj - 1)];
      save_twist_csv(optimal_script(traj, kSessionLimits, 20'000, gen_speed), gen_out);
    } else if (*capture_cmd) {
      const auto [w, h] = parse_size(cap_size);
      const MazeSpec maze = load_maze_or_default(cap_maze);
      const RigidTransformd pose = robot_camera_pose(Pose2{cap_x, cap_y, cap_theta});
      const DepthFrame frame = render_depth(maze, pose, StereoIntrinsics::FromFov(w, h));
      write_bytes(cap_out, encode_frame(frame));
      if (!cap_pose_out.empty()) save_transform(pose, cap_pose_out);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
