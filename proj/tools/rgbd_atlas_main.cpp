// rgbd-atlas: reconstruction pipeline CLI.
//
// Subcommands: align, map, merge, fuse, eval, synth.
// Exit codes: 0 ok, 2 input error, 3 odometry failure, 4 merge failure.

#include "rgbd_atlas/config.hpp"
#include "rgbd_atlas/pipeline.hpp"
#include "rgbd_atlas/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace rgbd;
namespace fs = std::filesystem;

int g_threads = 1;

void read_thread_env() {
  const char* env = std::getenv("RGBD_ATLAS_THREADS");
  if (!env) return;
  char* end = nullptr;
  long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1)
    throw io::InputError(std::string("RGBD_ATLAS_THREADS: invalid value '") + env + "'");
  g_threads = int(v);  // upper bound; the pipeline stays deterministic below it
}

PipelineConfig load_config(const std::string& path, const std::string& dump_path) {
  PipelineConfig cfg = path.empty() ? PipelineConfig{} : load_pipeline_config(path);
  if (path.empty()) cfg.loop.icp = cfg.odometry.icp;
  cfg.validate();
  if (!dump_path.empty()) io::write_file_atomic(dump_path, dump_pipeline_config(cfg));
  return cfg;
}

int cmd_align(const std::string& input, bool d2c) {
  io::Dataset ds = io::open_dataset(input);
  pipeline::run_align(ds, d2c);
  return 0;
}

int cmd_map(const std::string& input, const std::string& output, const PipelineConfig& cfg,
            bool d2c) {
  io::Dataset ds = io::open_dataset(input);
  pipeline::MapResult result = pipeline::map_session(ds, cfg, d2c);
  pipeline::save_map_result(output, ds, result);
  std::cout << "mapped " << ds.num_frames << " frames, " << result.keyframes.size()
            << " keyframes, " << result.accepted_loops << " loop closures\n";
  return 0;
}

int cmd_merge(const std::vector<std::string>& inputs, const std::string& output,
              const PipelineConfig& cfg) {
  std::vector<pipeline::SessionData> sessions;
  for (const auto& in : inputs) sessions.push_back(pipeline::load_session(in));
  pipeline::MergeResult result = pipeline::merge_sessions_data(sessions, cfg);
  fs::create_directories(output);
  for (size_t s = 0; s < result.trajectories.size(); ++s)
    io::write_trajectory(fs::path(output) / ("trajectory_" + std::to_string(s) + ".txt"),
                         result.trajectories[s]);
  io::write_file_atomic(fs::path(output) / "graph.txt", serialize_graph(result.graph));
  std::cout << "merged " << sessions.size() << " sessions with " << result.cross_edges
            << " cross-session loop edges\n";
  return 0;
}

int cmd_fuse(const std::string& input, const std::string& trajectory, const std::string& output,
             const std::string& cloud_output, const PipelineConfig& cfg) {
  io::Dataset ds = io::open_dataset(input);
  Trajectory traj = io::read_trajectory(trajectory);
  pipeline::FuseResult result = pipeline::fuse_dataset(ds, traj, cfg);
  io::write_ply(output, result.mesh);
  std::string cloud_path = cloud_output;
  if (cloud_path.empty()) {
    fs::path p(output);
    cloud_path = (p.parent_path() / (p.stem().string() + "_cloud.ply")).string();
  }
  io::write_ply(cloud_path, result.cloud);
  std::cout << "fused mesh: " << result.mesh.vertices.size() << " vertices, "
            << result.mesh.triangles.size() << " triangles\n";
  return 0;
}

int cmd_eval(const std::string& recon, const std::string& gt, const std::string& traj_est,
             const std::string& traj_gt, const PipelineConfig& cfg) {
  PointCloud r = io::read_ply_cloud(recon);
  PointCloud g = io::read_ply_cloud(gt);
  if (!traj_est.empty() != !traj_gt.empty())
    throw io::InputError("eval: --traj-est and --traj-gt must be given together");

  Trajectory est, ref;
  if (!traj_est.empty()) {
    est = io::read_trajectory(traj_est);
    ref = io::read_trajectory(traj_gt);
    // The reconstruction lives in the estimated-trajectory frame; move it into
    // the ground-truth frame before comparing clouds.
    r = r.transformed(trajectory_alignment(est, ref));
  }
  ReconEvalResult res = overlap_rmse(r, g, cfg.eval);

  nlohmann::ordered_json out;
  for (const GammaResult& gr : res.per_gamma) {
    std::string suffix = std::to_string(int(std::lround(gr.gamma * 1000)));
    out["overlap_" + suffix] = gr.overlap;
    out["rmse_" + suffix] = gr.rmse;
  }
  if (!traj_est.empty()) {
    out["ate"] = ate(est, ref);
    RpeResult rp = rpe(est, ref);
    out["rpe_rot"] = rp.rot_rms;
    out["rpe_trans"] = rp.trans_rms;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct SynthOptions {
  std::string output;
  std::string kind = "corridor_loop";
  std::string scene = "room";
  int frames = 300;
  int width = 128, height = 128;
  double extent = 2.0;
  double jump = 5.0;
  bool noise = false;
  uint64_t seed = 0;
  double gt_density = 10000;
};

int cmd_synth(const SynthOptions& opt) {
  synth::TrajectoryKind kind;
  if (opt.kind == "corridor_loop")
    kind = synth::TrajectoryKind::corridor_loop;
  else if (opt.kind == "orbit")
    kind = synth::TrajectoryKind::orbit;
  else if (opt.kind == "teleport_gap")
    kind = synth::TrajectoryKind::teleport_gap;
  else
    throw io::InputError("synth: unknown trajectory kind '" + opt.kind + "'");

  synth::Scene scene =
      opt.scene == "corner" ? synth::make_corner_scene() : synth::make_room_scene(opt.extent);
  if (opt.scene != "corner" && opt.scene != "room")
    throw io::InputError("synth: unknown scene '" + opt.scene + "'");

  io::DatasetCalibration calib;
  calib.depth = {opt.width / 2.0, opt.height / 2.0, opt.width / 2.0, opt.height / 2.0,
                 opt.width,       opt.height};
  int cw = opt.width + opt.width / 4, ch = (opt.height * 3) / 4;
  calib.color = {double(ch), double(ch), cw / 2.0, ch / 2.0, cw, ch};
  calib.rig.color_to_depth = Pose(Quat::Identity(), Vec3(0.02, 0, 0));

  synth::TrajectoryParams params;
  params.extent = opt.extent;
  params.jump = opt.jump;
  auto traj = synth::make_trajectory(kind, opt.frames, params);

  fs::path root(opt.output);
  fs::create_directories(root / "depth");
  fs::create_directories(root / "color");

  synth::NoiseModel noise;
  noise.seed = opt.seed;

  std::string timestamps;
  Trajectory gt_traj;
  for (int i = 0; i < opt.frames; ++i) {
    const Pose& pose = traj[size_t(i)].pose;
    DepthImage depth = synth::render_depth(scene, pose, calib.depth);
    if (opt.noise) depth = synth::apply_noise(depth, noise, i);
    // The color camera sits beside the depth camera per the rig extrinsics.
    Pose color_pose = pose * calib.rig.color_to_depth;
    ColorImage color = synth::render_color(scene, color_pose, calib.color);
    io::write_pgm16(root / "depth" / (io::frame_name(i) + ".pgm"), depth);
    io::write_ppm(root / "color" / (io::frame_name(i) + ".ppm"), color);
    char line[64];
    std::snprintf(line, sizeof line, "%.9f\n", traj[size_t(i)].timestamp);
    timestamps += line;
    gt_traj.push_back({traj[size_t(i)].timestamp, pose});
  }
  io::write_file_atomic(root / "timestamps.txt", timestamps);
  io::write_intrinsics_json(root / "intrinsics.json", calib);
  io::write_trajectory(root / "gt_trajectory.txt", gt_traj);
  io::write_ply(root / "gt_cloud.ply", synth::sample_scene_cloud(scene, opt.gt_density));
  std::cout << "wrote " << opt.frames << " frames to " << opt.output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RGB-D reconstruction pipeline"};
  app.require_subcommand(1);

  std::string input, output, config_path, dump_config;
  std::string trajectory, cloud_output, recon, gt, traj_est, traj_gt;
  std::vector<std::string> inputs;
  bool d2c = false;
  SynthOptions synth_opt;

  auto* align = app.add_subcommand("align", "Align color into the depth frame (C2D)");
  align->add_option("--input", input, "dataset root")->required();
  align->add_flag("--d2c", d2c, "ablation: warp depth into the color frame instead");

  auto* map = app.add_subcommand("map", "Single-session mapping");
  map->add_option("--input", input, "dataset root")->required();
  map->add_option("--output", output, "output directory")->required();
  map->add_option("--config", config_path, "pipeline config JSON");
  map->add_option("--dump-config", dump_config, "write the effective config JSON here");
  map->add_flag("--d2c", d2c, "ablation: track on depth warped into the color frame");

  auto* merge = app.add_subcommand("merge", "Multi-session merging");
  merge->add_option("--inputs", inputs, "map output directories, in overlap order")
      ->required()
      ->expected(-2);
  merge->add_option("--output", output, "output directory")->required();
  merge->add_option("--config", config_path, "pipeline config JSON");
  merge->add_option("--dump-config", dump_config, "write the effective config JSON here");

  auto* fuse = app.add_subcommand("fuse", "TSDF fusion to a mesh");
  fuse->add_option("--input", input, "dataset root")->required();
  fuse->add_option("--trajectory", trajectory, "trajectory file")->required();
  fuse->add_option("--output", output, "output mesh PLY")->required();
  fuse->add_option("--cloud-output", cloud_output, "output fused cloud PLY");
  fuse->add_option("--config", config_path, "pipeline config JSON");
  fuse->add_option("--dump-config", dump_config, "write the effective config JSON here");

  auto* eval = app.add_subcommand("eval", "Reconstruction and trajectory metrics");
  eval->add_option("--recon", recon, "reconstructed cloud/mesh PLY")->required();
  eval->add_option("--gt", gt, "ground-truth cloud PLY")->required();
  eval->add_option("--traj-est", traj_est, "estimated trajectory");
  eval->add_option("--traj-gt", traj_gt, "ground-truth trajectory");
  eval->add_option("--config", config_path, "pipeline config JSON");
  eval->add_option("--dump-config", dump_config, "write the effective config JSON here");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--output", synth_opt.output, "dataset root to create")->required();
  synth->add_option("--kind", synth_opt.kind, "corridor_loop | orbit | teleport_gap");
  synth->add_option("--scene", synth_opt.scene, "room | corner");
  synth->add_option("--frames", synth_opt.frames, "number of frames")->check(CLI::Range(2, 100000));
  synth->add_option("--width", synth_opt.width, "depth image width");
  synth->add_option("--height", synth_opt.height, "depth image height");
  synth->add_option("--extent", synth_opt.extent, "trajectory extent (meters)");
  synth->add_option("--jump", synth_opt.jump, "teleport distance (meters)");
  synth->add_flag("--noise", synth_opt.noise, "apply the sensor noise model");
  synth->add_option("--seed", synth_opt.seed, "noise seed");
  synth->add_option("--gt-density", synth_opt.gt_density, "ground-truth samples per m^2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    read_thread_env();
    if (align->parsed()) return cmd_align(input, d2c);
    PipelineConfig cfg = load_config(config_path, dump_config);
    if (map->parsed()) return cmd_map(input, output, cfg, d2c);
    if (merge->parsed()) return cmd_merge(inputs, output, cfg);
    if (fuse->parsed()) return cmd_fuse(input, trajectory, output, cloud_output, cfg);
    if (eval->parsed()) return cmd_eval(recon, gt, traj_est, traj_gt, cfg);
    if (synth->parsed()) return cmd_synth(synth_opt);
  } catch (const pipeline::OdometryError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const pipeline::MergeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
