#include "rgbd_atlas/config.hpp"

#include "rgbd_atlas/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <type_traits>

namespace rgbd {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& why) {
  throw io::InputError("config: " + path + ": " + why);
}

/// Section reader that tracks its dotted path and rejects unknown keys.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) bad(path_, "expected an object");
  }

  ~Section() = default;

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) bad(path_ + "." + it.key(), "unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  Section sub(const std::string& key) { return Section(j_.at(key), path_ + "." + key); }

  template <typename T>
  void get(const std::string& key, T& out, double lo, double hi) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) bad(path_ + "." + key, "expected a number");
    double d = v.get<double>();
    if (std::is_integral_v<T> && d != std::floor(d)) bad(path_ + "." + key, "expected an integer");
    if (d < lo || d > hi)
      bad(path_ + "." + key, "value " + std::to_string(d) + " outside [" + std::to_string(lo) +
                                 ", " + std::to_string(hi) + "]");
    out = T(d);
  }

  void get_bool(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) bad(path_ + "." + key, "expected a boolean");
    out = v.get<bool>();
  }

  void get_gammas(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.empty()) bad(path_ + "." + key, "expected a non-empty array");
    std::vector<double> g;
    for (const auto& e : v) {
      if (!e.is_number() || e.get<double>() <= 0)
        bad(path_ + "." + key, "entries must be positive numbers");
      g.push_back(e.get<double>());
    }
    if (!std::is_sorted(g.begin(), g.end())) bad(path_ + "." + key, "must be ascending");
    out = std::move(g);
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_icp(Section s, IcpConfig& c) {
  s.get("max_iterations", c.max_iterations, 1, 1000);
  s.get("correspondence_max_dist", c.correspondence_max_dist, 1e-6, 10);
  s.get("convergence_eps", c.convergence_eps, 1e-15, 1);
  s.get("fitness_min", c.fitness_min, 1e-6, 1);
  s.get("huber_delta", c.huber_delta, 1e-6, 10);
  s.finish();
}

}  // namespace

void PipelineConfig::validate() const {
  odometry.icp.validate();
  loop.icp.validate();
  eval.validate();
  if (odometry.frame_stride < 1) throw std::invalid_argument("odometry.frame_stride must be >= 1");
  if (bow.num_words < 1) throw std::invalid_argument("bow.num_words must be >= 1");
  if (fusion.cloud_stride < 1) throw std::invalid_argument("fusion.cloud_stride must be >= 1");
  if (fusion.tsdf.voxel_size <= 0) throw std::invalid_argument("fusion.voxel_size must be > 0");
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw io::InputError("cannot open config " + path.string());
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw io::InputError("config " + path.string() + ": " + e.what());
  }

  PipelineConfig cfg;
  Section root(j, "config");
  if (root.has("odometry")) {
    Section s = root.sub("odometry");
    if (s.has("icp")) parse_icp(s.sub("icp"), cfg.odometry.icp);
    s.get("frame_stride", cfg.odometry.frame_stride, 1, 64);
    s.get("keyframe_trans", cfg.odometry.keyframe_trans, 1e-4, 100);
    s.get("keyframe_rot", cfg.odometry.keyframe_rot, 1e-3, 180);
    s.get("map_capacity", cfg.odometry.map_capacity, 1, 10000);
    s.get_bool("median_filter", cfg.odometry.median_filter);
    s.get("bilateral_radius", cfg.odometry.bilateral_radius, 0, 16);
    s.get("bilateral_sigma_space", cfg.odometry.bilateral_sigma_space, 0.1, 64);
    s.get("bilateral_sigma_range", cfg.odometry.bilateral_sigma_range, 0.1, 10000);
    s.finish();
  }
  if (root.has("features")) {
    Section s = root.sub("features");
    s.get("max_features", cfg.features.max_features, 1, 100000);
    s.get("octaves", cfg.features.octaves, 1, 8);
    s.get("scales_per_octave", cfg.features.scales_per_octave, 1, 8);
    s.get("sigma", cfg.features.sigma, 0.5, 8);
    s.get("contrast_threshold", cfg.features.contrast_threshold, 0, 1);
    s.finish();
  }
  bool loop_icp_set = false;
  if (root.has("loop")) {
    Section s = root.sub("loop");
    if (s.has("icp")) {
      parse_icp(s.sub("icp"), cfg.loop.icp);
      loop_icp_set = true;
    }
    s.get("match_ratio", cfg.loop.match_ratio, 0, 1);
    s.get("inlier_threshold", cfg.loop.inlier_threshold, 1e-6, 10);
    s.get("min_inliers", cfg.loop.min_inliers, 3, 100000);
    s.get("ransac_max_iterations", cfg.loop.ransac_max_iterations, 1, 1000000);
    s.get("refine_fitness_min", cfg.loop.refine_fitness_min, 0, 1);
    s.get("odometry_gate_trans", cfg.loop.odometry_gate_trans, 1e-3, 1e6);
    s.get("odometry_gate_rot", cfg.loop.odometry_gate_rot, 1e-3, 360);
    s.get("seed", cfg.loop.seed, 0, 1e18);
    s.finish();
  }
  if (!loop_icp_set) cfg.loop.icp = cfg.odometry.icp;
  if (root.has("bow")) {
    Section s = root.sub("bow");
    s.get("num_words", cfg.bow.num_words, 1, 100000);
    s.get("seed", cfg.bow.seed, 0, 1e18);
    s.get("top_k", cfg.bow.top_k, 1, 1000);
    s.get("exclusion_window", cfg.bow.exclusion_window, 0, 100000);
    s.get("min_similarity", cfg.bow.min_similarity, 0, 1);
    s.get("max_train_descriptors", cfg.bow.max_train_descriptors, 100, 10000000);
    s.finish();
  }
  if (root.has("graph")) {
    Section s = root.sub("graph");
    s.get("max_iterations", cfg.graph.max_iterations, 1, 10000);
    s.get("odometry_info_scale", cfg.graph.odometry_info_scale, 1e-6, 1e9);
    s.get("loop_info_scale", cfg.graph.loop_info_scale, 1e-9, 1e9);
    s.finish();
  }
  if (root.has("fusion")) {
    Section s = root.sub("fusion");
    s.get("voxel_size", cfg.fusion.tsdf.voxel_size, 1e-4, 1);
    s.get("truncation_factor", cfg.fusion.tsdf.truncation_factor, 1, 64);
    s.get("weight_cap", cfg.fusion.tsdf.weight_cap, 1, 1e6);
    s.get("point_budget", cfg.fusion.point_budget, 1000, 100000000);
    s.get("seed", cfg.fusion.seed, 0, 1e18);
    s.get("cloud_stride", cfg.fusion.cloud_stride, 1, 64);
    s.finish();
  }
  if (root.has("eval")) {
    Section s = root.sub("eval");
    s.get("voxel", cfg.eval.voxel, 1e-5, 1);
    s.get_gammas("gammas", cfg.eval.gammas);
    s.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

std::string dump_pipeline_config(const PipelineConfig& cfg) {
  auto icp_json = [](const IcpConfig& c) {
    return json{{"max_iterations", c.max_iterations},
                {"correspondence_max_dist", c.correspondence_max_dist},
                {"convergence_eps", c.convergence_eps},
                {"fitness_min", c.fitness_min},
                {"huber_delta", c.huber_delta}};
  };
  json j = {
      {"odometry",
       {{"icp", icp_json(cfg.odometry.icp)},
        {"frame_stride", cfg.odometry.frame_stride},
        {"keyframe_trans", cfg.odometry.keyframe_trans},
        {"keyframe_rot", cfg.odometry.keyframe_rot},
        {"map_capacity", cfg.odometry.map_capacity},
        {"median_filter", cfg.odometry.median_filter},
        {"bilateral_radius", cfg.odometry.bilateral_radius},
        {"bilateral_sigma_space", cfg.odometry.bilateral_sigma_space},
        {"bilateral_sigma_range", cfg.odometry.bilateral_sigma_range}}},
      {"features",
       {{"max_features", cfg.features.max_features},
        {"octaves", cfg.features.octaves},
        {"scales_per_octave", cfg.features.scales_per_octave},
        {"sigma", cfg.features.sigma},
        {"contrast_threshold", cfg.features.contrast_threshold}}},
      {"loop",
       {{"icp", icp_json(cfg.loop.icp)},
        {"match_ratio", cfg.loop.match_ratio},
        {"inlier_threshold", cfg.loop.inlier_threshold},
        {"min_inliers", cfg.loop.min_inliers},
        {"ransac_max_iterations", cfg.loop.ransac_max_iterations},
        {"refine_fitness_min", cfg.loop.refine_fitness_min},
        {"odometry_gate_trans", cfg.loop.odometry_gate_trans},
        {"odometry_gate_rot", cfg.loop.odometry_gate_rot},
        {"seed", cfg.loop.seed}}},
      {"bow",
       {{"num_words", cfg.bow.num_words},
        {"seed", cfg.bow.seed},
        {"top_k", cfg.bow.top_k},
        {"exclusion_window", cfg.bow.exclusion_window},
        {"min_similarity", cfg.bow.min_similarity},
        {"max_train_descriptors", cfg.bow.max_train_descriptors}}},
      {"graph",
       {{"max_iterations", cfg.graph.max_iterations},
        {"odometry_info_scale", cfg.graph.odometry_info_scale},
        {"loop_info_scale", cfg.graph.loop_info_scale}}},
      {"fusion",
       {{"voxel_size", cfg.fusion.tsdf.voxel_size},
        {"truncation_factor", cfg.fusion.tsdf.truncation_factor},
        {"weight_cap", cfg.fusion.tsdf.weight_cap},
        {"point_budget", cfg.fusion.point_budget},
        {"seed", cfg.fusion.seed},
        {"cloud_stride", cfg.fusion.cloud_stride}}},
      {"eval", {{"voxel", cfg.eval.voxel}, {"gammas", cfg.eval.gammas}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace rgbd
