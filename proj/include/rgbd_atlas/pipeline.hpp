#pragma once

// End-to-end orchestration: C2D/D2C alignment over a dataset, single-session
// mapping (odometry + loop closure + graph optimization), multi-session
// merging, and TSDF fusion. The CLI is a thin wrapper over these calls.

#include "rgbd_atlas/config.hpp"
#include "rgbd_atlas/io.hpp"
#include "rgbd_atlas/pose_graph.hpp"

namespace rgbd::pipeline {

namespace fs = std::filesystem;

/// More than half the frames lost tracking; the CLI maps it to exit code 3.
struct OdometryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A session could not be connected to the merged map; exit code 4.
struct MergeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Writes aligned/NNNNNN.ppm + aligned_mask/NNNNNN.pgm for every frame.
/// C2D warps color into the depth frame at doubled resolution; the D2C
/// ablation keeps color native and additionally writes the depth map warped
/// into the color frame as aligned_depth/NNNNNN.pgm.
void run_align(const io::Dataset& ds, bool d2c);

struct MapResult {
  Trajectory trajectory;               // per frame, depth-camera poses
  std::vector<int> map_ids;            // per frame
  std::vector<int> lost;               // per frame, 1 when tracking was lost
  PoseGraph graph;                     // node id = keyframe ordinal
  std::vector<int> keyframe_frames;    // ordinal -> frame index
  std::vector<Keyframe> keyframes;     // features + points, depth-camera frame
  int accepted_loops = 0;
};

/// Single-session mapping. Runs run_align lazily when aligned images are
/// absent. Throws OdometryError when more than half the frames are lost.
MapResult map_session(const io::Dataset& ds, const PipelineConfig& cfg, bool d2c = false);

/// Persists trajectory.txt, graph.txt, keyframes.txt and keyframes.bin
/// (feature + cloud payload consumed by merging) under out_dir.
void save_map_result(const fs::path& out_dir, const io::Dataset& ds, const MapResult& result);

/// Everything merging needs about one mapped session.
struct SessionData {
  Trajectory trajectory;
  std::vector<int> map_ids;
  PoseGraph graph;
  std::vector<int> keyframe_frames;
  std::vector<Keyframe> keyframes;
};

SessionData load_session(const fs::path& map_dir);

struct MergeResult {
  PoseGraph graph;                          // merged, optimized
  std::vector<Trajectory> trajectories;     // per session, global frame
  int cross_edges = 0;
};

/// Cross-session loop search over all keyframes (vocabulary built from the
/// first session) followed by a single merge-and-optimize. Throws MergeError
/// naming the first session that cannot be attached.
MergeResult merge_sessions_data(const std::vector<SessionData>& sessions,
                                const PipelineConfig& cfg);

struct FuseResult {
  Mesh mesh;
  PointCloud cloud;  // fused surface points (mesh vertices), world frame
};

/// Builds the global stride-sampled cloud along the trajectory, partitions it,
/// and fuses per segment. The trajectory must cover every frame.
FuseResult fuse_dataset(const io::Dataset& ds, const Trajectory& traj, const PipelineConfig& cfg);

/// Optimizes each connected component independently (anchor = smallest node
/// id in the component); used when loop closures did not reconnect map breaks.
void optimize_components(PoseGraph& graph, int max_iterations);

/// Information matrices per the configured weighting scheme.
Mat6 odometry_information(double icp_rmse, const GraphConfig& cfg);
Mat6 loop_information(int inliers, const GraphConfig& cfg);

}  // namespace rgbd::pipeline
