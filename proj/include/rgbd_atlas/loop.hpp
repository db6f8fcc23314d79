#pragma once

// Loop transform estimation: mutual descriptor matches, RANSAC over a 3-point
// rigid minimal solver on depth-lifted correspondences, ICP refinement.

#include "rgbd_atlas/bow.hpp"
#include "rgbd_atlas/odometry.hpp"
#include "rgbd_atlas/sift.hpp"

#include <optional>

namespace rgbd {

/// Everything loop closure needs about a keyframe, in the camera frame.
struct Keyframe {
  int frame_index = 0;
  std::vector<Feature> features;
  std::vector<Vec3> feature_points;  // depth-lifted, camera frame; z<=0 marks no depth
  PointCloud cloud;                  // stride-2 cloud with normals, camera frame
};

struct LoopConfig {
  double match_ratio = 0.8;
  double inlier_threshold = 0.05;  // meters, 3-D
  int min_inliers = 20;
  int ransac_max_iterations = 1000;
  double refine_fitness_min = 0.3;
  // Same-session sanity gate: a loop whose relative pose disagrees with the
  // odometry chain by more than this is discarded as a perceptual alias.
  double odometry_gate_trans = 0.5;  // meters
  double odometry_gate_rot = 30.0;   // degrees
  uint64_t seed = 42;
  IcpConfig icp;
};

struct LoopEdgeCandidate {
  int from_kf = 0, to_kf = 0;
  Pose relative;  // maps points of kf_a into kf_b's camera frame
  int inliers = 0;
  double icp_rmse = 0;
};

struct RansacResult {
  Pose transform;
  std::vector<int> inlier_matches;  // indices into the match list
};

/// RANSAC rigid alignment of matched 3-D correspondences; returns nullopt when
/// no model reaches min_inliers. With outlier-free input the result is the
/// full-set umeyama_align solution.
std::optional<RansacResult> ransac_rigid(const std::vector<Vec3>& src,
                                         const std::vector<Vec3>& dst, double inlier_threshold,
                                         int min_inliers, int max_iterations, uint64_t seed);

/// Full loop transform: matches + RANSAC + point-to-plane ICP refinement on
/// the two keyframe clouds. Returns nullopt on rejection.
std::optional<LoopEdgeCandidate> estimate_loop_transform(const Keyframe& kf_a, const Keyframe& kf_b,
                                                         const LoopConfig& cfg = {});

}  // namespace rgbd
