#pragma once

// Point-to-plane ICP scan-to-map odometry with a keyframe local map, failure
// detection, and map re-initialization.

#include "rgbd_atlas/core.hpp"

#include <functional>

namespace rgbd {

struct IcpConfig {
  int max_iterations = 30;
  double correspondence_max_dist = 0.10;  // meters
  double convergence_eps = 1e-6;          // on the se(3) update norm
  double fitness_min = 0.3;               // matched source fraction
  double huber_delta = 0.05;              // meters

  void validate() const {
    if (max_iterations <= 0 || correspondence_max_dist <= 0 || convergence_eps <= 0 ||
        huber_delta <= 0 || fitness_min <= 0 || fitness_min > 1)
      throw std::invalid_argument("invalid ICP config");
  }
};

struct IcpResult {
  Pose pose;           // source -> target
  double fitness = 0;  // matched source fraction at the final pose
  double rmse = 0;     // point-to-plane RMS over matches, meters
  bool ok = false;     // false when correspondences dropped below 6
};

/// Gauss-Newton point-to-plane ICP with Huber weighting. target must carry
/// normals.
IcpResult icp_point_to_plane(const PointCloud& source, const PointCloud& target, const Pose& init,
                             const IcpConfig& cfg);

struct OdometryConfig {
  IcpConfig icp;
  int frame_stride = 2;          // unprojection stride for incoming frames
  bool median_filter = true;         // 3x3 median on depth before unprojection
  // Off by default: with depth noise proportional to depth, the range kernel
  // favors nearer samples and systematically shrinks the scene scale.
  int bilateral_radius = 0;          // bilateral smoothing window; 0 disables
  double bilateral_sigma_space = 2.0;    // pixels
  double bilateral_sigma_range = 30.0;   // millimeters
  double keyframe_trans = 0.2;   // meters since last keyframe
  double keyframe_rot = 15.0;    // degrees since last keyframe
  int map_capacity = 20;         // keyframes, FIFO eviction
};

/// Applies the configured depth prefilters (median, then bilateral smoothing).
DepthImage preprocess_depth(const DepthImage& d, const OdometryConfig& cfg);

enum class TrackStatus { ok, lost };

struct OdometryResult {
  Pose pose;  // frame -> world; last good pose when lost
  double fitness = 0;
  double rmse = 0;
  TrackStatus status = TrackStatus::ok;
  bool is_keyframe = false;
};

/// Local map assembled from the clouds of recent keyframes (world frame).
class LocalMap {
 public:
  explicit LocalMap(int capacity) : capacity_(capacity) {}

  void insert_keyframe(const PointCloud& cloud_camera, const Pose& pose);
  void clear();

  bool empty() const { return keyframes_.empty(); }
  const PointCloud& cloud() const { return cloud_; }
  const Pose& last_keyframe_pose() const { return keyframes_.back().pose; }
  size_t num_keyframes() const { return keyframes_.size(); }

 private:
  void rebuild();

  struct Keyframe {
    PointCloud cloud;  // camera frame
    Pose pose;
  };
  int capacity_;
  std::vector<Keyframe> keyframes_;
  PointCloud cloud_;  // world frame, union of keyframe contributions
};

/// Registers one frame against the map. Bootstraps the map at prev_pose when
/// it is empty. Inserts a keyframe on sufficient motion.
OdometryResult register_frame(LocalMap& map, const DepthImage& frame_depth,
                              const CameraIntrinsics& k, const Pose& prev_pose,
                              const OdometryConfig& cfg);

struct SessionResult {
  std::vector<OdometryResult> frames;
  std::vector<int> map_ids;  // per frame; increments on tracking loss
};

/// Runs odometry over a whole sequence, re-initializing the local map (new
/// map id, bootstrap at the last good pose) whenever tracking is lost.
SessionResult run_session(const std::vector<DepthImage>& frames, const CameraIntrinsics& k,
                          const OdometryConfig& cfg);

}  // namespace rgbd
