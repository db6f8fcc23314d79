#pragma once

// Reconstruction metrics (centroid voxel downsampling, overlap and inlier
// RMSE at distance thresholds) and trajectory metrics (ATE, RPE per second).

#include "rgbd_atlas/core.hpp"

namespace rgbd {

struct ReconEvalConfig {
  double voxel = 0.01;                           // meters
  std::vector<double> gammas = {0.010, 0.020, 0.050};  // meters, ascending

  void validate() const;
};

struct GammaResult {
  double gamma = 0;    // meters
  double overlap = 0;  // percent of downsampled ground-truth points
  double rmse = 0;     // meters, over inliers
};

struct ReconEvalResult {
  std::vector<GammaResult> per_gamma;
};

/// One centroid per occupied voxel; voxel index = floor(coord / voxel).
PointCloud voxel_downsample_centroid(const PointCloud& cloud, double voxel);

/// Downsamples both clouds, then for each recon point takes the distance to
/// the nearest ground-truth point; overlap = inliers / |gt downsampled|.
ReconEvalResult overlap_rmse(const PointCloud& recon, const PointCloud& gt,
                             const ReconEvalConfig& cfg = {});

struct TrajectoryPose {
  double timestamp = 0;
  Pose pose;
};

using Trajectory = std::vector<TrajectoryPose>;

/// Rigid transform mapping est positions onto gt positions (timestamp
/// association by nearest match within 20 ms; needs >= 3 pairs). This is the
/// gauge that ate() removes; it also registers a reconstruction built in the
/// estimated frame into the ground-truth frame.
Pose trajectory_alignment(const Trajectory& est, const Trajectory& gt);

/// RMSE of translation differences after rigid alignment of est onto gt.
/// Timestamps associate by nearest match within 20 ms; needs >= 3 pairs.
double ate(const Trajectory& est, const Trajectory& gt);

struct RpeResult {
  double rot_rms = 0, trans_rms = 0;    // deg/s, m/s
  double rot_mean = 0, trans_mean = 0;
};

RpeResult rpe(const Trajectory& est, const Trajectory& gt, double delta = 1.0);

}  // namespace rgbd
