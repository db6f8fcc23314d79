#include "rgbd_atlas/loop.hpp"

#include <cmath>
#include <random>

namespace rgbd {

std::optional<RansacResult> ransac_rigid(const std::vector<Vec3>& src,
                                         const std::vector<Vec3>& dst, double inlier_threshold,
                                         int min_inliers, int max_iterations, uint64_t seed) {
  const int n = int(src.size());
  if (n < 3 || n < min_inliers) return std::nullopt;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  const double thr2 = inlier_threshold * inlier_threshold;

  std::vector<int> best_inliers;
  for (int iter = 0; iter < max_iterations; ++iter) {
    int a = pick(rng), b = pick(rng), c = pick(rng);
    if (a == b || a == c || b == c) continue;
    Pose model;
    try {
      model = umeyama_align({src[a], src[b], src[c]}, {dst[a], dst[b], dst[c]});
    } catch (const std::invalid_argument&) {
      continue;  // collinear sample
    }
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i)
      if ((model * src[i] - dst[i]).squaredNorm() < thr2) inliers.push_back(i);
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
    if (int(best_inliers.size()) == n) break;
  }
  if (int(best_inliers.size()) < min_inliers) return std::nullopt;

  // Refit on all inliers.
  std::vector<Vec3> s, d;
  for (int i : best_inliers) {
    s.push_back(src[i]);
    d.push_back(dst[i]);
  }
  RansacResult res;
  try {
    res.transform = umeyama_align(s, d);
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
  res.inlier_matches = std::move(best_inliers);
  return res;
}

std::optional<LoopEdgeCandidate> estimate_loop_transform(const Keyframe& kf_a, const Keyframe& kf_b,
                                                         const LoopConfig& cfg) {
  auto matches = match_features(kf_a.features, kf_b.features, cfg.match_ratio);

  // Depth-lifted correspondences.
  std::vector<Vec3> src, dst;
  for (auto& [i, j] : matches) {
    const Vec3& pa = kf_a.feature_points[size_t(i)];
    const Vec3& pb = kf_b.feature_points[size_t(j)];
    if (pa.z() <= 0 || pb.z() <= 0) continue;
    src.push_back(pa);
    dst.push_back(pb);
  }
  if (int(src.size()) < cfg.min_inliers) return std::nullopt;

  auto ransac = ransac_rigid(src, dst, cfg.inlier_threshold, cfg.min_inliers,
                             cfg.ransac_max_iterations, cfg.seed);
  if (!ransac) return std::nullopt;

  LoopEdgeCandidate out;
  out.from_kf = kf_a.frame_index;
  out.to_kf = kf_b.frame_index;
  out.relative = ransac->transform;
  out.inliers = int(ransac->inlier_matches.size());

  // ICP refinement on the full-frame clouds.
  if (!kf_a.cloud.points.empty() && kf_b.cloud.has_normals()) {
    IcpResult icp = icp_point_to_plane(kf_a.cloud, kf_b.cloud, ransac->transform, cfg.icp);
    if (!icp.ok || icp.fitness < cfg.refine_fitness_min) return std::nullopt;
    out.relative = icp.pose;
    out.icp_rmse = icp.rmse;
  }
  return out;
}

}  // namespace rgbd
