#include "rgbd_atlas/odometry.hpp"

#include "rgbd_atlas/imaging.hpp"
#include "rgbd_atlas/nn_grid.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace rgbd {

IcpResult icp_point_to_plane(const PointCloud& source, const PointCloud& target, const Pose& init,
                             const IcpConfig& cfg) {
  cfg.validate();
  if (source.points.empty()) throw std::invalid_argument("icp: empty source");
  if (!target.has_normals()) throw std::invalid_argument("icp: target has no normals");

  NnGrid index(target.points, cfg.correspondence_max_dist);
  Pose pose = init;
  IcpResult res;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    int matched = 0;
    for (const Vec3& s : source.points) {
      Vec3 p = pose * s;
      int j = index.nearest(p, cfg.correspondence_max_dist);
      if (j < 0) continue;
      const Vec3& n = target.normals[j];
      double r = n.dot(p - target.points[j]);
      double w = std::abs(r) <= cfg.huber_delta ? 1.0 : cfg.huber_delta / std::abs(r);
      Vec6 jrow;
      jrow << p.cross(n), n;  // d r / d [omega; v] for a left-multiplied update
      h.noalias() += w * jrow * jrow.transpose();
      g.noalias() += w * jrow * r;
      ++matched;
    }
    if (matched < 6) return res;  // ok stays false
    Vec6 delta = h.ldlt().solve(-g);
    pose = se3_exp(delta) * pose;
    if (delta.norm() < cfg.convergence_eps) break;
  }

  // Fitness and RMSE at the final pose.
  int matched = 0;
  double sq_sum = 0;
  for (const Vec3& s : source.points) {
    Vec3 p = pose * s;
    int j = index.nearest(p, cfg.correspondence_max_dist);
    if (j < 0) continue;
    double r = target.normals[j].dot(p - target.points[j]);
    sq_sum += r * r;
    ++matched;
  }
  if (matched < 6) return res;
  res.pose = pose;
  res.fitness = double(matched) / double(source.points.size());
  res.rmse = std::sqrt(sq_sum / matched);
  res.ok = true;
  return res;
}

DepthImage preprocess_depth(const DepthImage& d, const OdometryConfig& cfg) {
  DepthImage out = cfg.median_filter ? median_filter_depth(d) : d;
  if (cfg.bilateral_radius > 0)
    out = bilateral_filter_depth(out, cfg.bilateral_radius, cfg.bilateral_sigma_space,
                                 cfg.bilateral_sigma_range);
  return out;
}

void LocalMap::insert_keyframe(const PointCloud& cloud_camera, const Pose& pose) {
  keyframes_.push_back({cloud_camera, pose});
  if (int(keyframes_.size()) > capacity_) keyframes_.erase(keyframes_.begin());
  rebuild();
}

void LocalMap::clear() {
  keyframes_.clear();
  cloud_ = PointCloud{};
}

void LocalMap::rebuild() {
  cloud_ = PointCloud{};
  for (const auto& kf : keyframes_) cloud_.append(kf.cloud.transformed(kf.pose));
}

OdometryResult register_frame(LocalMap& map, const DepthImage& frame_depth,
                              const CameraIntrinsics& k, const Pose& prev_pose,
                              const OdometryConfig& cfg) {
  PointCloud frame = unproject_with_normals(preprocess_depth(frame_depth, cfg), k, cfg.frame_stride);
  OdometryResult out;
  out.pose = prev_pose;

  if (map.empty()) {
    if (frame.points.empty()) {
      out.status = TrackStatus::lost;
      return out;
    }
    map.insert_keyframe(frame, prev_pose);
    out.status = TrackStatus::ok;
    out.fitness = 1.0;
    out.is_keyframe = true;
    return out;
  }

  if (frame.points.empty()) {
    out.status = TrackStatus::lost;
    return out;
  }

  IcpResult icp = icp_point_to_plane(frame, map.cloud(), prev_pose, cfg.icp);
  if (!icp.ok || icp.fitness < cfg.icp.fitness_min) {
    out.status = TrackStatus::lost;
    return out;
  }
  out.pose = icp.pose;
  out.fitness = icp.fitness;
  out.rmse = icp.rmse;

  Pose rel = map.last_keyframe_pose().inverse() * icp.pose;
  double trans = rel.translation().norm();
  double rot_deg = rel.rotation_angle() * 180.0 / M_PI;
  if (trans > cfg.keyframe_trans || rot_deg > cfg.keyframe_rot) {
    map.insert_keyframe(frame, icp.pose);
    out.is_keyframe = true;
  }
  return out;
}

SessionResult run_session(const std::vector<DepthImage>& frames, const CameraIntrinsics& k,
                          const OdometryConfig& cfg) {
  if (frames.empty()) throw std::invalid_argument("run_session: no frames");
  SessionResult out;
  LocalMap map(cfg.map_capacity);
  Pose last_good = Pose::identity();
  int map_id = 0;
  for (const auto& frame : frames) {
    OdometryResult r = register_frame(map, frame, k, last_good, cfg);
    if (r.status == TrackStatus::lost) {
      // New map, bootstrapped at the last good pose on the next frame.
      ++map_id;
      map.clear();
      r = register_frame(map, frame, k, last_good, cfg);
      r.status = TrackStatus::lost;  // this frame still counts as a break
    } else {
      last_good = r.pose;
    }
    out.frames.push_back(r);
    out.map_ids.push_back(map_id);
  }
  return out;
}

}  // namespace rgbd
