#include "rgbd_atlas/evaluation.hpp"

#include "rgbd_atlas/nn_grid.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace rgbd {

void ReconEvalConfig::validate() const {
  if (voxel <= 0) throw std::invalid_argument("eval config: voxel must be positive");
  if (gammas.empty() || !std::is_sorted(gammas.begin(), gammas.end()) || gammas.front() <= 0)
    throw std::invalid_argument("eval config: gammas must be positive ascending");
}

PointCloud voxel_downsample_centroid(const PointCloud& cloud, double voxel) {
  if (voxel <= 0) throw std::invalid_argument("voxel_downsample_centroid: voxel must be positive");
  // Ordered map keeps the output deterministic in input-independent order.
  struct Cell {
    Vec3 sum = Vec3::Zero();
    size_t count = 0;
  };
  std::map<std::array<long, 3>, Cell> cells;
  for (const Vec3& p : cloud.points) {
    std::array<long, 3> key{long(std::floor(p.x() / voxel)), long(std::floor(p.y() / voxel)),
                            long(std::floor(p.z() / voxel))};
    Cell& c = cells[key];
    c.sum += p;
    ++c.count;
  }
  PointCloud out;
  out.points.reserve(cells.size());
  for (const auto& [key, c] : cells) out.points.push_back(c.sum / double(c.count));
  return out;
}

ReconEvalResult overlap_rmse(const PointCloud& recon, const PointCloud& gt,
                             const ReconEvalConfig& cfg) {
  cfg.validate();
  if (recon.points.empty() || gt.points.empty())
    throw std::invalid_argument("overlap_rmse: empty input cloud");

  PointCloud r = voxel_downsample_centroid(recon, cfg.voxel);
  PointCloud g = voxel_downsample_centroid(gt, cfg.voxel);

  const double gamma_max = cfg.gammas.back();
  NnGrid index(g.points, gamma_max);
  std::vector<double> dists;
  dists.reserve(r.points.size());
  for (const Vec3& p : r.points) {
    double d;
    if (index.nearest(p, gamma_max, &d) >= 0) dists.push_back(d);
  }

  ReconEvalResult out;
  for (double gamma : cfg.gammas) {
    GammaResult res;
    res.gamma = gamma;
    double sq = 0;
    size_t inliers = 0;
    for (double d : dists) {
      if (d < gamma) {
        sq += d * d;
        ++inliers;
      }
    }
    res.overlap = 100.0 * double(inliers) / double(g.points.size());
    res.rmse = inliers ? std::sqrt(sq / double(inliers)) : 0.0;
    out.per_gamma.push_back(res);
  }
  return out;
}

namespace {

constexpr double kAssocWindow = 0.020;  // seconds

std::vector<std::pair<size_t, size_t>> associate(const Trajectory& est, const Trajectory& gt) {
  std::vector<std::pair<size_t, size_t>> pairs;
  size_t j = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].timestamp - est[i].timestamp) <=
               std::abs(gt[j].timestamp - est[i].timestamp))
      ++j;
    if (std::abs(gt[j].timestamp - est[i].timestamp) <= kAssocWindow) pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace

Pose trajectory_alignment(const Trajectory& est, const Trajectory& gt) {
  auto pairs = associate(est, gt);
  if (pairs.size() < 3)
    throw std::invalid_argument("trajectory_alignment: fewer than 3 matched pairs");
  std::vector<Vec3> src, dst;
  for (auto& [i, j] : pairs) {
    src.push_back(est[i].pose.translation());
    dst.push_back(gt[j].pose.translation());
  }
  return umeyama_align(src, dst);
}

double ate(const Trajectory& est, const Trajectory& gt) {
  auto pairs = associate(est, gt);
  if (pairs.size() < 3) throw std::invalid_argument("ate: fewer than 3 matched pairs");
  std::vector<Vec3> src, dst;
  for (auto& [i, j] : pairs) {
    src.push_back(est[i].pose.translation());
    dst.push_back(gt[j].pose.translation());
  }
  Pose align = umeyama_align(src, dst);
  double sq = 0;
  for (size_t k = 0; k < src.size(); ++k) sq += (align * src[k] - dst[k]).squaredNorm();
  return std::sqrt(sq / double(src.size()));
}

RpeResult rpe(const Trajectory& est, const Trajectory& gt, double delta) {
  auto pairs = associate(est, gt);
  if (pairs.size() < 3) throw std::invalid_argument("rpe: fewer than 3 matched pairs");

  double rot_sq = 0, trans_sq = 0, rot_sum = 0, trans_sum = 0;
  size_t count = 0;
  for (size_t a = 0; a < pairs.size(); ++a) {
    double target = est[pairs[a].first].timestamp + delta;
    // Nearest later pair at t + delta.
    size_t best = pairs.size();
    double best_err = kAssocWindow;
    for (size_t b = a + 1; b < pairs.size(); ++b) {
      double err = std::abs(est[pairs[b].first].timestamp - target);
      if (err <= best_err) {
        best_err = err;
        best = b;
      }
      if (est[pairs[b].first].timestamp > target + kAssocWindow) break;
    }
    if (best == pairs.size()) continue;
    double dt = est[pairs[best].first].timestamp - est[pairs[a].first].timestamp;
    if (dt <= 0) continue;
    Pose est_rel = est[pairs[a].first].pose.inverse() * est[pairs[best].first].pose;
    Pose gt_rel = gt[pairs[a].second].pose.inverse() * gt[pairs[best].second].pose;
    Pose err = gt_rel.inverse() * est_rel;
    double rot = err.rotation_angle() * 180.0 / M_PI / dt;
    double trans = err.translation().norm() / dt;
    rot_sq += rot * rot;
    trans_sq += trans * trans;
    rot_sum += rot;
    trans_sum += trans;
    ++count;
  }
  if (!count) throw std::invalid_argument("rpe: no pairs separated by delta");
  RpeResult out;
  out.rot_rms = std::sqrt(rot_sq / double(count));
  out.trans_rms = std::sqrt(trans_sq / double(count));
  out.rot_mean = rot_sum / double(count);
  out.trans_mean = trans_sum / double(count);
  return out;
}

}  // namespace rgbd
