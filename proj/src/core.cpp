#include "rgbd_atlas/core.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace rgbd {

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Mat3 so3_exp(const Vec3& omega) {
  double theta = omega.norm();
  Mat3 w = skew(omega);
  if (theta < 1e-10) return Mat3::Identity() + w + 0.5 * w * w;
  return Mat3::Identity() + std::sin(theta) / theta * w +
         (1.0 - std::cos(theta)) / (theta * theta) * w * w;
}

Vec3 so3_log(const Mat3& r) {
  Quat q(r);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  double sin_half = q.vec().norm();
  double theta = 2.0 * std::atan2(sin_half, q.w());
  if (sin_half < 1e-12) return 2.0 * q.vec();
  return q.vec() * (theta / sin_half);
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  double theta = omega.norm();
  Mat3 w = skew(omega);
  if (theta < 1e-6) return Mat3::Identity() + 0.5 * w + w * w / 6.0;
  double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * w +
         (theta - std::sin(theta)) / (t2 * theta) * w * w;
}

Pose se3_exp(const Vec6& xi) {
  Vec3 omega = xi.head<3>();
  Vec3 v = xi.tail<3>();
  Mat3 r = so3_exp(omega);
  Vec3 t = so3_left_jacobian(omega) * v;
  return Pose(Quat(r), t);
}

Vec6 se3_log(const Pose& p) {
  double angle = p.rotation_angle();
  if (angle >= M_PI - 1e-6) throw std::domain_error("se3_log: rotation angle too close to pi");
  Vec3 omega = so3_log(p.rotation().toRotationMatrix());
  Vec3 v = so3_left_jacobian(omega).inverse() * p.translation();
  Vec6 xi;
  xi << omega, v;
  return xi;
}

Mat6 se3_adjoint(const Pose& p) {
  Mat3 r = p.rotation().toRotationMatrix();
  Mat6 ad = Mat6::Zero();
  ad.block<3, 3>(0, 0) = r;
  ad.block<3, 3>(3, 3) = r;
  ad.block<3, 3>(3, 0) = skew(p.translation()) * r;
  return ad;
}

// J_l(xi) = integral_0^1 Ad(exp(s*xi)) ds. The integrand is entire in s, so
// composite Simpson with 256 panels evaluates it to ~1e-12 for |omega| < pi.
Mat6 se3_left_jacobian(const Vec6& xi) {
  constexpr int kPanels = 256;
  const double h = 1.0 / kPanels;
  Mat6 acc = Mat6::Zero();
  auto ad_at = [&](double s) { return se3_adjoint(se3_exp(Vec6(s * xi))); };
  for (int i = 0; i < kPanels; ++i) {
    double a = i * h;
    acc += ad_at(a) + 4.0 * ad_at(a + 0.5 * h) + ad_at(a + h);
  }
  return acc * (h / 6.0);
}

void PointCloud::append(const PointCloud& other) {
  points.insert(points.end(), other.points.begin(), other.points.end());
  normals.insert(normals.end(), other.normals.begin(), other.normals.end());
  view_ids.insert(view_ids.end(), other.view_ids.begin(), other.view_ids.end());
}

PointCloud PointCloud::transformed(const Pose& p) const {
  PointCloud out;
  out.points.reserve(points.size());
  for (const auto& pt : points) out.points.push_back(p * pt);
  out.normals.reserve(normals.size());
  Mat3 r = p.rotation().toRotationMatrix();
  for (const auto& n : normals) out.normals.push_back(r * n);
  out.view_ids = view_ids;
  return out;
}

PointCloud unproject(const DepthImage& d, const CameraIntrinsics& k, int stride) {
  if (d.width != k.width || d.height != k.height)
    throw std::invalid_argument("unproject: depth dimensions do not match intrinsics");
  PointCloud out;
  for (int v = 0; v < d.height; v += stride) {
    for (int u = 0; u < d.width; u += stride) {
      uint16_t raw = d.at(u, v);
      if (raw == 0) continue;
      double z = raw * 1e-3;
      out.points.emplace_back(z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z);
    }
  }
  return out;
}

static inline Vec3 pixel_point(const DepthImage& d, const CameraIntrinsics& k, int u, int v) {
  double z = d.at(u, v) * 1e-3;
  return Vec3(z * (u - k.cx) / k.fx, z * (v - k.cy) / k.fy, z);
}

std::vector<Vec3> estimate_normals(const DepthImage& d, const CameraIntrinsics& k) {
  if (d.width != k.width || d.height != k.height)
    throw std::invalid_argument("estimate_normals: depth dimensions do not match intrinsics");
  std::vector<Vec3> normals(size_t(d.width) * d.height, Vec3::Zero());
  for (int v = 1; v + 1 < d.height; ++v) {
    for (int u = 1; u + 1 < d.width; ++u) {
      if (!d.valid(u, v) || !d.valid(u - 1, v) || !d.valid(u + 1, v) || !d.valid(u, v - 1) ||
          !d.valid(u, v + 1))
        continue;
      Vec3 du = pixel_point(d, k, u + 1, v) - pixel_point(d, k, u - 1, v);
      Vec3 dv = pixel_point(d, k, u, v + 1) - pixel_point(d, k, u, v - 1);
      Vec3 n = du.cross(dv);
      double len = n.norm();
      if (len < 1e-12) continue;
      n /= len;
      if (n.dot(pixel_point(d, k, u, v)) > 0) n = -n;
      normals[size_t(v) * d.width + u] = n;
    }
  }
  return normals;
}

PointCloud unproject_with_normals(const DepthImage& d, const CameraIntrinsics& k, int stride) {
  auto normals = estimate_normals(d, k);
  PointCloud out;
  for (int v = 0; v < d.height; v += stride) {
    for (int u = 0; u < d.width; u += stride) {
      const Vec3& n = normals[size_t(v) * d.width + u];
      if (!d.valid(u, v) || n.isZero()) continue;
      out.points.push_back(pixel_point(d, k, u, v));
      out.normals.push_back(n);
    }
  }
  return out;
}

Pose umeyama_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("umeyama_align: size mismatch");
  if (src.size() < 3) throw std::invalid_argument("umeyama_align: need at least 3 points");
  const size_t n = src.size();
  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= double(n);
  mu_d /= double(n);
  Mat3 sigma = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) sigma += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
  sigma /= double(n);
  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3& sv = svd.singularValues();
  if (sv(1) < 1e-12 * std::max(1.0, sv(0)))
    throw std::invalid_argument("umeyama_align: degenerate (collinear) input");
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) s(2, 2) = -1;
  Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  return Pose(Quat(r), mu_d - r * mu_s);
}

}  // namespace rgbd
