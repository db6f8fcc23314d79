#pragma once

// Core geometry: SE(3) poses, pinhole cameras, depth rasters and point
// clouds shared by every other module.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rgbd {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Quat = Eigen::Quaterniond;

/// Rigid transform in SE(3), stored as unit quaternion + translation.
/// The quaternion is kept canonical (w >= 0) so equal transforms compare equal.
class Pose {
 public:
  Pose() : q_(Quat::Identity()), t_(Vec3::Zero()) {}
  Pose(const Quat& q, const Vec3& t) : q_(q), t_(t) { canonicalize(); }

  static Pose identity() { return Pose(); }
  static Pose from_matrix(const Mat4& m) {
    return Pose(Quat(Mat3(m.block<3, 3>(0, 0))), m.block<3, 1>(0, 3));
  }

  const Quat& rotation() const { return q_; }
  const Vec3& translation() const { return t_; }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.block<3, 3>(0, 0) = q_.toRotationMatrix();
    m.block<3, 1>(0, 3) = t_;
    return m;
  }

  Vec3 apply(const Vec3& p) const { return q_ * p + t_; }
  Vec3 operator*(const Vec3& p) const { return apply(p); }

  Pose inverse() const {
    Quat qi = q_.conjugate();
    return Pose(qi, -(qi * t_));
  }

  /// this after other: (a*b).apply(p) == a.apply(b.apply(p)).
  Pose operator*(const Pose& b) const { return Pose(q_ * b.q_, q_ * b.t_ + t_); }

  double rotation_angle() const {
    double w = std::min(1.0, std::abs(q_.w()));
    return 2.0 * std::acos(w);
  }

 private:
  void canonicalize() {
    q_.normalize();
    if (q_.w() < 0) q_.coeffs() = -q_.coeffs();
  }

  Quat q_;
  Vec3 t_;
};

inline Pose se3_compose(const Pose& a, const Pose& b) { return a * b; }

Mat3 skew(const Vec3& v);

/// SO(3) exponential / log and the left Jacobian, closed-form Rodrigues.
Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& r);
Mat3 so3_left_jacobian(const Vec3& omega);

/// SE(3) exponential of xi = [omega; v] (rotation block first).
Pose se3_exp(const Vec6& xi);

/// Inverse of se3_exp. Throws std::domain_error for rotation angle >= pi - 1e-6.
Vec6 se3_log(const Pose& p);

/// 6x6 adjoint of p in the [omega; v] ordering.
Mat6 se3_adjoint(const Pose& p);

/// Left Jacobian of SE(3) at xi (Barfoot's closed form with the Q block).
Mat6 se3_left_jacobian(const Vec6& xi);

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const {
    if (!(fx > 0 && fy > 0) || !(cx > 0 && cx < width) || !(cy > 0 && cy < height))
      throw std::invalid_argument("invalid camera intrinsics");
  }
};

/// Transform from the color-camera frame to the depth/infrared-camera frame.
struct RigExtrinsics {
  Pose color_to_depth;
};

/// 16-bit depth raster, millimeters, 0 marks an invalid sample.
struct DepthImage {
  int width = 0, height = 0;
  std::vector<uint16_t> data;

  DepthImage() = default;
  DepthImage(int w, int h, uint16_t fill = 0) : width(w), height(h), data(size_t(w) * h, fill) {}

  uint16_t at(int u, int v) const { return data[size_t(v) * width + u]; }
  uint16_t& at(int u, int v) { return data[size_t(v) * width + u]; }
  bool valid(int u, int v) const { return at(u, v) != 0; }
};

/// 8-bit interleaved RGB raster.
struct ColorImage {
  int width = 0, height = 0;
  std::vector<uint8_t> data;  // 3 bytes per pixel, row-major

  ColorImage() = default;
  ColorImage(int w, int h) : width(w), height(h), data(size_t(3) * w * h, 0) {}

  const uint8_t* px(int u, int v) const { return &data[3 * (size_t(v) * width + u)]; }
  uint8_t* px(int u, int v) { return &data[3 * (size_t(v) * width + u)]; }
};

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;    // empty or same length as points
  std::vector<int> view_ids;    // empty or same length as points

  size_t size() const { return points.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_view_ids() const { return !view_ids.empty(); }

  void append(const PointCloud& other);
  PointCloud transformed(const Pose& p) const;
};

/// Back-projects valid pixels on the stride grid to camera-frame points
/// (meters). Depth millimeters are converted here and nowhere else.
PointCloud unproject(const DepthImage& d, const CameraIntrinsics& k, int stride = 1);

/// Per-pixel surface normals from central differences of the unprojected
/// surface, oriented toward the camera. Pixels with any invalid neighbor get
/// a zero vector.
std::vector<Vec3> estimate_normals(const DepthImage& d, const CameraIntrinsics& k);

/// Like unproject but also returns the matching camera-oriented normals,
/// keeping only pixels where the normal is defined.
PointCloud unproject_with_normals(const DepthImage& d, const CameraIntrinsics& k, int stride = 1);

/// Rigid (no scale) least-squares alignment src -> dst via cross-covariance
/// SVD with the det(V U^T) reflection guard. Throws std::invalid_argument on
/// fewer than 3 points or rank-deficient (collinear) input.
Pose umeyama_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

}  // namespace rgbd
