#include "rgbd_atlas/core.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace rgbd;

namespace {

Pose random_pose(std::mt19937_64& rng, double max_angle = 2.5, double max_trans = 5.0) {
  std::uniform_real_distribution<double> u(-1, 1);
  Vec3 axis(u(rng), u(rng), u(rng));
  while (axis.norm() < 1e-6) axis = Vec3(u(rng), u(rng), u(rng));
  double angle = std::abs(u(rng)) * max_angle;
  Quat q(Eigen::AngleAxisd(angle, axis.normalized()));
  return Pose(q, Vec3(u(rng), u(rng), u(rng)) * max_trans);
}

double pose_diff(const Pose& a, const Pose& b) {
  return (a.inverse() * b).translation().norm() + (a.inverse() * b).rotation_angle();
}

}  // namespace

TEST_CASE("pose compose identity and inverse") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    Pose p = random_pose(rng);
    CHECK(pose_diff(Pose::identity() * p, p) < 1e-9);
    CHECK(pose_diff(p * Pose::identity(), p) < 1e-9);
    Pose id = p * p.inverse();
    CHECK(id.rotation_angle() < 1e-9);
    CHECK(id.translation().norm() < 1e-9);
    CHECK(std::abs(p.rotation().norm() - 1.0) < 1e-9);
  }
}

TEST_CASE("pose compose matches 4x4 matrix multiplication") {
  // (Rz90, t=(1,0,0)) composed with itself -> (Rz180, t=(1,1,0)).
  Quat rz90(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  Pose p(rz90, Vec3(1, 0, 0));
  Pose q = p * p;
  CHECK((q.translation() - Vec3(1, 1, 0)).norm() < 1e-12);
  Quat rz180(Eigen::AngleAxisd(M_PI, Vec3::UnitZ()));
  CHECK(std::abs(std::abs(q.rotation().dot(rz180)) - 1.0) < 1e-12);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng);
    Mat4 oracle = a.matrix() * b.matrix();
    CHECK(((a * b).matrix() - oracle).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pose compose is associative") {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    Pose a = random_pose(rng), b = random_pose(rng), c = random_pose(rng);
    CHECK(pose_diff((a * b) * c, a * (b * c)) < 1e-9);
  }
}

TEST_CASE("se3 exp basics") {
  CHECK(pose_diff(se3_exp(Vec6::Zero()), Pose::identity()) < 1e-12);

  Vec6 xi;
  xi << 0, 0, M_PI / 2, 0, 0, 0;
  Pose p = se3_exp(xi);
  CHECK(p.translation().norm() < 1e-12);
  Quat rz90(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  CHECK(std::abs(std::abs(p.rotation().dot(rz90)) - 1.0) < 1e-12);
}

TEST_CASE("se3 exp/log round trip") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi[j] = u(rng);
    xi.head<3>().normalize();  // |omega| = 1
    Vec6 back = se3_log(se3_exp(xi));
    CHECK((back - xi).norm() < 1e-9);
  }
  // Round trip the other way from random poses.
  for (int i = 0; i < 50; ++i) {
    Pose p = random_pose(rng);
    CHECK(pose_diff(se3_exp(se3_log(p)), p) < 1e-9);
  }
}

TEST_CASE("se3 log near pi throws") {
  Quat q(Eigen::AngleAxisd(M_PI - 1e-9, Vec3::UnitX()));
  CHECK_THROWS_AS(se3_log(Pose(q, Vec3::Zero())), std::domain_error);
}

TEST_CASE("se3 left jacobian matches finite differences") {
  // exp(xi + d) ~ exp(Jl(xi) d) * exp(xi)
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi[j] = u(rng);
    Mat6 jl = se3_left_jacobian(xi);
    Pose base = se3_exp(xi);
    for (int col = 0; col < 6; ++col) {
      Vec6 dp = Vec6::Zero(), dm = Vec6::Zero();
      dp[col] = h;
      dm[col] = -h;
      Vec6 num = (se3_log(se3_exp(xi + dp) * base.inverse()) -
                  se3_log(se3_exp(xi + dm) * base.inverse())) /
                 (2 * h);
      CHECK((num - jl.col(col)).norm() < 1e-5 * std::max(1.0, jl.col(col).norm()));
    }
  }
}

TEST_CASE("se3 adjoint identity") {
  // Ad(p) xi satisfies p * exp(xi) * p^-1 = exp(Ad(p) xi).
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 20; ++i) {
    Pose p = random_pose(rng, 1.0, 2.0);
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi[j] = 0.3 * u(rng);
    Pose lhs = p * se3_exp(xi) * p.inverse();
    Pose rhs = se3_exp(se3_adjoint(p) * xi);
    CHECK(pose_diff(lhs, rhs) < 1e-9);
  }
}

TEST_CASE("unproject basics") {
  CameraIntrinsics k{100, 100, 2, 2, 4, 4};

  DepthImage empty(4, 4, 0);
  CHECK(unproject(empty, k).points.empty());

  DepthImage single(4, 4, 0);
  single.at(2, 2) = 1000;
  PointCloud c = unproject(single, k);
  REQUIRE(c.points.size() == 1);
  CHECK((c.points[0] - Vec3(0, 0, 1)).norm() < 1e-12);
}

TEST_CASE("unproject constant plane with stride") {
  CameraIntrinsics k{50, 50, 2, 2, 4, 4};
  DepthImage d(4, 4, 2000);
  PointCloud c = unproject(d, k, 2);
  REQUIRE(c.points.size() == 4);
  // Pixels (0,0), (2,0), (0,2), (2,2) at z = 2 m: x = z*(u-cx)/fx.
  auto expect = [&](int u, int v) { return Vec3(2.0 * (u - 2) / 50, 2.0 * (v - 2) / 50, 2.0); };
  std::vector<Vec3> want = {expect(0, 0), expect(2, 0), expect(0, 2), expect(2, 2)};
  for (const Vec3& w : want) {
    double best = 1e9;
    for (const Vec3& p : c.points) best = std::min(best, (p - w).norm());
    CHECK(best < 1e-12);
  }
}

TEST_CASE("unproject then project is identity") {
  CameraIntrinsics k{80, 80, 32, 32, 64, 64};
  DepthImage d(64, 64, 0);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> depth_mm(400, 5000);
  for (auto& v : d.data) v = uint16_t(depth_mm(rng));
  PointCloud c = unproject(d, k, 1);
  REQUIRE(c.points.size() == d.data.size());
  size_t i = 0;
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u, ++i) {
      const Vec3& p = c.points[i];
      double pu = p.x() / p.z() * k.fx + k.cx;
      double pv = p.y() / p.z() * k.fy + k.cy;
      CHECK(std::abs(pu - u) < 0.5);
      CHECK(std::abs(pv - v) < 0.5);
    }
}

TEST_CASE("normals on fronto-parallel plane") {
  CameraIntrinsics k{60, 60, 16, 16, 32, 32};
  DepthImage d(32, 32, 1500);
  auto normals = estimate_normals(d, k);
  for (int v = 1; v < 31; ++v)
    for (int u = 1; u < 31; ++u) {
      const Vec3& n = normals[size_t(v) * 32 + u];
      REQUIRE(n.norm() > 0.5);
      CHECK((n - Vec3(0, 0, -1)).norm() < 1e-6);
    }
}

TEST_CASE("normals on tilted plane") {
  // Plane x - z + 2 = 0 (45 degrees about y): z = 2 / (1 - (u-cx)/fx).
  CameraIntrinsics k{200, 200, 32, 32, 64, 64};
  DepthImage d(64, 64, 0);
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u) {
      double z = 2.0 / (1.0 - (u - k.cx) / k.fx);
      d.at(u, v) = uint16_t(std::lround(z * 1000));
    }
  Vec3 analytic = Vec3(1, 0, -1).normalized();
  auto normals = estimate_normals(d, k);
  for (int v = 5; v < 59; ++v)
    for (int u = 5; u < 59; ++u) {
      const Vec3& n = normals[size_t(v) * 64 + u];
      REQUIRE(n.norm() > 0.5);
      double angle = std::acos(std::clamp(n.dot(analytic), -1.0, 1.0)) * 180 / M_PI;
      CHECK(angle < 1.0);
    }
}

TEST_CASE("normals invalid next to holes") {
  CameraIntrinsics k{60, 60, 16, 16, 32, 32};
  DepthImage d(32, 32, 1500);
  d.at(10, 10) = 0;
  auto normals = estimate_normals(d, k);
  CHECK(normals[size_t(10) * 32 + 11].norm() == 0);
  CHECK(normals[size_t(10) * 32 + 9].norm() == 0);
  CHECK(normals[size_t(9) * 32 + 10].norm() == 0);
  CHECK(normals[size_t(11) * 32 + 10].norm() == 0);
  CHECK(normals[size_t(10) * 32 + 10].norm() == 0);
}

TEST_CASE("umeyama identity and exact recovery") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> src;
  for (int i = 0; i < 4; ++i) src.emplace_back(u(rng), u(rng), u(rng));

  Pose id = umeyama_align(src, src);
  CHECK(id.rotation_angle() < 1e-9);
  CHECK(id.translation().norm() < 1e-9);

  Quat rz90(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  Pose t(rz90, Vec3(1, 2, 3));
  std::vector<Vec3> dst;
  for (const Vec3& p : src) dst.push_back(t * p);
  Pose rec = umeyama_align(src, dst);
  CHECK(pose_diff(rec, t) < 1e-9);
}

TEST_CASE("umeyama degenerate input") {
  std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(umeyama_align(two, two), std::invalid_argument);
  std::vector<Vec3> collinear = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  CHECK_THROWS_AS(umeyama_align(collinear, collinear), std::invalid_argument);
}

TEST_CASE("umeyama is locally optimal") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 10; ++i) {
    src.emplace_back(u(rng), u(rng), u(rng));
    dst.emplace_back(u(rng), u(rng), u(rng));  // unrelated: nonzero residual
  }
  Pose best = umeyama_align(src, dst);
  auto residual = [&](const Pose& p) {
    double s = 0;
    for (size_t i = 0; i < src.size(); ++i) s += (p * src[i] - dst[i]).squaredNorm();
    return s;
  };
  double base = residual(best);
  for (int i = 0; i < 100; ++i) {
    Vec6 xi;
    for (int j = 0; j < 6; ++j) xi[j] = 0.05 * u(rng);
    CHECK(residual(se3_exp(xi) * best) >= base - 1e-12);
  }
}

TEST_CASE("point cloud transform and append") {
  PointCloud c;
  c.points = {{1, 0, 0}, {0, 1, 0}};
  c.normals = {{0, 0, 1}, {0, 0, 1}};
  c.view_ids = {0, 1};
  Quat rz90(Eigen::AngleAxisd(M_PI / 2, Vec3::UnitZ()));
  Pose t(rz90, Vec3(0, 0, 5));
  PointCloud moved = c.transformed(t);
  CHECK((moved.points[0] - Vec3(0, 1, 5)).norm() < 1e-12);
  CHECK((moved.normals[0] - Vec3(0, 0, 1)).norm() < 1e-12);  // normals rotate only
  PointCloud sum = c;
  sum.append(moved);
  CHECK(sum.points.size() == 4);
  CHECK(sum.normals.size() == 4);
  CHECK(sum.view_ids.size() == 4);
}
