#include "rgbd_atlas/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rgbd::synth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double to_unit(uint64_t h) { return double(h >> 11) * 0x1.0p-53; }

double hit(const Plane& pl, const Vec3& o, const Vec3& d, Vec3* n) {
  double denom = d.dot(pl.normal);
  if (std::abs(denom) < 1e-12) return kInf;
  double t = (pl.point - o).dot(pl.normal) / denom;
  if (t <= 1e-9) return kInf;
  if (n) *n = denom < 0 ? pl.normal : Vec3(-pl.normal);
  return t;
}

double hit(const Sphere& s, const Vec3& o, const Vec3& d, Vec3* n) {
  Vec3 oc = o - s.center;
  double a = d.squaredNorm();
  double b = 2.0 * oc.dot(d);
  double c = oc.squaredNorm() - s.radius * s.radius;
  double disc = b * b - 4 * a * c;
  if (disc < 0) return kInf;
  double sq = std::sqrt(disc);
  double t = (-b - sq) / (2 * a);
  if (t <= 1e-9) t = (-b + sq) / (2 * a);
  if (t <= 1e-9) return kInf;
  if (n) *n = ((o + t * d) - s.center).normalized();
  return t;
}

double hit(const Box& bx, const Vec3& o, const Vec3& d, Vec3* n) {
  double tmin = -kInf, tmax = kInf;
  int axis_min = -1, axis_max = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-12) {
      if (o[a] < bx.min[a] || o[a] > bx.max[a]) return kInf;
      continue;
    }
    double t0 = (bx.min[a] - o[a]) / d[a];
    double t1 = (bx.max[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > tmin) {
      tmin = t0;
      axis_min = a;
    }
    if (t1 < tmax) {
      tmax = t1;
      axis_max = a;
    }
  }
  if (tmin > tmax) return kInf;
  double t;
  int axis;
  if (tmin > 1e-9) {
    t = tmin;
    axis = axis_min;
  } else if (tmax > 1e-9) {
    t = tmax;  // ray origin inside: interior wall
    axis = axis_max;
  } else {
    return kInf;
  }
  if (n) {
    Vec3 nn = Vec3::Zero();
    nn[axis] = d[axis] > 0 ? -1.0 : 1.0;  // faces the ray
    *n = nn;
  }
  return t;
}

}  // namespace

void Scene::validate() const {
  if (primitives.empty()) throw std::invalid_argument("scene: needs at least one primitive");
  for (const auto& p : primitives) {
    if (auto* s = std::get_if<Sphere>(&p); s && s->radius <= 0)
      throw std::invalid_argument("scene: sphere radius must be positive");
    if (auto* b = std::get_if<Box>(&p); b && (b->min.array() >= b->max.array()).any())
      throw std::invalid_argument("scene: box min must be below max per axis");
  }
}

double raycast(const Scene& scene, const Vec3& o, const Vec3& d, Vec3* normal) {
  double best = kInf;
  for (const auto& prim : scene.primitives) {
    Vec3 n;
    double t = std::visit([&](const auto& p) { return hit(p, o, d, &n); }, prim);
    if (t < best) {
      best = t;
      if (normal) *normal = n;
    }
  }
  return best;
}

DepthImage render_depth(const Scene& scene, const Pose& pose, const CameraIntrinsics& k) {
  scene.validate();
  DepthImage out(k.width, k.height, 0);
  Mat3 r = pose.rotation().toRotationMatrix();
  Vec3 o = pose.translation();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // Camera-frame direction with z = 1, so the ray parameter is camera-z.
      Vec3 dir = r * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double t = raycast(scene, o, dir, nullptr);
      if (!std::isfinite(t)) continue;
      long mm = std::lround(t * 1000.0);
      if (mm < 1 || mm > 65535) continue;
      out.at(u, v) = uint16_t(mm);
    }
  }
  return out;
}

void texture_at(const Scene& scene, const Vec3& p, uint8_t rgb[3]) {
  const double period = scene.checker_period;
  long cx = long(std::floor(p.x() / period));
  long cy = long(std::floor(p.y() / period));
  long cz = long(std::floor(p.z() / period));
  int parity = int(((cx + cy + cz) % 2 + 2) % 2);
  uint64_t h = splitmix64(scene.texture_seed ^ splitmix64(uint64_t(cx) * 0x100000001b3ull ^
                                                          splitmix64(uint64_t(cy)) ^
                                                          splitmix64(uint64_t(cz) << 1)));
  // Per-cell luminance offset (correlated across channels) plus a finer
  // incommensurate noise grid: the fine grid supplies many distinctive blob
  // features inside each cell instead of one ambiguous corner per cell.
  int lum = int((h >> 24) & 0x7F) - 64;
  const double fine = period * 0.37;
  uint64_t hf = splitmix64(scene.texture_seed ^ 0x9e3779b97f4a7c15ull ^
                           splitmix64(uint64_t(long(std::floor(p.x() / fine))) * 0x85ebca6bull ^
                                      splitmix64(uint64_t(long(std::floor(p.y() / fine))) << 1) ^
                                      splitmix64(uint64_t(long(std::floor(p.z() / fine))) << 2)));
  int fine_lum = int((hf >> 16) & 0x3F) - 32;
  for (int ch = 0; ch < 3; ++ch) {
    int base = parity ? 180 : 70;
    int tint = int((h >> (ch * 8)) & 0x1F) - 16;
    rgb[ch] = uint8_t(std::clamp(base + lum + fine_lum + tint, 0, 255));
  }
}

ColorImage render_color(const Scene& scene, const Pose& pose, const CameraIntrinsics& k) {
  scene.validate();
  ColorImage out(k.width, k.height);
  Mat3 r = pose.rotation().toRotationMatrix();
  Vec3 o = pose.translation();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      Vec3 dir = r * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      double t = raycast(scene, o, dir, nullptr);
      if (!std::isfinite(t)) continue;
      texture_at(scene, o + t * dir, out.px(u, v));
    }
  }
  return out;
}

DepthImage apply_noise(const DepthImage& d, const NoiseModel& model, int frame_index) {
  if (model.depth_sigma < 0 || model.dropout_rate < 0 || model.dropout_rate >= 1)
    throw std::invalid_argument("noise model: rates out of range");
  DepthImage out = d;
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (!d.data[i]) continue;
    uint64_t base = splitmix64(model.seed ^ splitmix64(uint64_t(frame_index) << 32 ^ i));
    if (to_unit(base) < model.dropout_rate) {
      out.data[i] = 0;
      continue;
    }
    double u1 = to_unit(splitmix64(base ^ 0x1234567));
    double u2 = to_unit(splitmix64(base ^ 0x89abcde));
    u1 = std::max(u1, 1e-12);
    double g = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    double val = double(d.data[i]) * (1.0 + model.depth_sigma * g);
    out.data[i] = uint16_t(std::clamp(std::lround(val), 1l, 65535l));
  }
  return out;
}

namespace {

// Exactly n jittered points on a rectangle spanned by (origin, eu, ev).
void sample_rect(const Vec3& origin, const Vec3& eu, const Vec3& ev, int n, uint64_t seed,
                 PointCloud& out) {
  if (n <= 0) return;
  int gu = std::max(1, int(std::floor(std::sqrt(double(n)))));
  int gv = (n + gu - 1) / gu;
  for (int i = 0; i < n; ++i) {
    int iu = i % gu, iv = i / gu;
    uint64_t h = splitmix64(seed ^ (uint64_t(i) * 0x9e3779b9ull + 17));
    double ju = to_unit(h), jv = to_unit(splitmix64(h));
    double s = (iu + ju) / gu;
    double t = (iv + jv) / gv;
    out.points.push_back(origin + s * eu + t * ev);
  }
}

}  // namespace

PointCloud sample_scene_cloud(const Scene& scene, double density, uint64_t seed) {
  if (density <= 0) throw std::invalid_argument("sample_scene_cloud: density must be positive");
  scene.validate();
  PointCloud out;
  uint64_t s = seed;
  for (const auto& prim : scene.primitives) {
    s = splitmix64(s + 1);
    if (auto* pl = std::get_if<Plane>(&prim)) {
      if (pl->half_extent <= 0) continue;  // unbounded planes are not sampled
      Vec3 n = pl->normal.normalized();
      Vec3 any = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
      Vec3 eu = n.cross(any).normalized() * (2 * pl->half_extent);
      Vec3 ev = n.cross(eu).normalized() * (2 * pl->half_extent);
      double area = 4 * pl->half_extent * pl->half_extent;
      sample_rect(pl->point - 0.5 * eu - 0.5 * ev, eu, ev, int(std::lround(area * density)), s, out);
    } else if (auto* sp = std::get_if<Sphere>(&prim)) {
      int n = int(std::lround(4.0 * M_PI * sp->radius * sp->radius * density));
      // Fibonacci spiral: near-uniform and exactly n points on the surface.
      const double ga = M_PI * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < n; ++i) {
        double y = 1.0 - 2.0 * (i + 0.5) / n;
        double rad = std::sqrt(std::max(0.0, 1.0 - y * y));
        double phi = ga * i;
        out.points.push_back(sp->center +
                             sp->radius * Vec3(rad * std::cos(phi), y, rad * std::sin(phi)));
      }
    } else if (auto* bx = std::get_if<Box>(&prim)) {
      Vec3 e = bx->max - bx->min;
      struct Face {
        Vec3 origin, eu, ev;
      };
      const Face faces[6] = {
          {bx->min, {e.x(), 0, 0}, {0, e.y(), 0}},
          {{bx->min.x(), bx->min.y(), bx->max.z()}, {e.x(), 0, 0}, {0, e.y(), 0}},
          {bx->min, {e.x(), 0, 0}, {0, 0, e.z()}},
          {{bx->min.x(), bx->max.y(), bx->min.z()}, {e.x(), 0, 0}, {0, 0, e.z()}},
          {bx->min, {0, e.y(), 0}, {0, 0, e.z()}},
          {{bx->max.x(), bx->min.y(), bx->min.z()}, {0, e.y(), 0}, {0, 0, e.z()}},
      };
      for (const auto& f : faces) {
        s = splitmix64(s + 3);
        double area = f.eu.norm() * f.ev.norm();
        sample_rect(f.origin, f.eu, f.ev, int(std::lround(area * density)), s, out);
      }
    }
  }
  return out;
}

namespace {

Pose look_along(const Vec3& position, const Vec3& forward) {
  Vec3 z = forward.normalized();
  Vec3 up(0, 1, 0);
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = Vec3(1, 0, 0);
  x.normalize();
  Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return Pose(Quat(r), position);
}

}  // namespace

std::vector<TimedPose> make_trajectory(TrajectoryKind kind, int n_frames,
                                       const TrajectoryParams& params) {
  if (n_frames < 2) throw std::invalid_argument("make_trajectory: need at least 2 frames");
  std::vector<TimedPose> out;
  out.reserve(n_frames);
  const double dt = 1.0 / 30.0;
  switch (kind) {
    case TrajectoryKind::corridor_loop: {
      // Two laps of a closed circle in the x-z plane. The camera follows the
      // travel direction with slow pitch and yaw sweeps so floor, ceiling, and
      // the region inside the circle all enter the field of view over a lap.
      // The second lap revisits the first lap's viewpoints, giving loop
      // closure opportunities along the whole circuit, and all sweeps complete
      // whole cycles so the last pose matches the first.
      for (int i = 0; i < n_frames; ++i) {
        double th = 4.0 * M_PI * i / (n_frames - 1);
        double pitch = 0.45 * std::sin(3.0 * th);
        double s = std::sin(th);
        double heading = th + 1.3 * s * s;  // weave toward the circle interior only
        Vec3 pos(params.extent * std::sin(th), params.height, -params.extent * std::cos(th));
        Vec3 fwd(std::cos(pitch) * std::cos(heading), std::sin(pitch),
                 std::cos(pitch) * std::sin(heading));
        out.push_back({i * dt, look_along(pos, fwd)});
      }
      break;
    }
    case TrajectoryKind::orbit: {
      for (int i = 0; i < n_frames; ++i) {
        double th = 2.0 * M_PI * i / n_frames;
        Vec3 pos(params.extent * std::sin(th), params.height, -params.extent * std::cos(th));
        Vec3 center(0, params.height, 0);
        out.push_back({i * dt, look_along(pos, center - pos)});
      }
      break;
    }
    case TrajectoryKind::teleport_gap: {
      // One lap of the corridor circle with an instantaneous teleport at the
      // midpoint that skips ahead along the circle so the position jumps by
      // `jump` meters (chord length). The skip breaks tracking; because the
      // walk still completes a full lap plus the skipped arc, the tail
      // revisits the first segment's starting viewpoints and loop closures
      // can reconnect the two map components. Requires jump < 2 * extent.
      const double skip =
          2.0 * std::asin(std::min(1.0, params.jump / (2.0 * params.extent)));  // radians
      int gap_at = n_frames / 2;
      for (int i = 0; i < n_frames; ++i) {
        double th = 2.0 * M_PI * i / (n_frames - 1) + (i >= gap_at ? skip : 0.0);
        double pitch = 0.45 * std::sin(3.0 * th);
        double s = std::sin(th);
        double heading = th + 1.3 * s * s;
        Vec3 pos(params.extent * std::sin(th), params.height, -params.extent * std::cos(th));
        Vec3 fwd(std::cos(pitch) * std::cos(heading), std::sin(pitch),
                 std::cos(pitch) * std::sin(heading));
        out.push_back({i * dt, look_along(pos, fwd)});
      }
      break;
    }
  }
  return out;
}

Scene make_room_scene(double extent) {
  Scene scene;
  const double e = extent + 1.0;
  scene.primitives.push_back(Box{{-e, -1.5, -e}, {e, 1.5, e}});
  // Freestanding clutter well inside the camera circle of radius `extent`, so
  // scripted paths never hit geometry and every clutter face is observable
  // from some viewpoint on the circle. Positions scale with the room.
  const double c = 0.45 * extent;  // clutter ring radius
  scene.primitives.push_back(Sphere{{c, -0.4, 0.3 * extent}, 0.3});
  scene.primitives.push_back(Box{{-c - 0.12, -1.5, 0.5 * extent - 0.12},
                                 {-c + 0.12, 1.5, 0.5 * extent + 0.12}});
  scene.primitives.push_back(Box{{-0.25 * extent - 0.25, -1.5, -0.6 * extent - 0.2},
                                 {-0.25 * extent + 0.25, -1.0, -0.6 * extent + 0.2}});
  // Floating spheres near each wall, above/below camera height: they anchor
  // the along-wall translation for views that would otherwise only see two
  // orthogonal planes, and serve as revisit landmarks.
  const double w = e - 0.5;
  scene.primitives.push_back(Sphere{{w, 0.9, 0.0}, 0.22});
  scene.primitives.push_back(Sphere{{-w, -0.9, 0.0}, 0.22});
  scene.primitives.push_back(Sphere{{0.0, -0.9, w}, 0.22});
  scene.primitives.push_back(Sphere{{0.0, 0.9, -w}, 0.22});
  const double d = 0.62 * e;
  scene.primitives.push_back(Sphere{{d, -0.9, d}, 0.22});
  scene.primitives.push_back(Sphere{{d, 0.9, -d}, 0.22});
  scene.primitives.push_back(Sphere{{-d, -0.9, -d}, 0.22});
  scene.primitives.push_back(Sphere{{-d, 0.9, d}, 0.22});
  return scene;
}

Scene make_corner_scene() {
  Scene scene;
  scene.primitives.push_back(Plane{{0, 0, 2.5}, {0, 0, -1}, 0});
  scene.primitives.push_back(Plane{{1.8, 0, 0}, {-1, 0, 0}, 0});
  scene.primitives.push_back(Plane{{0, 1.2, 0}, {0, -1, 0}, 0});
  scene.primitives.push_back(Sphere{{0.5, 0.3, 1.8}, 0.35});
  scene.primitives.push_back(Box{{-1.0, 0.4, 1.4}, {-0.3, 1.2, 2.0}});
  return scene;
}

}  // namespace rgbd::synth
