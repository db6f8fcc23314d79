#pragma once

// Synthetic ground-truth oracle: ray-cast analytic scenes (planes, spheres,
// axis-aligned boxes) to depth and procedurally textured color along scripted
// trajectories, with an optional sensor noise model.

#include "rgbd_atlas/core.hpp"

#include <variant>

namespace rgbd::synth {

struct Plane {
  Vec3 point;
  Vec3 normal;            // unit
  double half_extent = 0;  // square patch half-side for sampling; 0 = infinite
};
struct Sphere {
  Vec3 center;
  double radius = 0;
};
struct Box {
  Vec3 min, max;  // rays starting inside hit interior walls
};

using Primitive = std::variant<Plane, Sphere, Box>;

struct Scene {
  std::vector<Primitive> primitives;
  double checker_period = 0.25;  // meters
  uint64_t texture_seed = 1;

  void validate() const;
};

struct NoiseModel {
  double depth_sigma = 0.01;   // fraction of depth
  double dropout_rate = 0.02;  // fraction of pixels
  uint64_t seed = 0;
};

/// Nearest positive ray hit; returns t or +inf on miss.
double raycast(const Scene& scene, const Vec3& origin, const Vec3& dir, Vec3* normal = nullptr);

/// Per-pixel ray cast; depth = camera-z in millimeters, miss or >65.535 m
/// marked invalid (0). pose maps camera to world.
DepthImage render_depth(const Scene& scene, const Pose& pose, const CameraIntrinsics& k);

/// Lambertian procedural checker texture sampled at the hit point; misses are
/// black.
ColorImage render_color(const Scene& scene, const Pose& pose, const CameraIntrinsics& k);

/// Texture value at a world-space surface point (viewpoint independent).
void texture_at(const Scene& scene, const Vec3& p, uint8_t rgb[3]);

/// Multiplicative Gaussian noise + dropout, counter-based per-pixel streams so
/// the result only depends on (model.seed, frame_index, pixel).
DepthImage apply_noise(const DepthImage& d, const NoiseModel& model, int frame_index);

/// Stratified uniform surface samples, about `density` points per square
/// meter, deterministic for a fixed seed.
PointCloud sample_scene_cloud(const Scene& scene, double density, uint64_t seed = 7);

enum class TrajectoryKind { corridor_loop, orbit, teleport_gap };

struct TrajectoryParams {
  double extent = 3.0;   // loop half-extent / orbit radius, meters
  double jump = 5.0;     // teleport distance, meters
  double height = 0.0;   // camera height (y)
};

struct TimedPose {
  double timestamp = 0;
  Pose pose;  // camera to world
};

/// Scripted camera paths at 30 Hz. corridor_loop returns to within 0.01 m of
/// its start; teleport_gap contains exactly one discontinuity of params.jump.
std::vector<TimedPose> make_trajectory(TrajectoryKind kind, int n_frames,
                                       const TrajectoryParams& params = {});

/// Rectangular room with interior clutter, sized to enclose trajectories of
/// the given extent. The default scene for end-to-end runs.
Scene make_room_scene(double extent = 3.0);

/// Two perpendicular walls plus floor; the ICP recovery test scene.
Scene make_corner_scene();

}  // namespace rgbd::synth
