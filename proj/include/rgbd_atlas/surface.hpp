#pragma once

// Surface reconstruction: K-means partitioning of the fusion cloud, per
// segment block-hashed TSDF integration, marching-cubes extraction and mesh
// merging.

#include "rgbd_atlas/core.hpp"

#include <unordered_map>

namespace rgbd {

constexpr int kTsdfBlockSize = 16;  // voxels per block side

struct TsdfConfig {
  double voxel_size = 0.02;       // meters
  double truncation_factor = 4;   // truncation = factor * voxel_size
  double weight_cap = 100;

  double truncation() const { return truncation_factor * voxel_size; }
};

struct TsdfVoxel {
  float tsdf = 1.f;   // clamped to [-1, 1]
  float weight = 0.f;
};

struct BlockCoord {
  int x = 0, y = 0, z = 0;
  bool operator==(const BlockCoord&) const = default;
};

struct BlockCoordHash {
  size_t operator()(const BlockCoord& c) const {
    return size_t(c.x) * 73856093u ^ size_t(c.y) * 19349669u ^ size_t(c.z) * 83492791u;
  }
};

class TsdfVolume {
 public:
  explicit TsdfVolume(const TsdfConfig& cfg = {}) : cfg_(cfg) {}

  const TsdfConfig& config() const { return cfg_; }
  size_t num_blocks() const { return blocks_.size(); }

  /// Voxel at global voxel coordinate, or nullptr when unallocated.
  const TsdfVoxel* voxel(int x, int y, int z) const;
  TsdfVoxel& voxel_alloc(int x, int y, int z);

  /// Sets a voxel directly (used for analytic volumes in tests).
  void set_voxel(int x, int y, int z, float tsdf, float weight);

  const std::unordered_map<BlockCoord, std::vector<TsdfVoxel>, BlockCoordHash>& blocks() const {
    return blocks_;
  }

  Vec3 voxel_center(int x, int y, int z) const {
    return Vec3((x + 0.5) * cfg_.voxel_size, (y + 0.5) * cfg_.voxel_size,
                (z + 0.5) * cfg_.voxel_size);
  }

 private:
  TsdfConfig cfg_;
  std::unordered_map<BlockCoord, std::vector<TsdfVoxel>, BlockCoordHash> blocks_;
};

/// Projective TSDF update. Blocks are allocated from the truncation band
/// around each depth sample, so the update set of a frame is independent of
/// integration order.
void tsdf_integrate(TsdfVolume& vol, const DepthImage& depth, const CameraIntrinsics& k,
                    const Pose& pose);

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Eigen::Vector3i> triangles;
  std::vector<Vec3> normals;  // per vertex

  /// Signed volume enclosed by the (consistently wound) surface.
  double enclosed_volume() const;
};

/// Marching cubes over voxels whose 8 corners all carry weight, with a one
/// voxel overlap across block borders so surfaces are seam-free.
Mesh extract_mesh(const TsdfVolume& vol);

struct Segment {
  Vec3 centroid = Vec3::Zero();
  std::vector<int> view_ids;  // contributing views, sorted unique
  Vec3 aabb_min = Vec3::Zero(), aabb_max = Vec3::Zero();
};

/// k = ceil(N / point_budget) segments via seeded k-means++ and Lloyd
/// iterations; requires per-point view ids.
std::vector<Segment> kmeans_partition(const PointCloud& cloud, int point_budget = 500000,
                                      uint64_t seed = 42);

struct FuseConfig {
  TsdfConfig tsdf;
  int point_budget = 500000;
  uint64_t seed = 42;
};

/// Per-segment TSDF fusion restricted to the segment bounds plus a truncation
/// margin, meshes concatenated with grid-snap vertex deduplication.
Mesh fuse_segments(const std::vector<Segment>& segments, const std::vector<DepthImage>& frames,
                   const CameraIntrinsics& k, const std::vector<Pose>& poses,
                   const FuseConfig& cfg = {});

/// Removes duplicate vertices snapped to a grid of the given cell size.
Mesh deduplicate_vertices(const Mesh& mesh, double snap);

}  // namespace rgbd
