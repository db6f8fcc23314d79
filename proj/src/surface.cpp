#include "rgbd_atlas/surface.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace rgbd {

const TsdfVoxel* TsdfVolume::voxel(int x, int y, int z) const {
  auto div = [](int v) { return v >= 0 ? v / kTsdfBlockSize : (v + 1) / kTsdfBlockSize - 1; };
  BlockCoord bc{div(x), div(y), div(z)};
  auto it = blocks_.find(bc);
  if (it == blocks_.end()) return nullptr;
  int lx = x - bc.x * kTsdfBlockSize, ly = y - bc.y * kTsdfBlockSize, lz = z - bc.z * kTsdfBlockSize;
  return &it->second[(size_t(lz) * kTsdfBlockSize + ly) * kTsdfBlockSize + lx];
}

TsdfVoxel& TsdfVolume::voxel_alloc(int x, int y, int z) {
  auto div = [](int v) { return v >= 0 ? v / kTsdfBlockSize : (v + 1) / kTsdfBlockSize - 1; };
  BlockCoord bc{div(x), div(y), div(z)};
  auto& block = blocks_[bc];
  if (block.empty()) block.resize(size_t(kTsdfBlockSize) * kTsdfBlockSize * kTsdfBlockSize);
  int lx = x - bc.x * kTsdfBlockSize, ly = y - bc.y * kTsdfBlockSize, lz = z - bc.z * kTsdfBlockSize;
  return block[(size_t(lz) * kTsdfBlockSize + ly) * kTsdfBlockSize + lx];
}

void TsdfVolume::set_voxel(int x, int y, int z, float tsdf, float weight) {
  TsdfVoxel& v = voxel_alloc(x, y, z);
  v.tsdf = std::clamp(tsdf, -1.f, 1.f);
  v.weight = weight;
}

namespace {

struct IntegrationBounds {
  bool active = false;
  Vec3 min = Vec3::Zero(), max = Vec3::Zero();
};

void integrate_impl(TsdfVolume& vol, const DepthImage& depth, const CameraIntrinsics& k,
                    const Pose& pose, const IntegrationBounds& bounds) {
  const double voxel = vol.config().voxel_size;
  const double trunc = vol.config().truncation();
  const double block_m = kTsdfBlockSize * voxel;
  const Pose world_to_cam = pose.inverse();

  // Blocks touched by the truncation band along each pixel ray, dilated by
  // two voxels to cover pixel-footprint gaps. The set only depends on this
  // frame, keeping integration order-invariant.
  std::set<std::array<int, 3>> touched;
  auto block_of = [&](const Vec3& p) {
    return std::array<int, 3>{int(std::floor(p.x() / block_m)), int(std::floor(p.y() / block_m)),
                              int(std::floor(p.z() / block_m))};
  };
  const double dilate = 2.0 * voxel;
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      uint16_t raw = depth.at(u, v);
      if (!raw) continue;
      double z = raw * 1e-3;
      Vec3 dir(double(u - k.cx) / k.fx, double(v - k.cy) / k.fy, 1.0);
      const double step = 2.0 * voxel;
      for (double s = z - trunc; s <= z + trunc + 0.5 * step; s += step) {
        Vec3 pw = pose * (dir * std::max(s, 1e-4));
        if (bounds.active &&
            ((pw.array() < bounds.min.array() - dilate).any() ||
             (pw.array() > bounds.max.array() + dilate).any()))
          continue;
        for (int dx = -1; dx <= 1; dx += 2)
          for (int dy = -1; dy <= 1; dy += 2)
            for (int dz = -1; dz <= 1; dz += 2)
              touched.insert(block_of(pw + dilate * Vec3(dx, dy, dz)));
        touched.insert(block_of(pw));
      }
    }
  }

  for (const auto& b : touched) {
    for (int lz = 0; lz < kTsdfBlockSize; ++lz) {
      for (int ly = 0; ly < kTsdfBlockSize; ++ly) {
        for (int lx = 0; lx < kTsdfBlockSize; ++lx) {
          int gx = b[0] * kTsdfBlockSize + lx;
          int gy = b[1] * kTsdfBlockSize + ly;
          int gz = b[2] * kTsdfBlockSize + lz;
          Vec3 pw = vol.voxel_center(gx, gy, gz);
          if (bounds.active && ((pw.array() < bounds.min.array()).any() ||
                                (pw.array() > bounds.max.array()).any()))
            continue;
          Vec3 pc = world_to_cam * pw;
          if (pc.z() <= 1e-4) continue;
          int u = int(std::lround(k.fx * pc.x() / pc.z() + k.cx));
          int v = int(std::lround(k.fy * pc.y() / pc.z() + k.cy));
          if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) continue;
          uint16_t raw = depth.at(u, v);
          if (!raw) continue;
          double sdf = raw * 1e-3 - pc.z();
          if (sdf <= -trunc) continue;
          float tsdf_new = float(std::clamp(sdf / trunc, -1.0, 1.0));
          TsdfVoxel& vox = vol.voxel_alloc(gx, gy, gz);
          double cap = vol.config().weight_cap;
          double w_old = vox.weight;
          double w_new = std::min(w_old + 1.0, cap);
          vox.tsdf = float((vox.tsdf * w_old + tsdf_new) / (w_old + 1.0));
          vox.weight = float(w_new);
        }
      }
    }
  }
}

}  // namespace

void tsdf_integrate(TsdfVolume& vol, const DepthImage& depth, const CameraIntrinsics& k,
                    const Pose& pose) {
  integrate_impl(vol, depth, k, pose, {});
}

double Mesh::enclosed_volume() const {
  double vol = 0;
  for (const auto& t : triangles)
    vol += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]])) / 6.0;
  return std::abs(vol);
}

namespace {

// ---- Marching cubes table, generated from the cube combinatorics. ----
// Corner c has offsets (c&1, (c>>1)&1, (c>>2)&1). Edge list below pairs
// corner indices; faces list their corners in cyclic order. Each of the 256
// inside/outside configurations maps to triangles given as edge triples.

constexpr int kEdgeCorners[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                     {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
constexpr int kFaceCorners[6][4] = {{0, 2, 6, 4}, {1, 5, 7, 3}, {0, 4, 5, 1},
                                    {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 6, 7, 5}};

int edge_between(int a, int b) {
  for (int e = 0; e < 12; ++e)
    if ((kEdgeCorners[e][0] == a && kEdgeCorners[e][1] == b) ||
        (kEdgeCorners[e][0] == b && kEdgeCorners[e][1] == a))
      return e;
  return -1;
}

Vec3 corner_pos(int c) { return Vec3(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

std::vector<std::array<int, 3>> build_case(int config) {
  auto inside = [&](int c) { return (config >> c) & 1; };

  // Per-face segments between cut edges whose connecting arc is inside.
  std::map<int, std::vector<int>> adjacency;  // cut edge -> linked cut edges
  for (const auto& face : kFaceCorners) {
    std::vector<int> cut;  // positions 0..3 of cut boundary edges, cyclic
    for (int i = 0; i < 4; ++i)
      if (inside(face[i]) != inside(face[(i + 1) % 4])) cut.push_back(i);
    for (size_t s = 0; s < cut.size(); ++s) {
      int i = cut[s], j = cut[(s + 1) % cut.size()];
      // Arc between boundary edge i and j contains corners i+1 .. j.
      if (!inside(face[(i + 1) % 4])) continue;
      int ea = edge_between(face[i], face[(i + 1) % 4]);
      int eb = edge_between(face[j], face[(j + 1) % 4]);
      adjacency[ea].push_back(eb);
      adjacency[eb].push_back(ea);
    }
  }

  // Trace cycles of cut edges, fan-triangulate each polygon.
  std::vector<std::array<int, 3>> tris;
  std::set<int> used;
  for (const auto& [start, nbrs] : adjacency) {
    if (used.count(start)) continue;
    std::vector<int> cycle{start};
    used.insert(start);
    int prev = -1, cur = start;
    while (true) {
      const auto& nb = adjacency.at(cur);
      int next = (nb[0] != prev) ? nb[0] : nb[1];
      if (next == start) break;
      cycle.push_back(next);
      used.insert(next);
      prev = cur;
      cur = next;
    }
    if (cycle.size() < 3) continue;

    // Orient the polygon so its normal points toward the outside corners.
    Vec3 grad = Vec3::Zero();
    for (int c = 0; c < 8; ++c)
      grad += (inside(c) ? -1.0 : 1.0) * (corner_pos(c) - Vec3(0.5, 0.5, 0.5));
    auto midpoint = [&](int e) {
      return 0.5 * (corner_pos(kEdgeCorners[e][0]) + corner_pos(kEdgeCorners[e][1]));
    };
    Vec3 n = Vec3::Zero();  // Newell normal
    for (size_t i = 0; i < cycle.size(); ++i) {
      Vec3 a = midpoint(cycle[i]);
      Vec3 b = midpoint(cycle[(i + 1) % cycle.size()]);
      n += a.cross(b);
    }
    if (n.dot(grad) < 0) std::reverse(cycle.begin(), cycle.end());
    for (size_t i = 1; i + 1 < cycle.size(); ++i)
      tris.push_back({cycle[0], int(cycle[i]), int(cycle[i + 1])});
  }
  return tris;
}

const std::vector<std::array<int, 3>>& mc_table(int config) {
  static const auto table = [] {
    std::array<std::vector<std::array<int, 3>>, 256> t;
    for (int c = 0; c < 256; ++c) t[size_t(c)] = build_case(c);
    return t;
  }();
  return table[size_t(config)];
}

}  // namespace

Mesh extract_mesh(const TsdfVolume& vol) {
  const double voxel = vol.config().voxel_size;
  Mesh mesh;
  std::map<std::array<int, 4>, int> edge_vertex;  // (x, y, z, axis) -> vertex index

  auto corner_offset = [](int c) {
    return std::array<int, 3>{c & 1, (c >> 1) & 1, (c >> 2) & 1};
  };
  auto gradient_at = [&](int x, int y, int z) {
    Vec3 g = Vec3::Zero();
    const int c[3] = {x, y, z};
    for (int a = 0; a < 3; ++a) {
      int lo[3] = {c[0], c[1], c[2]}, hi[3] = {c[0], c[1], c[2]};
      --lo[a];
      ++hi[a];
      const TsdfVoxel* vl = vol.voxel(lo[0], lo[1], lo[2]);
      const TsdfVoxel* vh = vol.voxel(hi[0], hi[1], hi[2]);
      const TsdfVoxel* vc = vol.voxel(x, y, z);
      if (vl && vl->weight > 0 && vh && vh->weight > 0)
        g[a] = (vh->tsdf - vl->tsdf) * 0.5;
      else if (vh && vh->weight > 0 && vc)
        g[a] = vh->tsdf - vc->tsdf;
      else if (vl && vl->weight > 0 && vc)
        g[a] = vc->tsdf - vl->tsdf;
    }
    return g;
  };

  // Deterministic block order.
  std::vector<BlockCoord> order;
  for (const auto& [bc, blk] : vol.blocks()) order.push_back(bc);
  std::sort(order.begin(), order.end(), [](const BlockCoord& a, const BlockCoord& b) {
    return std::tie(a.z, a.y, a.x) < std::tie(b.z, b.y, b.x);
  });

  for (const auto& bc : order) {
    for (int lz = 0; lz < kTsdfBlockSize; ++lz) {
      for (int ly = 0; ly < kTsdfBlockSize; ++ly) {
        for (int lx = 0; lx < kTsdfBlockSize; ++lx) {
          const int x = bc.x * kTsdfBlockSize + lx;
          const int y = bc.y * kTsdfBlockSize + ly;
          const int z = bc.z * kTsdfBlockSize + lz;
          float val[8];
          bool ok = true;
          int config = 0;
          for (int c = 0; c < 8; ++c) {
            auto off = corner_offset(c);
            const TsdfVoxel* v = vol.voxel(x + off[0], y + off[1], z + off[2]);
            if (!v || v->weight <= 0) {
              ok = false;
              break;
            }
            val[c] = v->tsdf;
            if (v->tsdf < 0) config |= 1 << c;
          }
          if (!ok || config == 0 || config == 255) continue;

          const auto& tris = mc_table(config);
          for (const auto& tri : tris) {
            int idx[3];
            for (int ti = 0; ti < 3; ++ti) {
              int e = tri[size_t(ti)];
              int c0 = kEdgeCorners[e][0], c1 = kEdgeCorners[e][1];
              auto o0 = corner_offset(c0);
              // Edge key: origin voxel of the edge plus its axis.
              int axis = (c1 - c0 == 1) ? 0 : (c1 - c0 == 2 ? 1 : 2);
              std::array<int, 4> key{x + o0[0], y + o0[1], z + o0[2], axis};
              auto it = edge_vertex.find(key);
              if (it != edge_vertex.end()) {
                idx[ti] = it->second;
                continue;
              }
              auto o1 = corner_offset(c1);
              double t0 = val[c0], t1 = val[c1];
              double t = (std::abs(t0 - t1) > 1e-12) ? t0 / (t0 - t1) : 0.5;
              t = std::clamp(t, 0.0, 1.0);
              Vec3 p0 = vol.voxel_center(x + o0[0], y + o0[1], z + o0[2]);
              Vec3 p1 = vol.voxel_center(x + o1[0], y + o1[1], z + o1[2]);
              Vec3 g0 = gradient_at(x + o0[0], y + o0[1], z + o0[2]);
              Vec3 g1 = gradient_at(x + o1[0], y + o1[1], z + o1[2]);
              Vec3 n = ((1.0 - t) * g0 + t * g1);
              if (n.norm() > 1e-12) n.normalize();
              idx[ti] = int(mesh.vertices.size());
              edge_vertex.emplace(key, idx[ti]);
              mesh.vertices.push_back(p0 + t * (p1 - p0));
              mesh.normals.push_back(n);
            }
            if (idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2]) continue;
            Vec3 area = (mesh.vertices[idx[1]] - mesh.vertices[idx[0]])
                            .cross(mesh.vertices[idx[2]] - mesh.vertices[idx[0]]);
            if (area.norm() < 1e-16 * voxel * voxel) continue;
            mesh.triangles.push_back({idx[0], idx[1], idx[2]});
          }
        }
      }
    }
  }
  return mesh;
}

std::vector<Segment> kmeans_partition(const PointCloud& cloud, int point_budget, uint64_t seed) {
  if (cloud.points.empty()) throw std::invalid_argument("kmeans_partition: empty cloud");
  if (!cloud.has_view_ids()) throw std::invalid_argument("kmeans_partition: view ids required");
  const size_t n = cloud.points.size();
  const int k = int((n + size_t(point_budget) - 1) / size_t(point_budget));

  std::vector<Vec3> centroids;
  std::mt19937_64 rng(seed);
  centroids.push_back(cloud.points[rng() % n]);
  std::vector<double> min_d2(n, 1e30);
  while (int(centroids.size()) < k) {
    double total = 0;
    for (size_t i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i], (cloud.points[i] - centroids.back()).squaredNorm());
      total += min_d2[i];
    }
    if (total <= 0) break;
    double r = std::uniform_real_distribution<double>(0, total)(rng);
    size_t pick = 0;
    for (; pick + 1 < n; ++pick) {
      r -= min_d2[pick];
      if (r <= 0) break;
    }
    centroids.push_back(cloud.points[pick]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 50; ++iter) {
    size_t changed = 0;
    for (size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (cloud.points[i] - centroids[0]).squaredNorm();
      for (size_t c = 1; c < centroids.size(); ++c) {
        double d = (cloud.points[i] - centroids[c]).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = int(c);
        }
      }
      if (best != assign[i]) {
        assign[i] = best;
        ++changed;
      }
    }
    std::vector<Vec3> sums(centroids.size(), Vec3::Zero());
    std::vector<size_t> counts(centroids.size(), 0);
    for (size_t i = 0; i < n; ++i) {
      sums[assign[i]] += cloud.points[i];
      ++counts[assign[i]];
    }
    for (size_t c = 0; c < centroids.size(); ++c)
      if (counts[c]) centroids[c] = sums[c] / double(counts[c]);
    if (iter > 0 && changed * 1000 < n) break;
  }

  std::vector<Segment> segments(centroids.size());
  std::vector<std::set<int>> views(centroids.size());
  std::vector<bool> seen(centroids.size(), false);
  for (size_t i = 0; i < n; ++i) {
    Segment& s = segments[assign[i]];
    const Vec3& p = cloud.points[i];
    if (!seen[assign[i]]) {
      s.aabb_min = s.aabb_max = p;
      seen[assign[i]] = true;
    } else {
      s.aabb_min = s.aabb_min.cwiseMin(p);
      s.aabb_max = s.aabb_max.cwiseMax(p);
    }
    views[assign[i]].insert(cloud.view_ids[i]);
  }
  for (size_t c = 0; c < segments.size(); ++c) {
    segments[c].centroid = centroids[c];
    segments[c].view_ids.assign(views[c].begin(), views[c].end());
  }
  // Drop empty segments (possible when k-means++ ran out of spread).
  segments.erase(std::remove_if(segments.begin(), segments.end(),
                                [](const Segment& s) { return s.view_ids.empty(); }),
                 segments.end());
  return segments;
}

Mesh deduplicate_vertices(const Mesh& mesh, double snap) {
  std::map<std::array<long, 3>, int> grid;
  Mesh out;
  std::vector<int> remap(mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    std::array<long, 3> key{long(std::llround(p.x() / snap)), long(std::llround(p.y() / snap)),
                            long(std::llround(p.z() / snap))};
    auto it = grid.find(key);
    if (it != grid.end()) {
      remap[i] = it->second;
    } else {
      remap[i] = int(out.vertices.size());
      grid.emplace(key, remap[i]);
      out.vertices.push_back(p);
      out.normals.push_back(i < mesh.normals.size() ? mesh.normals[i] : Vec3::Zero());
    }
  }
  std::set<std::array<int, 3>> tri_seen;
  for (const auto& t : mesh.triangles) {
    std::array<int, 3> rt{remap[t[0]], remap[t[1]], remap[t[2]]};
    if (rt[0] == rt[1] || rt[1] == rt[2] || rt[0] == rt[2]) continue;
    // Canonical key ignoring rotation (not winding) to drop exact duplicates.
    std::array<int, 3> key = rt;
    std::sort(key.begin(), key.end());
    if (!tri_seen.insert(key).second) continue;
    out.triangles.push_back({rt[0], rt[1], rt[2]});
  }
  return out;
}

Mesh fuse_segments(const std::vector<Segment>& segments, const std::vector<DepthImage>& frames,
                   const CameraIntrinsics& k, const std::vector<Pose>& poses,
                   const FuseConfig& cfg) {
  if (frames.size() != poses.size())
    throw std::invalid_argument("fuse_segments: frame/pose count mismatch");
  Mesh all;
  for (const auto& seg : segments) {
    TsdfVolume vol(cfg.tsdf);
    IntegrationBounds bounds;
    if (segments.size() > 1) {
      double margin = cfg.tsdf.truncation() + 4.0 * cfg.tsdf.voxel_size;
      bounds.active = true;
      bounds.min = seg.aabb_min - Vec3::Constant(margin);
      bounds.max = seg.aabb_max + Vec3::Constant(margin);
    }
    for (int view : seg.view_ids) {
      if (view < 0 || size_t(view) >= frames.size())
        throw std::invalid_argument("fuse_segments: missing pose for view " +
                                    std::to_string(view));
      integrate_impl(vol, frames[size_t(view)], k, poses[size_t(view)], bounds);
    }
    Mesh m = extract_mesh(vol);
    int base = int(all.vertices.size());
    all.vertices.insert(all.vertices.end(), m.vertices.begin(), m.vertices.end());
    all.normals.insert(all.normals.end(), m.normals.begin(), m.normals.end());
    for (const auto& t : m.triangles)
      all.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return deduplicate_vertices(all, cfg.tsdf.voxel_size / 8.0);
}

}  // namespace rgbd
