#pragma once

// Uniform-grid nearest-neighbor index for radius-bounded queries. Cell size
// equals the maximum query radius, so a lookup touches at most 27 cells.

#include "rgbd_atlas/core.hpp"

#include <cmath>
#include <unordered_map>
#include <vector>

namespace rgbd {

class NnGrid {
 public:
  NnGrid(const std::vector<Vec3>& points, double max_radius)
      : points_(points), cell_(std::max(max_radius, 1e-9)) {
    cells_.reserve(points.size());
    for (size_t i = 0; i < points.size(); ++i) cells_[key(points[i])].push_back(int(i));
  }

  /// Index of the nearest point within max_radius, or -1.
  int nearest(const Vec3& q, double radius, double* dist_out = nullptr) const {
    int best = -1;
    double best_d2 = radius * radius;
    int cx = coord(q.x()), cy = coord(q.y()), cz = coord(q.z());
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          auto it = cells_.find(pack(cx + dx, cy + dy, cz + dz));
          if (it == cells_.end()) continue;
          for (int i : it->second) {
            double d2 = (points_[i] - q).squaredNorm();
            if (d2 <= best_d2) {
              best_d2 = d2;
              best = i;
            }
          }
        }
    if (dist_out && best >= 0) *dist_out = std::sqrt(best_d2);
    return best;
  }

  size_t size() const { return points_.size(); }

 private:
  int coord(double x) const { return int(std::floor(x / cell_)); }
  static uint64_t pack(int x, int y, int z) {
    auto u = [](int v) { return uint64_t(uint32_t(v)) & 0x1FFFFF; };
    return (u(x) << 42) | (u(y) << 21) | u(z);
  }
  uint64_t key(const Vec3& p) const { return pack(coord(p.x()), coord(p.y()), coord(p.z())); }

  const std::vector<Vec3>& points_;
  double cell_;
  std::unordered_map<uint64_t, std::vector<int>> cells_;
};

}  // namespace rgbd
