#include "rgbd_atlas/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace rgbd {

namespace {

// 1-D interpolation along one scanline: for each invalid index, linear blend
// of the nearest valid samples on either side (one-sided at borders). Writes
// NaN where the line has no valid sample at all.
void interp_line(const std::vector<double>& vals, std::vector<double>& out) {
  const int n = int(vals.size());
  out.assign(n, std::numeric_limits<double>::quiet_NaN());
  int prev = -1;
  for (int i = 0; i < n; ++i) {
    if (std::isnan(vals[i])) continue;
    if (prev < 0) {
      for (int j = 0; j < i; ++j) out[j] = vals[i];  // left extension
    } else {
      for (int j = prev + 1; j < i; ++j) {
        double t = double(j - prev) / double(i - prev);
        out[j] = (1.0 - t) * vals[prev] + t * vals[i];
      }
    }
    out[i] = vals[i];
    prev = i;
  }
  if (prev >= 0)
    for (int j = prev + 1; j < n; ++j) out[j] = vals[prev];  // right extension
}

}  // namespace

DepthImage inpaint_depth_linear(const DepthImage& d) {
  const int w = d.width, h = d.height;
  bool any_valid = false;
  for (auto v : d.data)
    if (v) {
      any_valid = true;
      break;
    }
  if (!any_valid) throw std::invalid_argument("inpaint_depth_linear: all pixels invalid");

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> row_fill(size_t(w) * h), col_fill(size_t(w) * h);
  std::vector<double> line, tmp;

  for (int v = 0; v < h; ++v) {
    line.assign(w, nan);
    for (int u = 0; u < w; ++u)
      if (d.at(u, v)) line[u] = d.at(u, v);
    interp_line(line, tmp);
    for (int u = 0; u < w; ++u) row_fill[size_t(v) * w + u] = tmp[u];
  }
  for (int u = 0; u < w; ++u) {
    line.assign(h, nan);
    for (int v = 0; v < h; ++v)
      if (d.at(u, v)) line[v] = d.at(u, v);
    interp_line(line, tmp);
    for (int v = 0; v < h; ++v) col_fill[size_t(v) * w + u] = tmp[v];
  }

  DepthImage out = d;
  std::vector<size_t> unfilled;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (d.at(u, v)) continue;
      double r = row_fill[size_t(v) * w + u];
      double c = col_fill[size_t(v) * w + u];
      double val;
      if (!std::isnan(r) && !std::isnan(c))
        val = 0.5 * (r + c);
      else if (!std::isnan(r))
        val = r;
      else if (!std::isnan(c))
        val = c;
      else {
        unfilled.push_back(size_t(v) * w + u);
        continue;
      }
      out.at(u, v) = uint16_t(std::lround(std::clamp(val, 1.0, 65535.0)));
    }
  }
  // Rows and columns entirely empty: fall back to the globally nearest valid
  // pixel.
  if (!unfilled.empty()) {
    std::vector<std::pair<int, int>> valid_px;
    for (int v = 0; v < h; ++v)
      for (int u = 0; u < w; ++u)
        if (d.at(u, v)) valid_px.emplace_back(u, v);
    for (size_t idx : unfilled) {
      int u = int(idx % w), v = int(idx / w);
      long best = std::numeric_limits<long>::max();
      uint16_t val = 0;
      for (auto& [pu, pv] : valid_px) {
        long d2 = long(pu - u) * (pu - u) + long(pv - v) * (pv - v);
        if (d2 < best) {
          best = d2;
          val = d.at(pu, pv);
        }
      }
      out.at(u, v) = val;
    }
  }
  return out;
}

namespace {

double bilinear_depth(const DepthImage& d, double x, double y) {
  x = std::clamp(x, 0.0, double(d.width - 1));
  y = std::clamp(y, 0.0, double(d.height - 1));
  int x0 = std::min(int(x), d.width - 2 >= 0 ? d.width - 2 : 0);
  int y0 = std::min(int(y), d.height - 2 >= 0 ? d.height - 2 : 0);
  int x1 = std::min(x0 + 1, d.width - 1);
  int y1 = std::min(y0 + 1, d.height - 1);
  double fx = x - x0, fy = y - y0;
  double v00 = d.at(x0, y0), v10 = d.at(x1, y0), v01 = d.at(x0, y1), v11 = d.at(x1, y1);
  return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

bool bilinear_color(const ColorImage& c, double x, double y, double rgb[3]) {
  if (x < 0 || y < 0 || x > c.width - 1 || y > c.height - 1) return false;
  int x0 = std::min(int(x), c.width - 2 >= 0 ? c.width - 2 : 0);
  int y0 = std::min(int(y), c.height - 2 >= 0 ? c.height - 2 : 0);
  int x1 = std::min(x0 + 1, c.width - 1);
  int y1 = std::min(y0 + 1, c.height - 1);
  double fx = x - x0, fy = y - y0;
  for (int ch = 0; ch < 3; ++ch) {
    double v00 = c.px(x0, y0)[ch], v10 = c.px(x1, y0)[ch];
    double v01 = c.px(x0, y1)[ch], v11 = c.px(x1, y1)[ch];
    rgb[ch] = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
  }
  return true;
}

}  // namespace

AlignedColor align_color_to_depth(const ColorImage& c, const DepthImage& d_dense,
                                  const CameraIntrinsics& k_depth,
                                  const CameraIntrinsics& k_color, const RigExtrinsics& rig) {
  if (d_dense.width != k_depth.width || d_dense.height != k_depth.height)
    throw std::invalid_argument("align_color_to_depth: depth/intrinsics mismatch");
  if (c.width != k_color.width || c.height != k_color.height)
    throw std::invalid_argument("align_color_to_depth: color/intrinsics mismatch");

  const int ow = 2 * d_dense.width, oh = 2 * d_dense.height;
  AlignedColor out;
  out.image = ColorImage(ow, oh);
  out.valid_mask.assign(size_t(ow) * oh, 0);

  const Pose depth_to_color = rig.color_to_depth.inverse();
  for (int v = 0; v < oh; ++v) {
    for (int u = 0; u < ow; ++u) {
      // Half coordinates in the raw depth raster.
      double z_mm = bilinear_depth(d_dense, 0.5 * u, 0.5 * v);
      if (z_mm <= 0) continue;
      double z = z_mm * 1e-3;
      // Output pixel (u,v) maps to depth-raster coordinate (u/2, v/2); the
      // output intrinsics are the depth intrinsics scaled by 2.
      double fx = 2 * k_depth.fx, fy = 2 * k_depth.fy, cx = 2 * k_depth.cx, cy = 2 * k_depth.cy;
      Vec3 p_depth(z * (u - cx) / fx, z * (v - cy) / fy, z);
      Vec3 p_color = depth_to_color * p_depth;
      if (p_color.z() <= 1e-6) continue;
      double xc = k_color.fx * p_color.x() / p_color.z() + k_color.cx;
      double yc = k_color.fy * p_color.y() / p_color.z() + k_color.cy;
      double rgb[3];
      if (!bilinear_color(c, xc, yc, rgb)) continue;
      uint8_t* px = out.image.px(u, v);
      for (int ch = 0; ch < 3; ++ch) px[ch] = uint8_t(std::lround(std::clamp(rgb[ch], 0.0, 255.0)));
      out.valid_mask[size_t(v) * ow + u] = 1;
    }
  }
  out.raw_mask = out.valid_mask;
  return out;
}

AlignedColor inpaint_color_holes(const AlignedColor& a) {
  AlignedColor out = a;
  const int w = out.image.width, h = out.image.height;
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<std::pair<size_t, std::array<uint8_t, 3>>> fills;
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        if (out.valid_mask[size_t(v) * w + u]) continue;
        double sum[3] = {0, 0, 0};
        int cnt = 0;
        for (int dv = -1; dv <= 1; ++dv) {
          for (int du = -1; du <= 1; ++du) {
            int nu = u + du, nv = v + dv;
            if ((du == 0 && dv == 0) || nu < 0 || nv < 0 || nu >= w || nv >= h) continue;
            if (!out.valid_mask[size_t(nv) * w + nu]) continue;
            const uint8_t* px = out.image.px(nu, nv);
            for (int ch = 0; ch < 3; ++ch) sum[ch] += px[ch];
            ++cnt;
          }
        }
        if (cnt == 0) continue;
        std::array<uint8_t, 3> rgb;
        for (int ch = 0; ch < 3; ++ch) rgb[ch] = uint8_t(std::lround(sum[ch] / cnt));
        fills.emplace_back(size_t(v) * w + u, rgb);
      }
    }
    if (fills.empty()) break;
    for (auto& [idx, rgb] : fills) {
      uint8_t* px = &out.image.data[3 * idx];
      for (int ch = 0; ch < 3; ++ch) px[ch] = rgb[ch];
      out.valid_mask[idx] = 1;
    }
  }
  return out;
}

DepthImage align_depth_to_color(const DepthImage& d, const CameraIntrinsics& k_depth,
                                const CameraIntrinsics& k_color, const RigExtrinsics& rig) {
  if (d.width != k_depth.width || d.height != k_depth.height)
    throw std::invalid_argument("align_depth_to_color: depth/intrinsics mismatch");
  DepthImage out(k_color.width, k_color.height, 0);
  const Pose depth_to_color = rig.color_to_depth.inverse();
  for (int v = 0; v < d.height; ++v) {
    for (int u = 0; u < d.width; ++u) {
      uint16_t raw = d.at(u, v);
      if (!raw) continue;
      double z = raw * 1e-3;
      Vec3 p(z * (u - k_depth.cx) / k_depth.fx, z * (v - k_depth.cy) / k_depth.fy, z);
      Vec3 pc = depth_to_color * p;
      if (pc.z() <= 1e-6) continue;
      int xc = int(std::lround(k_color.fx * pc.x() / pc.z() + k_color.cx));
      int yc = int(std::lround(k_color.fy * pc.y() / pc.z() + k_color.cy));
      if (xc < 0 || yc < 0 || xc >= out.width || yc >= out.height) continue;
      uint16_t z_mm = uint16_t(std::clamp(std::lround(pc.z() * 1e3), 1l, 65535l));
      uint16_t& cur = out.at(xc, yc);
      if (cur == 0 || z_mm < cur) cur = z_mm;  // z-buffer
    }
  }
  // The forward splat leaves regular gaps wherever the color grid is denser
  // than the depth grid. Fill pixels surrounded by enough splatted neighbors
  // with their median so the result behaves like a resampled depth map.
  DepthImage filled = out;
  for (int v = 0; v < out.height; ++v) {
    for (int u = 0; u < out.width; ++u) {
      if (out.valid(u, v)) continue;
      uint16_t vals[8];
      int n = 0;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          if (!du && !dv) continue;
          int uu = u + du, vv = v + dv;
          if (uu < 0 || uu >= out.width || vv < 0 || vv >= out.height) continue;
          if (out.valid(uu, vv)) vals[n++] = out.at(uu, vv);
        }
      if (n < 4) continue;
      std::sort(vals, vals + n);
      filled.at(u, v) = vals[(n - 1) / 2];
    }
  }
  return filled;
}

DepthImage median_filter_depth(const DepthImage& d) {
  DepthImage out(d.width, d.height, 0);
  for (int v = 0; v < d.height; ++v) {
    for (int u = 0; u < d.width; ++u) {
      if (!d.valid(u, v)) continue;
      uint16_t vals[9];
      int n = 0;
      for (int dv = -1; dv <= 1; ++dv)
        for (int du = -1; du <= 1; ++du) {
          int uu = u + du, vv = v + dv;
          if (uu < 0 || uu >= d.width || vv < 0 || vv >= d.height) continue;
          if (d.valid(uu, vv)) vals[n++] = d.at(uu, vv);
        }
      std::sort(vals, vals + n);
      out.at(u, v) = vals[(n - 1) / 2];
    }
  }
  return out;
}

DepthImage bilateral_filter_depth(const DepthImage& d, int radius, double sigma_space,
                                  double sigma_range_mm) {
  if (radius < 1 || sigma_space <= 0 || sigma_range_mm <= 0)
    throw std::invalid_argument("bilateral_filter_depth: invalid parameters");
  DepthImage out(d.width, d.height, 0);
  const double inv_2ss = 1.0 / (2.0 * sigma_space * sigma_space);
  const double inv_2sr = 1.0 / (2.0 * sigma_range_mm * sigma_range_mm);
  for (int v = 0; v < d.height; ++v) {
    for (int u = 0; u < d.width; ++u) {
      if (!d.valid(u, v)) continue;
      const double center = d.at(u, v);
      double sum = 0, wsum = 0;
      for (int dv = -radius; dv <= radius; ++dv)
        for (int du = -radius; du <= radius; ++du) {
          int uu = u + du, vv = v + dv;
          if (uu < 0 || uu >= d.width || vv < 0 || vv >= d.height) continue;
          if (!d.valid(uu, vv)) continue;
          double dz = d.at(uu, vv) - center;
          double w = std::exp(-(du * du + dv * dv) * inv_2ss - dz * dz * inv_2sr);
          sum += w * d.at(uu, vv);
          wsum += w;
        }
      out.at(u, v) = uint16_t(std::lround(sum / wsum));
    }
  }
  return out;
}

std::vector<uint8_t> ir_tone_map(const std::vector<uint16_t>& ir) {
  std::vector<uint8_t> out(ir.size());
  for (size_t i = 0; i < ir.size(); ++i) {
    double v = 0.04 * std::pow(double(ir[i]), 0.6);
    out[i] = uint8_t(std::clamp(std::lround(v), 0l, 255l));
  }
  return out;
}

}  // namespace rgbd
