#pragma once

// Color-to-depth alignment: depth inpainting, reprojection of the color image
// into the depth frame at doubled resolution, occlusion-hole inpainting, and
// the infrared tone map.

#include "rgbd_atlas/core.hpp"

namespace rgbd {

/// Aligned color raster (2x the depth resolution per side) plus a validity
/// mask. raw_mask keeps the pre-inpainting validity for feature masking.
struct AlignedColor {
  ColorImage image;
  std::vector<uint8_t> valid_mask;  // 1 valid, 0 invalid
  std::vector<uint8_t> raw_mask;    // validity before hole inpainting

  bool valid(int u, int v) const { return valid_mask[size_t(v) * image.width + u] != 0; }
};

/// Fills every invalid depth pixel with the average of horizontal and vertical
/// 1-D linear interpolations between the nearest valid samples on the pixel's
/// row and column. Throws std::invalid_argument if no pixel is valid.
DepthImage inpaint_depth_linear(const DepthImage& d);

/// Inverse-warps the color image into the depth frame at (2w)x(2h). For each
/// output pixel: bilinear depth at half coordinates, unproject in the depth
/// frame, move to the color frame via inverse(rig.color_to_depth), project
/// with k_color, sample color bilinearly. FoV misses are masked invalid.
AlignedColor align_color_to_depth(const ColorImage& c, const DepthImage& d_dense,
                                  const CameraIntrinsics& k_depth,
                                  const CameraIntrinsics& k_color, const RigExtrinsics& rig);

/// Fills masked-out pixels by iterative diffusion (averaging valid 8-neighbors)
/// until nothing fillable remains or 100 sweeps. raw_mask is left untouched.
AlignedColor inpaint_color_holes(const AlignedColor& a);

/// Warps depth into the color frame (forward splat with z-buffer), producing a
/// depth map at color resolution. Used by the D2C ablation path.
DepthImage align_depth_to_color(const DepthImage& d, const CameraIntrinsics& k_depth,
                                const CameraIntrinsics& k_color, const RigExtrinsics& rig);

/// 3x3 median over valid neighbors; invalid pixels stay invalid. Used to tame
/// sensor noise before odometry unprojection.
DepthImage median_filter_depth(const DepthImage& d);

/// Edge-preserving bilateral smoothing over valid neighbors; invalid pixels
/// stay invalid. `radius` is in pixels, `sigma_space` in pixels, `sigma_range`
/// in millimeters of depth difference.
DepthImage bilateral_filter_depth(const DepthImage& d, int radius, double sigma_space,
                                  double sigma_range_mm);

/// Power-law tone map for infrared rasters: clamp(round(0.04 * I^0.6), 0, 255).
std::vector<uint8_t> ir_tone_map(const std::vector<uint16_t>& ir);

}  // namespace rgbd
