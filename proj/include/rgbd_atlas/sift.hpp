#pragma once

// Difference-of-Gaussians keypoints with gradient-orientation-histogram
// descriptors, masked to the valid area of aligned color images. Simplified
// scale space: 3 octaves, 3 scales per octave, no sub-pixel extremum
// refinement.

#include "rgbd_atlas/core.hpp"
#include "rgbd_atlas/imaging.hpp"

#include <array>

namespace rgbd {

struct Feature {
  double u = 0, v = 0;       // sub-pixel position in the input image
  double scale = 0;          // pixels
  double orientation = 0;    // radians
  double contrast = 0;       // |DoG| response
  std::array<float, 128> descriptor{};  // unit L2 norm
};

struct FeatureConfig {
  int max_features = 500;
  int octaves = 3;
  int scales_per_octave = 3;
  double sigma = 1.6;
  double contrast_threshold = 0.03;  // on [0,1] gray
};

/// Grayscale [0,1] raster used by the scale space.
struct GrayImage {
  int width = 0, height = 0;
  std::vector<float> data;

  GrayImage() = default;
  GrayImage(int w, int h) : width(w), height(h), data(size_t(w) * h, 0.f) {}
  float at(int u, int v) const { return data[size_t(v) * width + u]; }
  float& at(int u, int v) { return data[size_t(v) * width + u]; }
};

GrayImage to_gray(const ColorImage& c);

/// Detects features on the aligned color image; any feature whose support
/// circle touches a masked-out pixel of raw_mask is discarded. Keeps the
/// strongest max_features by contrast.
std::vector<Feature> detect_features(const AlignedColor& img, const FeatureConfig& cfg = {});

/// Mask-free variant for plain images (treats every pixel as valid).
std::vector<Feature> detect_features(const GrayImage& img, const FeatureConfig& cfg = {},
                                     const std::vector<uint8_t>* valid_mask = nullptr);

/// Mutual nearest-neighbor descriptor matches with Lowe's ratio test.
std::vector<std::pair<int, int>> match_features(const std::vector<Feature>& a,
                                                const std::vector<Feature>& b,
                                                double ratio = 0.8);

}  // namespace rgbd
