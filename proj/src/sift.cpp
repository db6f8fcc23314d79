#include "rgbd_atlas/sift.hpp"

#include <algorithm>
#include <cmath>

namespace rgbd {

namespace {

constexpr int kOriBins = 36;
constexpr double kOriSigmaFactor = 1.5;
constexpr double kOriRadiusFactor = 4.5;  // 3 * kOriSigmaFactor
constexpr double kDescrSclFactor = 3.0;
constexpr double kDescrMagThr = 0.2;
constexpr int kDescrWidth = 4;
constexpr int kDescrBins = 8;

GrayImage gaussian_blur(const GrayImage& src, double sigma) {
  if (sigma < 1e-6) return src;
  int radius = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<float> kernel(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-0.5 * i * i / (sigma * sigma));
    kernel[i + radius] = float(v);
    sum += v;
  }
  for (auto& k : kernel) k = float(k / sum);

  const int w = src.width, h = src.height;
  GrayImage tmp(w, h), out(w, h);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * src.at(std::clamp(u + i, 0, w - 1), v);
      tmp.at(u, v) = float(acc);
    }
  }
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp.at(u, std::clamp(v + i, 0, h - 1));
      out.at(u, v) = float(acc);
    }
  }
  return out;
}

GrayImage downsample2(const GrayImage& src) {
  GrayImage out(std::max(1, src.width / 2), std::max(1, src.height / 2));
  for (int v = 0; v < out.height; ++v)
    for (int u = 0; u < out.width; ++u) out.at(u, v) = src.at(2 * u, 2 * v);
  return out;
}

bool grad_mag_ori(const GrayImage& img, int r, int c, double* mag, double* ori) {
  if (r <= 0 || c <= 0 || r >= img.height - 1 || c >= img.width - 1) return false;
  double dx = img.at(c + 1, r) - img.at(c - 1, r);
  double dy = img.at(c, r - 1) - img.at(c, r + 1);
  *mag = std::sqrt(dx * dx + dy * dy);
  *ori = std::atan2(dy, dx);
  return true;
}

struct Candidate {
  int octave, layer;  // DoG layer index
  int r, c;           // pixel in octave resolution
  double scale_octv;  // sigma at octave resolution
  double contrast;
};

double dominant_orientation(const GrayImage& img, int r, int c, double scale_octv) {
  std::array<double, kOriBins> hist{};
  int radius = int(std::lround(kOriRadiusFactor * scale_octv));
  double sigma = kOriSigmaFactor * scale_octv;
  double denom = 2.0 * sigma * sigma;
  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      double mag, ori;
      if (!grad_mag_ori(img, r + i, c + j, &mag, &ori)) continue;
      double w = std::exp(-(i * i + j * j) / denom);
      int bin = int(std::lround(kOriBins * (ori + M_PI) / (2.0 * M_PI)));
      if (bin >= kOriBins) bin = 0;
      hist[bin] += w * mag;
    }
  }
  // Two circular smoothing passes.
  for (int pass = 0; pass < 2; ++pass) {
    double first = hist[0], prev = hist[kOriBins - 1];
    for (int i = 0; i < kOriBins; ++i) {
      double cur = hist[i];
      double next = (i + 1 == kOriBins) ? first : hist[i + 1];
      hist[i] = 0.25 * prev + 0.5 * cur + 0.25 * next;
      prev = cur;
    }
  }
  int best = 0;
  for (int i = 1; i < kOriBins; ++i)
    if (hist[i] > hist[best]) best = i;
  int l = (best + kOriBins - 1) % kOriBins, rr = (best + 1) % kOriBins;
  double denom2 = hist[l] - 2.0 * hist[best] + hist[rr];
  double off = std::abs(denom2) > 1e-12 ? 0.5 * (hist[l] - hist[rr]) / denom2 : 0.0;
  double bin = best + off;
  if (bin < 0) bin += kOriBins;
  if (bin >= kOriBins) bin -= kOriBins;
  return (2.0 * M_PI * bin) / kOriBins - M_PI;
}

void compute_descriptor(const GrayImage& img, int r, int c, double ori, double scale_octv,
                        std::array<float, 128>& out) {
  double hist[kDescrWidth][kDescrWidth][kDescrBins] = {};
  double cos_t = std::cos(ori), sin_t = std::sin(ori);
  double bins_per_rad = kDescrBins / (2.0 * M_PI);
  double exp_denom = kDescrWidth * kDescrWidth * 0.5;
  double hist_width = kDescrSclFactor * scale_octv;
  int radius = int(hist_width * std::sqrt(2.0) * (kDescrWidth + 1.0) * 0.5 + 0.5);

  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      double c_rot = (j * cos_t - i * sin_t) / hist_width;
      double r_rot = (j * sin_t + i * cos_t) / hist_width;
      double rbin = r_rot + kDescrWidth / 2 - 0.5;
      double cbin = c_rot + kDescrWidth / 2 - 0.5;
      if (rbin <= -1.0 || rbin >= kDescrWidth || cbin <= -1.0 || cbin >= kDescrWidth) continue;
      double mag, grad_ori;
      if (!grad_mag_ori(img, r + i, c + j, &mag, &grad_ori)) continue;
      grad_ori -= ori;
      while (grad_ori < 0) grad_ori += 2.0 * M_PI;
      while (grad_ori >= 2.0 * M_PI) grad_ori -= 2.0 * M_PI;
      double obin = grad_ori * bins_per_rad;
      double w = std::exp(-(c_rot * c_rot + r_rot * r_rot) / exp_denom);
      // Trilinear distribution into up to 8 bins.
      int r0 = int(std::floor(rbin)), c0 = int(std::floor(cbin)), o0 = int(std::floor(obin));
      double dr = rbin - r0, dc = cbin - c0, do_ = obin - o0;
      for (int ri = 0; ri <= 1; ++ri) {
        int rb = r0 + ri;
        if (rb < 0 || rb >= kDescrWidth) continue;
        double vr = mag * w * (ri ? dr : 1.0 - dr);
        for (int ci = 0; ci <= 1; ++ci) {
          int cb = c0 + ci;
          if (cb < 0 || cb >= kDescrWidth) continue;
          double vc = vr * (ci ? dc : 1.0 - dc);
          for (int oi = 0; oi <= 1; ++oi) {
            int ob = (o0 + oi) % kDescrBins;
            hist[rb][cb][ob] += vc * (oi ? do_ : 1.0 - do_);
          }
        }
      }
    }
  }

  int k = 0;
  for (int ri = 0; ri < kDescrWidth; ++ri)
    for (int ci = 0; ci < kDescrWidth; ++ci)
      for (int oi = 0; oi < kDescrBins; ++oi) out[k++] = float(hist[ri][ci][oi]);

  auto normalize = [&out]() {
    double len = 0;
    for (float v : out) len += double(v) * v;
    len = std::sqrt(std::max(len, 1e-24));
    for (float& v : out) v = float(v / len);
  };
  normalize();
  for (float& v : out) v = std::min(v, float(kDescrMagThr));
  normalize();
}

}  // namespace

GrayImage to_gray(const ColorImage& c) {
  GrayImage out(c.width, c.height);
  for (int v = 0; v < c.height; ++v) {
    for (int u = 0; u < c.width; ++u) {
      const uint8_t* px = c.px(u, v);
      out.at(u, v) = float((0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]) / 255.0);
    }
  }
  return out;
}

std::vector<Feature> detect_features(const AlignedColor& img, const FeatureConfig& cfg) {
  return detect_features(to_gray(img.image), cfg, &img.raw_mask);
}

std::vector<Feature> detect_features(const GrayImage& img, const FeatureConfig& cfg,
                                     const std::vector<uint8_t>* valid_mask) {
  const int s = cfg.scales_per_octave;
  const double k = std::pow(2.0, 1.0 / s);

  // Gaussian pyramid: s + 3 images per octave.
  std::vector<std::vector<GrayImage>> gauss(cfg.octaves);
  GrayImage base = gaussian_blur(img, std::sqrt(std::max(0.0, cfg.sigma * cfg.sigma - 0.25)));
  for (int o = 0; o < cfg.octaves; ++o) {
    gauss[o].resize(s + 3);
    gauss[o][0] = (o == 0) ? base : downsample2(gauss[o - 1][s]);
    double sig_prev = cfg.sigma;
    for (int i = 1; i < s + 3; ++i) {
      double sig_total = cfg.sigma * std::pow(k, i);
      double sig_diff = std::sqrt(sig_total * sig_total - sig_prev * sig_prev);
      gauss[o][i] = gaussian_blur(gauss[o][i - 1], sig_diff);
      sig_prev = sig_total;
    }
  }

  // DoG pyramid and 26-neighbor extrema.
  std::vector<Candidate> candidates;
  for (int o = 0; o < cfg.octaves; ++o) {
    std::vector<GrayImage> dog(s + 2);
    const int w = gauss[o][0].width, h = gauss[o][0].height;
    for (int i = 0; i < s + 2; ++i) {
      dog[i] = GrayImage(w, h);
      for (size_t p = 0; p < dog[i].data.size(); ++p)
        dog[i].data[p] = gauss[o][i + 1].data[p] - gauss[o][i].data[p];
    }
    for (int layer = 1; layer <= s; ++layer) {
      for (int r = 1; r + 1 < h; ++r) {
        for (int c = 1; c + 1 < w; ++c) {
          float val = dog[layer].at(c, r);
          if (std::abs(val) < cfg.contrast_threshold) continue;
          bool is_max = val > 0, is_min = val < 0;
          for (int dl = -1; dl <= 1 && (is_max || is_min); ++dl)
            for (int dr = -1; dr <= 1 && (is_max || is_min); ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                if (!dl && !dr && !dc) continue;
                float nb = dog[layer + dl].at(c + dc, r + dr);
                if (nb >= val) is_max = false;
                if (nb <= val) is_min = false;
                if (!is_max && !is_min) break;
              }
          if (is_max || is_min)
            candidates.push_back(
                {o, layer, r, c, cfg.sigma * std::pow(k, layer), std::abs(val)});
        }
      }
    }
  }

  std::vector<Feature> features;
  for (const auto& cand : candidates) {
    double oct_scale = double(1 << cand.octave);
    Feature f;
    f.u = cand.c * oct_scale;
    f.v = cand.r * oct_scale;
    f.scale = cand.scale_octv * oct_scale;
    f.contrast = cand.contrast;

    if (valid_mask) {
      // Reject features whose support circle touches invalid pixels.
      int radius = int(std::ceil(kDescrSclFactor * f.scale * (kDescrWidth + 1.0) * 0.5));
      int u0 = int(f.u), v0 = int(f.v);
      bool ok = true;
      for (int dv = -radius; dv <= radius && ok; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          if (du * du + dv * dv > radius * radius) continue;
          int uu = u0 + du, vv = v0 + dv;
          if (uu < 0 || vv < 0 || uu >= img.width || vv >= img.height ||
              !(*valid_mask)[size_t(vv) * img.width + uu]) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) continue;
    }

    const GrayImage& layer_img = gauss[cand.octave][cand.layer];
    f.orientation = dominant_orientation(layer_img, cand.r, cand.c, cand.scale_octv);
    compute_descriptor(layer_img, cand.r, cand.c, f.orientation, cand.scale_octv, f.descriptor);
    features.push_back(std::move(f));
  }

  std::sort(features.begin(), features.end(),
            [](const Feature& a, const Feature& b) { return a.contrast > b.contrast; });
  if (int(features.size()) > cfg.max_features) features.resize(cfg.max_features);
  return features;
}

std::vector<std::pair<int, int>> match_features(const std::vector<Feature>& a,
                                                const std::vector<Feature>& b, double ratio) {
  auto best_two = [](const Feature& f, const std::vector<Feature>& set, int* best) {
    double d1 = 1e30, d2 = 1e30;
    *best = -1;
    for (size_t i = 0; i < set.size(); ++i) {
      double d = 0;
      for (int j = 0; j < 128; ++j) {
        double diff = double(f.descriptor[j]) - set[i].descriptor[j];
        d += diff * diff;
      }
      if (d < d1) {
        d2 = d1;
        d1 = d;
        *best = int(i);
      } else if (d < d2) {
        d2 = d;
      }
    }
    return std::pair(d1, d2);
  };

  std::vector<std::pair<int, int>> matches;
  for (size_t i = 0; i < a.size(); ++i) {
    int j;
    auto [d1, d2] = best_two(a[i], b, &j);
    if (j < 0) continue;
    if (d2 < 1e29 && d1 > ratio * ratio * d2) continue;  // ratio test on squared dists
    int back;
    best_two(b[j], a, &back);
    if (back == int(i)) matches.emplace_back(int(i), j);
  }
  return matches;
}

}  // namespace rgbd
