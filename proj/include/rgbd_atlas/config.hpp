#pragma once

// Pipeline configuration: one JSON document with per-module sections.
// Unknown keys and out-of-range values are rejected with the offending path.

#include "rgbd_atlas/evaluation.hpp"
#include "rgbd_atlas/loop.hpp"
#include "rgbd_atlas/odometry.hpp"
#include "rgbd_atlas/sift.hpp"
#include "rgbd_atlas/surface.hpp"

#include <filesystem>
#include <string>

namespace rgbd {

struct BowConfig {
  int num_words = 256;
  uint64_t seed = 42;
  int top_k = 5;
  int exclusion_window = 30;      // keyframes, same session
  double min_similarity = 0.10;   // candidate floor
  int max_train_descriptors = 20000;
};

struct GraphConfig {
  int max_iterations = 50;
  double odometry_info_scale = 100.0;  // rotation block stddev^-1
  // Modest weight: loop transforms carry centimeter-level ICP error, so a
  // dense set of loop edges must not overpower the odometry chain.
  double loop_info_scale = 1.0;        // multiplies inlier count
};

struct FusionConfig {
  TsdfConfig tsdf;
  int point_budget = 500000;
  uint64_t seed = 42;
  int cloud_stride = 4;  // pixel stride of the fusion cloud
};

struct PipelineConfig {
  OdometryConfig odometry;
  FeatureConfig features;
  LoopConfig loop;  // loop.icp follows odometry.icp unless set explicitly
  BowConfig bow;
  GraphConfig graph;
  FusionConfig fusion;
  ReconEvalConfig eval;

  void validate() const;  // throws std::invalid_argument with a config path
};

/// Parses a config JSON file over the defaults. Unknown keys and out-of-range
/// values raise with the dotted path of the offending entry.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Effective configuration as a JSON document (round-trips through load).
std::string dump_pipeline_config(const PipelineConfig& cfg);

}  // namespace rgbd
