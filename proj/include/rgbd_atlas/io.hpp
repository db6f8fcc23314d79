#pragma once

// File formats and dataset layout: 16-bit PGM, PPM, binary PLY, trajectory
// text, intrinsics JSON, IMU CSV validation, atomic writes.

#include "rgbd_atlas/core.hpp"
#include "rgbd_atlas/evaluation.hpp"
#include "rgbd_atlas/surface.hpp"

#include <filesystem>
#include <string>

namespace rgbd::io {

namespace fs = std::filesystem;

/// Thrown on malformed inputs; the CLI maps it to exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Writes are atomic: content goes to a sibling temp file, then a rename.
void write_file_atomic(const fs::path& path, const std::string& content);

DepthImage read_pgm16(const fs::path& path);
void write_pgm16(const fs::path& path, const DepthImage& img);
void write_pgm8(const fs::path& path, const std::vector<uint8_t>& data, int width, int height);

ColorImage read_ppm(const fs::path& path);
void write_ppm(const fs::path& path, const ColorImage& img);

/// Binary little-endian PLY: vertex(x,y,z,nx,ny,nz float32), face(uchar 3,
/// int32 indices).
void write_ply(const fs::path& path, const Mesh& mesh);
void write_ply(const fs::path& path, const PointCloud& cloud);
PointCloud read_ply_cloud(const fs::path& path);

/// One line per pose: `timestamp tx ty tz qx qy qz qw`.
Trajectory read_trajectory(const fs::path& path);
void write_trajectory(const fs::path& path, const Trajectory& traj);

struct DatasetCalibration {
  CameraIntrinsics depth;
  CameraIntrinsics color;
  RigExtrinsics rig;
};

DatasetCalibration read_intrinsics_json(const fs::path& path);
void write_intrinsics_json(const fs::path& path, const DatasetCalibration& calib);

/// Dataset directory: depth/NNNNNN.pgm, color/NNNNNN.ppm, optional
/// ir/NNNNNN.pgm, timestamps.txt, intrinsics.json, optional imu.csv.
struct Dataset {
  fs::path root;
  DatasetCalibration calib;
  std::vector<double> timestamps;
  int num_frames = 0;
  bool has_ir = false;

  fs::path depth_path(int i) const;
  fs::path color_path(int i) const;
  fs::path ir_path(int i) const;
  fs::path aligned_path(int i) const;
  fs::path aligned_mask_path(int i) const;

  DepthImage load_depth(int i) const;
  ColorImage load_color(int i) const;
};

/// Validates layout (contiguous indices, matching counts, parsable IMU) and
/// throws InputError naming the first bad file.
Dataset open_dataset(const fs::path& root);

std::string frame_name(int index);  // zero-padded six digits

}  // namespace rgbd::io
