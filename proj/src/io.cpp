#include "rgbd_atlas/io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <sstream>

namespace rgbd::io {

using nlohmann::json;

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os.write(content.data(), std::streamsize(content.size()));
  }
  fs::rename(tmp, path);
}

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) continue;
    tok += char(c);
    while ((c = is.peek()) != EOF && !std::isspace(c)) tok += char(is.get());
    break;
  }
  return tok;
}

}  // namespace

DepthImage read_pgm16(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  if (pnm_token(is) != "P5") throw InputError(path.string() + ": not a P5 PGM");
  int w, h, maxval;
  try {
    w = std::stoi(pnm_token(is));
    h = std::stoi(pnm_token(is));
    maxval = std::stoi(pnm_token(is));
  } catch (const std::exception&) {
    throw InputError(path.string() + ": malformed PGM header");
  }
  if (maxval != 65535) throw InputError(path.string() + ": expected 16-bit PGM (maxval 65535)");
  is.get();  // single whitespace after maxval
  DepthImage img(w, h);
  std::vector<uint8_t> raw(size_t(w) * h * 2);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!is) throw InputError(path.string() + ": truncated PGM data");
  for (size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = uint16_t(raw[2 * i] << 8 | raw[2 * i + 1]);  // MSB first
  return img;
}

void write_pgm16(const fs::path& path, const DepthImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n65535\n";
  out.reserve(out.size() + img.data.size() * 2);
  for (uint16_t v : img.data) {
    out += char(v >> 8);
    out += char(v & 0xFF);
  }
  write_file_atomic(path, out);
}

void write_pgm8(const fs::path& path, const std::vector<uint8_t>& data, int width, int height) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
  write_file_atomic(path, out);
}

ColorImage read_ppm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  if (pnm_token(is) != "P6") throw InputError(path.string() + ": not a P6 PPM");
  int w, h, maxval;
  try {
    w = std::stoi(pnm_token(is));
    h = std::stoi(pnm_token(is));
    maxval = std::stoi(pnm_token(is));
  } catch (const std::exception&) {
    throw InputError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255) throw InputError(path.string() + ": expected 8-bit PPM");
  is.get();
  ColorImage img(w, h);
  is.read(reinterpret_cast<char*>(img.data.data()), std::streamsize(img.data.size()));
  if (!is) throw InputError(path.string() + ": truncated PPM data");
  return img;
}

void write_ppm(const fs::path& path, const ColorImage& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  write_file_atomic(path, out);
}

namespace {

void append_le_float(std::string& s, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  s.append(buf, 4);
}
void append_le_int(std::string& s, int32_t v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  s.append(buf, 4);
}

std::string ply_header(size_t num_vertices, size_t num_faces) {
  std::ostringstream os;
  os << "ply\nformat binary_little_endian 1.0\n";
  os << "element vertex " << num_vertices << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  os << "property float nx\nproperty float ny\nproperty float nz\n";
  os << "element face " << num_faces << "\n";
  os << "property list uchar int vertex_indices\n";
  os << "end_header\n";
  return os.str();
}

}  // namespace

void write_ply(const fs::path& path, const Mesh& mesh) {
  std::string out = ply_header(mesh.vertices.size(), mesh.triangles.size());
  for (size_t i = 0; i < mesh.vertices.size(); ++i) {
    const Vec3& p = mesh.vertices[i];
    Vec3 n = i < mesh.normals.size() ? mesh.normals[i] : Vec3::Zero();
    for (int j = 0; j < 3; ++j) append_le_float(out, float(p[j]));
    for (int j = 0; j < 3; ++j) append_le_float(out, float(n[j]));
  }
  for (const auto& t : mesh.triangles) {
    out += char(3);
    for (int j = 0; j < 3; ++j) append_le_int(out, t[j]);
  }
  write_file_atomic(path, out);
}

void write_ply(const fs::path& path, const PointCloud& cloud) {
  std::string out = ply_header(cloud.points.size(), 0);
  for (size_t i = 0; i < cloud.points.size(); ++i) {
    const Vec3& p = cloud.points[i];
    Vec3 n = cloud.has_normals() ? cloud.normals[i] : Vec3::Zero();
    for (int j = 0; j < 3; ++j) append_le_float(out, float(p[j]));
    for (int j = 0; j < 3; ++j) append_le_float(out, float(n[j]));
  }
  write_file_atomic(path, out);
}

PointCloud read_ply_cloud(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "ply") throw InputError(path.string() + ": not a PLY file");
  size_t num_vertices = 0;
  int num_props = 0;
  bool in_vertex = false, has_normals = false;
  while (std::getline(is, line) && line != "end_header") {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw InputError(path.string() + ": expected binary LE");
    } else if (tag == "element") {
      std::string what;
      size_t count;
      ls >> what >> count;
      in_vertex = what == "vertex";
      if (in_vertex) num_vertices = count;
    } else if (tag == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw InputError(path.string() + ": expected float vertex properties");
      ++num_props;
      if (name == "nx") has_normals = true;
    }
  }
  if (num_props < 3) throw InputError(path.string() + ": vertex needs at least x y z");
  PointCloud cloud;
  cloud.points.reserve(num_vertices);
  std::vector<float> row(static_cast<size_t>(num_props));
  for (size_t i = 0; i < num_vertices; ++i) {
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * 4));
    if (!is) throw InputError(path.string() + ": truncated vertex data");
    cloud.points.emplace_back(row[0], row[1], row[2]);
    if (has_normals && num_props >= 6) cloud.normals.emplace_back(row[3], row[4], row[5]);
  }
  return cloud;
}

Trajectory read_trajectory(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string());
  Trajectory traj;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double ts, tx, ty, tz, qx, qy, qz, qw;
    if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": malformed pose line");
    traj.push_back({ts, Pose(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz))});
  }
  return traj;
}

void write_trajectory(const fs::path& path, const Trajectory& traj) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& tp : traj) {
    const Quat& q = tp.pose.rotation();
    const Vec3& t = tp.pose.translation();
    os << tp.timestamp << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' '
       << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
  }
  write_file_atomic(path, os.str());
}

namespace {

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

json intrinsics_to_json(const CameraIntrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
          {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

}  // namespace

DatasetCalibration read_intrinsics_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open " + path.string());
  json j;
  try {
    is >> j;
    DatasetCalibration calib;
    calib.depth = intrinsics_from_json(j.at("depth"));
    calib.color = intrinsics_from_json(j.at("color"));
    const json& e = j.at("color_to_depth");
    auto q = e.at("quaternion");  // [w, x, y, z]
    auto t = e.at("translation");
    calib.rig.color_to_depth =
        Pose(Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                  q.at(3).get<double>()),
             Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()));
    return calib;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void write_intrinsics_json(const fs::path& path, const DatasetCalibration& calib) {
  const Quat& q = calib.rig.color_to_depth.rotation();
  const Vec3& t = calib.rig.color_to_depth.translation();
  json j = {{"depth", intrinsics_to_json(calib.depth)},
            {"color", intrinsics_to_json(calib.color)},
            {"color_to_depth",
             {{"quaternion", {q.w(), q.x(), q.y(), q.z()}},
              {"translation", {t.x(), t.y(), t.z()}}}}};
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string frame_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

fs::path Dataset::depth_path(int i) const { return root / "depth" / (frame_name(i) + ".pgm"); }
fs::path Dataset::color_path(int i) const { return root / "color" / (frame_name(i) + ".ppm"); }
fs::path Dataset::ir_path(int i) const { return root / "ir" / (frame_name(i) + ".pgm"); }
fs::path Dataset::aligned_path(int i) const { return root / "aligned" / (frame_name(i) + ".ppm"); }
fs::path Dataset::aligned_mask_path(int i) const {
  return root / "aligned_mask" / (frame_name(i) + ".pgm");
}

DepthImage Dataset::load_depth(int i) const { return read_pgm16(depth_path(i)); }
ColorImage Dataset::load_color(int i) const { return read_ppm(color_path(i)); }

Dataset open_dataset(const fs::path& root) {
  Dataset ds;
  ds.root = root;
  if (!fs::is_directory(root)) throw InputError("dataset root not found: " + root.string());
  ds.calib = read_intrinsics_json(root / "intrinsics.json");

  std::ifstream ts(root / "timestamps.txt");
  if (!ts) throw InputError("cannot open " + (root / "timestamps.txt").string());
  double t;
  while (ts >> t) ds.timestamps.push_back(t);
  if (ds.timestamps.empty()) throw InputError((root / "timestamps.txt").string() + ": empty");
  ds.num_frames = int(ds.timestamps.size());

  for (int i = 0; i < ds.num_frames; ++i) {
    if (!fs::exists(ds.depth_path(i)))
      throw InputError("missing frame file: " + ds.depth_path(i).string());
    if (!fs::exists(ds.color_path(i)))
      throw InputError("missing frame file: " + ds.color_path(i).string());
  }
  if (fs::exists(ds.depth_path(ds.num_frames)))
    throw InputError("frame count mismatch: extra file " +
                     ds.depth_path(ds.num_frames).string());
  ds.has_ir = fs::exists(ds.ir_path(0));

  // IMU is read and validated but unused by the pipeline.
  if (fs::exists(root / "imu.csv")) {
    std::ifstream imu(root / "imu.csv");
    std::string line;
    int lineno = 0;
    while (std::getline(imu, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      double vals[7];
      char comma;
      for (int i = 0; i < 7; ++i) {
        if (!(ls >> vals[i]))
          throw InputError((root / "imu.csv").string() + ":" + std::to_string(lineno) +
                           ": malformed IMU record");
        if (i < 6) ls >> comma;
      }
    }
  }
  return ds;
}

}  // namespace rgbd::io
