#include "rgbd_atlas/pipeline.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

namespace rgbd::pipeline {

namespace {

std::vector<uint8_t> load_mask(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::InputError("cannot open " + path.string());
  std::string magic;
  int w, h, maxval;
  is >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255) throw io::InputError(path.string() + ": not an 8-bit PGM");
  is.get();
  std::vector<uint8_t> data(size_t(w) * h);
  is.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size()));
  if (!is) throw io::InputError(path.string() + ": truncated mask");
  return data;
}

fs::path aligned_depth_path(const io::Dataset& ds, int i) {
  return ds.root / "aligned_depth" / (io::frame_name(i) + ".pgm");
}

}  // namespace

void run_align(const io::Dataset& ds, bool d2c) {
  fs::create_directories(ds.root / "aligned");
  fs::create_directories(ds.root / "aligned_mask");
  if (d2c) fs::create_directories(ds.root / "aligned_depth");

  for (int i = 0; i < ds.num_frames; ++i) {
    DepthImage depth = ds.load_depth(i);
    ColorImage color = ds.load_color(i);
    if (d2c) {
      // Ablation: depth is warped into the color frame, color stays native.
      DepthImage warped =
          align_depth_to_color(depth, ds.calib.depth, ds.calib.color, ds.calib.rig);
      std::vector<uint8_t> mask(warped.data.size());
      for (size_t p = 0; p < mask.size(); ++p) mask[p] = warped.data[p] ? 255 : 0;
      io::write_pgm16(aligned_depth_path(ds, i), warped);
      io::write_ppm(ds.aligned_path(i), color);
      io::write_pgm8(ds.aligned_mask_path(i), mask, warped.width, warped.height);
    } else {
      DepthImage dense = inpaint_depth_linear(depth);
      AlignedColor a = align_color_to_depth(color, dense, ds.calib.depth, ds.calib.color,
                                            ds.calib.rig);
      a = inpaint_color_holes(a);
      // The stored mask is the pre-inpainting validity; features key off it.
      std::vector<uint8_t> mask(a.raw_mask.size());
      for (size_t p = 0; p < mask.size(); ++p) mask[p] = a.raw_mask[p] ? 255 : 0;
      io::write_ppm(ds.aligned_path(i), a.image);
      io::write_pgm8(ds.aligned_mask_path(i), mask, a.image.width, a.image.height);
    }
  }
}

Mat6 odometry_information(double icp_rmse, const GraphConfig& cfg) {
  Mat6 info = Mat6::Identity() * cfg.odometry_info_scale * cfg.odometry_info_scale;
  double r = std::max(icp_rmse, 1e-3);
  info.block<3, 3>(3, 3) *= 1.0 / (r * r) * 1e-6;  // rmse in meters, scale to 1 mm reference
  return info;
}

Mat6 loop_information(int inliers, const GraphConfig& cfg) {
  return Mat6::Identity() * cfg.loop_info_scale * double(inliers);
}

void optimize_components(PoseGraph& graph, int max_iterations) {
  for (const auto& comp : graph.components()) {
    if (comp.size() < 2) continue;
    std::set<int> members(comp.begin(), comp.end());
    PoseGraph sub;
    for (int id : comp) sub.nodes[id] = graph.nodes.at(id);
    for (const auto& e : graph.edges)
      if (members.contains(e.from) && members.contains(e.to)) sub.edges.push_back(e);
    if (sub.edges.empty()) continue;
    sub.anchor = *std::min_element(comp.begin(), comp.end());
    optimize(sub, max_iterations);
    for (int id : comp) graph.nodes.at(id).pose = sub.nodes.at(id).pose;
  }
}

namespace {

/// Thins feature lists so the vocabulary trains on at most `cap` descriptors.
std::vector<std::vector<Feature>> thin_for_vocabulary(const std::vector<Keyframe>& keyframes,
                                                      int cap) {
  size_t total = 0;
  for (const auto& kf : keyframes) total += kf.features.size();
  size_t step = total > size_t(cap) ? (total + cap - 1) / cap : 1;
  std::vector<std::vector<Feature>> out;
  size_t counter = 0;
  for (const auto& kf : keyframes) {
    std::vector<Feature> kept;
    for (const auto& f : kf.features) {
      if (counter % step == 0) kept.push_back(f);
      ++counter;
    }
    out.push_back(std::move(kept));
  }
  return out;
}

struct LoopSearchHit {
  int query_kf = 0;      // ordinal in its session
  int query_session = 0;
  int match_kf = 0;
  int match_session = 0;
  LoopEdgeCandidate cand;  // relative maps query-kf points into match-kf frame
};

/// Runs BoW retrieval + geometric verification for every keyframe of
/// `sessions` against `db`. When `earlier_sessions_only` is set, only matches
/// from a strictly earlier session than the query are considered.
std::vector<LoopSearchHit> search_loops(const std::vector<const std::vector<Keyframe>*>& sessions,
                                        const Vocabulary& vocab, const BowDatabase& db,
                                        bool earlier_sessions_only, const PipelineConfig& cfg) {
  std::vector<LoopSearchHit> hits;
  std::set<std::array<int, 4>> tried;
  for (size_t s = 0; s < sessions.size(); ++s) {
    const auto& kfs = *sessions[s];
    for (size_t q = 0; q < kfs.size(); ++q) {
      BowSignature sig = bow_signature(kfs[q].features, vocab);
      auto matches = db.query(sig, int(q), int(s), cfg.bow.top_k, cfg.bow.exclusion_window);
      std::optional<LoopSearchHit> best;
      for (const auto& m : matches) {
        if (m.similarity < cfg.bow.min_similarity) continue;
        const BowEntry& e = db.entry(m.entry_index);
        if (earlier_sessions_only && e.session_id >= int(s)) continue;
        // Canonical pair key so each pair is verified once.
        std::array<int, 4> key{e.session_id, e.keyframe_id, int(s), int(q)};
        std::array<int, 4> rev{int(s), int(q), e.session_id, e.keyframe_id};
        if (rev < key) key = rev;
        if (!tried.insert(key).second) continue;
        const Keyframe& kf_match = (*sessions[size_t(e.session_id)])[size_t(e.keyframe_id)];
        auto cand = estimate_loop_transform(kfs[q], kf_match, cfg.loop);
        if (!cand) continue;
        if (earlier_sessions_only) {
          // Cross-session linking keeps only the strongest verified match per
          // query keyframe: one clean edge beats several conflicting ones.
          if (!best || cand->inliers > best->cand.inliers)
            best = LoopSearchHit{int(q), int(s), e.keyframe_id, e.session_id, *cand};
        } else {
          hits.push_back({int(q), int(s), e.keyframe_id, e.session_id, *cand});
        }
      }
      if (best) hits.push_back(*best);
    }
  }
  return hits;
}

}  // namespace

MapResult map_session(const io::Dataset& ds, const PipelineConfig& cfg, bool d2c) {
  cfg.validate();
  if (!fs::exists(ds.aligned_path(0)) || (d2c && !fs::exists(aligned_depth_path(ds, 0))))
    run_align(ds, d2c);

  const CameraIntrinsics& k_track = d2c ? ds.calib.color : ds.calib.depth;
  std::vector<DepthImage> frames;
  frames.reserve(size_t(ds.num_frames));
  for (int i = 0; i < ds.num_frames; ++i)
    frames.push_back(d2c ? io::read_pgm16(aligned_depth_path(ds, i)) : ds.load_depth(i));

  SessionResult session = run_session(frames, k_track, cfg.odometry);

  MapResult out;
  out.map_ids = session.map_ids;
  int lost_count = 0;
  out.lost.resize(size_t(ds.num_frames), 0);
  for (int i = 0; i < ds.num_frames; ++i)
    if (session.frames[size_t(i)].status == TrackStatus::lost) {
      out.lost[size_t(i)] = 1;
      ++lost_count;
    }
  if (lost_count * 2 > ds.num_frames)
    throw OdometryError("odometry lost on " + std::to_string(lost_count) + " of " +
                        std::to_string(ds.num_frames) + " frames");

  // All downstream state lives in the depth-camera frame; the D2C ablation
  // tracks in the color frame and converts here.
  const Pose c2d = ds.calib.rig.color_to_depth;
  std::vector<Pose> odom(size_t(ds.num_frames));
  for (int i = 0; i < ds.num_frames; ++i) {
    odom[size_t(i)] = session.frames[size_t(i)].pose;
    if (d2c) odom[size_t(i)] = odom[size_t(i)] * c2d.inverse();
  }

  // Keyframe payloads: features on the aligned color, depth-lifted feature
  // points, and a stride cloud for loop ICP.
  std::vector<double> kf_rmse;
  std::vector<int> kf_map_id;
  for (int i = 0; i < ds.num_frames; ++i) {
    if (!session.frames[size_t(i)].is_keyframe) continue;
    Keyframe kf;
    kf.frame_index = i;

    ColorImage aligned = io::read_ppm(ds.aligned_path(i));
    AlignedColor ac;
    ac.image = aligned;
    // In D2C mode the color image is native and fully valid; the stored mask
    // records warped-depth coverage, whose scattered holes would veto every
    // feature support window. Features that land on a hole simply get no 3-D
    // lift below.
    if (d2c)
      ac.raw_mask.assign(size_t(aligned.width) * size_t(aligned.height), 255);
    else
      ac.raw_mask = load_mask(ds.aligned_mask_path(i));
    ac.valid_mask = ac.raw_mask;
    kf.features = detect_features(ac, cfg.features);

    DepthImage track_depth = preprocess_depth(frames[size_t(i)], cfg.odometry);
    for (const Feature& f : kf.features) {
      double fu = f.u, fv = f.v;
      double fx = k_track.fx, fy = k_track.fy, cx = k_track.cx, cy = k_track.cy;
      int du, dv;
      if (d2c) {
        du = int(std::lround(fu));
        dv = int(std::lround(fv));
      } else {
        // Aligned image doubles the depth raster; intrinsics double with it.
        du = int(std::lround(fu / 2));
        dv = int(std::lround(fv / 2));
        fu /= 2;
        fv /= 2;
      }
      Vec3 p(0, 0, -1);
      if (du >= 0 && du < track_depth.width && dv >= 0 && dv < track_depth.height &&
          track_depth.valid(du, dv)) {
        double z = track_depth.at(du, dv) * 1e-3;
        p = Vec3(z * (fu - cx) / fx, z * (fv - cy) / fy, z);
        if (d2c) p = c2d * p;  // into the depth-camera frame
      }
      kf.feature_points.push_back(p);
    }

    kf.cloud = unproject_with_normals(track_depth, k_track, cfg.odometry.frame_stride);
    if (d2c) kf.cloud = kf.cloud.transformed(c2d);

    out.keyframe_frames.push_back(i);
    out.keyframes.push_back(std::move(kf));
    kf_rmse.push_back(session.frames[size_t(i)].rmse);
    kf_map_id.push_back(session.map_ids[size_t(i)]);
  }

  // Pose graph over keyframes: odometry chain per map, then loop edges.
  for (size_t j = 0; j < out.keyframes.size(); ++j)
    out.graph.nodes[int(j)] = {odom[size_t(out.keyframe_frames[j])], 0};
  out.graph.anchor = 0;
  for (size_t j = 1; j < out.keyframes.size(); ++j) {
    if (kf_map_id[j] != kf_map_id[j - 1]) continue;
    GraphEdge e;
    e.from = int(j) - 1;
    e.to = int(j);
    e.relative = odom[size_t(out.keyframe_frames[j - 1])].inverse() *
                 odom[size_t(out.keyframe_frames[j])];
    e.information = odometry_information(kf_rmse[j], cfg.graph);
    out.graph.edges.push_back(e);
  }

  if (!out.keyframes.empty()) {
    Vocabulary vocab = build_vocabulary(
        thin_for_vocabulary(out.keyframes, cfg.bow.max_train_descriptors), cfg.bow.num_words,
        cfg.bow.seed);
    if (!vocab.empty()) {
      // The tracking segment (map id) doubles as the BoW session id: the
      // temporal exclusion window only makes sense within one unbroken
      // odometry chain, and keyframes across a tracking break must stay
      // matchable so loop closures can reconnect the components.
      BowDatabase db;
      for (size_t j = 0; j < out.keyframes.size(); ++j)
        db.add(int(j), kf_map_id[j], bow_signature(out.keyframes[j].features, vocab));
      std::vector<LoopSearchHit> hits;
      std::set<std::array<int, 2>> tried;
      for (size_t q = 0; q < out.keyframes.size(); ++q) {
        BowSignature sig = bow_signature(out.keyframes[q].features, vocab);
        auto matches =
            db.query(sig, int(q), kf_map_id[q], cfg.bow.top_k, cfg.bow.exclusion_window);
        for (const auto& m : matches) {
          if (m.similarity < cfg.bow.min_similarity) continue;
          int j = db.entry(m.entry_index).keyframe_id;
          std::array<int, 2> key{std::min(int(q), j), std::max(int(q), j)};
          if (!tried.insert(key).second) continue;
          auto cand = estimate_loop_transform(out.keyframes[q], out.keyframes[size_t(j)],
                                              cfg.loop);
          if (cand) hits.push_back({int(q), 0, j, 0, *cand});
        }
      }
      for (const auto& h : hits) {
        // Odometry consistency gate: within one tracking segment the loop's
        // relative pose can only differ from the odometry chain by drift.
        // Perceptual aliases (repetitive scenes) imply huge corrections.
        if (kf_map_id[size_t(h.match_kf)] == kf_map_id[size_t(h.query_kf)]) {
          Pose odo_rel = odom[size_t(out.keyframe_frames[size_t(h.match_kf)])].inverse() *
                         odom[size_t(out.keyframe_frames[size_t(h.query_kf)])];
          Pose disc = h.cand.relative.inverse() * odo_rel;
          if (disc.translation().norm() > cfg.loop.odometry_gate_trans ||
              disc.rotation_angle() * 180.0 / M_PI > cfg.loop.odometry_gate_rot)
            continue;
        }
        GraphEdge e;
        // cand maps query-kf points into the match-kf frame, i.e. the
        // predicted pose_match^-1 * pose_query: an edge match -> query.
        e.from = h.match_kf;
        e.to = h.query_kf;
        e.relative = h.cand.relative;
        e.information = loop_information(h.cand.inliers, cfg.graph);
        e.kind = EdgeKind::loop;
        out.graph.edges.push_back(e);
        ++out.accepted_loops;
      }
    }
  }

  optimize_components(out.graph, cfg.graph.max_iterations);

  // Per-frame trajectory: each frame rides its most recent keyframe.
  out.trajectory.resize(size_t(ds.num_frames));
  int j = -1;
  for (int i = 0; i < ds.num_frames; ++i) {
    while (j + 1 < int(out.keyframe_frames.size()) && out.keyframe_frames[size_t(j + 1)] <= i)
      ++j;
    Pose p = odom[size_t(i)];
    if (j >= 0 && kf_map_id[size_t(j)] == out.map_ids[size_t(i)])
      p = out.graph.nodes.at(j).pose * odom[size_t(out.keyframe_frames[size_t(j)])].inverse() * p;
    out.trajectory[size_t(i)] = {ds.timestamps[size_t(i)], p};
  }
  return out;
}

namespace {

constexpr char kKeyframeMagic[] = "RGBDKF1\n";

void put_i32(std::string& s, int32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}
void put_f32(std::string& s, float v) {
  char b[4];
  std::memcpy(b, &v, 4);
  s.append(b, 4);
}
void put_f64(std::string& s, double v) {
  char b[8];
  std::memcpy(b, &v, 8);
  s.append(b, 8);
}

struct BinReader {
  std::ifstream is;
  fs::path path;

  explicit BinReader(const fs::path& p) : is(p, std::ios::binary), path(p) {
    if (!is) throw io::InputError("cannot open " + p.string());
  }
  void read(char* dst, size_t n) {
    is.read(dst, std::streamsize(n));
    if (!is) throw io::InputError(path.string() + ": truncated keyframe data");
  }
  int32_t i32() {
    int32_t v;
    read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  float f32() {
    float v;
    read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  double f64() {
    double v;
    read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
};

}  // namespace

void save_map_result(const fs::path& out_dir, const io::Dataset& ds, const MapResult& result) {
  fs::create_directories(out_dir);
  io::write_trajectory(out_dir / "trajectory.txt", result.trajectory);
  io::write_file_atomic(out_dir / "graph.txt", serialize_graph(result.graph));

  std::ostringstream kftxt;
  for (size_t j = 0; j < result.keyframe_frames.size(); ++j)
    kftxt << j << ' ' << result.keyframe_frames[j] << '\n';
  io::write_file_atomic(out_dir / "keyframes.txt", kftxt.str());

  std::string bin = kKeyframeMagic;
  put_i32(bin, int32_t(result.map_ids.size()));
  for (int m : result.map_ids) put_i32(bin, m);
  put_i32(bin, int32_t(result.keyframes.size()));
  for (const Keyframe& kf : result.keyframes) {
    put_i32(bin, kf.frame_index);
    put_i32(bin, int32_t(kf.features.size()));
    for (const Feature& f : kf.features) {
      put_f64(bin, f.u);
      put_f64(bin, f.v);
      put_f64(bin, f.scale);
      put_f64(bin, f.orientation);
      put_f64(bin, f.contrast);
      for (float d : f.descriptor) put_f32(bin, d);
    }
    for (const Vec3& p : kf.feature_points)
      for (int a = 0; a < 3; ++a) put_f64(bin, p[a]);
    put_i32(bin, int32_t(kf.cloud.points.size()));
    put_i32(bin, kf.cloud.has_normals() ? 1 : 0);
    for (size_t i = 0; i < kf.cloud.points.size(); ++i) {
      for (int a = 0; a < 3; ++a) put_f32(bin, float(kf.cloud.points[i][a]));
      if (kf.cloud.has_normals())
        for (int a = 0; a < 3; ++a) put_f32(bin, float(kf.cloud.normals[i][a]));
    }
  }
  io::write_file_atomic(out_dir / "keyframes.bin", bin);
  (void)ds;
}

SessionData load_session(const fs::path& map_dir) {
  SessionData s;
  s.trajectory = io::read_trajectory(map_dir / "trajectory.txt");

  std::ifstream gis(map_dir / "graph.txt");
  if (!gis) throw io::InputError("cannot open " + (map_dir / "graph.txt").string());
  std::stringstream gbuf;
  gbuf << gis.rdbuf();
  s.graph = parse_graph(gbuf.str());

  std::ifstream kis(map_dir / "keyframes.txt");
  if (!kis) throw io::InputError("cannot open " + (map_dir / "keyframes.txt").string());
  int ord, frame;
  while (kis >> ord >> frame) s.keyframe_frames.push_back(frame);

  BinReader r(map_dir / "keyframes.bin");
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kKeyframeMagic, 8) != 0)
    throw io::InputError((map_dir / "keyframes.bin").string() + ": bad magic");
  int nframes = r.i32();
  s.map_ids.resize(size_t(nframes));
  for (int i = 0; i < nframes; ++i) s.map_ids[size_t(i)] = r.i32();
  int nkf = r.i32();
  for (int j = 0; j < nkf; ++j) {
    Keyframe kf;
    kf.frame_index = r.i32();
    int nfeat = r.i32();
    kf.features.resize(size_t(nfeat));
    for (Feature& f : kf.features) {
      f.u = r.f64();
      f.v = r.f64();
      f.scale = r.f64();
      f.orientation = r.f64();
      f.contrast = r.f64();
      for (float& d : f.descriptor) d = r.f32();
    }
    kf.feature_points.resize(size_t(nfeat));
    for (Vec3& p : kf.feature_points)
      for (int a = 0; a < 3; ++a) p[a] = r.f64();
    int npts = r.i32();
    bool has_normals = r.i32() != 0;
    kf.cloud.points.resize(size_t(npts));
    if (has_normals) kf.cloud.normals.resize(size_t(npts));
    for (int i = 0; i < npts; ++i) {
      for (int a = 0; a < 3; ++a) kf.cloud.points[size_t(i)][a] = r.f32();
      if (has_normals)
        for (int a = 0; a < 3; ++a) kf.cloud.normals[size_t(i)][a] = r.f32();
    }
    s.keyframes.push_back(std::move(kf));
  }
  if (s.trajectory.size() != s.map_ids.size())
    throw io::InputError(map_dir.string() + ": trajectory/keyframe frame count mismatch");
  return s;
}

MergeResult merge_sessions_data(const std::vector<SessionData>& sessions,
                                const PipelineConfig& cfg) {
  if (sessions.empty()) throw io::InputError("merge: no sessions given");
  cfg.validate();

  Vocabulary vocab = build_vocabulary(
      thin_for_vocabulary(sessions[0].keyframes, cfg.bow.max_train_descriptors),
      cfg.bow.num_words, cfg.bow.seed);
  if (vocab.empty()) throw MergeError("merge: first session has no features for the vocabulary");

  BowDatabase db;
  std::vector<const std::vector<Keyframe>*> kf_lists;
  for (size_t s = 0; s < sessions.size(); ++s) {
    kf_lists.push_back(&sessions[s].keyframes);
    for (size_t j = 0; j < sessions[s].keyframes.size(); ++j)
      db.add(int(j), int(s), bow_signature(sessions[s].keyframes[j].features, vocab));
  }

  auto hits = search_loops(kf_lists, vocab, db, true, cfg);

  std::vector<CrossEdge> cross;
  std::vector<int> edges_per_session(sessions.size(), 0);
  for (const auto& h : hits) {
    CrossEdge e;
    e.from_session = h.match_session;
    e.from_node = h.match_kf;
    e.to_session = h.query_session;
    e.to_node = h.query_kf;
    e.relative = h.cand.relative;
    e.information = loop_information(h.cand.inliers, cfg.graph);
    cross.push_back(e);
    ++edges_per_session[size_t(h.query_session)];
  }
  for (size_t s = 1; s < sessions.size(); ++s)
    if (edges_per_session[s] == 0)
      throw MergeError("merge: session " + std::to_string(s) +
                       " has no loop closure to the merged set");

  std::vector<PoseGraph> graphs;
  for (const auto& s : sessions) graphs.push_back(s.graph);
  PoseGraph merged;
  try {
    merged = merge_sessions(graphs, cross);
  } catch (const std::runtime_error& e) {
    throw MergeError(e.what());
  }

  MergeResult out;
  out.cross_edges = int(cross.size());

  // Per-session global trajectories: frames follow their keyframe's merged
  // correction.
  for (size_t s = 0; s < sessions.size(); ++s) {
    const SessionData& sd = sessions[s];
    Trajectory traj = sd.trajectory;
    int j = -1;
    for (size_t i = 0; i < traj.size(); ++i) {
      while (j + 1 < int(sd.keyframe_frames.size()) &&
             sd.keyframe_frames[size_t(j + 1)] <= int(i))
        ++j;
      if (j < 0) continue;
      int kf_frame = sd.keyframe_frames[size_t(j)];
      if (sd.map_ids[size_t(kf_frame)] != sd.map_ids[i]) continue;
      const Pose& merged_kf = merged.nodes.at(merged_node_id(int(s), j)).pose;
      const Pose& session_kf = sd.graph.nodes.at(j).pose;
      traj[i].pose = merged_kf * session_kf.inverse() * traj[i].pose;
    }
    out.trajectories.push_back(std::move(traj));
  }
  out.graph = std::move(merged);
  return out;
}

FuseResult fuse_dataset(const io::Dataset& ds, const Trajectory& traj,
                        const PipelineConfig& cfg) {
  cfg.validate();
  if (int(traj.size()) != ds.num_frames)
    throw io::InputError("fuse: trajectory has " + std::to_string(traj.size()) +
                         " poses for " + std::to_string(ds.num_frames) + " frames");

  std::vector<DepthImage> frames;
  std::vector<Pose> poses;
  frames.reserve(size_t(ds.num_frames));
  PointCloud global;
  for (int i = 0; i < ds.num_frames; ++i) {
    // Same depth prefilter as odometry: the TSDF averages across frames, but
    // per-frame smoothing still tames oblique-surface and speckle artifacts.
    frames.push_back(preprocess_depth(ds.load_depth(i), cfg.odometry));
    poses.push_back(traj[size_t(i)].pose);
    PointCloud part =
        unproject(frames.back(), ds.calib.depth, cfg.fusion.cloud_stride).transformed(poses.back());
    part.view_ids.assign(part.points.size(), i);
    global.append(part);
  }
  if (global.points.empty()) throw io::InputError("fuse: dataset yields no points");

  auto segments = kmeans_partition(global, cfg.fusion.point_budget, cfg.fusion.seed);
  FuseConfig fc{cfg.fusion.tsdf, cfg.fusion.point_budget, cfg.fusion.seed};
  FuseResult out;
  out.mesh = fuse_segments(segments, frames, ds.calib.depth, poses, fc);
  // The fused cloud is the denoised surface itself: TSDF averaging across
  // frames removes per-frame sensor noise that the raw union would keep.
  out.cloud.points = out.mesh.vertices;
  return out;
}

}  // namespace rgbd::pipeline
