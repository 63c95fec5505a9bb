#include "mot3d/io.hpp"

#include "mot3d/errors.hpp"

#include <boost/beast/core/detail/base64.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace mot3d {

namespace {

namespace base64 = boost::beast::detail::base64;
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Json mat_json(const Mat3& m) {
  Json a = Json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

Mat3 mat_from(const Json& j) {
  if (!j.is_array() || j.size() != 9) throw FormatError("expected 9 row-major matrix entries");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = j[r * 3 + c].get<double>();
  return m;
}

void check_version(const Json& j, const std::string& kind, const std::string& where) {
  if (!j.is_object() || !j.contains("format_version") || !j.contains("kind")) {
    throw FormatError(where + ": missing format_version or kind");
  }
  if (j.at("kind") != kind) throw FormatError(where + ": expected kind '" + kind + "'");
  if (j.at("format_version") != kFormatVersion) {
    throw FormatError(where + ": unsupported format_version " + j.at("format_version").dump());
  }
}

// Runs a decoder, turning JSON type/shape errors into FormatError.
template <typename F>
auto decode(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(where + ": " + e.what());
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw FormatError("grid sidecar: truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

std::string to_base64(std::span<const std::uint8_t> bytes) {
  std::string out(base64::encoded_size(bytes.size()), '\0');
  out.resize(base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<std::uint8_t> from_base64(const std::string& text) {
  std::vector<std::uint8_t> out(base64::decoded_size(text.size()));
  const auto [written, read] = base64::decode(out.data(), text.data(), text.size());
  // The decoder stops at padding; at most two '=' may follow.
  const std::size_t pad = text.size() - read;
  if (pad > 2 || text.find_first_not_of('=', read) != std::string::npos) {
    throw FormatError("invalid base64 at offset " + std::to_string(read));
  }
  out.resize(written);
  return out;
}

std::string encode_points(std::span<const Vec3> points) {
  std::vector<std::uint8_t> bytes(points.size() * 3 * sizeof(double));
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::memcpy(bytes.data() + i * 3 * sizeof(double), points[i].data(), 3 * sizeof(double));
  }
  return to_base64(bytes);
}

PointCloud decode_points(const std::string& text) {
  const auto bytes = from_base64(text);
  if (bytes.size() % (3 * sizeof(double)) != 0) throw FormatError("point list length is not a multiple of 24 bytes");
  PointCloud out(bytes.size() / (3 * sizeof(double)));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::memcpy(out[i].data(), bytes.data() + i * 3 * sizeof(double), 3 * sizeof(double));
  }
  return out;
}

void to_json(Json& j, const Pose7& p) {
  j = Json{{"scale", p.scale}, {"rotation", mat_json(p.rotation)}, {"translation", vec_json(p.translation)}};
}

void from_json(const Json& j, Pose7& p) {
  p.scale = j.at("scale").get<double>();
  p.rotation = mat_from(j.at("rotation"));
  p.translation = vec_from(j.at("translation"));
}

void to_json(Json& j, const Box2& b) {
  j = Json{{"min", {b.min.x(), b.min.y()}}, {"max", {b.max.x(), b.max.y()}}};
}

void from_json(const Json& j, Box2& b) {
  const auto lo = j.at("min").get<std::array<double, 2>>();
  const auto hi = j.at("max").get<std::array<double, 2>>();
  b.min = Vec2(lo[0], lo[1]);
  b.max = Vec2(hi[0], hi[1]);
}

void to_json(Json& j, const Box3& b) {
  j = Json{{"center", vec_json(b.center)}, {"half_extents", vec_json(b.half_extents)}, {"yaw", b.yaw}};
}

void from_json(const Json& j, Box3& b) {
  b.center = vec_from(j.at("center"));
  b.half_extents = vec_from(j.at("half_extents"));
  b.yaw = j.at("yaw").get<double>();
}

void to_json(Json& j, const CameraModel& c) {
  j = Json{{"fx", c.fx},
           {"fy", c.fy},
           {"cx", c.cx},
           {"cy", c.cy},
           {"width", c.width},
           {"height", c.height},
           {"near_plane", c.near_plane},
           {"far_plane", c.far_plane},
           {"rotation", mat_json(c.rotation)},
           {"translation", vec_json(c.translation)}};
}

void from_json(const Json& j, CameraModel& c) {
  reject_unknown_keys(j, {"fx", "fy", "cx", "cy", "width", "height", "near_plane", "far_plane", "rotation", "translation"},
                      "camera");
  read_field(j, "fx", c.fx);
  read_field(j, "fy", c.fy);
  read_field(j, "cx", c.cx);
  read_field(j, "cy", c.cy);
  read_field(j, "width", c.width);
  read_field(j, "height", c.height);
  read_field(j, "near_plane", c.near_plane);
  read_field(j, "far_plane", c.far_plane);
  if (j.contains("rotation")) c.rotation = mat_from(j.at("rotation"));
  if (j.contains("translation")) c.translation = vec_from(j.at("translation"));
}

void to_json(Json& j, const OccupancyGrid& g) {
  j = Json{{"resolution", g.resolution()}, {"bits", to_base64(g.pack())}};
}

void from_json(const Json& j, OccupancyGrid& g) {
  g = OccupancyGrid::unpack(j.at("resolution").get<int>(), from_base64(j.at("bits").get<std::string>()));
}

void to_json(Json& j, const DetectionRecord& d) {
  j = Json{{"frame", d.frame},
           {"class", class_name(d.object_class)},
           {"objectness", d.objectness},
           {"box2", d.box2}};
  if (d.box3) j["box3"] = *d.box3;
  if (d.pose) j["pose"] = *d.pose;
  if (d.gt_instance) j["gt_instance"] = *d.gt_instance;
  j["noc"] = encode_points(d.correspondences.noc_points);
  j["obs"] = encode_points(d.correspondences.obs_points);
  if (!d.gt_noc.empty()) j["gt_noc"] = encode_points(d.gt_noc);
  j["grid"] = d.grid;
}

void from_json(const Json& j, DetectionRecord& d) {
  reject_unknown_keys(j, {"frame", "class", "objectness", "box2", "box3", "pose", "gt_instance", "noc", "obs", "gt_noc", "grid"},
                      "detection");
  d = DetectionRecord();
  d.frame = j.at("frame").get<int>();
  d.object_class = parse_class(j.at("class").get<std::string>());
  d.objectness = j.at("objectness").get<double>();
  d.box2 = j.at("box2").get<Box2>();
  if (j.contains("box3")) d.box3 = j.at("box3").get<Box3>();
  if (j.contains("pose")) d.pose = j.at("pose").get<Pose7>();
  if (j.contains("gt_instance")) d.gt_instance = j.at("gt_instance").get<int>();
  d.correspondences.noc_points = decode_points(j.at("noc").get<std::string>());
  d.correspondences.obs_points = decode_points(j.at("obs").get<std::string>());
  if (j.contains("gt_noc")) d.gt_noc = decode_points(j.at("gt_noc").get<std::string>());
  d.grid = j.at("grid").get<OccupancyGrid>();
  d.validate();
}

void to_json(Json& j, const FilterParams& p) {
  j = Json{{"objectness_threshold", p.objectness_threshold},
           {"nms_iou", p.nms_iou},
           {"gt_iou_threshold", p.gt_iou_threshold}};
}

void from_json(const Json& j, FilterParams& p) {
  reject_unknown_keys(j, {"objectness_threshold", "nms_iou", "gt_iou_threshold"}, "filter");
  read_field(j, "objectness_threshold", p.objectness_threshold);
  read_field(j, "nms_iou", p.nms_iou);
  read_field(j, "gt_iou_threshold", p.gt_iou_threshold);
}

void to_json(Json& j, const PipelineParams& p) {
  j = Json{{"outlier", p.outlier},
           {"filter", p.filter},
           {"window", p.window},
           {"edge_threshold", p.edge_threshold},
           {"heuristic_gate", p.heuristic_gate},
           {"label_iou", p.label_iou},
           {"seed", p.seed}};
}

void from_json(const Json& j, PipelineParams& p) {
  reject_unknown_keys(j, {"outlier", "filter", "window", "edge_threshold", "heuristic_gate", "label_iou", "seed"},
                      "pipeline");
  read_field(j, "outlier", p.outlier);
  read_field(j, "filter", p.filter);
  read_field(j, "window", p.window);
  read_field(j, "edge_threshold", p.edge_threshold);
  read_field(j, "heuristic_gate", p.heuristic_gate);
  read_field(j, "label_iou", p.label_iou);
  read_field(j, "seed", p.seed);
}

namespace sim {

void to_json(Json& j, const SceneConfig& c) {
  j = Json{{"frames", c.frames},
           {"min_objects", c.min_objects},
           {"max_objects", c.max_objects},
           {"room_min_side", c.room_min_side},
           {"room_max_side", c.room_max_side},
           {"room_height", c.room_height},
           {"max_obstacles", c.max_obstacles},
           {"cluster_radius", c.cluster_radius},
           {"sigma", c.sigma},
           {"phi_obj", c.phi_obj},
           {"phi_cam", c.phi_cam},
           {"eps0", c.eps0},
           {"d_star", c.d_star},
           {"sigma0", c.sigma0},
           {"n_max", c.n_max},
           {"interest_threshold", c.interest_threshold},
           {"frames_per_waypoint", c.frames_per_waypoint},
           {"waypoint_clearance", c.waypoint_clearance},
           {"upright_objects", c.upright_objects},
           {"min_visibility", c.min_visibility},
           {"class_weights", c.class_weights},
           {"intrinsics", c.intrinsics},
           {"seed", c.seed}};
}

void from_json(const Json& j, SceneConfig& c) {
  reject_unknown_keys(j,
                      {"frames", "min_objects", "max_objects", "room_min_side", "room_max_side", "room_height",
                       "max_obstacles", "cluster_radius", "sigma", "phi_obj", "phi_cam", "eps0", "d_star", "sigma0",
                       "n_max", "interest_threshold", "frames_per_waypoint", "waypoint_clearance", "upright_objects",
                       "min_visibility", "class_weights", "intrinsics", "seed"},
                      "scene");
  read_field(j, "frames", c.frames);
  read_field(j, "min_objects", c.min_objects);
  read_field(j, "max_objects", c.max_objects);
  read_field(j, "room_min_side", c.room_min_side);
  read_field(j, "room_max_side", c.room_max_side);
  read_field(j, "room_height", c.room_height);
  read_field(j, "max_obstacles", c.max_obstacles);
  read_field(j, "cluster_radius", c.cluster_radius);
  read_field(j, "sigma", c.sigma);
  read_field(j, "phi_obj", c.phi_obj);
  read_field(j, "phi_cam", c.phi_cam);
  read_field(j, "eps0", c.eps0);
  read_field(j, "d_star", c.d_star);
  read_field(j, "sigma0", c.sigma0);
  read_field(j, "n_max", c.n_max);
  read_field(j, "interest_threshold", c.interest_threshold);
  read_field(j, "frames_per_waypoint", c.frames_per_waypoint);
  read_field(j, "waypoint_clearance", c.waypoint_clearance);
  read_field(j, "upright_objects", c.upright_objects);
  read_field(j, "min_visibility", c.min_visibility);
  read_field(j, "class_weights", c.class_weights);
  read_field(j, "intrinsics", c.intrinsics);
  read_field(j, "seed", c.seed);
}

void to_json(Json& j, const NoiseModel& n) {
  j = Json{{"correspondence_noise_std", n.correspondence_noise_std},
           {"noc_noise_std", n.noc_noise_std},
           {"outlier_fraction", n.outlier_fraction},
           {"dropout_prob", n.dropout_prob},
           {"objectness_min", n.objectness_min},
           {"objectness_max", n.objectness_max},
           {"pose_translation_std", n.pose_translation_std},
           {"pose_yaw_std", n.pose_yaw_std},
           {"pose_scale_std", n.pose_scale_std},
           {"grid_corruption", n.grid_corruption},
           {"points_per_detection", n.points_per_detection}};
}

void from_json(const Json& j, NoiseModel& n) {
  reject_unknown_keys(j,
                      {"correspondence_noise_std", "noc_noise_std", "outlier_fraction", "dropout_prob", "objectness_min",
                       "objectness_max", "pose_translation_std", "pose_yaw_std", "pose_scale_std", "grid_corruption",
                       "points_per_detection"},
                      "noise");
  read_field(j, "correspondence_noise_std", n.correspondence_noise_std);
  read_field(j, "noc_noise_std", n.noc_noise_std);
  read_field(j, "outlier_fraction", n.outlier_fraction);
  read_field(j, "dropout_prob", n.dropout_prob);
  read_field(j, "objectness_min", n.objectness_min);
  read_field(j, "objectness_max", n.objectness_max);
  read_field(j, "pose_translation_std", n.pose_translation_std);
  read_field(j, "pose_yaw_std", n.pose_yaw_std);
  read_field(j, "pose_scale_std", n.pose_scale_std);
  read_field(j, "grid_corruption", n.grid_corruption);
  read_field(j, "points_per_detection", n.points_per_detection);
}

}  // namespace sim

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Json read_versioned(const fs::path& path, const std::string& kind) {
  const std::string text = read_text(path);
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + ": not valid JSON");
  check_version(j, kind, path.string());
  return j;
}

std::vector<std::uint8_t> encode_grid_sidecar(std::span<const OccupancyGrid> grids) {
  std::vector<std::uint8_t> out = {'M', '3', 'D', 'G'};
  put_u32(out, kFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(grids.size()));
  for (const auto& g : grids) {
    const auto bytes = g.pack();
    put_u32(out, static_cast<std::uint32_t>(g.resolution()));
    put_u32(out, static_cast<std::uint32_t>(bytes.size()));
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

std::vector<OccupancyGrid> decode_grid_sidecar(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "M3DG", 4) != 0) throw FormatError("grid sidecar: bad magic");
  std::size_t pos = 4;
  if (get_u32(bytes, pos) != kFormatVersion) throw FormatError("grid sidecar: unsupported version");
  const std::uint32_t count = get_u32(bytes, pos);
  std::vector<OccupancyGrid> grids;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto res = get_u32(bytes, pos);
    const auto len = get_u32(bytes, pos);
    if (res == 0 || res > 1024) throw FormatError("grid sidecar: bad resolution");
    if (pos + len > bytes.size()) throw FormatError("grid sidecar: truncated");
    grids.push_back(OccupancyGrid::unpack(static_cast<int>(res), bytes.subspan(pos, len)));
    pos += len;
  }
  if (pos != bytes.size()) throw FormatError("grid sidecar: trailing bytes");
  return grids;
}

void write_sequence(const fs::path& dir, const std::string& id, const sim::SceneSequence& seq) {
  const std::string grids_file = id + ".grids.bin";
  Json obstacles = Json::array();
  for (const auto& o : seq.room.obstacles) obstacles.push_back(o);
  Json objects = Json::array();
  std::vector<OccupancyGrid> grids;
  for (const auto& o : seq.objects) {
    objects.push_back(Json{{"instance", o.instance},
                           {"class", class_name(o.object_class)},
                           {"scale", o.scale},
                           {"noc_min", vec_json(o.noc_min)},
                           {"noc_max", vec_json(o.noc_max)}});
    grids.push_back(o.grid);
  }
  Json frames = Json::array();
  for (const auto& f : seq.frames) {
    frames.push_back(Json{{"camera", f.camera},
                          {"poses", f.poses},
                          {"boxes", f.boxes},
                          {"visibility", f.visibility},
                          {"annotated", f.annotated},
                          {"interest", f.interest}});
  }
  const Json j{{"format_version", kFormatVersion},
               {"kind", "mot3d-sequence"},
               {"id", id},
               {"config", seq.config},
               {"room", {{"min", vec_json(seq.room.min)}, {"max", vec_json(seq.room.max)}, {"obstacles", obstacles}}},
               {"grids_file", grids_file},
               {"objects", objects},
               {"frames", frames}};
  const auto sidecar = encode_grid_sidecar(grids);
  write_text(dir / grids_file, std::string(sidecar.begin(), sidecar.end()));
  write_text(dir / (id + ".seq.json"), dump_json(j));
}

sim::SceneSequence read_sequence(const fs::path& dir, const std::string& id) {
  const fs::path path = dir / (id + ".seq.json");
  const Json j = read_versioned(path, "mot3d-sequence");
  return decode(path.string(), [&] {
    sim::SceneSequence seq;
    seq.config = j.at("config").get<sim::SceneConfig>();
    const Json& room = j.at("room");
    seq.room.min = vec_from(room.at("min"));
    seq.room.max = vec_from(room.at("max"));
    seq.room.obstacles = room.at("obstacles").get<std::vector<Box3>>();
    const std::string sidecar = read_text(dir / j.at("grids_file").get<std::string>());
    auto grids = decode_grid_sidecar(
        std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(sidecar.data()), sidecar.size()));
    const Json& objects = j.at("objects");
    if (grids.size() != objects.size()) throw FormatError(path.string() + ": grid count differs from object count");
    for (std::size_t k = 0; k < objects.size(); ++k) {
      sim::SceneObject o;
      o.instance = objects[k].at("instance").get<int>();
      o.object_class = parse_class(objects[k].at("class").get<std::string>());
      o.scale = objects[k].at("scale").get<double>();
      o.noc_min = vec_from(objects[k].at("noc_min"));
      o.noc_max = vec_from(objects[k].at("noc_max"));
      o.grid = std::move(grids[k]);
      seq.objects.push_back(std::move(o));
    }
    for (const auto& f : j.at("frames")) {
      sim::FrameState fs;
      fs.camera = f.at("camera").get<CameraModel>();
      fs.poses = f.at("poses").get<std::vector<Pose7>>();
      fs.boxes = f.at("boxes").get<std::vector<Box3>>();
      fs.visibility = f.at("visibility").get<std::vector<double>>();
      fs.annotated = f.at("annotated").get<std::vector<int>>();
      fs.interest = f.at("interest").get<double>();
      if (fs.poses.size() != seq.objects.size() || fs.boxes.size() != seq.objects.size() ||
          fs.visibility.size() != seq.objects.size()) {
        throw FormatError(path.string() + ": per-object frame arrays have the wrong length");
      }
      for (const int k : fs.annotated) {
        if (k < 0 || static_cast<std::size_t>(k) >= seq.objects.size()) {
          throw FormatError(path.string() + ": annotated index out of range");
        }
      }
      seq.frames.push_back(std::move(fs));
    }
    return seq;
  });
}

void write_detections(const fs::path& path, const DetectionFile& file) {
  if (file.cameras.size() != file.detections.size()) {
    throw InvalidInput("write_detections: " + std::to_string(file.cameras.size()) + " cameras for " +
                       std::to_string(file.detections.size()) + " frames");
  }
  Json frames = Json::array();
  for (std::size_t f = 0; f < file.detections.size(); ++f) {
    frames.push_back(Json{{"camera", file.cameras[f]}, {"detections", file.detections[f]}});
  }
  const Json j{{"format_version", kFormatVersion}, {"kind", "mot3d-detections"}, {"id", file.id}, {"frames", frames}};
  write_text(path, dump_json(j));
}

DetectionFile read_detections(const fs::path& path) {
  const Json j = read_versioned(path, "mot3d-detections");
  return decode(path.string(), [&] {
    DetectionFile file;
    file.id = j.at("id").get<std::string>();
    for (const auto& f : j.at("frames")) {
      file.cameras.push_back(f.at("camera").get<CameraModel>());
      file.detections.push_back(f.at("detections").get<std::vector<DetectionRecord>>());
    }
    return file;
  });
}

void write_index(const fs::path& path, std::span<const IndexEntry> entries) {
  Json seqs = Json::array();
  for (const auto& e : entries) {
    seqs.push_back(Json{{"id", e.id}, {"sequence", e.sequence}, {"detections", e.detections}});
  }
  write_text(path, dump_json(Json{{"format_version", kFormatVersion}, {"kind", "mot3d-index"}, {"sequences", seqs}}));
}

std::vector<IndexEntry> read_index(const fs::path& path) {
  const Json j = read_versioned(path, "mot3d-index");
  return decode(path.string(), [&] {
    std::vector<IndexEntry> out;
    for (const auto& e : j.at("sequences")) {
      out.push_back({e.at("id").get<std::string>(), e.at("sequence").get<std::string>(),
                     e.at("detections").get<std::string>()});
    }
    return out;
  });
}

std::vector<SequenceData> load_dataset(const fs::path& dir) {
  const fs::path index = dir / "index.json";
  if (!fs::exists(index)) throw InvalidInput("no index.json in " + dir.string());
  std::vector<SequenceData> out;
  for (const auto& e : read_index(index)) {
    DetectionFile dets = read_detections(dir / e.detections);
    if (e.sequence.empty()) {
      SequenceData d;
      d.id = e.id;
      d.cameras = std::move(dets.cameras);
      d.detections = std::move(dets.detections);
      out.push_back(std::move(d));
      continue;
    }
    const fs::path seq_path = dir / e.sequence;
    std::string stem = seq_path.filename().string();
    const std::string suffix = ".seq.json";
    if (stem.size() <= suffix.size() || stem.substr(stem.size() - suffix.size()) != suffix) {
      throw FormatError("index entry " + e.id + ": sequence file must end in " + suffix);
    }
    stem.resize(stem.size() - suffix.size());
    const auto seq = read_sequence(seq_path.parent_path(), stem);
    out.push_back(sequence_data(e.id, seq, std::move(dets.detections)));
  }
  return out;
}

Json tracklets_to_json(const std::string& id, int frames, std::span<const Tracklet> tracklets) {
  Json list = Json::array();
  for (const auto& t : tracklets) {
    Json entries = Json::array();
    for (const auto& e : t.entries) {
      entries.push_back(Json{{"frame", e.frame}, {"detection", e.detection}, {"center", vec_json(e.center)}, {"pose", e.pose}});
    }
    list.push_back(Json{{"id", t.instance_id}, {"class", class_name(t.object_class)}, {"entries", entries}});
  }
  return Json{{"format_version", kFormatVersion},
              {"kind", "mot3d-tracklets"},
              {"id", id},
              {"frames", frames},
              {"tracklets", list}};
}

std::vector<Tracklet> tracklets_from_json(const Json& j, int* frames) {
  check_version(j, "mot3d-tracklets", "tracklets");
  return decode("tracklets", [&] {
    const int n = j.at("frames").get<int>();
    if (frames) *frames = n;
    std::vector<Tracklet> out;
    for (const auto& t : j.at("tracklets")) {
      Tracklet tr;
      tr.instance_id = t.at("id").get<int>();
      tr.object_class = parse_class(t.at("class").get<std::string>());
      for (const auto& e : t.at("entries")) {
        TrackletEntry te;
        te.frame = e.at("frame").get<int>();
        if (te.frame < 0 || te.frame >= n) throw FormatError("tracklets: entry frame out of range");
        te.detection = e.at("detection").get<int>();
        te.center = vec_from(e.at("center"));
        te.pose = e.at("pose").get<Pose7>();
        tr.entries.push_back(te);
      }
      out.push_back(std::move(tr));
    }
    return out;
  });
}

}  // namespace mot3d
