#include "doctest.h"

#include "mot3d/errors.hpp"
#include "mot3d/io.hpp"

#include <filesystem>

using namespace mot3d;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mot3d_test_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

sim::SceneSequence small_sequence(std::uint64_t seed) {
  sim::SceneConfig c;
  c.seed = seed;
  c.frames = 6;
  return sim::generate_sequence(c);
}

}  // namespace

TEST_CASE("base64 matches the standard test vectors") {
  const auto enc = [](const std::string& s) {
    return to_base64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
  };
  CHECK(enc("") == "");
  CHECK(enc("f") == "Zg==");
  CHECK(enc("fo") == "Zm8=");
  CHECK(enc("foo") == "Zm9v");
  CHECK(enc("foob") == "Zm9vYg==");
  CHECK(enc("fooba") == "Zm9vYmE=");
  CHECK(enc("foobar") == "Zm9vYmFy");
  const auto dec = from_base64("Zm9vYmFy");
  CHECK(std::string(dec.begin(), dec.end()) == "foobar");
  CHECK_THROWS_AS(from_base64("Zm9v!mFy"), FormatError);
}

TEST_CASE("point lists are little-endian float64 triples") {
  const PointCloud pts = {Vec3(1.0, -2.5, 0.1), Vec3(-0.0, 1e-300, 3.0)};
  const auto bytes = from_base64(encode_points(pts));
  REQUIRE(bytes.size() == 48);
  // 1.0 is 0x3FF0000000000000.
  CHECK(bytes[0] == 0x00);
  CHECK(bytes[6] == 0xF0);
  CHECK(bytes[7] == 0x3F);
  const auto back = decode_points(encode_points(pts));
  REQUIRE(back.size() == 2);
  for (int i = 0; i < 2; ++i) CHECK(back[i] == pts[i]);
  CHECK(std::signbit(back[1].x()));
  CHECK_THROWS_AS(decode_points(to_base64(std::vector<std::uint8_t>(10))), FormatError);
}

TEST_CASE("grid sidecar layout") {
  OccupancyGrid g(2);
  g.set(1, 0, 0, true);
  g.set(1, 1, 1, true);
  const std::vector<OccupancyGrid> grids = {g, OccupancyGrid(3)};
  const auto bytes = encode_grid_sidecar(grids);
  // magic, version, count, then (res, len, bytes) for 8 cells -> 1 byte and 27 cells -> 4 bytes.
  REQUIRE(bytes.size() == 4 + 4 + 4 + (8 + 1) + (8 + 4));
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "M3DG");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 2);
  CHECK(bytes[16] == 1);
  // Cells 1 (x=1) and 7 (x=1, y=1, z=1).
  CHECK(bytes[20] == 0b10000010);
  const auto back = decode_grid_sidecar(bytes);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == g);
  CHECK(back[1] == OccupancyGrid(3));

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_grid_sidecar(bad), FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_grid_sidecar(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  CHECK_THROWS_AS(decode_grid_sidecar(bad), FormatError);
}

TEST_CASE("sequence files round-trip byte-identically") {
  const fs::path a = temp_dir("seq_a"), b = temp_dir("seq_b");
  const auto seq = small_sequence(3);
  write_sequence(a, "s", seq);
  const auto back = read_sequence(a, "s");
  REQUIRE(back.objects.size() == seq.objects.size());
  REQUIRE(back.frames.size() == seq.frames.size());
  CHECK(back.objects[0].grid == seq.objects[0].grid);
  CHECK(back.frames[4].poses[1].rotation == seq.frames[4].poses[1].rotation);
  CHECK(back.frames[4].boxes[1].center == seq.frames[4].boxes[1].center);
  CHECK(back.frames[2].annotated == seq.frames[2].annotated);
  CHECK(back.config.seed == 3);
  write_sequence(b, "s", back);
  CHECK(read_text(a / "s.seq.json") == read_text(b / "s.seq.json"));
  CHECK(read_text(a / "s.grids.bin") == read_text(b / "s.grids.bin"));
}

TEST_CASE("detection files round-trip byte-identically") {
  const fs::path dir = temp_dir("det");
  const auto seq = small_sequence(4);
  auto rng = sim::make_rng(4, 1);
  DetectionFile file{"s", {}, sim::synthesize_detections(seq, sim::NoiseModel(), rng)};
  for (const auto& f : seq.frames) file.cameras.push_back(f.camera);
  // Give one record the optional fields.
  for (auto& frame : file.detections) {
    if (frame.empty()) continue;
    frame[0].pose = Pose7{1.5, rotation_about_z(0.3), Vec3(1, 2, 3)};
    frame[0].box3 = Box3{Vec3(1, 2, 3), Vec3(0.2, 0.3, 0.4), 0.3};
    break;
  }
  write_detections(dir / "a.det.json", file);
  const auto back = read_detections(dir / "a.det.json");
  CHECK(back.id == "s");
  REQUIRE(back.detections.size() == file.detections.size());
  for (std::size_t f = 0; f < back.detections.size(); ++f) {
    REQUIRE(back.detections[f].size() == file.detections[f].size());
    for (std::size_t i = 0; i < back.detections[f].size(); ++i) {
      const auto& x = back.detections[f][i];
      const auto& y = file.detections[f][i];
      CHECK(x.gt_instance == y.gt_instance);
      CHECK(x.correspondences.obs_points == y.correspondences.obs_points);
      CHECK(x.gt_noc == y.gt_noc);
      CHECK(x.grid == y.grid);
      CHECK(x.pose.has_value() == y.pose.has_value());
      CHECK(x.objectness == y.objectness);
    }
  }
  write_detections(dir / "b.det.json", back);
  CHECK(read_text(dir / "a.det.json") == read_text(dir / "b.det.json"));
}

TEST_CASE("malformed files are rejected") {
  const fs::path dir = temp_dir("bad");
  write_text(dir / "x.json", "{not json");
  CHECK_THROWS_AS(read_detections(dir / "x.json"), FormatError);
  write_text(dir / "y.json", R"({"format_version": 2, "kind": "mot3d-detections", "id": "s", "frames": []})");
  CHECK_THROWS_AS(read_detections(dir / "y.json"), FormatError);
  write_text(dir / "z.json", R"({"format_version": 1, "kind": "mot3d-index", "sequences": []})");
  CHECK_THROWS_AS(read_detections(dir / "z.json"), FormatError);
  write_text(dir / "w.json", R"({"format_version": 1, "kind": "mot3d-detections", "id": "s", "frames": [{"camera": {}}]})");
  CHECK_THROWS_AS(read_detections(dir / "w.json"), FormatError);
  CHECK_THROWS_AS(read_detections(dir / "missing.json"), FormatError);
}

TEST_CASE("index and dataset loading") {
  const fs::path dir = temp_dir("index");
  std::vector<IndexEntry> entries;
  for (int s = 0; s < 3; ++s) {
    const std::string id = "seq" + std::to_string(s);
    const auto seq = small_sequence(10 + s);
    write_sequence(dir, id, seq);
    auto rng = sim::make_rng(10 + s, 1);
    DetectionFile file{id, {}, sim::synthesize_detections(seq, sim::NoiseModel(), rng)};
    for (const auto& f : seq.frames) file.cameras.push_back(f.camera);
    write_detections(dir / (id + ".det.json"), file);
    entries.push_back({id, s == 2 ? "" : id + ".seq.json", id + ".det.json"});
  }
  write_index(dir / "index.json", entries);
  const auto idx = read_index(dir / "index.json");
  REQUIRE(idx.size() == 3);
  CHECK(idx[1].id == "seq1");
  const auto data = load_dataset(dir);
  REQUIRE(data.size() == 3);
  CHECK(data[0].has_ground_truth());
  CHECK(!data[2].has_ground_truth());
  CHECK(data[2].frames() == 6);
  CHECK(data[0].gt_grids.size() >= 3);
  CHECK_THROWS_AS(load_dataset(temp_dir("empty")), InvalidInput);
}

TEST_CASE("tracklet json round-trips") {
  Tracklet t;
  t.instance_id = 4;
  t.object_class = ObjectClass::kSofa;
  t.entries.push_back({0, 1, Pose7{2.0, rotation_about_z(0.1), Vec3(1, 1, 0)}, Vec3(1, 1, 0.5)});
  t.entries.push_back({2, 0, Pose7{2.0, rotation_about_z(0.2), Vec3(1.1, 1, 0)}, Vec3(1.1, 1, 0.5)});
  const std::vector<Tracklet> ts = {t};
  const Json j = tracklets_to_json("s", 3, ts);
  int frames = 0;
  const auto back = tracklets_from_json(Json::parse(dump_json(j)), &frames);
  CHECK(frames == 3);
  REQUIRE(back.size() == 1);
  CHECK(back[0].object_class == ObjectClass::kSofa);
  CHECK(back[0].entries[1].center == t.entries[1].center);
  CHECK(dump_json(tracklets_to_json("s", 3, back)) == dump_json(j));

  const Json empty = tracklets_to_json("e", 0, {});
  CHECK(tracklets_from_json(empty).empty());
  Json bad = j;
  bad["tracklets"][0]["entries"][0]["frame"] = 9;
  CHECK_THROWS_AS(tracklets_from_json(bad), FormatError);
}

TEST_CASE("config sections reject unknown keys and keep defaults") {
  sim::SceneConfig c = Json::parse(R"({"frames": 10})").get<sim::SceneConfig>();
  CHECK(c.frames == 10);
  CHECK(c.max_objects == 5);
  CHECK_THROWS_AS(Json::parse(R"({"frame": 10})").get<sim::SceneConfig>(), InvalidInput);
  const sim::NoiseModel n = Json(sim::NoiseModel::zero()).get<sim::NoiseModel>();
  CHECK(n.dropout_prob == 0.0);
  PipelineParams p = Json::parse(R"({"window": 3, "filter": {"nms_iou": 0.4}})").get<PipelineParams>();
  CHECK(p.window == 3);
  CHECK(p.filter.nms_iou == 0.4);
  CHECK(p.filter.objectness_threshold == FilterParams().objectness_threshold);
}
