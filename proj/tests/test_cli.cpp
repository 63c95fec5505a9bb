#include "doctest.h"

#include "mot3d/cli.hpp"
#include "mot3d/errors.hpp"

#include <filesystem>

using namespace mot3d;
using namespace mot3d::cli;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mot3d_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

int run_args(std::vector<std::string> args) {
  args.insert(args.begin(), "mot3d");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

RunConfig small_config() {
  RunConfig c;
  c.sequences = 3;
  c.scene.frames = 8;
  c.schedule.shape_epochs = 1;
  c.schedule.track_epochs = 2;
  c.schedule.joint_epochs = 0;
  c.gnn.no_geometry = true;
  return c;
}

fs::path write_config(const fs::path& dir, const RunConfig& c) {
  const fs::path p = dir / "config.json";
  write_text(p, dump_json(config_to_json(c)));
  return p;
}

// Tracklets that follow the GT instances of zero-noise detections.
std::map<std::string, std::vector<Tracklet>> gt_tracks(const RunConfig& cfg, const std::vector<SequenceData>& data) {
  std::map<std::string, std::vector<Tracklet>> out;
  for (const auto& d : data) {
    const auto dets = filter_detections(d.detections, cfg.pipeline.filter);
    std::map<int, Tracklet> by_inst;
    for (std::size_t f = 0; f < dets.size(); ++f)
      for (std::size_t i = 0; i < dets[f].size(); ++i) {
        const int inst = *dets[f][i].gt_instance;
        auto& t = by_inst[inst];
        t.instance_id = inst;
        t.object_class = dets[f][i].object_class;
        const auto it = std::find_if(d.gt_boxes[f].begin(), d.gt_boxes[f].end(),
                                     [&](const GtObject& g) { return g.instance == inst; });
        t.entries.push_back({static_cast<int>(f), static_cast<int>(i), Pose7{}, it->box.center});
      }
    for (auto& [_, t] : by_inst) out[d.id].push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("config round-trips and validates") {
  const RunConfig def;
  const Json j = config_to_json(def);
  CHECK(j["format_version"] == 1);
  CHECK(!j["scene"].contains("seed"));
  CHECK(dump_json(config_to_json(config_from_json(j))) == dump_json(j));
  CHECK(config_from_json(Json::object()).sequences == 50);

  Json k2 = j;
  k2["scene"]["min_objects"] = 2;
  CHECK_THROWS_AS(config_from_json(k2), InvalidInput);
  Json seeded = j;
  seeded["gnn"]["seed"] = 3;
  CHECK_THROWS_AS(config_from_json(seeded), InvalidInput);
  Json unknown = j;
  unknown["extra"] = 1;
  CHECK_THROWS_AS(config_from_json(unknown), InvalidInput);
  Json wrong_type = j;
  wrong_type["sequences"] = "many";
  CHECK_THROWS_AS(config_from_json(wrong_type), InvalidInput);
  Json version = j;
  version["format_version"] = 7;
  CHECK_THROWS_AS(config_from_json(version), InvalidInput);
}

TEST_CASE("parallel_for") {
  std::vector<int> out(100, 0);
  parallel_for(out.size(), 4, [&](std::size_t i) { out[i] = static_cast<int>(i) * 2; });
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == static_cast<int>(i) * 2);
  CHECK_THROWS_AS(parallel_for(10, 3, [](std::size_t i) {
                    if (i == 5) throw InvalidInput("boom");
                  }),
                  InvalidInput);
  parallel_for(0, 4, [](std::size_t) { FAIL("no work expected"); });
}

TEST_CASE("generate") {
  const fs::path dir = temp_dir("generate");
  const RunConfig cfg = small_config();
  generate_dataset(cfg, dir / "a", 1);
  generate_dataset(cfg, dir / "b", 3);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    ++files;
    CHECK(read_text(e.path()) == read_text(dir / "b" / e.path().filename()));
  }
  CHECK(files == 3 * 3 + 1);
  CHECK(read_index(dir / "a" / "index.json").size() == 3);

  RunConfig twenty = small_config();
  twenty.sequences = 20;
  twenty.scene.frames = 2;
  generate_dataset(twenty, dir / "c", 2);
  CHECK(read_index(dir / "c" / "index.json").size() == 20);

  CHECK(run_args({"generate", "--out", (dir / "k2").string(), "--min-objects", "2"}) == 2);
  CHECK(!fs::exists(dir / "k2"));
  CHECK(run_args({"generate", "--out", (dir / "d").string(), "-n", "0"}) == 2);
}

TEST_CASE("train") {
  const fs::path dir = temp_dir("train");
  const RunConfig cfg = small_config();
  const fs::path config = write_config(dir, cfg);
  generate_dataset(cfg, dir / "data");

  fs::create_directories(dir / "empty");
  CHECK(run_args({"train", "--data", (dir / "empty").string(), "--out", (dir / "x.json").string()}) == 2);
  CHECK(run_args({"train", "--data", (dir / "missing").string(), "--out", (dir / "x.json").string()}) == 2);

  const auto train = [&](const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"--config", config.string(), "train", "--data", (dir / "data").string(),
                                     "--out", (dir / out).string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_args(args);
  };
  REQUIRE(train("a.json") == 0);
  REQUIRE(train("b.json") == 0);
  CHECK(read_text(dir / "a.json") == read_text(dir / "b.json"));
  const std::string log = read_text(dir / "a.json.loss.csv");
  CHECK(log.starts_with("epoch,stage,loss\n"));
  CHECK(std::count(log.begin(), log.end(), '\n') == 1 + 3);

  // A one-epoch-shorter run resumed for the last epoch matches the full run.
  RunConfig shorter = cfg;
  shorter.schedule.track_epochs = 1;
  const fs::path short_cfg = dir / "short.json";
  write_text(short_cfg, dump_json(config_to_json(shorter)));
  REQUIRE(run_args({"--config", short_cfg.string(), "train", "--data", (dir / "data").string(), "--out",
                    (dir / "s.json").string()}) == 0);
  const std::string short_log = read_text(dir / "s.json.loss.csv");
  REQUIRE(train("r.json", {"--resume", (dir / "s.json").string(), "--log", (dir / "r.csv").string()}) == 0);
  const std::string resumed_log = read_text(dir / "r.csv");
  CHECK(resumed_log.starts_with(short_log));
  CHECK(resumed_log == log);
  CHECK(read_text(dir / "r.json") == read_text(dir / "a.json"));
}

TEST_CASE("track and eval") {
  const fs::path dir = temp_dir("track");
  RunConfig cfg = small_config();
  cfg.noise = sim::NoiseModel::zero();
  const fs::path config = write_config(dir, cfg);
  generate_dataset(cfg, dir / "data");
  const std::string data = (dir / "data").string();

  CHECK(run_args({"--config", config.string(), "track", "--data", data, "--out", (dir / "t").string()}) == 2);
  REQUIRE(run_args({"--config", config.string(), "track", "--data", data, "--out", (dir / "t").string(), "--heuristic"}) == 0);
  REQUIRE(run_args({"--config", config.string(), "eval", "--tracks", (dir / "t").string(), "--data", data, "--out",
                    (dir / "rep").string(), "--trajectories"}) == 0);
  const Json rep = Json::parse(read_text(dir / "rep.json"));
  CHECK(rep["kind"] == "mot3d-report");
  CHECK(rep["total"]["misses"] == 0);
  CHECK(rep["total"]["mota"] == 1.0);
  CHECK(fs::exists(dir / "rep.txt"));
  CHECK(fs::exists(dir / "rep.csv"));
  CHECK(read_text(dir / "rep.trajectories.csv").starts_with("sequence,source,id,frame,x,y,z\n"));

  // Tracklet files round-trip byte-identically.
  const fs::path tf = dir / "t" / "seq0001.tracks.json";
  const Json tj = Json::parse(read_text(tf));
  CHECK(dump_json(tracklets_to_json(tj["id"], tj["frames"], tracklets_from_json(tj))) == read_text(tf));

  // Missing tracklets for one sequence.
  fs::remove(dir / "t" / "seq0002.tracks.json");
  CHECK(run_args({"eval", "--tracks", (dir / "t").string(), "--data", data, "--out", (dir / "rep2").string()}) == 2);

  const auto loaded = load_dataset(dir / "data");
  const auto self = gt_tracks(cfg, loaded);
  const auto perfect = evaluate_dataset(cfg, loaded, self);
  REQUIRE(perfect.mota.has_value());
  CHECK(*perfect.mota == 1.0);
  CHECK(*perfect.grid_iou.overall == 1.0);

  auto relabeled = self;
  for (auto& [_, ts] : relabeled)
    for (auto& t : ts) t.instance_id = 1000 - 7 * t.instance_id;
  CHECK(evaluate_dataset(cfg, loaded, relabeled).counts == perfect.counts);

  auto dropped = self;
  dropped.begin()->second.pop_back();
  const auto r = evaluate_dataset(cfg, loaded, dropped);
  CHECK(r.prf.recall < perfect.prf.recall);
  CHECK(r.prf.precision == perfect.prf.precision);

  auto extra = self;
  extra["ghost"] = {};
  CHECK_THROWS_AS(evaluate_dataset(cfg, loaded, extra), InvalidInput);
}

TEST_CASE("tracking an empty sequence writes an empty tracklet file") {
  const fs::path dir = temp_dir("empty_seq");
  DetectionFile file{"blank", std::vector<CameraModel>(4), FrameDetections(4)};
  write_detections(dir / "blank.det.json", file);
  const std::vector<IndexEntry> entries = {{"blank", "", "blank.det.json"}};
  write_index(dir / "index.json", entries);
  REQUIRE(run_args({"track", "--data", dir.string(), "--out", (dir / "t").string(), "--heuristic"}) == 0);
  const Json j = Json::parse(read_text(dir / "t" / "blank.tracks.json"));
  CHECK(j["tracklets"].empty());
  CHECK(j["frames"] == 4);
}

TEST_CASE("command line errors") {
  CHECK(run_args({}) == 2);
  CHECK(run_args({"bogus"}) == 2);
  CHECK(run_args({"track", "--data", "x"}) == 2);
  CHECK(run_args({"--print-config"}) == 0);
  CHECK(run_args({"--help"}) == 0);
}
