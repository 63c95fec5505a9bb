#include "doctest.h"

#include "mot3d/errors.hpp"
#include "mot3d/pipeline.hpp"

#include <set>

using namespace mot3d;

namespace {

SequenceData make_data(std::uint64_t seed, const sim::NoiseModel& noise, int frames = 10) {
  sim::SceneConfig c;
  c.seed = seed;
  c.frames = frames;
  const auto seq = sim::generate_sequence(c);
  auto rng = sim::make_rng(seed, 1);
  return sequence_data("s" + std::to_string(seed), seq, sim::synthesize_detections(seq, noise, rng));
}

// Tracklets as sets of GT instances: a perfect tracker gives one instance per tracklet.
std::set<int> instances_of(const TrackingOutput& out, const Tracklet& t) {
  std::set<int> s;
  for (const auto& e : t.entries) s.insert(out.detections[e.frame][e.detection].gt_instance.value_or(-1));
  return s;
}

}  // namespace

TEST_CASE("sequence_data") {
  const auto d = make_data(2, sim::NoiseModel::zero());
  CHECK(d.frames() == 10);
  CHECK(d.has_ground_truth());
  REQUIRE(d.gt_boxes.size() == 10);
  const auto pts = d.gt_points();
  for (std::size_t f = 0; f < pts.size(); ++f) {
    // Zero noise detects every annotated object.
    CHECK(pts[f].size() == d.detections[f].size());
  }
  sim::SceneConfig c;
  c.frames = 4;
  CHECK_THROWS_AS(sequence_data("x", sim::generate_sequence(c), FrameDetections(3)), InvalidInput);
}

TEST_CASE("prepare_detections fits poses") {
  const auto d = make_data(3, sim::NoiseModel::zero());
  PipelineParams p;
  const auto dets = prepare_detections(d.detections, d.cameras, p);
  int posed = 0;
  for (std::size_t f = 0; f < dets.size(); ++f) {
    for (const auto& det : dets[f]) {
      CHECK(det.frame == static_cast<int>(f));
      REQUIRE(det.pose.has_value());
      REQUIRE(det.box3.has_value());
      ++posed;
      const auto it = std::find_if(d.gt_boxes[f].begin(), d.gt_boxes[f].end(),
                                   [&](const GtObject& g) { return g.instance == det.gt_instance; });
      REQUIRE(it != d.gt_boxes[f].end());
      CHECK((det.box3->center - it->box.center).norm() < 1e-6);
      CHECK(iou3d_boxes(*det.box3, it->box) > 0.999);
    }
  }
  CHECK(posed > 0);
  CHECK(prepare_detections(d.detections, d.cameras, p).size() == dets.size());
  CHECK_THROWS_AS(prepare_detections(d.detections, std::span(d.cameras).first(3), p), InvalidInput);
  p.window = 1;
  CHECK_THROWS_AS(prepare_detections(d.detections, d.cameras, p), InvalidInput);
}

TEST_CASE("prepare_detections leaves failed fits pose-less") {
  auto d = make_data(4, sim::NoiseModel::zero(), 4);
  REQUIRE(!d.detections[0].empty());
  auto& det = d.detections[0][0];
  det.correspondences.noc_points.resize(5);
  det.correspondences.obs_points.resize(5);
  det.gt_noc.resize(5);
  const auto dets = prepare_detections(d.detections, d.cameras, PipelineParams());
  CHECK(!dets[0][0].pose.has_value());
  const auto graph = build_graph(dets);
  const std::vector<double> probs(graph.edges.size(), 1.0);
  const auto tracks = assemble_tracklets(graph, dets, probs, 0.5);
  for (const auto& t : tracks)
    for (const auto& e : t.entries) CHECK(!(e.frame == 0 && e.detection == 0));
}

TEST_CASE("make_graph_sample") {
  const auto d = make_data(5, sim::NoiseModel());
  const auto s = make_graph_sample(d, PipelineParams());
  CHECK(!s.nodes.empty());
  CHECK(s.features.size() == s.endpoints.size());
  CHECK(s.labels.size() == s.endpoints.size());
  int positives = 0;
  for (const int l : s.labels) positives += l;
  CHECK(positives > 0);
  CHECK(positives < static_cast<int>(s.labels.size()));
  for (const auto& n : s.nodes) {
    CHECK(n.noc.size() == n.gt_noc.size());
    CHECK(n.gt_grid.resolution() == n.grid.resolution());
  }
  SequenceData no_gt;
  no_gt.id = "x";
  CHECK_THROWS_AS(make_graph_sample(no_gt, PipelineParams()), InvalidInput);
}

TEST_CASE("heuristic tracking on clean data follows the objects") {
  for (std::uint64_t seed = 6; seed < 9; ++seed) {
    const auto d = make_data(seed, sim::NoiseModel::zero());
    const auto out = track_sequence(d, TrackerKind::kHeuristic, nullptr, PipelineParams());
    for (const auto& t : out.tracklets) CHECK(instances_of(out, t).size() == 1);
    const auto r = eval::evaluate_sequence(d.id, eval::predictions_by_frame(out.tracklets, d.frames()), d.gt_points());
    CHECK(r.counts.false_positives == 0);
    CHECK(r.counts.misses == 0);
  }
}

TEST_CASE("gnn tracking") {
  const auto d = make_data(7, sim::NoiseModel(), 6);
  CHECK_THROWS_AS(track_sequence(d, TrackerKind::kGnn, nullptr, PipelineParams()), InvalidInput);
  nn::GnnConfig cfg;
  cfg.no_geometry = true;
  const nn::TrackingModel model(cfg);
  const auto a = track_sequence(d, TrackerKind::kGnn, &model, PipelineParams());
  const auto b = track_sequence(d, TrackerKind::kGnn, &model, PipelineParams());
  REQUIRE(a.tracklets.size() == b.tracklets.size());
  std::set<std::pair<int, int>> used;
  for (std::size_t k = 0; k < a.tracklets.size(); ++k) {
    CHECK(a.tracklets[k].entries.size() == b.tracklets[k].entries.size());
    int last = -1;
    for (const auto& e : a.tracklets[k].entries) {
      CHECK(e.frame > last);
      last = e.frame;
      CHECK(used.insert({e.frame, e.detection}).second);
    }
  }
}

TEST_CASE("empty sequence") {
  SequenceData d;
  d.id = "empty";
  d.cameras.resize(3);
  d.detections.resize(3);
  const auto out = track_sequence(d, TrackerKind::kHeuristic, nullptr, PipelineParams());
  CHECK(out.tracklets.empty());
  const nn::TrackingModel model{nn::GnnConfig()};
  CHECK(track_sequence(d, TrackerKind::kGnn, &model, PipelineParams()).tracklets.empty());
}
