#include "mot3d/association.hpp"

#include "mot3d/errors.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <tuple>

namespace mot3d {

void FilterParams::validate() const {
  for (const double v : {objectness_threshold, nms_iou, gt_iou_threshold}) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("FilterParams: thresholds must lie in [0, 1]");
  }
}

FrameDetections filter_detections(const FrameDetections& dets, const FilterParams& params,
                                  const std::vector<std::vector<Box2>>* gt_boxes) {
  params.validate();
  if (gt_boxes && gt_boxes->size() != dets.size()) {
    throw InvalidInput("filter_detections: " + std::to_string(gt_boxes->size()) + " GT frames for " +
                       std::to_string(dets.size()) + " detection frames");
  }
  FrameDetections out(dets.size());
  for (std::size_t f = 0; f < dets.size(); ++f) {
    const auto& frame = dets[f];
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (frame[i].objectness >= params.objectness_threshold) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frame[a].objectness > frame[b].objectness; });
    std::vector<bool> keep(frame.size(), false);
    std::vector<std::size_t> kept;
    for (const auto i : order) {
      const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
        return frame[k].object_class == frame[i].object_class && iou2d(frame[k].box2, frame[i].box2) > params.nms_iou;
      });
      if (suppressed) continue;
      if (gt_boxes) {
        double best = 0.0;
        for (const auto& g : (*gt_boxes)[f]) best = std::max(best, iou2d(g, frame[i].box2));
        if (best < params.gt_iou_threshold) continue;
      }
      kept.push_back(i);
      keep[i] = true;
    }
    for (std::size_t i = 0; i < frame.size(); ++i) {
      if (keep[i]) out[f].push_back(frame[i]);
    }
  }
  return out;
}

std::vector<std::pair<int, int>> TrackGraph::endpoints() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.emplace_back(e.from, e.to);
  return out;
}

std::vector<nn::EdgeFeature> TrackGraph::features() const {
  std::vector<nn::EdgeFeature> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.push_back(e.feature);
  return out;
}

TrackGraph build_graph(const FrameDetections& dets, int window) {
  if (window < 2) throw InvalidInput("build_graph: window must be >= 2");
  TrackGraph g;
  g.window = window;
  for (std::size_t f = 0; f < dets.size(); ++f) {
    for (std::size_t d = 0; d < dets[f].size(); ++d) g.nodes.push_back({static_cast<int>(f), static_cast<int>(d)});
  }
  auto det_of = [&](const GraphNode& n) -> const DetectionRecord& { return dets[n.frame][n.detection]; };
  for (int i = 0; i < static_cast<int>(g.nodes.size()); ++i) {
    const auto& a = det_of(g.nodes[i]);
    if (!a.pose) continue;
    for (int j = i + 1; j < static_cast<int>(g.nodes.size()); ++j) {
      const int gap = g.nodes[j].frame - g.nodes[i].frame;
      if (gap == 0) continue;
      if (gap >= window) break;
      const auto& b = det_of(g.nodes[j]);
      if (!b.pose) continue;
      g.edges.push_back({i, j, nn::make_edge_feature(*a.pose, g.nodes[i].frame, *b.pose, g.nodes[j].frame)});
    }
  }
  return g;
}

void label_graph(TrackGraph& graph, const FrameDetections& dets, const std::vector<std::vector<GtObject>>& gt,
                 double tau) {
  graph.node_instance.assign(graph.nodes.size(), std::nullopt);
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) {
    const auto& node = graph.nodes[n];
    const auto& det = dets.at(node.frame).at(node.detection);
    if (!det.box3 || static_cast<std::size_t>(node.frame) >= gt.size()) continue;
    double best = -1.0;
    std::optional<int> inst;
    for (const auto& obj : gt[node.frame]) {
      const double iou = iou3d_boxes(*det.box3, obj.box);
      if (iou > best) {
        best = iou;
        inst = obj.instance;
      }
    }
    if (inst && best >= tau) graph.node_instance[n] = inst;
  }
  std::vector<GraphEdge> kept;
  graph.labels.clear();
  for (const auto& e : graph.edges) {
    const auto& a = graph.node_instance[e.from];
    const auto& b = graph.node_instance[e.to];
    if (!a || !b) continue;
    kept.push_back(e);
    graph.labels.push_back(*a == *b ? 1 : 0);
  }
  graph.edges = std::move(kept);
}

std::optional<Vec3> detection_center(const DetectionRecord& det) {
  if (det.box3) return det.box3->center;
  if (det.pose) return det.pose->translation;
  return std::nullopt;
}

namespace {

ObjectClass majority_class(const Tracklet& t, const FrameDetections& dets) {
  std::map<ObjectClass, int> votes;
  for (const auto& e : t.entries) ++votes[dets[e.frame][e.detection].object_class];
  ObjectClass best = t.object_class;
  int best_n = -1;
  for (const auto& [c, n] : votes) {
    if (n > best_n) {
      best = c;
      best_n = n;
    }
  }
  return best;
}

TrackletEntry make_entry(const DetectionRecord& det, int frame, int index) {
  return {frame, index, *det.pose, *detection_center(det)};
}

}  // namespace

std::vector<Tracklet> assemble_tracklets(const TrackGraph& graph, const FrameDetections& dets,
                                         std::span<const double> probabilities, double threshold) {
  if (probabilities.size() != graph.edges.size()) {
    throw InvalidInput("assemble_tracklets: " + std::to_string(probabilities.size()) + " probabilities for " +
                       std::to_string(graph.edges.size()) + " edges");
  }
  // Active predecessors per node.
  std::vector<std::vector<int>> active_in(graph.nodes.size());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    if (probabilities[e] > threshold) active_in[graph.edges[e].to].push_back(graph.edges[e].from);
  }

  std::vector<Tracklet> tracks;
  std::vector<int> track_of(graph.nodes.size(), -1);
  std::size_t n = 0;
  while (n < graph.nodes.size()) {
    const int frame = graph.nodes[n].frame;
    std::size_t end = n;
    while (end < graph.nodes.size() && graph.nodes[end].frame == frame) ++end;

    // (distance, track, node) candidates for this frame.
    std::vector<std::tuple<double, int, int>> cands;
    for (std::size_t v = n; v < end; ++v) {
      const auto& det = dets[frame][graph.nodes[v].detection];
      if (!det.pose) continue;
      std::vector<int> seen;
      for (const int u : active_in[v]) {
        const int t = track_of[u];
        if (t < 0 || std::find(seen.begin(), seen.end(), t) != seen.end()) continue;
        const auto& last = tracks[t].entries.back();
        if (frame - last.frame >= graph.window || last.frame >= frame) continue;
        seen.push_back(t);
        cands.emplace_back((last.center - *detection_center(det)).norm(), t, static_cast<int>(v));
      }
    }
    std::sort(cands.begin(), cands.end());
    std::vector<bool> track_taken(tracks.size(), false);
    for (const auto& [dist, t, v] : cands) {
      if (track_taken[t] || track_of[v] >= 0) continue;
      track_taken[t] = true;
      track_of[v] = t;
      tracks[t].entries.push_back(make_entry(dets[frame][graph.nodes[v].detection], frame, graph.nodes[v].detection));
    }
    for (std::size_t v = n; v < end; ++v) {
      const auto& det = dets[frame][graph.nodes[v].detection];
      if (!det.pose || track_of[v] >= 0) continue;
      Tracklet t;
      t.instance_id = static_cast<int>(tracks.size());
      t.object_class = det.object_class;
      t.entries.push_back(make_entry(det, frame, graph.nodes[v].detection));
      track_of[v] = static_cast<int>(tracks.size());
      tracks.push_back(std::move(t));
    }
    n = end;
  }
  for (auto& t : tracks) t.object_class = majority_class(t, dets);
  return tracks;
}

std::vector<Tracklet> heuristic_tracker(const FrameDetections& dets, double gate) {
  if (!(gate > 0.0)) throw InvalidInput("heuristic_tracker: gate must be > 0");
  std::vector<Tracklet> tracks;
  for (int f = 0; f < static_cast<int>(dets.size()); ++f) {
    std::vector<std::tuple<double, int, int>> cands;
    for (int t = 0; t < static_cast<int>(tracks.size()); ++t) {
      const auto& last = tracks[t].entries.back();
      if (last.frame != f - 1) continue;
      for (int d = 0; d < static_cast<int>(dets[f].size()); ++d) {
        const auto c = detection_center(dets[f][d]);
        if (!dets[f][d].pose || !c) continue;
        const double dist = (last.center - *c).norm();
        if (dist <= gate) cands.emplace_back(dist, t, d);
      }
    }
    std::sort(cands.begin(), cands.end());
    std::vector<bool> track_taken(tracks.size(), false);
    std::vector<bool> det_taken(dets[f].size(), false);
    for (const auto& [dist, t, d] : cands) {
      if (track_taken[t] || det_taken[d]) continue;
      track_taken[t] = det_taken[d] = true;
      tracks[t].entries.push_back(make_entry(dets[f][d], f, d));
    }
    for (int d = 0; d < static_cast<int>(dets[f].size()); ++d) {
      if (det_taken[d] || !dets[f][d].pose) continue;
      Tracklet t;
      t.instance_id = static_cast<int>(tracks.size());
      t.object_class = dets[f][d].object_class;
      t.entries.push_back(make_entry(dets[f][d], f, d));
      tracks.push_back(std::move(t));
    }
  }
  for (auto& t : tracks) t.object_class = majority_class(t, dets);
  return tracks;
}

}  // namespace mot3d
