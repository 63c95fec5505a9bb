#pragma once

#include "mot3d/detection.hpp"
#include "mot3d/geometry.hpp"
#include "mot3d/model.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mot3d {

struct FilterParams {
  /// Detections below this objectness are dropped.
  double objectness_threshold = 0.35;
  /// Same-class boxes overlapping more than this are suppressed.
  double nms_iou = 0.5;
  /// With GT boxes, detections whose best 2D IoU is below this are dropped.
  double gt_iou_threshold = 0.35;

  void validate() const;
};

/// Objectness threshold, class-aware 2D NMS, then (when gt_boxes is given,
/// one list per frame) the GT overlap rule. Order within a frame is preserved.
FrameDetections filter_detections(const FrameDetections& dets, const FilterParams& params,
                                  const std::vector<std::vector<Box2>>* gt_boxes = nullptr);

struct GraphNode {
  int frame = 0;
  /// Index into the frame's detection list.
  int detection = 0;
};

struct GraphEdge {
  /// Node indices, frame(from) < frame(to).
  int from = 0;
  int to = 0;
  nn::EdgeFeature feature;
};

struct TrackGraph {
  int window = 5;
  std::vector<GraphNode> nodes;
  std::vector<GraphEdge> edges;
  /// Set by label_graph: GT instance per node and 1/0 per edge.
  std::vector<std::optional<int>> node_instance;
  std::vector<int> labels;

  std::vector<std::pair<int, int>> endpoints() const;
  std::vector<nn::EdgeFeature> features() const;
};

/// One node per detection; edges join posed detections in different frames
/// at most window-1 apart.
TrackGraph build_graph(const FrameDetections& dets, int window = 5);

struct GtObject {
  int instance = 0;
  Box3 box;
};

/// Assigns each node the instance of its max-IoU GT box (first wins on ties);
/// nodes below tau everywhere stay unmatched and lose their edges.
void label_graph(TrackGraph& graph, const FrameDetections& dets, const std::vector<std::vector<GtObject>>& gt,
                 double tau = 0.05);

struct TrackletEntry {
  int frame = 0;
  int detection = 0;
  Pose7 pose;
  Vec3 center = Vec3::Zero();
};

struct Tracklet {
  int instance_id = 0;
  ObjectClass object_class = ObjectClass::kChair;
  std::vector<TrackletEntry> entries;
};

/// Frames are processed in order. A detection may join a tracklet that has an
/// entry within the window joined to it by an edge with p > threshold; all
/// such candidates in a frame are resolved greedily by ascending distance to
/// the tracklet's latest center. Unclaimed posed detections start tracklets;
/// pose-less detections are left out.
std::vector<Tracklet> assemble_tracklets(const TrackGraph& graph, const FrameDetections& dets,
                                         std::span<const double> probabilities, double threshold = 0.5);

/// Greedy frame-to-frame nearest-center matching within `gate` meters; a
/// tracklet ends at the first frame it is not matched.
std::vector<Tracklet> heuristic_tracker(const FrameDetections& dets, double gate = 0.5);

/// World center used for matching: the detection's box center, else its pose translation.
std::optional<Vec3> detection_center(const DetectionRecord& det);

}  // namespace mot3d
