#include "mot3d/pipeline.hpp"

#include "mot3d/errors.hpp"

#include <spdlog/spdlog.h>

#include <string>

namespace mot3d {

void PipelineParams::validate() const {
  outlier.validate();
  filter.validate();
  if (window < 2) throw InvalidInput("PipelineParams: window must be >= 2");
  if (!(edge_threshold >= 0.0 && edge_threshold <= 1.0)) throw InvalidInput("PipelineParams: edge_threshold outside [0, 1]");
  if (!(heuristic_gate > 0.0)) throw InvalidInput("PipelineParams: heuristic_gate must be > 0");
  if (!(label_iou >= 0.0 && label_iou <= 1.0)) throw InvalidInput("PipelineParams: label_iou outside [0, 1]");
}

std::vector<std::vector<eval::GtPoint>> SequenceData::gt_points() const {
  std::vector<std::vector<eval::GtPoint>> out(gt_boxes.size());
  for (std::size_t f = 0; f < gt_boxes.size(); ++f) {
    for (std::size_t k = 0; k < gt_boxes[f].size(); ++k) {
      out[f].push_back({gt_boxes[f][k].instance, gt_boxes[f][k].box.center, gt_classes[f][k]});
    }
  }
  return out;
}

SequenceData sequence_data(const std::string& id, const sim::SceneSequence& seq, FrameDetections detections) {
  if (detections.size() != seq.frames.size()) {
    throw InvalidInput("sequence_data: detections cover " + std::to_string(detections.size()) + " of " +
                       std::to_string(seq.frames.size()) + " frames");
  }
  SequenceData d;
  d.id = id;
  d.detections = std::move(detections);
  for (const auto& fs : seq.frames) {
    d.cameras.push_back(fs.camera);
    auto& boxes = d.gt_boxes.emplace_back();
    auto& classes = d.gt_classes.emplace_back();
    for (const int k : fs.annotated) {
      boxes.push_back({seq.objects[k].instance, fs.boxes[k]});
      classes.push_back(seq.objects[k].object_class);
    }
  }
  for (const auto& o : seq.objects) d.gt_grids.push_back(o.grid);
  return d;
}

FrameDetections prepare_detections(const FrameDetections& raw, std::span<const CameraModel> cameras,
                                   const PipelineParams& params, const nn::TrackingModel* refiner) {
  params.validate();
  if (cameras.size() != raw.size()) {
    throw InvalidInput("prepare_detections: " + std::to_string(cameras.size()) + " cameras for " +
                       std::to_string(raw.size()) + " frames");
  }
  FrameDetections out = filter_detections(raw, params.filter);
  for (std::size_t f = 0; f < out.size(); ++f) {
    for (std::size_t i = 0; i < out[f].size(); ++i) {
      auto& det = out[f][i];
      det.frame = static_cast<int>(f);
      det.pose.reset();
      det.box3.reset();
      if (refiner && !det.correspondences.empty()) {
        det.correspondences.noc_points = refiner->refine_noc(det.correspondences.noc_points);
      }
      const std::uint64_t seed = params.seed * 1000003ULL + f * 1009ULL + i;
      try {
        const auto est = estimate_pose_detailed(det, cameras[f], params.outlier, seed);
        std::vector<Vec3> inlier_noc;
        for (const auto k : est.inliers) inlier_noc.push_back(det.correspondences.noc_points[k]);
        det.pose = est.world_pose;
        det.box3 = box_from_pose(est.world_pose, inlier_noc, &det.grid);
      } catch (const PoseFailure& e) {
        spdlog::debug("frame {} detection {}: {}", f, i, e.what());
      } catch (const DegenerateGeometry& e) {
        spdlog::debug("frame {} detection {}: {}", f, i, e.what());
      }
    }
  }
  return out;
}

nn::GraphSample make_graph_sample(const SequenceData& data, const PipelineParams& params) {
  if (!data.has_ground_truth()) throw InvalidInput("make_graph_sample: sequence " + data.id + " has no ground truth");
  const FrameDetections dets = prepare_detections(data.detections, data.cameras, params);
  TrackGraph graph = build_graph(dets, params.window);
  label_graph(graph, dets, data.gt_boxes, params.label_iou);

  nn::GraphSample s;
  for (std::size_t n = 0; n < graph.nodes.size(); ++n) {
    const auto& det = dets[graph.nodes[n].frame][graph.nodes[n].detection];
    nn::NodeSample node;
    node.grid = det.grid;
    std::optional<int> inst = graph.node_instance[n];
    if (!inst) inst = det.gt_instance;
    node.gt_grid = inst && *inst >= 0 && static_cast<std::size_t>(*inst) < data.gt_grids.size()
                       ? data.gt_grids[*inst]
                       : det.grid;
    node.object_class = det.object_class;
    node.noc = det.correspondences.noc_points;
    node.gt_noc = det.gt_noc.empty() ? node.noc : det.gt_noc;
    s.nodes.push_back(std::move(node));
  }
  s.features = graph.features();
  s.endpoints = graph.endpoints();
  s.labels = graph.labels;
  return s;
}

TrackingOutput track_sequence(const SequenceData& data, TrackerKind kind, const nn::TrackingModel* model,
                              const PipelineParams& params) {
  TrackingOutput out;
  if (kind == TrackerKind::kHeuristic) {
    out.detections = prepare_detections(data.detections, data.cameras, params);
    out.tracklets = heuristic_tracker(out.detections, params.heuristic_gate);
    return out;
  }
  if (!model) throw InvalidInput("track_sequence: the GNN tracker needs a model");
  out.detections = prepare_detections(data.detections, data.cameras, params, model);
  const TrackGraph graph = build_graph(out.detections, params.window);
  std::vector<OccupancyGrid> grids;
  for (const auto& n : graph.nodes) grids.push_back(out.detections[n.frame][n.detection].grid);
  const auto probs = model->predict(grids, graph.features(), graph.endpoints());
  out.tracklets = assemble_tracklets(graph, out.detections, probs, params.edge_threshold);
  return out;
}

std::vector<eval::GridPair> matched_grid_pairs(const SequenceData& data, const TrackingOutput& out,
                                               const eval::SequenceResult& result, const nn::TrackingModel* model) {
  std::map<int, const Tracklet*> by_id;
  for (const auto& t : out.tracklets) by_id[t.instance_id] = &t;
  std::vector<eval::GridPair> pairs;
  for (std::size_t f = 0; f < result.matches.size(); ++f) {
    for (const auto& [inst, track] : result.matches[f]) {
      const auto it = by_id.find(track);
      if (it == by_id.end() || inst < 0 || static_cast<std::size_t>(inst) >= data.gt_grids.size()) continue;
      for (const auto& e : it->second->entries) {
        if (e.frame != static_cast<int>(f)) continue;
        const auto& det = out.detections[f][e.detection];
        eval::GridPair p;
        p.object_class = det.object_class;
        p.ground_truth = data.gt_grids[inst];
        if (model && model->config().refine_shapes) {
          const nn::Tensor probs = model->refine_grid(det.grid);
          p.predicted = OccupancyGrid(det.grid.resolution());
          const auto v = probs.values();
          for (std::size_t c = 0; c < v.size(); ++c) p.predicted.set_linear(c, v[c] > 0.5);
        } else {
          p.predicted = det.grid;
        }
        pairs.push_back(std::move(p));
      }
    }
  }
  return pairs;
}

}  // namespace mot3d
