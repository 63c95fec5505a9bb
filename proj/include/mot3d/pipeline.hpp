#pragma once

#include "mot3d/association.hpp"
#include "mot3d/evaluation.hpp"
#include "mot3d/model.hpp"
#include "mot3d/pose_estimation.hpp"
#include "mot3d/scene_sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mot3d {

struct PipelineParams {
  OutlierParams outlier;
  FilterParams filter;
  int window = 5;
  /// Edges with probability above this are active during assembly.
  double edge_threshold = 0.5;
  double heuristic_gate = 0.5;
  /// Label overlap threshold for training graphs.
  double label_iou = 0.05;
  std::uint64_t seed = 1;

  void validate() const;
};

/// One sequence as seen by the tracker, with optional ground truth.
struct SequenceData {
  std::string id;
  std::vector<CameraModel> cameras;
  FrameDetections detections;
  /// Empty when no ground truth is available.
  std::vector<std::vector<GtObject>> gt_boxes;
  std::vector<std::vector<ObjectClass>> gt_classes;
  /// Canonical grid per GT instance id.
  std::vector<OccupancyGrid> gt_grids;

  int frames() const { return static_cast<int>(cameras.size()); }
  bool has_ground_truth() const { return !gt_boxes.empty(); }
  std::vector<std::vector<eval::GtPoint>> gt_points() const;
};

SequenceData sequence_data(const std::string& id, const sim::SceneSequence& seq, FrameDetections detections);

/// Objectness/NMS filtering, then a pose fit per detection (NOCs optionally
/// passed through the model's refiner first). Failed fits stay pose-less.
FrameDetections prepare_detections(const FrameDetections& raw, std::span<const CameraModel> cameras,
                                   const PipelineParams& params, const nn::TrackingModel* refiner = nullptr);

/// Labeled training graph of a sequence with ground truth.
nn::GraphSample make_graph_sample(const SequenceData& data, const PipelineParams& params);

enum class TrackerKind { kGnn, kHeuristic };

struct TrackingOutput {
  FrameDetections detections;
  std::vector<Tracklet> tracklets;
};

/// Full inference on one sequence. kGnn requires a model.
TrackingOutput track_sequence(const SequenceData& data, TrackerKind kind, const nn::TrackingModel* model,
                              const PipelineParams& params);

/// Matched (predicted grid, GT grid) pairs for the grid IoU report; the
/// predicted grid is the detection grid, refined when a model is given.
std::vector<eval::GridPair> matched_grid_pairs(const SequenceData& data, const TrackingOutput& out,
                                               const eval::SequenceResult& result, const nn::TrackingModel* model);

}  // namespace mot3d
