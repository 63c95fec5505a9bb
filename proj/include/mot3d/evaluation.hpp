#pragma once

#include "mot3d/association.hpp"
#include "mot3d/config.hpp"
#include "mot3d/detection.hpp"
#include "mot3d/geometry.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mot3d::eval {

inline constexpr double kDefaultRadius = 0.4;

struct PredPoint {
  int track = 0;
  Vec3 center = Vec3::Zero();
  ObjectClass object_class = ObjectClass::kChair;
};

struct GtPoint {
  int instance = 0;
  Vec3 center = Vec3::Zero();
  ObjectClass object_class = ObjectClass::kChair;
};

/// Minimal-cost assignment on a rectangular cost matrix (rows x cols, row
/// major). Returns the column per row, -1 where unassigned (rows > cols).
std::vector<int> hungarian(std::span<const double> cost, int rows, int cols);

struct Counts {
  long misses = 0;
  long false_positives = 0;
  long mismatches = 0;
  long gt = 0;
  /// Matched GT objects.
  long matches = 0;

  Counts& operator+=(const Counts& o);
  bool operator==(const Counts& o) const = default;
};

/// Per-sequence CLEAR-MOT bookkeeping.
struct MatchState {
  /// GT instance -> track matched in the previous frame.
  std::map<int, int> previous;
  /// GT instance -> last track it was ever matched to.
  std::map<int, int> last;
};

struct FrameResult {
  /// (gt index, prediction index).
  std::vector<std::pair<int, int>> pairs;
  Counts counts;
  std::map<ObjectClass, Counts> per_class;
};

/// CLEAR-MOT: previous-frame correspondences still within `radius` persist,
/// the rest are matched by minimal total distance among pairs within
/// `radius`. A matched GT whose track differs from its last one is a mismatch.
FrameResult match_frame(std::span<const PredPoint> preds, std::span<const GtPoint> gts, MatchState& state,
                        double radius = kDefaultRadius);

/// 1 - (m + fp + mme) / gt. Throws UndefinedMetric when gt_count is 0.
double mota(long misses, long false_positives, long mismatches, long gt_count);
double mota(const Counts& c);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  /// Set when a denominator was zero and the value was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

Prf prf(long matches, long misses, long false_positives);

struct GridPair {
  ObjectClass object_class = ObjectClass::kChair;
  OccupancyGrid predicted;
  OccupancyGrid ground_truth;
};

struct GridIouReport {
  std::map<ObjectClass, double> per_class;
  std::map<ObjectClass, long> per_class_count;
  /// Empty when there were no pairs.
  std::optional<double> overall;
};

GridIouReport grid_iou_report(std::span<const GridPair> pairs);

/// Predictions per frame from tracklets; track ids are the tracklet ids.
std::vector<std::vector<PredPoint>> predictions_by_frame(std::span<const Tracklet> tracklets, int frames);

struct SequenceResult {
  std::string id;
  Counts counts;
  std::map<ObjectClass, Counts> per_class;
  /// Per frame, the matched (gt instance, track) pairs.
  std::vector<std::vector<std::pair<int, int>>> matches;
};

/// Throws InvalidInput when the frame counts differ.
SequenceResult evaluate_sequence(const std::string& id, std::span<const std::vector<PredPoint>> preds,
                                 std::span<const std::vector<GtPoint>> gts, double radius = kDefaultRadius);

struct TrackReport {
  Counts counts;
  /// Empty when there were no GT objects.
  std::optional<double> mota;
  Prf prf;
  std::map<ObjectClass, Counts> per_class;
  GridIouReport grid_iou;
  std::vector<SequenceResult> sequences;
};

/// Accumulates counts over all sequences before dividing.
TrackReport make_report(std::vector<SequenceResult> sequences, GridIouReport grid_iou = {});

Json report_to_json(const TrackReport& report);
/// Aligned text table: one row per sequence plus the accumulated total.
std::string report_table(const TrackReport& report);
/// One CSV row per sequence and a final "total" row.
std::string report_csv(const TrackReport& report);

}  // namespace mot3d::eval
