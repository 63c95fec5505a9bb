#pragma once

#include "mot3d/geometry.hpp"
#include "mot3d/pose_estimation.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace mot3d {

enum class ObjectClass { kChair, kTable, kSofa, kBed, kTvStand, kWineCooler, kNightstand };

inline constexpr std::array<ObjectClass, 7> kAllClasses{
    ObjectClass::kChair, ObjectClass::kTable,      ObjectClass::kSofa,      ObjectClass::kBed,
    ObjectClass::kTvStand, ObjectClass::kWineCooler, ObjectClass::kNightstand};

std::string_view class_name(ObjectClass c);
/// Throws FormatError for unknown names.
ObjectClass parse_class(std::string_view name);

/// One per-frame object observation.
struct DetectionRecord {
  int frame = 0;
  ObjectClass object_class = ObjectClass::kChair;
  double objectness = 1.0;
  Box2 box2;
  /// Filled once a pose has been estimated.
  std::optional<Box3> box3;
  /// World-frame pose; empty for detections whose fit failed.
  std::optional<Pose7> pose;
  Correspondences correspondences;
  OccupancyGrid grid;
  std::optional<int> gt_instance;
  /// Clean NOC per correspondence, when known (training data only).
  PointCloud gt_noc;

  void validate() const;
};

using FrameDetections = std::vector<std::vector<DetectionRecord>>;

/// Box3 of a posed detection: the NOC extent of the given correspondences,
/// widened to the largest connected component of `shape` when given (the
/// completed shape covers the unseen side), mapped through the pose; yaw is
/// taken from the rotation.
Box3 box_from_pose(const Pose7& world_pose, std::span<const Vec3> noc_points, const OccupancyGrid* shape = nullptr);

}  // namespace mot3d
