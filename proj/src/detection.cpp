#include "mot3d/detection.hpp"

#include "mot3d/errors.hpp"

#include <algorithm>
#include <string>

namespace mot3d {

std::string_view class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kChair: return "chair";
    case ObjectClass::kTable: return "table";
    case ObjectClass::kSofa: return "sofa";
    case ObjectClass::kBed: return "bed";
    case ObjectClass::kTvStand: return "tv_stand";
    case ObjectClass::kWineCooler: return "wine_cooler";
    case ObjectClass::kNightstand: return "nightstand";
  }
  return "unknown";
}

ObjectClass parse_class(std::string_view name) {
  for (const auto c : kAllClasses) {
    if (class_name(c) == name) return c;
  }
  throw FormatError("unknown object class '" + std::string(name) + "'");
}

void DetectionRecord::validate() const {
  if (frame < 0) throw InvalidInput("DetectionRecord: negative frame index");
  if (!(objectness >= 0.0 && objectness <= 1.0)) throw InvalidInput("DetectionRecord: objectness outside [0, 1]");
  if ((box2.max - box2.min).minCoeff() < 0.0) throw InvalidInput("DetectionRecord: box2 min exceeds max");
  correspondences.validate();
  if (!gt_noc.empty() && gt_noc.size() != correspondences.size())
    throw InvalidInput("DetectionRecord: gt_noc length differs from the correspondences");
  if (pose) pose->validate();
}

Box3 box_from_pose(const Pose7& world_pose, std::span<const Vec3> noc_points, const OccupancyGrid* shape) {
  std::optional<std::pair<Vec3, Vec3>> ext;
  if (shape) ext = shape->largest_component().occupied_extent();
  for (const auto& p : noc_points) {
    if (!ext) {
      ext.emplace(p, p);
    } else {
      ext->first = ext->first.cwiseMin(p);
      ext->second = ext->second.cwiseMax(p);
    }
  }
  const Vec3 lo = ext ? ext->first : Vec3::Constant(-0.05);
  const Vec3 hi = ext ? ext->second : Vec3::Constant(0.05);
  Box3 b;
  b.center = world_pose.apply(0.5 * (lo + hi));
  b.half_extents = (0.5 * world_pose.scale * (hi - lo)).cwiseMax(1e-3);
  b.yaw = yaw_of(world_pose.rotation);
  return b;
}

}  // namespace mot3d
