#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <span>
#include <vector>

namespace mot3d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// List of 3D points. Eigen::Vector3d is not over-aligned, so std::vector is fine.
using PointCloud = std::vector<Vec3>;

/// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

/// Intrinsic XYZ Euler angles: R = Rx(a) * Ry(b) * Rz(c).
Mat3 rotation_from_euler(const Vec3& euler);
/// Inverse of rotation_from_euler; b is returned in [-pi/2, pi/2], a and c in (-pi, pi].
Vec3 euler_from_rotation(const Mat3& r);

Mat3 rotation_about_z(double yaw);
/// Heading of the rotated x axis in the ground plane.
double yaw_of(const Mat3& r);

/// Similarity transform x -> scale * rotation * x + translation.
struct Pose7 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Pose7 identity() { return {}; }

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  Pose7 inverse() const;

  /// Throws InvalidInput unless scale > 0 and rotation is in SO(3).
  void validate() const;
};

/// outer ∘ inner: apply inner first.
Pose7 compose(const Pose7& outer, const Pose7& inner);

struct EulerPose {
  double scale = 1.0;
  Vec3 euler = Vec3::Zero();
  Vec3 translation = Vec3::Zero();
  int time_step = 0;
};

Pose7 to_pose(const EulerPose& e);
EulerPose to_euler_pose(const Pose7& p, int time_step);

PointCloud apply_pose(const Pose7& p, std::span<const Vec3> cloud);

/// Dense occupancy volume, x fastest. The standard object grid is 32^3.
class OccupancyGrid {
 public:
  static constexpr int kDefaultResolution = 32;

  explicit OccupancyGrid(int resolution = kDefaultResolution);

  int resolution() const { return resolution_; }
  std::size_t cell_count() const { return cells_.size(); }

  bool at(int x, int y, int z) const { return cells_[index(x, y, z)] != 0; }
  void set(int x, int y, int z, bool occupied) { cells_[index(x, y, z)] = occupied ? 1 : 0; }
  bool at_linear(std::size_t i) const { return cells_[i] != 0; }
  void set_linear(std::size_t i, bool occupied) { cells_[i] = occupied ? 1 : 0; }

  std::size_t occupied_count() const;

  /// Center of cell (x, y, z) in normalized object space [-0.5, 0.5]^3.
  Vec3 cell_center(int x, int y, int z) const;

  /// Occupied cells with at least one free (or out-of-volume) 6-neighbour.
  std::vector<std::array<int, 3>> surface_cells() const;

  /// Bounds of the occupied cells in normalized coordinates (cell faces, not
  /// centers); empty for an empty grid.
  std::optional<std::pair<Vec3, Vec3>> occupied_extent() const;

  /// Only the largest 6-connected occupied component (lowest first cell on ties).
  OccupancyGrid largest_component() const;

  /// Bits packed little-endian within each byte, cell order as in at_linear.
  std::vector<std::uint8_t> pack() const;
  static OccupancyGrid unpack(int resolution, std::span<const std::uint8_t> bytes);

  bool operator==(const OccupancyGrid& other) const = default;

 private:
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * resolution_ + y) * resolution_ + x;
  }

  int resolution_;
  std::vector<std::uint8_t> cells_;
};

struct Box2 {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  double area() const;
};

double iou2d(const Box2& a, const Box2& b);

/// Gravity-aligned box: yaw rotates about world z.
struct Box3 {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Constant(0.5);
  double yaw = 0.0;

  double volume() const { return 8.0 * half_extents.prod(); }
  std::array<Vec3, 8> corners() const;
  /// Ground-plane footprint, counter-clockwise.
  std::array<Vec2, 4> footprint() const;
};

double iou3d_boxes(const Box3& a, const Box3& b);

/// Separating-axis test on the footprints plus height-interval overlap.
/// Touching boxes do not overlap.
bool boxes_overlap(const Box3& a, const Box3& b);

/// Ground-plane distance from p to the footprint of b (0 inside).
double planar_distance_to_box(const Vec2& p, const Box3& b);

/// Throws InvalidInput on resolution mismatch. Both empty -> 1.
double iou3d_grids(const OccupancyGrid& a, const OccupancyGrid& b);

/// Pinhole camera, x right, y down, z forward. The extrinsic maps camera to world.
struct CameraModel {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
  double near_plane = 0.1;
  double far_plane = 20.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Pose7 extrinsic() const { return Pose7{1.0, rotation, translation}; }
  Vec3 to_world(const Vec3& cam) const { return rotation * cam + translation; }
  Vec3 to_camera(const Vec3& world) const { return rotation.transpose() * (world - translation); }
  /// Pixel (u, v) of a camera-frame point with z > 0.
  Vec2 project(const Vec3& cam) const;
  /// True when a camera-frame point lies inside the viewing frustum.
  bool in_frustum(const Vec3& cam) const;

  void validate() const;
};

/// Rectangular depth crop; depth stored row-major starting at (u0, v0).
struct DepthPatch {
  int u0 = 0;
  int v0 = 0;
  int width = 0;
  int height = 0;
  std::vector<double> depth;
};

struct PixelDepth {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

/// One camera-frame point per pixel, row-major. Throws InvalidInput on
/// non-finite or non-positive depth.
PointCloud backproject(const DepthPatch& patch, const CameraModel& cam);
PointCloud backproject(std::span<const PixelDepth> pixels, const CameraModel& cam);

}  // namespace mot3d
