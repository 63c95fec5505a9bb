#pragma once

#include "mot3d/detection.hpp"
#include "mot3d/geometry.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace mot3d::sim {

using Rng = std::mt19937_64;

/// Stream `stream` of a seed; distinct streams are statistically independent.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

struct SceneConfig {
  int frames = 25;
  int min_objects = 3;
  int max_objects = 5;
  /// Room footprint side lengths are drawn from [min, max]; height is fixed.
  double room_min_side = 5.0;
  double room_max_side = 7.0;
  double room_height = 3.0;
  int max_obstacles = 2;
  /// Initial object centers lie within this ground-plane radius of a common
  /// point (a furniture group); 0 spreads them over the whole room.
  double cluster_radius = 1.2;
  /// Object waypoint step bound (meters) and yaw bound (radians).
  double sigma = 0.15;
  double phi_obj = 0.1;
  double phi_cam = 0.1;
  double eps0 = 0.1;
  double d_star = 0.6;
  double sigma0 = 1.0;
  int n_max = 500;
  double interest_threshold = 1.0;
  /// Dense frames between consecutive object waypoints.
  int frames_per_waypoint = 2;
  /// Clearance kept between boxes when accepting waypoints, so the smoothed
  /// curve between them stays collision-free.
  double waypoint_clearance = 0.05;
  /// Objects keep z and roll/pitch fixed (furniture stands on the floor).
  bool upright_objects = true;
  /// Objects with at least this Box3 corner fraction in view are annotated.
  double min_visibility = 0.5;
  /// Per-class interest weights, indexed by ObjectClass.
  std::vector<double> class_weights = std::vector<double>(kAllClasses.size(), 1.0);
  CameraModel intrinsics;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SceneObject {
  int instance = 0;
  ObjectClass object_class = ObjectClass::kChair;
  /// Canonical shape in normalized object space, z up.
  OccupancyGrid grid;
  /// Uniform scale from normalized to world units.
  double scale = 1.0;
  /// Occupied extent of the grid in normalized coordinates.
  Vec3 noc_min = Vec3::Constant(-0.5);
  Vec3 noc_max = Vec3::Constant(0.5);

  /// World box of the object under `pose`.
  Box3 box(const Pose7& pose) const;
};

struct Room {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3(6, 6, 3);
  std::vector<Box3> obstacles;

  bool contains(const Box3& b, double margin = 0.0) const;
};

struct FrameState {
  CameraModel camera;
  /// One pose and box per scene object, indexed like SceneSequence::objects.
  std::vector<Pose7> poses;
  std::vector<Box3> boxes;
  std::vector<double> visibility;
  /// Objects meeting min_visibility; these form the frame's ground truth.
  std::vector<int> annotated;
  double interest = 0.0;
};

struct SceneSequence {
  SceneConfig config;
  Room room;
  std::vector<SceneObject> objects;
  std::vector<FrameState> frames;
};

/// 1/2 sigma0 (1/d - 1/d_star)^2 when d < d_star and n < n_max, else 1.
/// Throws InvalidInput for d <= 0.
double repulsion_weight(double d, double d_star, double sigma0, int n, int n_max);

/// Camera step bound eps0 (1 + ln(i + 1)).
double camera_step_bound(double eps0, int frame);

/// Fraction of the box's corners inside the camera frustum.
double box_visibility(const CameraModel& cam, const Box3& box);

/// Sum over objects of class weight times visibility, doubled for objects
/// that moved more than 1 cm since `previous` (when given).
double interest_score(const CameraModel& cam, std::span<const SceneObject> objects, std::span<const Box3> boxes,
                      std::span<const Box3> previous, std::span<const double> class_weights);

/// Nearest obstacle to `box` among the walls, static obstacles and `others`:
/// ground-plane clearance and unit direction pointing away from it.
struct Clearance {
  double distance = 0.0;
  Vec3 away = Vec3::Zero();
};
Clearance nearest_obstacle(const Box3& box, const Room& room, std::span<const Box3> others);

/// Candidate pose one waypoint later: uniform translation in [-sigma, sigma]^3
/// biased away from the nearest obstacle by repulsion_weight, uniform Euler
/// delta in [-phi_obj, phi_obj]^3, right-composed onto `pose`. `attempt` is
/// the retry index fed to the repulsion weight.
Pose7 sample_object_step(const Pose7& pose, const Clearance& clearance, const SceneConfig& cfg, int attempt, Rng& rng);

/// Candidate camera for frame i >= 1: world translation in [-eps_i, eps_i]^3,
/// Euler delta in [-phi_cam, phi_cam]^3 right-composed onto the rotation.
CameraModel sample_camera_step(const CameraModel& cam, int frame, const SceneConfig& cfg, Rng& rng);

/// Cubic Bezier control points of each Catmull-Rom segment between
/// consecutive waypoints (4 per segment).
std::vector<std::array<Vec3, 4>> bezier_segments(std::span<const Vec3> waypoints);

/// Interpolates waypoints with `per_segment` samples per segment; positions on
/// the Bezier segments, rotations by slerp, scale linear. Returns
/// (n - 1) * per_segment + 1 poses; a single waypoint yields itself.
std::vector<Pose7> smooth_trajectory(std::span<const Pose7> waypoints, int per_segment);

/// Procedural canonical shape for a class; dimensions vary with rng.
OccupancyGrid make_canonical_grid(ObjectClass cls, Rng& rng);

/// Generates a full sequence from cfg.seed. Deterministic.
SceneSequence generate_sequence(const SceneConfig& cfg);

/// True when no two object boxes overlap and every box is inside the room
/// and clear of the obstacles, in every frame.
bool collision_free(const SceneSequence& seq);

struct NoiseModel {
  /// Gaussian noise on observed points (meters, camera frame).
  double correspondence_noise_std = 0.01;
  /// Gaussian noise on predicted NOC coordinates (normalized units).
  double noc_noise_std = 0.005;
  double outlier_fraction = 0.1;
  double dropout_prob = 0.1;
  double objectness_min = 0.5;
  double objectness_max = 1.0;
  /// Per-detection systematic pose error: the observations are generated
  /// from the GT pose perturbed by these Gaussian amounts (meters, radians
  /// about z, relative scale).
  double pose_translation_std = 0.05;
  double pose_yaw_std = 0.1;
  double pose_scale_std = 0.05;
  /// Expected fraction of predicted-grid cells flipped.
  double grid_corruption = 0.05;
  int points_per_detection = 200;

  static NoiseModel zero();
  void validate() const;
};

/// Bookkeeping that accompanies a synthesized detection.
struct DetectionTruth {
  int instance = 0;
  std::vector<std::size_t> outlier_indices;
};

struct SyntheticFrames {
  FrameDetections detections;
  std::vector<std::vector<DetectionTruth>> truth;
};

/// Corrupts the sequence's annotated objects into detections; see NoiseModel.
/// Detections carry gt_instance and gt_noc.
SyntheticFrames synthesize_detections_detailed(const SceneSequence& seq, const NoiseModel& noise, Rng& rng);
FrameDetections synthesize_detections(const SceneSequence& seq, const NoiseModel& noise, Rng& rng);

}  // namespace mot3d::sim
