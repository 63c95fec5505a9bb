#pragma once

#include "mot3d/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace mot3d {

struct OutlierParams {
  int n_neighbors = 20;
  double std_ratio = 2.0;
  int ransac_iterations = 100;
  /// Meters, measured in the observed (camera) frame.
  double ransac_inlier_threshold = 0.01;
  int min_correspondences = 10;

  void validate() const;
};

/// Index-aligned pairs: noc_points[i] (normalized object space) <-> obs_points[i] (camera frame).
struct Correspondences {
  PointCloud noc_points;
  PointCloud obs_points;

  std::size_t size() const { return noc_points.size(); }
  bool empty() const { return noc_points.empty(); }
  Correspondences subset(std::span<const std::size_t> indices) const;
  /// Throws InvalidInput on length mismatch or non-finite coordinates.
  void validate() const;
};

struct StatisticalFilterResult {
  PointCloud cloud;
  std::vector<std::size_t> kept_indices;
  /// Set when the cloud had too few points to filter and was returned as is.
  bool too_few_points = false;
};

/// Drops points whose mean distance to their n_neighbors nearest neighbours
/// exceeds mean + std_ratio * stddev of that statistic over the cloud.
StatisticalFilterResult statistical_outlier_filter(std::span<const Vec3> cloud, const OutlierParams& params);

struct RansacResult {
  Correspondences inliers;
  std::vector<std::size_t> kept_indices;
};

/// Minimal-sample (3 pairs) RANSAC over similarity fits. Deterministic in seed.
/// Throws PoseFailure when fewer than min_correspondences pairs are available
/// or survive.
RansacResult ransac_alignment_filter(const Correspondences& corr, const OutlierParams& params, std::uint64_t seed);

/// Least-squares similarity mapping noc_points onto obs_points (Umeyama).
/// Throws DegenerateGeometry for collinear or coincident sources.
Pose7 umeyama_fit(const Correspondences& corr);

/// Sum of squared alignment residuals sum_i |obs_i - p(noc_i)|^2.
double alignment_residual(const Correspondences& corr, const Pose7& p);

/// Gradient of the optimal alignment residual min_p sum_i |obs_i - p(noc_i)|^2
/// with respect to every input point. The optimal pose is held fixed, which is
/// exact at the optimum.
struct ResidualGradient {
  double residual = 0.0;
  Pose7 pose;
  std::vector<Vec3> d_noc;
  std::vector<Vec3> d_obs;
};
ResidualGradient umeyama_residual_gradient(const Correspondences& corr);

struct DetectionRecord;

struct PoseEstimate {
  Pose7 camera_pose;
  Pose7 world_pose;
  /// Indices into the detection's correspondences used in the final fit.
  std::vector<std::size_t> inliers;
};

/// Statistical filter on both clouds, RANSAC, Umeyama, then the camera
/// extrinsic. Propagates PoseFailure and DegenerateGeometry.
PoseEstimate estimate_pose_detailed(const DetectionRecord& det, const CameraModel& cam, const OutlierParams& params,
                                    std::uint64_t seed);
Pose7 estimate_pose(const DetectionRecord& det, const CameraModel& cam, const OutlierParams& params,
                    std::uint64_t seed);

}  // namespace mot3d
