#include "mot3d/pose_estimation.hpp"

#include "mot3d/detection.hpp"
#include "mot3d/errors.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace mot3d {

void OutlierParams::validate() const {
  if (n_neighbors < 1) throw InvalidInput("OutlierParams: n_neighbors must be >= 1");
  if (!(std_ratio > 0.0)) throw InvalidInput("OutlierParams: std_ratio must be > 0");
  if (ransac_iterations < 1) throw InvalidInput("OutlierParams: ransac_iterations must be >= 1");
  if (!(ransac_inlier_threshold > 0.0)) throw InvalidInput("OutlierParams: ransac_inlier_threshold must be > 0");
  if (min_correspondences < 3) throw InvalidInput("OutlierParams: min_correspondences must be >= 3");
}

Correspondences Correspondences::subset(std::span<const std::size_t> indices) const {
  Correspondences out;
  out.noc_points.reserve(indices.size());
  out.obs_points.reserve(indices.size());
  for (const auto i : indices) {
    out.noc_points.push_back(noc_points.at(i));
    out.obs_points.push_back(obs_points.at(i));
  }
  return out;
}

void Correspondences::validate() const {
  if (noc_points.size() != obs_points.size()) {
    throw InvalidInput("Correspondences: " + std::to_string(noc_points.size()) + " NOC points vs " +
                       std::to_string(obs_points.size()) + " observed points");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!noc_points[i].allFinite() || !obs_points[i].allFinite()) {
      throw InvalidInput("Correspondences: non-finite coordinate at index " + std::to_string(i));
    }
  }
}

StatisticalFilterResult statistical_outlier_filter(std::span<const Vec3> cloud, const OutlierParams& params) {
  params.validate();
  StatisticalFilterResult result;
  const std::size_t n = cloud.size();
  const auto k = static_cast<std::size_t>(params.n_neighbors);
  if (n <= k) {
    result.cloud.assign(cloud.begin(), cloud.end());
    result.kept_indices.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.kept_indices[i] = i;
    result.too_few_points = true;
    return result;
  }

  std::vector<double> mean_dist(n);
  std::vector<double> dists(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dists[w++] = (cloud[i] - cloud[j]).norm();
    }
    std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k - 1), dists.end());
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += dists[j];
    mean_dist[i] = acc / static_cast<double>(k);
  }

  double sum = 0.0;
  double sq_sum = 0.0;
  for (const double d : mean_dist) {
    sum += d;
    sq_sum += d * d;
  }
  const double mean = sum / static_cast<double>(n);
  const double variance = std::max(0.0, (sq_sum - sum * sum / static_cast<double>(n)) / static_cast<double>(n - 1));
  const double threshold = mean + params.std_ratio * std::sqrt(variance);

  for (std::size_t i = 0; i < n; ++i) {
    if (mean_dist[i] <= threshold) {
      result.kept_indices.push_back(i);
      result.cloud.push_back(cloud[i]);
    }
  }
  return result;
}

Pose7 umeyama_fit(const Correspondences& corr) {
  corr.validate();
  const std::size_t n = corr.size();
  if (n < 3) throw DegenerateGeometry("umeyama_fit: need at least 3 correspondences, got " + std::to_string(n));

  Vec3 mu_src = Vec3::Zero();
  Vec3 mu_dst = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mu_src += corr.noc_points[i];
    mu_dst += corr.obs_points[i];
  }
  mu_src /= static_cast<double>(n);
  mu_dst /= static_cast<double>(n);

  double var_src = 0.0;
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 s = corr.noc_points[i] - mu_src;
    const Vec3 d = corr.obs_points[i] - mu_dst;
    var_src += s.squaredNorm();
    cov += d * s.transpose();
  }
  var_src /= static_cast<double>(n);
  cov /= static_cast<double>(n);

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(var_src > 0.0) || !(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw DegenerateGeometry("umeyama_fit: covariance has rank < 2 (collinear or coincident points)");
  }

  Vec3 sign = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) sign(2) = -1.0;

  Pose7 p;
  p.rotation = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  p.scale = sv.dot(sign) / var_src;
  if (!(p.scale > 0.0)) {
    throw DegenerateGeometry("umeyama_fit: non-positive optimal scale");
  }
  p.translation = mu_dst - p.scale * (p.rotation * mu_src);
  return p;
}

double alignment_residual(const Correspondences& corr, const Pose7& p) {
  double acc = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    acc += (corr.obs_points[i] - p.apply(corr.noc_points[i])).squaredNorm();
  }
  return acc;
}

ResidualGradient umeyama_residual_gradient(const Correspondences& corr) {
  ResidualGradient g;
  g.pose = umeyama_fit(corr);
  g.d_noc.resize(corr.size());
  g.d_obs.resize(corr.size());
  const Mat3 rt = g.pose.rotation.transpose();
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const Vec3 r = corr.obs_points[i] - g.pose.apply(corr.noc_points[i]);
    g.residual += r.squaredNorm();
    g.d_obs[i] = 2.0 * r;
    g.d_noc[i] = -2.0 * g.pose.scale * (rt * r);
  }
  return g;
}

RansacResult ransac_alignment_filter(const Correspondences& corr, const OutlierParams& params, std::uint64_t seed) {
  params.validate();
  corr.validate();
  const std::size_t n = corr.size();
  if (n < static_cast<std::size_t>(params.min_correspondences)) {
    throw PoseFailure("ransac_alignment_filter: " + std::to_string(n) + " correspondences, need " +
                      std::to_string(params.min_correspondences));
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  const double thresh_sq = params.ransac_inlier_threshold * params.ransac_inlier_threshold;

  std::vector<std::size_t> best;
  std::vector<std::size_t> current;
  current.reserve(n);
  for (int it = 0; it < params.ransac_iterations; ++it) {
    std::array<std::size_t, 3> sample{};
    sample[0] = pick(rng);
    do sample[1] = pick(rng);
    while (sample[1] == sample[0]);
    do sample[2] = pick(rng);
    while (sample[2] == sample[0] || sample[2] == sample[1]);

    Pose7 model;
    try {
      model = umeyama_fit(corr.subset(sample));
    } catch (const DegenerateGeometry&) {
      continue;
    }
    current.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if ((corr.obs_points[i] - model.apply(corr.noc_points[i])).squaredNorm() < thresh_sq) current.push_back(i);
    }
    if (current.size() > best.size()) best = current;
  }

  if (best.size() < static_cast<std::size_t>(params.min_correspondences)) {
    throw PoseFailure("ransac_alignment_filter: best consensus set has " + std::to_string(best.size()) +
                      " inliers, need " + std::to_string(params.min_correspondences));
  }
  RansacResult result;
  result.inliers = corr.subset(best);
  result.kept_indices = std::move(best);
  return result;
}

PoseEstimate estimate_pose_detailed(const DetectionRecord& det, const CameraModel& cam, const OutlierParams& params,
                                    std::uint64_t seed) {
  const Correspondences& corr = det.correspondences;
  corr.validate();
  if (corr.size() < static_cast<std::size_t>(params.min_correspondences)) {
    throw PoseFailure("estimate_pose: detection has " + std::to_string(corr.size()) + " correspondences");
  }

  // Both clouds are filtered independently; a pair survives only if both ends do.
  const auto noc_kept = statistical_outlier_filter(corr.noc_points, params).kept_indices;
  const auto obs_kept = statistical_outlier_filter(corr.obs_points, params).kept_indices;
  std::vector<std::size_t> kept;
  std::set_intersection(noc_kept.begin(), noc_kept.end(), obs_kept.begin(), obs_kept.end(),
                        std::back_inserter(kept));

  const Correspondences cleaned = corr.subset(kept);
  const RansacResult ransac = ransac_alignment_filter(cleaned, params, seed);

  PoseEstimate est;
  est.camera_pose = umeyama_fit(ransac.inliers);
  est.world_pose = compose(cam.extrinsic(), est.camera_pose);
  est.inliers.reserve(ransac.kept_indices.size());
  for (const auto i : ransac.kept_indices) est.inliers.push_back(kept[i]);
  return est;
}

Pose7 estimate_pose(const DetectionRecord& det, const CameraModel& cam, const OutlierParams& params,
                    std::uint64_t seed) {
  return estimate_pose_detailed(det, cam, params, seed).world_pose;
}

}  // namespace mot3d
