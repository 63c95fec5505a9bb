#pragma once

#include "mot3d/autodiff.hpp"
#include "mot3d/detection.hpp"
#include "mot3d/geometry.hpp"

#include <span>
#include <vector>

namespace mot3d {

struct LossWeights {
  double noc_weight = 3.0;
  double rec_weight = 0.75;

  void validate() const;
};

/// Scalar loss with its gradient with respect to the prediction, laid out
/// like the prediction (3 entries per point for loss_noc).
struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean smooth-L1 (delta 1) over points and channels. Tables also try the
/// target rotated 180 degrees about the NOC z axis and keep the smaller loss.
LossValue loss_noc(std::span<const Vec3> pred, std::span<const Vec3> gt, ObjectClass cls);

/// w_occ * mean BCE over occupied cells + mean BCE over free cells.
/// Probabilities are clamped to [1e-7, 1 - 1e-7].
LossValue loss_rec(std::span<const double> pred_probs, const OccupancyGrid& gt, double w_occ);

/// w_act * mean BCE over active edges + mean BCE over inactive edges; an
/// empty set contributes 0.
LossValue loss_track(std::span<const double> pred_probs, std::span<const int> labels, double w_act);

/// free / occupied cell ratio clamped to [1, 50]; 50 for an empty grid.
double default_w_occ(const OccupancyGrid& gt);
/// inactive / active label ratio clamped to [1, 100]; 1 with no active labels.
double default_w_act(std::span<const int> labels);

// Tape versions: a [1] tensor whose backward feeds the analytic gradient.

/// pred: [n, 3].
nn::Tensor loss_noc(const nn::Tensor& pred, std::span<const Vec3> gt, ObjectClass cls);
/// pred: any shape with gt.cell_count() entries.
nn::Tensor loss_rec(const nn::Tensor& pred_probs, const OccupancyGrid& gt, double w_occ);
/// pred: [n].
nn::Tensor loss_track(const nn::Tensor& pred_probs, std::span<const int> labels, double w_act);

}  // namespace mot3d
