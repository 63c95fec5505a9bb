#include "mot3d/losses.hpp"

#include "mot3d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mot3d {

namespace {

struct Huber {
  double value;
  double slope;
};

Huber smooth_l1(double r) {
  const double a = std::abs(r);
  if (a < 1.0) return {0.5 * r * r, r};
  return {a - 0.5, r > 0.0 ? 1.0 : -1.0};
}

LossValue noc_against(std::span<const Vec3> pred, std::span<const Vec3> gt, bool rotate) {
  LossValue out;
  out.grad.resize(pred.size() * 3);
  const double inv = 1.0 / static_cast<double>(pred.size() * 3);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Vec3 target = gt[i];
    if (rotate) target = Vec3(-target.x(), -target.y(), target.z());
    for (int c = 0; c < 3; ++c) {
      const Huber h = smooth_l1(pred[i](c) - target(c));
      out.value += h.value * inv;
      out.grad[i * 3 + c] = h.slope * inv;
    }
  }
  return out;
}

// -ln(clamp(p)) and its derivative; zero derivative where the clamp is active.
std::pair<double, double> neg_log(double p) {
  if (p < kProbabilityClamp) return {-std::log(kProbabilityClamp), 0.0};
  if (p > 1.0 - kProbabilityClamp) return {-std::log(1.0 - kProbabilityClamp), 0.0};
  return {-std::log(p), -1.0 / p};
}

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    comp += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// Weighted two-set BCE shared by loss_rec and loss_track.
LossValue balanced_bce(std::span<const double> p, auto&& positive, double w_pos) {
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < p.size(); ++i) n_pos += positive(i) ? 1 : 0;
  const std::size_t n_neg = p.size() - n_pos;
  LossValue out;
  out.grad.assign(p.size(), 0.0);
  CompensatedSum pos_sum;
  CompensatedSum neg_sum;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!std::isfinite(p[i])) throw InvalidInput("BCE: non-finite probability at index " + std::to_string(i));
    if (positive(i)) {
      const auto [v, d] = neg_log(p[i]);
      pos_sum.add(v);
      out.grad[i] = w_pos / static_cast<double>(n_pos) * d;
    } else {
      const auto [v, d] = neg_log(1.0 - p[i]);
      neg_sum.add(v);
      out.grad[i] = -d / static_cast<double>(n_neg);
    }
  }
  if (n_pos > 0) out.value += w_pos * pos_sum.value() / static_cast<double>(n_pos);
  if (n_neg > 0) out.value += neg_sum.value() / static_cast<double>(n_neg);
  return out;
}

nn::Tensor wrap(const nn::Tensor& pred, LossValue lv) {
  auto grad = std::make_shared<std::vector<double>>(std::move(lv.grad));
  return nn::make_result({1}, {lv.value}, {pred}, [grad](nn::Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[0] * (*grad)[i];
  });
}

std::vector<Vec3> as_points(const nn::Tensor& pred) {
  if (pred.rank() != 2 || pred.dim(1) != 3) {
    throw ShapeMismatch("loss_noc: prediction shape " + nn::shape_string(pred.shape()) + " is not [n, 3]");
  }
  std::vector<Vec3> pts(static_cast<std::size_t>(pred.dim(0)));
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(pred.at(3 * i), pred.at(3 * i + 1), pred.at(3 * i + 2));
  return pts;
}

}  // namespace

void LossWeights::validate() const {
  if (!(noc_weight > 0.0) || !(rec_weight > 0.0)) throw InvalidInput("LossWeights: weights must be > 0");
}

LossValue loss_noc(std::span<const Vec3> pred, std::span<const Vec3> gt, ObjectClass cls) {
  if (pred.size() != gt.size()) {
    throw ShapeMismatch("loss_noc: " + std::to_string(pred.size()) + " predicted points vs " +
                        std::to_string(gt.size()) + " targets");
  }
  if (pred.empty()) return {};
  LossValue direct = noc_against(pred, gt, false);
  if (cls != ObjectClass::kTable) return direct;
  LossValue rotated = noc_against(pred, gt, true);
  return rotated.value < direct.value ? rotated : direct;
}

LossValue loss_rec(std::span<const double> pred_probs, const OccupancyGrid& gt, double w_occ) {
  if (pred_probs.size() != gt.cell_count()) {
    throw ShapeMismatch("loss_rec: " + std::to_string(pred_probs.size()) + " probabilities vs " +
                        std::to_string(gt.cell_count()) + " cells");
  }
  if (!(w_occ > 0.0)) throw InvalidInput("loss_rec: w_occ must be > 0");
  return balanced_bce(pred_probs, [&](std::size_t i) { return gt.at_linear(i); }, w_occ);
}

LossValue loss_track(std::span<const double> pred_probs, std::span<const int> labels, double w_act) {
  if (pred_probs.size() != labels.size()) {
    throw ShapeMismatch("loss_track: " + std::to_string(pred_probs.size()) + " probabilities vs " +
                        std::to_string(labels.size()) + " labels");
  }
  if (!(w_act > 0.0)) throw InvalidInput("loss_track: w_act must be > 0");
  return balanced_bce(pred_probs, [&](std::size_t i) { return labels[i] != 0; }, w_act);
}

double default_w_occ(const OccupancyGrid& gt) {
  const auto occ = gt.occupied_count();
  if (occ == 0) return 50.0;
  return std::clamp(static_cast<double>(gt.cell_count() - occ) / static_cast<double>(occ), 1.0, 50.0);
}

double default_w_act(std::span<const int> labels) {
  const auto act = static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
  if (act == 0) return 1.0;
  return std::clamp(static_cast<double>(labels.size() - act) / static_cast<double>(act), 1.0, 100.0);
}

nn::Tensor loss_noc(const nn::Tensor& pred, std::span<const Vec3> gt, ObjectClass cls) {
  const auto pts = as_points(pred);
  return wrap(pred, loss_noc(std::span<const Vec3>(pts), gt, cls));
}

nn::Tensor loss_rec(const nn::Tensor& pred_probs, const OccupancyGrid& gt, double w_occ) {
  return wrap(pred_probs, loss_rec(pred_probs.values(), gt, w_occ));
}

nn::Tensor loss_track(const nn::Tensor& pred_probs, std::span<const int> labels, double w_act) {
  if (pred_probs.rank() != 1) {
    throw ShapeMismatch("loss_track: prediction shape " + nn::shape_string(pred_probs.shape()) + " is not [n]");
  }
  return wrap(pred_probs, loss_track(pred_probs.values(), labels, w_act));
}

}  // namespace mot3d
