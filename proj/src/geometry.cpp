#include "mot3d/geometry.hpp"

#include "mot3d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace mot3d {

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double w = std::fmod(a, kTwoPi);
  if (w <= -std::numbers::pi) w += kTwoPi;
  if (w > std::numbers::pi) w -= kTwoPi;
  return w;
}

Mat3 rotation_from_euler(const Vec3& euler) {
  const Eigen::AngleAxisd rx(euler.x(), Vec3::UnitX());
  const Eigen::AngleAxisd ry(euler.y(), Vec3::UnitY());
  const Eigen::AngleAxisd rz(euler.z(), Vec3::UnitZ());
  return (rx * ry * rz).toRotationMatrix();
}

Vec3 euler_from_rotation(const Mat3& r) {
  const double sb = std::clamp(r(0, 2), -1.0, 1.0);
  const double b = std::asin(sb);
  double a = 0.0;
  double c = 0.0;
  if (std::abs(sb) < 1.0 - 1e-12) {
    a = std::atan2(-r(1, 2), r(2, 2));
    c = std::atan2(-r(0, 1), r(0, 0));
  } else {
    // Gimbal lock: only a +/- c is observable, put it all into a.
    a = std::atan2(r(2, 1), r(1, 1));
  }
  return {wrap_angle(a), b, wrap_angle(c)};
}

Mat3 rotation_about_z(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

double yaw_of(const Mat3& r) { return std::atan2(r(1, 0), r(0, 0)); }

Pose7 Pose7::inverse() const {
  Pose7 inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

void Pose7::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidInput("Pose7: scale must be positive and finite, got " + std::to_string(scale));
  }
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw InvalidInput("Pose7: non-finite rotation or translation");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho >= 1e-9 || rotation.determinant() <= 0.0) {
    throw InvalidInput("Pose7: rotation is not in SO(3)");
  }
}

Pose7 compose(const Pose7& outer, const Pose7& inner) {
  Pose7 out;
  out.scale = outer.scale * inner.scale;
  out.rotation = outer.rotation * inner.rotation;
  out.translation = outer.scale * (outer.rotation * inner.translation) + outer.translation;
  return out;
}

Pose7 to_pose(const EulerPose& e) {
  return Pose7{e.scale, rotation_from_euler(e.euler), e.translation};
}

EulerPose to_euler_pose(const Pose7& p, int time_step) {
  return EulerPose{p.scale, euler_from_rotation(p.rotation), p.translation, time_step};
}

PointCloud apply_pose(const Pose7& p, std::span<const Vec3> cloud) {
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& x : cloud) out.push_back(p.apply(x));
  return out;
}

// ---------------------------------------------------------------------------
// OccupancyGrid

OccupancyGrid::OccupancyGrid(int resolution) : resolution_(resolution) {
  if (resolution <= 0) throw InvalidInput("OccupancyGrid: resolution must be positive");
  cells_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
}

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::optional<std::pair<Vec3, Vec3>> OccupancyGrid::occupied_extent() const {
  std::optional<std::pair<Vec3, Vec3>> out;
  const double half = 0.5 / resolution_;
  for (int z = 0; z < resolution_; ++z)
    for (int y = 0; y < resolution_; ++y)
      for (int x = 0; x < resolution_; ++x) {
        if (!at(x, y, z)) continue;
        const Vec3 c = cell_center(x, y, z);
        const Vec3 lo = (c.array() - half).matrix(), hi = (c.array() + half).matrix();
        if (!out) {
          out.emplace(lo, hi);
        } else {
          out->first = out->first.cwiseMin(lo);
          out->second = out->second.cwiseMax(hi);
        }
      }
  return out;
}

OccupancyGrid OccupancyGrid::largest_component() const {
  const int n = resolution_;
  std::vector<int> label(cells_.size(), -1);
  std::vector<std::size_t> stack;
  std::size_t best_size = 0;
  int best = -1, next = 0;
  for (std::size_t start = 0; start < cells_.size(); ++start) {
    if (!cells_[start] || label[start] >= 0) continue;
    std::size_t size = 0;
    label[start] = next;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(i % n), y = static_cast<int>(i / n % n), z = static_cast<int>(i / n / n);
      const std::array<std::array<int, 3>, 6> nb = {{{x - 1, y, z}, {x + 1, y, z}, {x, y - 1, z}, {x, y + 1, z}, {x, y, z - 1}, {x, y, z + 1}}};
      for (const auto& [a, b, c] : nb) {
        if (a < 0 || b < 0 || c < 0 || a >= n || b >= n || c >= n) continue;
        const std::size_t j = index(a, b, c);
        if (cells_[j] && label[j] < 0) {
          label[j] = next;
          stack.push_back(j);
        }
      }
    }
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }
  OccupancyGrid out(n);
  for (std::size_t i = 0; i < cells_.size(); ++i) out.cells_[i] = label[i] == best && best >= 0 ? 1 : 0;
  return out;
}

Vec3 OccupancyGrid::cell_center(int x, int y, int z) const {
  const double r = resolution_;
  return {(x + 0.5) / r - 0.5, (y + 0.5) / r - 0.5, (z + 0.5) / r - 0.5};
}

std::vector<std::array<int, 3>> OccupancyGrid::surface_cells() const {
  std::vector<std::array<int, 3>> out;
  const int n = resolution_;
  auto free_at = [&](int x, int y, int z) {
    if (x < 0 || y < 0 || z < 0 || x >= n || y >= n || z >= n) return true;
    return !at(x, y, z);
  };
  for (int z = 0; z < n; ++z) {
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        if (!at(x, y, z)) continue;
        if (free_at(x - 1, y, z) || free_at(x + 1, y, z) || free_at(x, y - 1, z) ||
            free_at(x, y + 1, z) || free_at(x, y, z - 1) || free_at(x, y, z + 1)) {
          out.push_back({x, y, z});
        }
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> OccupancyGrid::pack() const {
  std::vector<std::uint8_t> bytes((cells_.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < cells_.size(); ++i) {
    if (cells_[i]) bytes[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return bytes;
}

OccupancyGrid OccupancyGrid::unpack(int resolution, std::span<const std::uint8_t> bytes) {
  OccupancyGrid g(resolution);
  if (bytes.size() != (g.cells_.size() + 7) / 8) {
    throw FormatError("OccupancyGrid::unpack: expected " + std::to_string((g.cells_.size() + 7) / 8) +
                      " bytes, got " + std::to_string(bytes.size()));
  }
  for (std::size_t i = 0; i < g.cells_.size(); ++i) {
    g.cells_[i] = (bytes[i / 8] >> (i % 8)) & 1u;
  }
  return g;
}

double iou3d_grids(const OccupancyGrid& a, const OccupancyGrid& b) {
  if (a.resolution() != b.resolution()) {
    throw InvalidInput("iou3d_grids: resolution mismatch " + std::to_string(a.resolution()) + " vs " +
                       std::to_string(b.resolution()));
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.cell_count(); ++i) {
    const bool x = a.at_linear(i);
    const bool y = b.at_linear(i);
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------------------
// Boxes

double Box2::area() const {
  const Vec2 d = (max - min).cwiseMax(0.0);
  return d.x() * d.y();
}

double iou2d(const Box2& a, const Box2& b) {
  const Vec2 lo = a.min.cwiseMax(b.min);
  const Vec2 hi = a.max.cwiseMin(b.max);
  const Vec2 d = (hi - lo).cwiseMax(0.0);
  const double inter = d.x() * d.y();
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return inter / uni;
}

std::array<Vec2, 4> Box3::footprint() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  const Vec2 ax{c * half_extents.x(), s * half_extents.x()};
  const Vec2 ay{-s * half_extents.y(), c * half_extents.y()};
  const Vec2 ctr = center.head<2>();
  return {ctr - ax - ay, ctr + ax - ay, ctr + ax + ay, ctr - ax + ay};
}

std::array<Vec3, 8> Box3::corners() const {
  const auto fp = footprint();
  std::array<Vec3, 8> out;
  for (int i = 0; i < 4; ++i) {
    out[i] = Vec3(fp[i].x(), fp[i].y(), center.z() - half_extents.z());
    out[i + 4] = Vec3(fp[i].x(), fp[i].y(), center.z() + half_extents.z());
  }
  return out;
}

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double polygon_area(const std::vector<Vec2>& poly) {
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    acc += cross2(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * std::abs(acc);
}

// Sutherland-Hodgman clip of a convex polygon by a convex CCW clipper.
std::vector<Vec2> clip_convex(std::vector<Vec2> subject, const std::array<Vec2, 4>& clipper) {
  for (std::size_t e = 0; e < clipper.size() && !subject.empty(); ++e) {
    const Vec2& a = clipper[e];
    const Vec2& b = clipper[(e + 1) % clipper.size()];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return cross2(edge, p - a); };
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2& p = subject[i];
      const Vec2& q = subject[(i + 1) % subject.size()];
      const double sp = side(p);
      const double sq = side(q);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

double height_overlap(const Box3& a, const Box3& b) {
  const double lo = std::max(a.center.z() - a.half_extents.z(), b.center.z() - b.half_extents.z());
  const double hi = std::min(a.center.z() + a.half_extents.z(), b.center.z() + b.half_extents.z());
  return std::max(0.0, hi - lo);
}

bool degenerate(const Box3& b) { return !(b.half_extents.minCoeff() > 0.0) || !b.center.allFinite(); }

}  // namespace

double iou3d_boxes(const Box3& a, const Box3& b) {
  if (degenerate(a) || degenerate(b)) return 0.0;
  const double h = height_overlap(a, b);
  if (h <= 0.0) return 0.0;
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const std::vector<Vec2> subject(fa.begin(), fa.end());
  const double area = polygon_area(clip_convex(subject, fb));
  const double inter = area * h;
  const double uni = a.volume() + b.volume() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool boxes_overlap(const Box3& a, const Box3& b) {
  if (height_overlap(a, b) <= 0.0) return false;
  const auto fa = a.footprint();
  const auto fb = b.footprint();
  const std::array<Vec2, 4> axes{fa[1] - fa[0], fa[3] - fa[0], fb[1] - fb[0], fb[3] - fb[0]};
  for (const auto& axis : axes) {
    double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
    for (int i = 0; i < 4; ++i) {
      const double pa = axis.dot(fa[i]);
      const double pb = axis.dot(fb[i]);
      amin = std::min(amin, pa);
      amax = std::max(amax, pa);
      bmin = std::min(bmin, pb);
      bmax = std::max(bmax, pb);
    }
    if (amax <= bmin || bmax <= amin) return false;
  }
  return true;
}

double planar_distance_to_box(const Vec2& p, const Box3& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const Vec2 d = p - b.center.head<2>();
  const Vec2 local{c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
  const Vec2 excess = (local.cwiseAbs() - b.half_extents.head<2>()).cwiseMax(0.0);
  return excess.norm();
}

// ---------------------------------------------------------------------------
// Camera

Vec2 CameraModel::project(const Vec3& cam) const {
  return {fx * cam.x() / cam.z() + cx, fy * cam.y() / cam.z() + cy};
}

bool CameraModel::in_frustum(const Vec3& cam) const {
  if (!(cam.z() > near_plane) || cam.z() > far_plane) return false;
  const Vec2 px = project(cam);
  return px.x() >= 0.0 && px.x() <= width && px.y() >= 0.0 && px.y() <= height;
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidInput("CameraModel: focal lengths must be positive");
  extrinsic().validate();
}

PointCloud backproject(const DepthPatch& patch, const CameraModel& cam) {
  if (static_cast<std::size_t>(patch.width) * patch.height != patch.depth.size()) {
    throw InvalidInput("backproject: patch is " + std::to_string(patch.width) + "x" +
                       std::to_string(patch.height) + " but holds " + std::to_string(patch.depth.size()) +
                       " depths");
  }
  std::vector<PixelDepth> pixels;
  pixels.reserve(patch.depth.size());
  for (int r = 0; r < patch.height; ++r) {
    for (int c = 0; c < patch.width; ++c) {
      pixels.push_back({static_cast<double>(patch.u0 + c), static_cast<double>(patch.v0 + r),
                        patch.depth[static_cast<std::size_t>(r) * patch.width + c]});
    }
  }
  return backproject(pixels, cam);
}

PointCloud backproject(std::span<const PixelDepth> pixels, const CameraModel& cam) {
  PointCloud out;
  out.reserve(pixels.size());
  for (const auto& px : pixels) {
    if (!std::isfinite(px.depth) || !(px.depth > 0.0)) {
      throw InvalidInput("backproject: depth must be positive and finite, got " + std::to_string(px.depth));
    }
    out.emplace_back((px.u - cam.cx) * px.depth / cam.fx, (px.v - cam.cy) * px.depth / cam.fy, px.depth);
  }
  return out;
}

}  // namespace mot3d
