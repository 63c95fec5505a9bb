#include "mot3d/scene_sim.hpp"

#include "mot3d/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

namespace mot3d::sim {

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

double symmetric(Rng& rng, double bound) { return bound > 0.0 ? uniform(rng, -bound, bound) : 0.0; }

double gaussian(Rng& rng, double stddev) {
  return stddev > 0.0 ? stddev * std::normal_distribution<double>(0.0, 1.0)(rng) : 0.0;
}

// Components drawn x, y, z in sequence; constructor argument order is unspecified.
Vec3 uniform_cube(Rng& rng, double bound) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = symmetric(rng, bound);
  return v;
}

Vec3 gaussian_vec(Rng& rng, double stddev) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = gaussian(rng, stddev);
  return v;
}

Box3 inflate(Box3 b, double margin) {
  b.half_extents.array() += margin;
  return b;
}

Vec3 planar_unit(const Vec3& v) {
  const Vec3 p(v.x(), v.y(), 0.0);
  const double n = p.norm();
  return n > 1e-12 ? Vec3(p / n) : Vec3(1.0, 0.0, 0.0);
}

void fill(OccupancyGrid& g, const Vec3& lo, const Vec3& hi, bool value = true) {
  const int n = g.resolution();
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const Vec3 c = g.cell_center(x, y, z);
        if ((c.array() >= lo.array()).all() && (c.array() <= hi.array()).all()) g.set(x, y, z, value);
      }
}

void legs(OccupancyGrid& g, double hx, double hy, double top, double t) {
  for (const double sx : {-1.0, 1.0})
    for (const double sy : {-1.0, 1.0}) {
      const Vec3 c(sx * (hx - t / 2), sy * (hy - t / 2), 0.0);
      fill(g, Vec3(c.x() - t / 2, c.y() - t / 2, -0.5), Vec3(c.x() + t / 2, c.y() + t / 2, top));
    }
}

double class_scale(ObjectClass cls, Rng& rng) {
  switch (cls) {
    case ObjectClass::kChair: return uniform(rng, 0.85, 1.0);
    case ObjectClass::kTable: return uniform(rng, 1.2, 1.6);
    case ObjectClass::kSofa: return uniform(rng, 1.7, 2.1);
    case ObjectClass::kBed: return uniform(rng, 1.9, 2.2);
    case ObjectClass::kTvStand: return uniform(rng, 1.1, 1.5);
    case ObjectClass::kWineCooler: return uniform(rng, 0.8, 1.0);
    case ObjectClass::kNightstand: return uniform(rng, 0.5, 0.65);
  }
  return 1.0;
}

Mat3 look_at(const Vec3& from, const Vec3& target) {
  const Vec3 z = (target - from).normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r << x, y, z;
  return r;
}

bool camera_inside(const CameraModel& cam, const Room& room) {
  const Vec3& p = cam.translation;
  const double m = 0.2;
  return p.x() >= room.min.x() + m && p.x() <= room.max.x() - m && p.y() >= room.min.y() + m &&
         p.y() <= room.max.y() - m && p.z() >= room.min.z() + 0.5 && p.z() <= room.max.z() - m;
}

Vec3 centroid(std::span<const Box3> boxes) {
  Vec3 c = Vec3::Zero();
  for (const auto& b : boxes) c += b.center;
  return boxes.empty() ? c : Vec3(c / static_cast<double>(boxes.size()));
}

bool placement_ok(const Box3& box, const Room& room, std::span<const Box3> others, double clearance) {
  if (!room.contains(box, clearance)) return false;
  const Box3 grown = inflate(box, clearance);
  for (const auto& o : room.obstacles)
    if (boxes_overlap(grown, o)) return false;
  for (const auto& o : others)
    if (boxes_overlap(grown, o)) return false;
  return true;
}

Room make_room(const SceneConfig& cfg, Rng& rng) {
  Room room;
  room.max.x() = uniform(rng, cfg.room_min_side, cfg.room_max_side);
  room.max.y() = uniform(rng, cfg.room_min_side, cfg.room_max_side);
  room.max.z() = cfg.room_height;
  const int n_obstacles = std::uniform_int_distribution<int>(0, cfg.max_obstacles)(rng);
  for (int i = 0; i < n_obstacles; ++i) {
    Box3 b;
    b.half_extents.x() = uniform(rng, 0.3, 0.6);
    b.half_extents.y() = uniform(rng, 0.2, 0.3);
    b.half_extents.z() = uniform(rng, 0.4, 1.0);
    // Against one of the four walls, facing into the room.
    const int wall = std::uniform_int_distribution<int>(0, 3)(rng);
    const double along = uniform(rng, 0.0, 1.0);
    const double gap = 0.05 + b.half_extents.y();
    b.yaw = (wall < 2 ? 0.0 : std::numbers::pi / 2);
    const double hx = b.half_extents.x() + 0.05;
    if (wall < 2) {
      b.center.x() = hx + along * (room.max.x() - 2 * hx);
      b.center.y() = wall == 0 ? gap : room.max.y() - gap;
    } else {
      b.center.y() = hx + along * (room.max.y() - 2 * hx);
      b.center.x() = wall == 2 ? gap : room.max.x() - gap;
    }
    b.center.z() = b.half_extents.z();
    room.obstacles.push_back(b);
  }
  return room;
}

struct Trajectories {
  std::vector<std::vector<Pose7>> poses;  // [object][frame]
  bool ok = false;
};

Trajectories object_trajectories(const SceneConfig& cfg, const Room& room, const std::vector<SceneObject>& objects,
                                 Rng& rng) {
  const int k = static_cast<int>(objects.size());
  const int stride = cfg.frames_per_waypoint;
  const int n_way = (cfg.frames - 1 + stride - 1) / stride + 1;
  std::vector<std::vector<Pose7>> way(k, std::vector<Pose7>(n_way));

  // Initial placement around a common center.
  Vec2 hub;
  hub.x() = uniform(rng, room.min.x(), room.max.x());
  hub.y() = uniform(rng, room.min.y(), room.max.y());
  std::vector<Box3> placed;
  for (int j = 0; j < k; ++j) {
    const auto& obj = objects[j];
    bool done = false;
    for (int attempt = 0; attempt < cfg.n_max && !done; ++attempt) {
      Pose7 p;
      p.scale = obj.scale;
      p.rotation = rotation_about_z(uniform(rng, -std::numbers::pi, std::numbers::pi));
      // Half the attempts inside the group, then anywhere in the room.
      if (cfg.cluster_radius > 0.0 && attempt < cfg.n_max / 2) {
        const double r = cfg.cluster_radius * std::sqrt(uniform(rng, 0.0, 1.0));
        const double a = uniform(rng, -std::numbers::pi, std::numbers::pi);
        p.translation.x() = hub.x() + r * std::cos(a);
        p.translation.y() = hub.y() + r * std::sin(a);
      } else {
        p.translation.x() = uniform(rng, room.min.x(), room.max.x());
        p.translation.y() = uniform(rng, room.min.y(), room.max.y());
      }
      p.translation.z() = -obj.scale * obj.noc_min.z();
      const Box3 b = obj.box(p);
      if (!placement_ok(b, room, placed, cfg.waypoint_clearance)) continue;
      way[j][0] = p;
      placed.push_back(b);
      done = true;
    }
    if (!done) return {};
  }

  std::vector<Box3> current = placed;
  for (int w = 1; w < n_way; ++w) {
    const std::vector<Box3> previous = current;
    for (int j = 0; j < k; ++j) {
      std::vector<Box3> others;
      for (int o = 0; o < k; ++o) {
        if (o == j) continue;
        others.push_back(current[o]);
        if (o < j) others.push_back(previous[o]);
      }
      const Clearance clr = nearest_obstacle(current[j], room, others);
      Pose7 next = way[j][w - 1];
      bool accepted = false;
      for (int attempt = 0; attempt < cfg.n_max; ++attempt) {
        const Pose7 cand = sample_object_step(way[j][w - 1], clr, cfg, attempt, rng);
        const Box3 b = objects[j].box(cand);
        if (placement_ok(b, room, others, cfg.waypoint_clearance)) {
          next = cand;
          accepted = true;
          break;
        }
      }
      if (!accepted) spdlog::debug("object {} holds its pose at waypoint {}", j, w);
      way[j][w] = next;
      current[j] = objects[j].box(next);
    }
  }

  Trajectories out;
  for (int j = 0; j < k; ++j) {
    auto dense = smooth_trajectory(way[j], stride);
    dense.resize(cfg.frames);
    out.poses.push_back(std::move(dense));
  }
  out.ok = true;
  return out;
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

void SceneConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidInput("SceneConfig: " + m); };
  if (frames < 2) fail("frames must be >= 2");
  if (min_objects < 3) fail("at least 3 objects are required");
  if (max_objects < min_objects) fail("max_objects < min_objects");
  if (!(room_min_side > 0.0) || room_max_side < room_min_side || !(room_height > 0.0)) fail("bad room size");
  if (max_obstacles < 0) fail("max_obstacles must be >= 0");
  if (!(cluster_radius >= 0.0)) fail("cluster_radius must be >= 0");
  if (!(sigma >= 0.0) || !(phi_obj >= 0.0) || !(phi_cam >= 0.0) || !(eps0 >= 0.0)) fail("step bounds must be >= 0");
  if (!(d_star > 0.0) || !(sigma0 > 0.0)) fail("d_star and sigma0 must be positive");
  if (n_max < 1) fail("n_max must be >= 1");
  if (!(interest_threshold >= 0.0)) fail("interest_threshold must be >= 0");
  if (frames_per_waypoint < 1) fail("frames_per_waypoint must be >= 1");
  if (!(waypoint_clearance >= 0.0)) fail("waypoint_clearance must be >= 0");
  if (!(min_visibility > 0.0 && min_visibility <= 1.0)) fail("min_visibility must lie in (0, 1]");
  if (class_weights.size() != kAllClasses.size()) fail("class_weights needs one entry per class");
  for (const double w : class_weights)
    if (!(w >= 0.0)) fail("class weights must be >= 0");
  intrinsics.validate();
}

Box3 SceneObject::box(const Pose7& pose) const {
  Box3 b;
  b.center = pose.apply(0.5 * (noc_min + noc_max));
  b.half_extents = 0.5 * pose.scale * (noc_max - noc_min);
  b.yaw = yaw_of(pose.rotation);
  return b;
}

bool Room::contains(const Box3& b, double margin) const {
  for (const auto& c : b.footprint()) {
    if (c.x() < min.x() + margin || c.x() > max.x() - margin || c.y() < min.y() + margin || c.y() > max.y() - margin)
      return false;
  }
  return b.center.z() - b.half_extents.z() >= min.z() - 1e-9 && b.center.z() + b.half_extents.z() <= max.z();
}

double repulsion_weight(double d, double d_star, double sigma0, int n, int n_max) {
  if (!(d > 0.0)) throw InvalidInput("repulsion_weight: distance must be > 0");
  if (d < d_star && n < n_max) {
    const double t = 1.0 / d - 1.0 / d_star;
    return 0.5 * sigma0 * t * t;
  }
  return 1.0;
}

double camera_step_bound(double eps0, int frame) { return eps0 * (1.0 + std::log(frame + 1.0)); }

double box_visibility(const CameraModel& cam, const Box3& box) {
  int inside = 0;
  for (const auto& c : box.corners()) inside += cam.in_frustum(cam.to_camera(c)) ? 1 : 0;
  return inside / 8.0;
}

double interest_score(const CameraModel& cam, std::span<const SceneObject> objects, std::span<const Box3> boxes,
                      std::span<const Box3> previous, std::span<const double> class_weights) {
  if (boxes.size() != objects.size() || (!previous.empty() && previous.size() != boxes.size())) {
    throw InvalidInput("interest_score: object and box counts differ");
  }
  double score = 0.0;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const double w = class_weights[static_cast<std::size_t>(objects[k].object_class)];
    const bool moving = !previous.empty() && (boxes[k].center - previous[k].center).norm() > 0.01;
    score += w * box_visibility(cam, boxes[k]) * (moving ? 2.0 : 1.0);
  }
  return score;
}

Clearance nearest_obstacle(const Box3& box, const Room& room, std::span<const Box3> others) {
  Clearance best{std::numeric_limits<double>::infinity(), Vec3::Zero()};
  auto consider = [&](double d, const Vec3& away) {
    if (d < best.distance) best = {d, away};
  };
  for (const auto& c : box.footprint()) {
    consider(c.x() - room.min.x(), Vec3::UnitX());
    consider(room.max.x() - c.x(), -Vec3::UnitX());
    consider(c.y() - room.min.y(), Vec3::UnitY());
    consider(room.max.y() - c.y(), -Vec3::UnitY());
  }
  auto against = [&](const Box3& o) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : box.footprint()) d = std::min(d, planar_distance_to_box(c, o));
    for (const auto& c : o.footprint()) d = std::min(d, planar_distance_to_box(c, box));
    consider(d, planar_unit(box.center - o.center));
  };
  for (const auto& o : room.obstacles) against(o);
  for (const auto& o : others) against(o);
  return best;
}

Pose7 sample_object_step(const Pose7& pose, const Clearance& clearance, const SceneConfig& cfg, int attempt, Rng& rng) {
  Vec3 delta = uniform_cube(rng, cfg.sigma);
  Vec3 euler = uniform_cube(rng, cfg.phi_obj);
  if (cfg.upright_objects) {
    delta.z() = 0.0;
    euler.x() = euler.y() = 0.0;
  }
  const double d = std::max(clearance.distance, 1e-6);
  if (d < cfg.d_star && attempt < cfg.n_max) {
    const double w = repulsion_weight(d, cfg.d_star, cfg.sigma0, attempt, cfg.n_max);
    delta += w * delta.norm() * clearance.away;
    delta = delta.cwiseMax(-cfg.sigma).cwiseMin(cfg.sigma);
  }
  Pose7 step;
  step.rotation = rotation_from_euler(euler);
  step.translation = pose.rotation.transpose() * delta / pose.scale;
  return compose(pose, step);
}

CameraModel sample_camera_step(const CameraModel& cam, int frame, const SceneConfig& cfg, Rng& rng) {
  if (frame < 1) throw InvalidInput("sample_camera_step: frame must be >= 1");
  const double eps = camera_step_bound(cfg.eps0, frame);
  CameraModel out = cam;
  out.translation += uniform_cube(rng, eps);
  const Vec3 euler = uniform_cube(rng, cfg.phi_cam);
  out.rotation = cam.rotation * rotation_from_euler(euler);
  return out;
}

std::vector<std::array<Vec3, 4>> bezier_segments(std::span<const Vec3> p) {
  std::vector<std::array<Vec3, 4>> out;
  const std::size_t n = p.size();
  if (n < 2) return out;
  auto tangent = [&](std::size_t i) -> Vec3 {
    if (i == 0) return p[1] - p[0];
    if (i == n - 1) return p[n - 1] - p[n - 2];
    return 0.5 * (p[i + 1] - p[i - 1]);
  };
  for (std::size_t i = 0; i + 1 < n; ++i) {
    out.push_back({p[i], p[i] + tangent(i) / 3.0, p[i + 1] - tangent(i + 1) / 3.0, p[i + 1]});
  }
  return out;
}

std::vector<Pose7> smooth_trajectory(std::span<const Pose7> waypoints, int per_segment) {
  if (per_segment < 1) throw InvalidInput("smooth_trajectory: per_segment must be >= 1");
  if (waypoints.empty()) throw InvalidInput("smooth_trajectory: no waypoints");
  if (waypoints.size() == 1) return {waypoints.front()};
  std::vector<Vec3> pos;
  for (const auto& w : waypoints) pos.push_back(w.translation);
  const auto segs = bezier_segments(pos);
  std::vector<Pose7> out;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    const Eigen::Quaterniond qa(waypoints[s].rotation);
    const Eigen::Quaterniond qb(waypoints[s + 1].rotation);
    for (int k = 0; k < per_segment; ++k) {
      const double t = static_cast<double>(k) / per_segment;
      const double u = 1.0 - t;
      Pose7 p;
      p.translation = u * u * u * segs[s][0] + 3 * u * u * t * segs[s][1] + 3 * u * t * t * segs[s][2] + t * t * t * segs[s][3];
      p.rotation = k == 0 ? waypoints[s].rotation : qa.slerp(t, qb).toRotationMatrix();
      p.scale = u * waypoints[s].scale + t * waypoints[s + 1].scale;
      out.push_back(p);
    }
  }
  out.push_back(waypoints.back());
  return out;
}

OccupancyGrid make_canonical_grid(ObjectClass cls, Rng& rng) {
  OccupancyGrid g;
  switch (cls) {
    case ObjectClass::kChair: {
      const double hx = uniform(rng, 0.22, 0.3), hy = uniform(rng, 0.22, 0.3), seat = uniform(rng, -0.1, 0.0);
      legs(g, hx, hy, seat, 0.07);
      fill(g, Vec3(-hx, -hy, seat), Vec3(hx, hy, seat + 0.07));
      fill(g, Vec3(-hx, hy - 0.07, seat), Vec3(hx, hy, 0.5));
      break;
    }
    case ObjectClass::kTable: {
      const double hy = uniform(rng, 0.3, 0.45), top = uniform(rng, -0.05, 0.0);
      legs(g, 0.5, hy, top, 0.06);
      fill(g, Vec3(-0.5, -hy, top - 0.06), Vec3(0.5, hy, top));
      break;
    }
    case ObjectClass::kSofa: {
      const double hy = uniform(rng, 0.22, 0.3), top = uniform(rng, -0.15, -0.05);
      fill(g, Vec3(-0.5, -hy, -0.5), Vec3(0.5, hy, -0.28));
      fill(g, Vec3(-0.5, hy - 0.1, -0.5), Vec3(0.5, hy, top));
      fill(g, Vec3(-0.5, -hy, -0.5), Vec3(-0.42, hy, -0.2));
      fill(g, Vec3(0.42, -hy, -0.5), Vec3(0.5, hy, -0.2));
      break;
    }
    case ObjectClass::kBed: {
      const double hy = uniform(rng, 0.35, 0.45);
      fill(g, Vec3(-0.5, -hy, -0.5), Vec3(0.5, hy, -0.3));
      fill(g, Vec3(-0.44, -hy + 0.03, -0.3), Vec3(0.5, hy - 0.03, -0.22));
      fill(g, Vec3(-0.5, -hy, -0.3), Vec3(-0.44, hy, uniform(rng, -0.1, 0.0)));
      break;
    }
    case ObjectClass::kTvStand: {
      const double hy = uniform(rng, 0.15, 0.22), top = uniform(rng, -0.15, -0.05);
      fill(g, Vec3(-0.5, -hy, -0.5), Vec3(0.5, hy, top));
      fill(g, Vec3(-0.45, -hy, -0.42), Vec3(0.45, hy - 0.04, top - 0.06), false);
      fill(g, Vec3(-0.02, -hy, -0.42), Vec3(0.02, hy, top - 0.06));
      break;
    }
    case ObjectClass::kWineCooler: {
      const double hx = uniform(rng, 0.2, 0.28), hy = uniform(rng, 0.2, 0.28);
      fill(g, Vec3(-hx, -hy, -0.5), Vec3(hx, hy, 0.5));
      fill(g, Vec3(-hx + 0.04, -hy, -0.35), Vec3(hx - 0.04, -hy + 0.04, 0.42), false);
      break;
    }
    case ObjectClass::kNightstand: {
      const double hx = uniform(rng, 0.38, 0.48), hy = uniform(rng, 0.3, 0.4), top = uniform(rng, 0.2, 0.4);
      fill(g, Vec3(-hx, -hy, -0.5), Vec3(hx, hy, top));
      fill(g, Vec3(-hx + 0.05, -hy, -0.05), Vec3(hx - 0.05, -hy + 0.05, 0.0), false);
      break;
    }
  }
  return g;
}

SceneSequence generate_sequence(const SceneConfig& cfg) {
  cfg.validate();
  SceneSequence seq;
  seq.config = cfg;

  Rng layout_rng = make_rng(cfg.seed, 0);
  seq.room = make_room(cfg, layout_rng);
  const int k = std::uniform_int_distribution<int>(cfg.min_objects, cfg.max_objects)(layout_rng);
  for (int j = 0; j < k; ++j) {
    SceneObject obj;
    obj.instance = j;
    obj.object_class = kAllClasses[std::uniform_int_distribution<std::size_t>(0, kAllClasses.size() - 1)(layout_rng)];
    obj.grid = make_canonical_grid(obj.object_class, layout_rng);
    obj.scale = class_scale(obj.object_class, layout_rng);
    if (const auto ext = obj.grid.occupied_extent()) std::tie(obj.noc_min, obj.noc_max) = *ext;
    seq.objects.push_back(std::move(obj));
  }

  Trajectories traj;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100) throw InvalidInput("generate_sequence: could not place objects collision-free");
    Rng rng = make_rng(cfg.seed, 1 + attempt);
    traj = object_trajectories(cfg, seq.room, seq.objects, rng);
    if (!traj.ok) continue;
    seq.frames.assign(cfg.frames, FrameState{});
    for (int f = 0; f < cfg.frames; ++f) {
      for (int j = 0; j < k; ++j) {
        seq.frames[f].poses.push_back(traj.poses[j][f]);
        seq.frames[f].boxes.push_back(seq.objects[j].box(traj.poses[j][f]));
      }
    }
    if (collision_free(seq)) break;
    spdlog::debug("sequence {}: smoothed trajectories collide, resampling (attempt {})", cfg.seed, attempt + 1);
  }

  Rng cam_rng = make_rng(cfg.seed, 1000);
  auto score = [&](const CameraModel& cam, int f) {
    const std::span<const Box3> prev = f > 0 ? std::span<const Box3>(seq.frames[f - 1].boxes) : std::span<const Box3>();
    return interest_score(cam, seq.objects, seq.frames[f].boxes, prev, cfg.class_weights);
  };

  // Initial view: best of the look-at candidates, at least 50 are tried.
  CameraModel cam = cfg.intrinsics;
  double best = -1.0;
  const Vec3 target = centroid(seq.frames[0].boxes);
  for (int attempt = 0; attempt < cfg.n_max && (attempt < 50 || best < cfg.interest_threshold); ++attempt) {
    CameraModel cand = cfg.intrinsics;
    cand.translation.x() = uniform(cam_rng, seq.room.min.x() + 0.3, seq.room.max.x() - 0.3);
    cand.translation.y() = uniform(cam_rng, seq.room.min.y() + 0.3, seq.room.max.y() - 0.3);
    cand.translation.z() = uniform(cam_rng, 1.2, 1.8);
    cand.rotation = look_at(cand.translation, target);
    const double s = score(cand, 0);
    if (s > best) {
      best = s;
      cam = cand;
    }
  }
  seq.frames[0].camera = cam;

  for (int f = 1; f < cfg.frames; ++f) {
    bool accepted = false;
    for (int attempt = 0; attempt < cfg.n_max; ++attempt) {
      const CameraModel cand = sample_camera_step(cam, f, cfg, cam_rng);
      if (!camera_inside(cand, seq.room)) continue;
      if (score(cand, f) >= cfg.interest_threshold) {
        cam = cand;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      spdlog::debug("sequence {}: camera holds its pose at frame {}", cfg.seed, f);
      if (score(cam, f) < cfg.interest_threshold) {
        cam.rotation = look_at(cam.translation, centroid(seq.frames[f].boxes));
      }
    }
    seq.frames[f].camera = cam;
  }

  for (int f = 0; f < cfg.frames; ++f) {
    auto& fs = seq.frames[f];
    fs.interest = score(fs.camera, f);
    for (int j = 0; j < k; ++j) {
      fs.visibility.push_back(box_visibility(fs.camera, fs.boxes[j]));
      if (fs.visibility.back() >= cfg.min_visibility) fs.annotated.push_back(j);
    }
  }
  return seq;
}

bool collision_free(const SceneSequence& seq) {
  for (const auto& fs : seq.frames) {
    for (std::size_t a = 0; a < fs.boxes.size(); ++a) {
      if (!seq.room.contains(fs.boxes[a])) return false;
      for (const auto& o : seq.room.obstacles)
        if (boxes_overlap(fs.boxes[a], o)) return false;
      for (std::size_t b = a + 1; b < fs.boxes.size(); ++b)
        if (boxes_overlap(fs.boxes[a], fs.boxes[b])) return false;
    }
  }
  return true;
}

NoiseModel NoiseModel::zero() {
  NoiseModel n;
  n.correspondence_noise_std = 0.0;
  n.noc_noise_std = 0.0;
  n.outlier_fraction = 0.0;
  n.dropout_prob = 0.0;
  n.objectness_min = n.objectness_max = 1.0;
  n.grid_corruption = 0.0;
  n.pose_translation_std = 0.0;
  n.pose_yaw_std = 0.0;
  n.pose_scale_std = 0.0;
  return n;
}

void NoiseModel::validate() const {
  auto fail = [](const std::string& m) { throw InvalidInput("NoiseModel: " + m); };
  if (!(correspondence_noise_std >= 0.0) || !(noc_noise_std >= 0.0)) fail("noise std must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0)) fail("outlier_fraction must lie in [0, 1)");
  if (!(dropout_prob >= 0.0 && dropout_prob <= 1.0)) fail("dropout_prob must lie in [0, 1]");
  if (!(objectness_min >= 0.0 && objectness_min <= objectness_max && objectness_max <= 1.0))
    fail("objectness range must satisfy 0 <= min <= max <= 1");
  if (!(grid_corruption >= 0.0 && grid_corruption <= 1.0)) fail("grid_corruption must lie in [0, 1]");
  if (points_per_detection < 3) fail("points_per_detection must be >= 3");
  if (!(pose_translation_std >= 0.0) || !(pose_yaw_std >= 0.0) || !(pose_scale_std >= 0.0 && pose_scale_std < 0.3))
    fail("pose error std must be >= 0 (scale below 0.3)");
}

SyntheticFrames synthesize_detections_detailed(const SceneSequence& seq, const NoiseModel& noise, Rng& rng) {
  noise.validate();
  std::vector<std::vector<std::array<int, 3>>> surfaces;
  for (const auto& obj : seq.objects) surfaces.push_back(obj.grid.surface_cells());

  SyntheticFrames out;
  out.detections.resize(seq.frames.size());
  out.truth.resize(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& fs = seq.frames[f];
    for (const int k : fs.annotated) {
      const bool dropped = uniform(rng, 0.0, 1.0) < noise.dropout_prob;
      if (dropped) continue;
      const auto& obj = seq.objects[k];
      const auto& cells = surfaces[k];
      const std::size_t n = std::min<std::size_t>(cells.size(), noise.points_per_detection);
      std::vector<std::size_t> pick(cells.size());
      std::iota(pick.begin(), pick.end(), 0);
      std::shuffle(pick.begin(), pick.end(), rng);
      pick.resize(n);
      std::sort(pick.begin(), pick.end());

      DetectionRecord det;
      DetectionTruth truth;
      det.frame = static_cast<int>(f);
      det.object_class = obj.object_class;
      det.gt_instance = obj.instance;
      truth.instance = obj.instance;
      Pose7 observed = fs.poses[k];
      observed.translation += gaussian_vec(rng, noise.pose_translation_std);
      observed.rotation = rotation_about_z(gaussian(rng, noise.pose_yaw_std)) * observed.rotation;
      observed.scale *= std::max(0.5, 1.0 + gaussian(rng, noise.pose_scale_std));
      for (const auto i : pick) {
        const auto& c = cells[i];
        const Vec3 noc = obj.grid.cell_center(c[0], c[1], c[2]);
        det.gt_noc.push_back(noc);
        const Vec3 obs = fs.camera.to_camera(observed.apply(noc));
        det.correspondences.noc_points.push_back(noc + gaussian_vec(rng, noise.noc_noise_std));
        det.correspondences.obs_points.push_back(obs + gaussian_vec(rng, noise.correspondence_noise_std));
      }
      const auto n_out = static_cast<std::size_t>(std::llround(noise.outlier_fraction * static_cast<double>(n)));
      if (n_out > 0) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(n_out);
        std::sort(idx.begin(), idx.end());
        for (const auto i : idx) {
          Vec3 dir = gaussian_vec(rng, 1.0);
          dir = dir.norm() > 1e-12 ? Vec3(dir.normalized()) : Vec3::UnitX();
          det.correspondences.obs_points[i] += uniform(rng, 0.1, 0.5) * dir;
        }
        truth.outlier_indices = idx;
      }
      det.objectness = noise.objectness_min < noise.objectness_max
                           ? uniform(rng, noise.objectness_min, noise.objectness_max)
                           : noise.objectness_min;

      // Image box of the GT box corners in front of the camera, clipped.
      Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
      Vec2 hi = -lo;
      for (const auto& c : fs.boxes[k].corners()) {
        const Vec3 pc = fs.camera.to_camera(c);
        if (pc.z() <= fs.camera.near_plane) continue;
        const Vec2 px = fs.camera.project(pc);
        lo = lo.cwiseMin(px);
        hi = hi.cwiseMax(px);
      }
      const Vec2 img(fs.camera.width, fs.camera.height);
      det.box2.min = lo.cwiseMax(Vec2::Zero()).cwiseMin(img);
      det.box2.max = hi.cwiseMax(det.box2.min).cwiseMin(img);

      det.grid = obj.grid;
      if (noise.grid_corruption > 0.0) {
        const auto flips = std::binomial_distribution<std::size_t>(det.grid.cell_count(), noise.grid_corruption)(rng);
        std::uniform_int_distribution<std::size_t> cell(0, det.grid.cell_count() - 1);
        for (std::size_t i = 0; i < flips; ++i) {
          const auto c = cell(rng);
          det.grid.set_linear(c, !det.grid.at_linear(c));
        }
      }
      out.detections[f].push_back(std::move(det));
      out.truth[f].push_back(std::move(truth));
    }
  }
  return out;
}

FrameDetections synthesize_detections(const SceneSequence& seq, const NoiseModel& noise, Rng& rng) {
  return synthesize_detections_detailed(seq, noise, rng).detections;
}

}  // namespace mot3d::sim
