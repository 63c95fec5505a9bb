#include "doctest.h"

#include "mot3d/errors.hpp"
#include "mot3d/pose_estimation.hpp"
#include "mot3d/scene_sim.hpp"

#include <cmath>
#include <set>

using namespace mot3d;
using namespace mot3d::sim;

namespace {

double rotation_angle(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

bool same_pose(const Pose7& a, const Pose7& b) {
  return a.scale == b.scale && a.rotation == b.rotation && a.translation == b.translation;
}

SceneObject unit_object(ObjectClass cls = ObjectClass::kChair) {
  SceneObject o;
  o.object_class = cls;
  o.noc_min = Vec3::Constant(-0.5);
  o.noc_max = Vec3::Constant(0.5);
  return o;
}

// Camera at the origin looking along +x.
CameraModel forward_camera() {
  CameraModel cam;
  cam.rotation << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  return cam;
}

}  // namespace

TEST_CASE("repulsion_weight") {
  const double ds = 0.6;
  CHECK(repulsion_weight(0.6, ds, 1.0, 0, 500) == 1.0);
  CHECK(repulsion_weight(2.0, ds, 1.0, 0, 500) == 1.0);
  CHECK(repulsion_weight(ds / 2, ds, 1.0, 0, 500) == doctest::Approx(1.0 / (2 * ds * ds)).epsilon(1e-12));
  CHECK(repulsion_weight(0.1, ds, 1.0, 500, 500) == 1.0);
  CHECK(repulsion_weight(0.1, ds, 3.0, 0, 500) == doctest::Approx(1.5 * std::pow(10.0 - 1.0 / 0.6, 2)));
  CHECK_THROWS_AS(repulsion_weight(0.0, ds, 1.0, 0, 500), InvalidInput);
  CHECK_THROWS_AS(repulsion_weight(-1.0, ds, 1.0, 0, 500), InvalidInput);
  // Discontinuous at d*: the limit from below is 0.
  CHECK(repulsion_weight(ds - 1e-9, ds, 1.0, 0, 500) < 1e-15);
}

TEST_CASE("camera step bound") {
  CHECK(camera_step_bound(0.1, 1) == doctest::Approx(0.1 * (1 + std::log(2.0))));
  CHECK(camera_step_bound(0.1, 1) == doctest::Approx(0.1693).epsilon(1e-3));
  CHECK(camera_step_bound(0.1, 0) == doctest::Approx(0.1));
  SUBCASE("samples stay inside the bound") {
    SceneConfig cfg;
    Rng rng = make_rng(5, 0);
    const CameraModel cam = forward_camera();
    for (int i = 0; i < 1000; ++i) {
      const auto c = sample_camera_step(cam, 3, cfg, rng);
      CHECK((c.translation - cam.translation).cwiseAbs().maxCoeff() <= camera_step_bound(cfg.eps0, 3));
      const Vec3 e = euler_from_rotation(cam.rotation.transpose() * c.rotation);
      CHECK(e.cwiseAbs().maxCoeff() <= cfg.phi_cam + 1e-12);
    }
    CHECK_THROWS_AS(sample_camera_step(cam, 0, cfg, rng), InvalidInput);
  }
}

TEST_CASE("interest_score") {
  const CameraModel cam = forward_camera();
  const std::vector<SceneObject> objs = {unit_object()};
  const std::vector<double> w(kAllClasses.size(), 1.0);
  Box3 ahead;
  ahead.center = Vec3(4, 0, 0);
  Box3 behind;
  behind.center = Vec3(-4, 0, 0);
  CHECK(interest_score(cam, objs, std::vector<Box3>{behind}, {}, w) == 0.0);
  CHECK(interest_score(cam, objs, std::vector<Box3>{ahead}, {}, w) == 1.0);
  CHECK(interest_score(cam, objs, std::vector<Box3>{ahead}, std::vector<Box3>{ahead}, w) == 1.0);
  Box3 before = ahead;
  before.center.y() += 0.05;
  CHECK(interest_score(cam, objs, std::vector<Box3>{ahead}, std::vector<Box3>{before}, w) == 2.0);
  before.center.y() = 0.005;
  CHECK(interest_score(cam, objs, std::vector<Box3>{ahead}, std::vector<Box3>{before}, w) == 1.0);
  // Half the corners in view.
  Box3 edge;
  edge.center = Vec3(0.1, 0, 0);
  edge.half_extents = Vec3(1.0, 0.2, 0.2);
  CHECK(box_visibility(cam, edge) == 0.5);
  std::vector<double> heavy = w;
  heavy[static_cast<std::size_t>(ObjectClass::kChair)] = 3.0;
  CHECK(interest_score(cam, objs, std::vector<Box3>{ahead}, {}, heavy) == 3.0);
}

TEST_CASE("sample_object_step") {
  SceneConfig cfg;
  Pose7 pose;
  pose.scale = 0.9;
  pose.rotation = rotation_about_z(0.7);
  pose.translation = Vec3(2, 2, 0.45);

  SUBCASE("zero bounds leave the pose unchanged") {
    cfg.sigma = 0.0;
    cfg.phi_obj = 0.0;
    Rng rng = make_rng(1, 0);
    const auto p = sample_object_step(pose, Clearance{5.0, Vec3::UnitX()}, cfg, 0, rng);
    CHECK((p.translation - pose.translation).norm() < 1e-15);
    CHECK(rotation_angle(p.rotation, pose.rotation) < 1e-7);
  }
  SUBCASE("step bounds and upright motion") {
    Rng rng = make_rng(2, 0);
    for (int i = 0; i < 1000; ++i) {
      const auto p = sample_object_step(pose, Clearance{0.2, Vec3::UnitY()}, cfg, 0, rng);
      const Vec3 d = p.translation - pose.translation;
      CHECK(d.cwiseAbs().maxCoeff() <= cfg.sigma + 1e-12);
      CHECK(std::abs(d.z()) < 1e-12);
      CHECK(std::abs(wrap_angle(yaw_of(p.rotation) - 0.7)) <= cfg.phi_obj + 1e-12);
      CHECK((p.rotation.col(2) - Vec3::UnitZ()).norm() < 1e-12);
      CHECK(p.scale == pose.scale);
    }
  }
  SUBCASE("right composition matches the local step") {
    cfg.upright_objects = false;
    Rng a = make_rng(3, 0);
    Rng b = make_rng(3, 0);
    const auto p = sample_object_step(pose, Clearance{5.0, Vec3::UnitX()}, cfg, 0, a);
    // Replay the draws: translation (3) then Euler (3), uniform in the bounds.
    std::uniform_real_distribution<double> ut(-cfg.sigma, cfg.sigma);
    std::uniform_real_distribution<double> ur(-cfg.phi_obj, cfg.phi_obj);
    const double dx = ut(b), dy = ut(b), dz = ut(b);
    const double ex = ur(b), ey = ur(b), ez = ur(b);
    const Vec3 delta(dx, dy, dz);
    CHECK((p.translation - (pose.translation + delta)).norm() < 1e-12);
    CHECK((p.rotation - pose.rotation * rotation_from_euler(Vec3(ex, ey, ez))).norm() < 1e-12);
  }
  SUBCASE("near a wall the mean displacement points away from it") {
    // Monte-Carlo sign test: wall on the -x side, 0.2 m away.
    Rng rng = make_rng(4, 0);
    double along = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const auto p = sample_object_step(pose, Clearance{0.2, Vec3::UnitX()}, cfg, 0, rng);
      along += (p.translation - pose.translation).x();
    }
    CHECK(along / 1000 > 0.02);
  }
  SUBCASE("beyond d* the step is unbiased") {
    Rng rng = make_rng(5, 0);
    double along = 0.0;
    for (int i = 0; i < 4000; ++i) {
      const auto p = sample_object_step(pose, Clearance{1.0, Vec3::UnitX()}, cfg, 0, rng);
      along += (p.translation - pose.translation).x();
    }
    // Standard error of the mean is 0.15 / sqrt(3 * 4000) ~ 0.0014.
    CHECK(std::abs(along / 4000) < 0.006);
  }
}

TEST_CASE("nearest_obstacle") {
  Room room;
  room.max = Vec3(6, 6, 3);
  Box3 b;
  b.center = Vec3(0.8, 3, 0.5);
  b.half_extents = Vec3(0.5, 0.5, 0.5);
  auto c = nearest_obstacle(b, room, {});
  CHECK(c.distance == doctest::Approx(0.3));
  CHECK(c.away == Vec3::UnitX());
  Box3 other = b;
  other.center = Vec3(2.0, 3, 0.5);
  c = nearest_obstacle(b, room, std::vector<Box3>{other});
  CHECK(c.distance == doctest::Approx(0.2));
  CHECK((c.away + Vec3::UnitX()).norm() < 1e-12);
}

TEST_CASE("Bezier smoothing") {
  SUBCASE("collinear waypoints stay collinear") {
    std::vector<Pose7> w(5);
    for (int i = 0; i < 5; ++i) w[i].translation = Vec3(1, 2, 0) + (i * i * 0.3) * Vec3(1, -1, 0.5).normalized();
    const auto dense = smooth_trajectory(w, 7);
    CHECK(dense.size() == 29);
    const Vec3 dir = Vec3(1, -1, 0.5).normalized();
    for (const auto& p : dense) {
      const Vec3 r = p.translation - Vec3(1, 2, 0);
      CHECK((r - r.dot(dir) * dir).norm() < 1e-9);
    }
  }
  SUBCASE("interpolates every waypoint") {
    Rng rng = make_rng(9, 0);
    std::vector<Pose7> w(6);
    for (auto& p : w) {
      p.translation = Vec3::Random();
      p.rotation = rotation_about_z(std::uniform_real_distribution<double>(-3, 3)(rng));
    }
    const auto dense = smooth_trajectory(w, 4);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(dense[4 * i].translation == w[i].translation);
      CHECK(dense[4 * i].rotation == w[i].rotation);
    }
  }
  SUBCASE("L-shaped waypoints stay in each segment's control hull") {
    const std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0)};
    const auto segs = bezier_segments(pts);
    REQUIRE(segs.size() == 2);
    std::vector<Pose7> w(3);
    for (int i = 0; i < 3; ++i) w[i].translation = pts[i];
    const auto dense = smooth_trajectory(w, 50);
    // Planar convex hull test: inside every edge of the (convex) hull of the 4 control points.
    for (int s = 0; s < 2; ++s) {
      std::vector<Vec2> cp;
      for (const auto& c : segs[s]) cp.emplace_back(c.x(), c.y());
      for (int k = 0; k <= 50; ++k) {
        const Vec2 q = dense[50 * s + k].translation.head<2>();
        // q is in the hull iff it is a convex combination; check via all triangles of the 4 points.
        bool inside = false;
        for (int a = 0; a < 4 && !inside; ++a)
          for (int b = a + 1; b < 4 && !inside; ++b)
            for (int c = b + 1; c < 4 && !inside; ++c) {
              const Vec2 v0 = cp[b] - cp[a], v1 = cp[c] - cp[a], v2 = q - cp[a];
              const double den = v0.x() * v1.y() - v1.x() * v0.y();
              if (std::abs(den) < 1e-15) continue;
              const double l1 = (v2.x() * v1.y() - v1.x() * v2.y()) / den;
              const double l2 = (v0.x() * v2.y() - v2.x() * v0.y()) / den;
              inside = l1 >= -1e-12 && l2 >= -1e-12 && l1 + l2 <= 1 + 1e-12;
            }
        CHECK(inside);
      }
    }
  }
  SUBCASE("single waypoint is constant") {
    const std::vector<Pose7> w(1);
    CHECK(smooth_trajectory(w, 3).size() == 1);
    CHECK_THROWS_AS(smooth_trajectory(std::vector<Pose7>{}, 3), InvalidInput);
  }
}

TEST_CASE("canonical grids") {
  Rng rng = make_rng(1, 0);
  for (const auto cls : kAllClasses) {
    const auto g = make_canonical_grid(cls, rng);
    CHECK(g.occupied_count() > 500);
    CHECK(g.surface_cells().size() >= 200);
  }
}

TEST_CASE("generate_sequence") {
  SceneConfig cfg;
  SUBCASE("validation") {
    cfg.min_objects = 2;
    CHECK_THROWS_AS(generate_sequence(cfg), InvalidInput);
    cfg = SceneConfig{};
    cfg.frames = 1;
    CHECK_THROWS_AS(generate_sequence(cfg), InvalidInput);
  }
  SUBCASE("structure and invariants") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
      cfg.seed = seed;
      const auto seq = generate_sequence(cfg);
      CHECK(seq.frames.size() == 25);
      CHECK(seq.objects.size() >= 3);
      CHECK(seq.objects.size() <= 5);
      CHECK(collision_free(seq));
      for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        const auto& fs = seq.frames[f];
        CHECK(fs.interest >= cfg.interest_threshold);
        CHECK(fs.poses.size() == seq.objects.size());
        for (std::size_t k = 0; k < fs.poses.size(); ++k) {
          // Upright on the floor.
          CHECK(fs.boxes[k].center.z() - fs.boxes[k].half_extents.z() == doctest::Approx(0.0).epsilon(1e-9));
          if (f % cfg.frames_per_waypoint == 0 && f > 0) {
            const Vec3 d = fs.poses[k].translation - seq.frames[f - cfg.frames_per_waypoint].poses[k].translation;
            CHECK(d.cwiseAbs().maxCoeff() <= cfg.sigma + 1e-9);
          }
        }
      }
    }
  }
  SUBCASE("deterministic") {
    cfg.seed = 17;
    const auto a = generate_sequence(cfg);
    const auto b = generate_sequence(cfg);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t f = 0; f < a.frames.size(); ++f) {
      for (std::size_t k = 0; k < a.objects.size(); ++k) CHECK(same_pose(a.frames[f].poses[k], b.frames[f].poses[k]));
      CHECK(a.frames[f].camera.rotation == b.frames[f].camera.rotation);
      CHECK(a.frames[f].camera.translation == b.frames[f].camera.translation);
    }
    for (std::size_t k = 0; k < a.objects.size(); ++k) CHECK(a.objects[k].grid == b.objects[k].grid);
  }
}

TEST_CASE("synthesize_detections") {
  SceneConfig cfg;
  cfg.seed = 4;
  const auto seq = generate_sequence(cfg);

  SUBCASE("dropout 1 gives no detections") {
    NoiseModel n;
    n.dropout_prob = 1.0;
    Rng rng = make_rng(1, 0);
    for (const auto& f : synthesize_detections(seq, n, rng)) CHECK(f.empty());
  }
  SUBCASE("zero noise recovers the GT pose") {
    Rng rng = make_rng(1, 0);
    const auto out = synthesize_detections_detailed(seq, NoiseModel::zero(), rng);
    int checked = 0;
    for (std::size_t f = 0; f < out.detections.size(); ++f) {
      CHECK(out.detections[f].size() == seq.frames[f].annotated.size());
      for (const auto& det : out.detections[f]) {
        const Pose7 p = estimate_pose(det, seq.frames[f].camera, OutlierParams{}, 7);
        const Pose7& gt = seq.frames[f].poses[*det.gt_instance];
        CHECK((p.translation - gt.translation).norm() < 1e-6);
        CHECK(rotation_angle(p.rotation, gt.rotation) < 1e-6);
        CHECK(std::abs(p.scale - gt.scale) < 1e-6);
        CHECK(det.grid == seq.objects[*det.gt_instance].grid);
        ++checked;
      }
    }
    CHECK(checked > 20);
  }
  SUBCASE("injected outliers are rejected by RANSAC") {
    NoiseModel n = NoiseModel::zero();
    n.outlier_fraction = 0.3;
    n.correspondence_noise_std = 0.002;
    std::size_t injected = 0, excluded = 0;
    int trials = 0;
    for (std::uint64_t s = 1; trials < 100; ++s) {
      SceneConfig c;
      c.seed = s;
      Rng rng = make_rng(s, 1);
      const auto out = synthesize_detections_detailed(generate_sequence(c), n, rng);
      for (std::size_t f = 0; f < out.detections.size() && trials < 100; ++f) {
        for (std::size_t d = 0; d < out.detections[f].size() && trials < 100; ++d, ++trials) {
          const auto res = ransac_alignment_filter(out.detections[f][d].correspondences, OutlierParams{}, 100 + trials);
          const std::set<std::size_t> kept(res.kept_indices.begin(), res.kept_indices.end());
          for (const auto i : out.truth[f][d].outlier_indices) {
            ++injected;
            excluded += kept.count(i) ? 0 : 1;
          }
        }
      }
    }
    CHECK(injected > 0);
    CHECK(static_cast<double>(excluded) >= 0.95 * static_cast<double>(injected));
  }
  SUBCASE("deterministic in the rng") {
    Rng a = make_rng(3, 0), b = make_rng(3, 0);
    const auto da = synthesize_detections(seq, NoiseModel{}, a);
    const auto db = synthesize_detections(seq, NoiseModel{}, b);
    REQUIRE(da.size() == db.size());
    for (std::size_t f = 0; f < da.size(); ++f) {
      REQUIRE(da[f].size() == db[f].size());
      for (std::size_t d = 0; d < da[f].size(); ++d) {
        CHECK(da[f][d].correspondences.obs_points == db[f][d].correspondences.obs_points);
        CHECK(da[f][d].grid == db[f][d].grid);
        CHECK(da[f][d].objectness == db[f][d].objectness);
      }
    }
  }
  SUBCASE("noise model validation") {
    NoiseModel n;
    n.outlier_fraction = 1.0;
    Rng rng = make_rng(1, 0);
    CHECK_THROWS_AS(synthesize_detections(seq, n, rng), InvalidInput);
  }
}
