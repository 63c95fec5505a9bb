#include "mot3d/config.hpp"

#include "mot3d/errors.hpp"

#include <algorithm>
#include <string>

namespace mot3d {

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const char* section) {
  if (!j.is_object()) throw InvalidInput(std::string(section) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw InvalidInput(std::string(section) + ": unknown key '" + key + "'");
    }
  }
}

void to_json(Json& j, const OutlierParams& p) {
  j = Json{{"n_neighbors", p.n_neighbors},
           {"std_ratio", p.std_ratio},
           {"ransac_iterations", p.ransac_iterations},
           {"ransac_inlier_threshold", p.ransac_inlier_threshold},
           {"min_correspondences", p.min_correspondences}};
}

void from_json(const Json& j, OutlierParams& p) {
  reject_unknown_keys(j, {"n_neighbors", "std_ratio", "ransac_iterations", "ransac_inlier_threshold", "min_correspondences"},
                      "outlier");
  read_field(j, "n_neighbors", p.n_neighbors);
  read_field(j, "std_ratio", p.std_ratio);
  read_field(j, "ransac_iterations", p.ransac_iterations);
  read_field(j, "ransac_inlier_threshold", p.ransac_inlier_threshold);
  read_field(j, "min_correspondences", p.min_correspondences);
}

void to_json(Json& j, const LossWeights& w) { j = Json{{"noc_weight", w.noc_weight}, {"rec_weight", w.rec_weight}}; }

void from_json(const Json& j, LossWeights& w) {
  reject_unknown_keys(j, {"noc_weight", "rec_weight"}, "loss_weights");
  read_field(j, "noc_weight", w.noc_weight);
  read_field(j, "rec_weight", w.rec_weight);
}

namespace nn {

void to_json(Json& j, const GnnConfig& c) {
  j = Json{{"message_passing_steps", c.message_passing_steps},
           {"window", c.window},
           {"edge_hidden", c.edge_hidden},
           {"edge_dim", c.edge_dim},
           {"node_dim", c.node_dim},
           {"voxel_hidden", c.voxel_hidden},
           {"edge_update_hidden", c.edge_update_hidden},
           {"node_update_hidden", c.node_update_hidden},
           {"classifier_hidden", c.classifier_hidden},
           {"slope", c.slope},
           {"init_gain", c.init_gain},
           {"no_geometry", c.no_geometry},
           {"refine_shapes", c.refine_shapes},
           {"seed", c.seed}};
}

void from_json(const Json& j, GnnConfig& c) {
  reject_unknown_keys(j,
                      {"message_passing_steps", "window", "edge_hidden", "edge_dim", "node_dim", "voxel_hidden",
                       "edge_update_hidden", "node_update_hidden", "classifier_hidden", "slope", "init_gain", "no_geometry",
                       "refine_shapes", "seed"},
                      "gnn");
  read_field(j, "message_passing_steps", c.message_passing_steps);
  read_field(j, "window", c.window);
  read_field(j, "edge_hidden", c.edge_hidden);
  read_field(j, "edge_dim", c.edge_dim);
  read_field(j, "node_dim", c.node_dim);
  read_field(j, "voxel_hidden", c.voxel_hidden);
  read_field(j, "edge_update_hidden", c.edge_update_hidden);
  read_field(j, "node_update_hidden", c.node_update_hidden);
  read_field(j, "classifier_hidden", c.classifier_hidden);
  read_field(j, "slope", c.slope);
  read_field(j, "init_gain", c.init_gain);
  read_field(j, "no_geometry", c.no_geometry);
  read_field(j, "refine_shapes", c.refine_shapes);
  read_field(j, "seed", c.seed);
}

void to_json(Json& j, const TrainSchedule& s) {
  j = Json{{"shape_epochs", s.shape_epochs},
           {"track_epochs", s.track_epochs},
           {"joint_epochs", s.joint_epochs},
           {"learning_rate", s.learning_rate},
           {"l2", s.l2},
           {"loss_weights", s.weights}};
}

void from_json(const Json& j, TrainSchedule& s) {
  reject_unknown_keys(j, {"shape_epochs", "track_epochs", "joint_epochs", "learning_rate", "l2", "loss_weights"},
                      "schedule");
  read_field(j, "shape_epochs", s.shape_epochs);
  read_field(j, "track_epochs", s.track_epochs);
  read_field(j, "joint_epochs", s.joint_epochs);
  read_field(j, "learning_rate", s.learning_rate);
  read_field(j, "l2", s.l2);
  read_field(j, "loss_weights", s.weights);
}

}  // namespace nn

}  // namespace mot3d
