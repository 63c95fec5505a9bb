#pragma once

#include "mot3d/autodiff.hpp"
#include "mot3d/detection.hpp"
#include "mot3d/geometry.hpp"
#include "mot3d/losses.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mot3d::nn {

struct GnnConfig {
  int message_passing_steps = 4;
  int window = 5;
  int edge_hidden = 32;
  int edge_dim = 12;
  int node_dim = 16;
  int voxel_hidden = 32;
  int edge_update_hidden = 64;
  int node_update_hidden = 64;
  int classifier_hidden = 16;
  double slope = 0.01;
  /// Weights start uniform in +-init_gain/sqrt(fan_in); biases in +-1/sqrt(fan_in).
  double init_gain = 2.449489742783178;
  /// Replaces node embeddings with zeros.
  bool no_geometry = false;
  /// Runs occupancy grids through the learned shape refiner before encoding.
  bool refine_shapes = true;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr int kEdgeFeatureDim = 8;

/// Relative pose between two detections, later minus earlier.
struct EdgeFeature {
  Vec3 rel_translation = Vec3::Zero();
  Vec3 rel_euler = Vec3::Zero();
  double log_scale_ratio = 0.0;
  int rel_time = 1;

  std::array<double, kEdgeFeatureDim> as_array() const;
  /// Throws InvalidInput for non-finite entries or rel_time == 0.
  void validate() const;
};

EdgeFeature make_edge_feature(const Pose7& from, int from_frame, const Pose7& to, int to_frame);

/// Named parameter tensors; iteration order is by name.
class ParamStore {
 public:
  /// Initialised uniformly in +-gain/sqrt(fan_in).
  Tensor& add(const std::string& name, Shape shape, int fan_in, std::mt19937_64& rng, double gain = 1.0);
  Tensor& add(const std::string& name, Shape shape, std::vector<double> values);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }
  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::map<std::string, Tensor> params_;
};

/// Edge encoder, voxel encoder, message passing network, edge classifier and
/// the two per-detection refinement heads (occupancy grid, NOC points).
/// Weights are shared across message passing rounds.
class TrackingModel {
 public:
  explicit TrackingModel(GnnConfig config);

  const GnnConfig& config() const { return config_; }
  /// Switches node embeddings off (or back on) for inference.
  void set_no_geometry(bool off) { config_.no_geometry = off; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// [8] -> [edge_dim].
  Tensor encode_edge(const EdgeFeature& f) const;
  /// [n] features -> [n, edge_dim].
  Tensor encode_edges(std::span<const EdgeFeature> fs) const;

  /// Single-channel 32^3 volume [1, 32, 32, 32] -> [node_dim].
  Tensor encode_voxels(const Tensor& volume) const;
  Tensor encode_voxels(const OccupancyGrid& grid) const;

  /// Occupancy probabilities [1, 32, 32, 32] for a (possibly corrupted) grid.
  Tensor refine_grid(const OccupancyGrid& grid) const;
  /// [n, 3] -> [n, 3]; starts as the identity.
  Tensor refine_noc(const Tensor& noc) const;
  std::vector<Vec3> refine_noc(std::span<const Vec3> noc) const;

  /// The volume fed to the voxel encoder: refined probabilities or the raw grid.
  Tensor node_volume(const OccupancyGrid& grid) const;
  /// [n, node_dim]; zeros under no_geometry.
  Tensor node_embeddings(std::span<const Tensor> volumes) const;

  /// nodes [n, node_dim], edges [m, edge_dim]; endpoints index nodes.
  /// Returns the final edge embeddings [m, edge_dim].
  Tensor message_passing(const Tensor& nodes, const Tensor& edges,
                         std::span<const std::pair<int, int>> endpoints) const;

  /// [m, edge_dim] -> probabilities [m].
  Tensor classify(const Tensor& edge_embeddings) const;

  /// Edge probabilities [m] from node embeddings and edge features.
  Tensor edge_probabilities(const Tensor& nodes, std::span<const EdgeFeature> features,
                            std::span<const std::pair<int, int>> endpoints) const;

  /// Inference convenience; empty output for a graph without edges.
  std::vector<double> predict(std::span<const OccupancyGrid> grids, std::span<const EdgeFeature> features,
                              std::span<const std::pair<int, int>> endpoints) const;

 private:
  Tensor mlp(const std::string& prefix, const Tensor& x) const;
  Tensor param(const std::string& name) const { return params_.get(name); }

  GnnConfig config_;
  ParamStore params_;
};

// ---------------------------------------------------------------------------
// Training

/// Per-detection training targets.
struct NodeSample {
  OccupancyGrid grid;
  OccupancyGrid gt_grid;
  ObjectClass object_class = ObjectClass::kChair;
  std::vector<Vec3> noc;
  std::vector<Vec3> gt_noc;
};

struct GraphSample {
  std::vector<NodeSample> nodes;
  std::vector<EdgeFeature> features;
  std::vector<std::pair<int, int>> endpoints;
  /// 1 for active edges.
  std::vector<int> labels;
};

/// Epochs run in order: shape (refiner heads only), track (tracking network
/// with refiners frozen), joint (everything, with the refiner losses added).
struct TrainSchedule {
  int shape_epochs = 2;
  int track_epochs = 40;
  int joint_epochs = 20;
  double learning_rate = 1e-3;
  double l2 = 1e-3;
  LossWeights weights;

  int total_epochs() const { return shape_epochs + track_epochs + joint_epochs; }
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  std::string stage;
  double loss = 0.0;
};

class Adam {
 public:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    long long t = 0;
  };

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Updates every parameter whose name passes `trainable`; l2 is added to the gradient.
  void step(ParamStore& params, double lr, double l2, const std::function<bool(const std::string&)>& trainable);

  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }

 private:
  std::map<std::string, Slot> slots_;
};

struct TrainState {
  int epochs_done = 0;
  std::vector<EpochRecord> log;
  Adam adam;
};

std::string stage_of_epoch(const TrainSchedule& schedule, int epoch);

/// Runs the remaining epochs of the schedule. One optimizer step per graph,
/// graphs visited in a seeded per-epoch order. `on_epoch` may return false to
/// stop early. Throws InvalidInput for an empty dataset.
void train(TrackingModel& model, std::span<const GraphSample> data, const TrainSchedule& schedule, TrainState& state,
           const std::function<bool(const EpochRecord&)>& on_epoch = {});

/// Loss of one graph under a stage, without updating anything.
double graph_loss(const TrackingModel& model, const GraphSample& sample, const std::string& stage,
                  const LossWeights& weights);

// ---------------------------------------------------------------------------
// Checkpoints: JSON, parameters keyed by layer name.

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const TrackingModel& model, const TrainState& state);
/// Throws FormatError on malformed files or mismatched parameter shapes.
std::pair<TrackingModel, TrainState> load_checkpoint(const std::filesystem::path& path);

}  // namespace mot3d::nn
