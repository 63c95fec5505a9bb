#pragma once

#include "mot3d/config.hpp"
#include "mot3d/evaluation.hpp"
#include "mot3d/io.hpp"
#include "mot3d/model.hpp"
#include "mot3d/pipeline.hpp"
#include "mot3d/scene_sim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mot3d::cli {

/// Every tunable of every command. One global seed drives generation, pose
/// fitting and model initialisation, so the per-section seeds are not part
/// of the file.
struct RunConfig {
  std::uint64_t seed = 1;
  int sequences = 50;
  sim::SceneConfig scene;
  sim::NoiseModel noise;
  PipelineParams pipeline;
  nn::GnnConfig gnn;
  nn::TrainSchedule schedule;
  double radius = eval::kDefaultRadius;

  /// Copies with the global seed applied.
  PipelineParams pipeline_params() const;
  nn::GnnConfig gnn_config() const;

  void validate() const;
};

Json config_to_json(const RunConfig& c);
/// Missing keys keep their defaults; unknown keys and per-section seeds are
/// rejected with InvalidInput.
RunConfig config_from_json(const Json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Scene seed of sequence i.
std::uint64_t sequence_seed(std::uint64_t seed, int i);
std::string sequence_id(int i);

/// Runs fn(0..n-1) on up to `jobs` threads; rethrows the first failure.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

/// Writes cfg.sequences sequences with detections and index.json into dir.
void generate_dataset(const RunConfig& cfg, const std::filesystem::path& dir, int jobs = 1);

struct TrainResult {
  nn::TrackingModel model;
  nn::TrainState state;
};

/// Trains on every sequence with ground truth in `data`. When `resume` is
/// given it continues that run (its config wins). Throws InvalidInput when
/// no labeled sequence exists.
TrainResult train_model(const RunConfig& cfg, const std::vector<SequenceData>& data, int jobs = 1,
                        const std::optional<std::filesystem::path>& resume = std::nullopt);

std::string loss_log_csv(const nn::TrainState& state);

struct TrackOptions {
  bool heuristic = false;
  bool no_geometry = false;
};

std::vector<TrackingOutput> track_dataset(const RunConfig& cfg, const std::vector<SequenceData>& data,
                                          const nn::TrackingModel* model, const TrackOptions& opts, int jobs = 1);

/// Scores tracklets (by sequence id) against the ground truth of `data`.
/// Throws InvalidInput listing ids present on one side only. Grid IoU uses
/// the detections' grids, refined through `model` when given.
eval::TrackReport evaluate_dataset(const RunConfig& cfg, const std::vector<SequenceData>& data,
                                   const std::map<std::string, std::vector<Tracklet>>& tracks,
                                   const nn::TrackingModel* model = nullptr);

/// One row per tracked and GT position: sequence,source,id,frame,x,y,z.
std::string trajectories_csv(const std::vector<SequenceData>& data,
                             const std::map<std::string, std::vector<Tracklet>>& tracks);

/// Full command line entry point; returns the process exit code
/// (0 success, 1 runtime failure, 2 invalid input or config).
int run(int argc, char** argv);

}  // namespace mot3d::cli
