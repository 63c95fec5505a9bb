#include "mot3d/cli.hpp"

#include "mot3d/errors.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

namespace mot3d::cli {

namespace fs = std::filesystem;

PipelineParams RunConfig::pipeline_params() const {
  PipelineParams p = pipeline;
  p.seed = seed;
  return p;
}

nn::GnnConfig RunConfig::gnn_config() const {
  nn::GnnConfig g = gnn;
  g.seed = seed;
  g.window = pipeline.window;
  return g;
}

void RunConfig::validate() const {
  if (sequences < 1) throw InvalidInput("config: sequences must be >= 1");
  if (!(radius > 0.0)) throw InvalidInput("config: eval.radius must be > 0");
  scene.validate();
  noise.validate();
  pipeline.validate();
  gnn_config().validate();
  schedule.validate();
}

namespace {

// Per-section seeds are replaced by the global one.
Json without_seed(Json j) {
  j.erase("seed");
  return j;
}

void reject_seed(const Json& j, const char* section) {
  if (j.contains("seed")) throw InvalidInput(std::string(section) + ": set the top-level seed instead");
}

}  // namespace

Json config_to_json(const RunConfig& c) {
  Json gnn = without_seed(c.gnn);
  gnn.erase("window");
  return Json{{"format_version", kFormatVersion},
              {"kind", "mot3d-config"},
              {"seed", c.seed},
              {"sequences", c.sequences},
              {"scene", without_seed(c.scene)},
              {"noise", c.noise},
              {"pipeline", without_seed(c.pipeline)},
              {"gnn", gnn},
              {"schedule", c.schedule},
              {"eval", {{"radius", c.radius}}}};
}

RunConfig config_from_json(const Json& j) {
  reject_unknown_keys(j, {"format_version", "kind", "seed", "sequences", "scene", "noise", "pipeline", "gnn", "schedule", "eval"},
                      "config");
  if (j.contains("format_version") && j.at("format_version") != kFormatVersion) {
    throw InvalidInput("config: unsupported format_version " + j.at("format_version").dump());
  }
  if (j.contains("kind") && j.at("kind") != "mot3d-config") throw InvalidInput("config: kind must be mot3d-config");
  RunConfig c;
  try {
    read_field(j, "seed", c.seed);
    read_field(j, "sequences", c.sequences);
    if (j.contains("scene")) {
      reject_seed(j.at("scene"), "scene");
      j.at("scene").get_to(c.scene);
    }
    read_field(j, "noise", c.noise);
    if (j.contains("pipeline")) {
      reject_seed(j.at("pipeline"), "pipeline");
      j.at("pipeline").get_to(c.pipeline);
    }
    if (j.contains("gnn")) {
      reject_seed(j.at("gnn"), "gnn");
      if (j.at("gnn").contains("window")) throw InvalidInput("gnn: the window is set in the pipeline section");
      j.at("gnn").get_to(c.gnn);
    }
    read_field(j, "schedule", c.schedule);
    if (j.contains("eval")) {
      reject_unknown_keys(j.at("eval"), {"radius"}, "eval");
      read_field(j.at("eval"), "radius", c.radius);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  const Json j = Json::parse(read_text(path), nullptr, false);
  if (j.is_discarded()) throw InvalidInput(path.string() + ": not valid JSON");
  return config_from_json(j);
}

std::uint64_t sequence_seed(std::uint64_t seed, int i) {
  return sim::make_rng(seed, 1000 + static_cast<std::uint64_t>(i))();
}

std::string sequence_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "seq%04d", i);
  return buf;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

void generate_dataset(const RunConfig& cfg, const fs::path& dir, int jobs) {
  cfg.validate();
  fs::create_directories(dir);
  std::vector<IndexEntry> entries(cfg.sequences);
  parallel_for(entries.size(), jobs, [&](std::size_t i) {
    const std::string id = sequence_id(static_cast<int>(i));
    sim::SceneConfig scene = cfg.scene;
    scene.seed = sequence_seed(cfg.seed, static_cast<int>(i));
    const auto seq = sim::generate_sequence(scene);
    auto rng = sim::make_rng(scene.seed, 1);
    DetectionFile file{id, {}, sim::synthesize_detections(seq, cfg.noise, rng)};
    for (const auto& f : seq.frames) file.cameras.push_back(f.camera);
    write_sequence(dir, id, seq);
    write_detections(dir / (id + ".det.json"), file);
    entries[i] = {id, id + ".seq.json", id + ".det.json"};
    spdlog::debug("generated {}", id);
  });
  write_index(dir / "index.json", entries);
  spdlog::info("wrote {} sequences to {}", entries.size(), dir.string());
}

TrainResult train_model(const RunConfig& cfg, const std::vector<SequenceData>& data, int jobs,
                        const std::optional<fs::path>& resume) {
  cfg.validate();
  std::vector<const SequenceData*> labeled;
  for (const auto& d : data)
    if (d.has_ground_truth()) labeled.push_back(&d);
  if (labeled.empty()) throw InvalidInput("no labeled sequences to train on");

  const PipelineParams params = cfg.pipeline_params();
  std::vector<nn::GraphSample> samples(labeled.size());
  parallel_for(labeled.size(), jobs, [&](std::size_t i) { samples[i] = make_graph_sample(*labeled[i], params); });

  TrainResult r{nn::TrackingModel(cfg.gnn_config()), {}};
  if (resume) {
    auto [model, state] = nn::load_checkpoint(*resume);
    r.model = std::move(model);
    r.state = std::move(state);
    spdlog::info("resuming after epoch {}", r.state.epochs_done);
  }
  nn::train(r.model, samples, cfg.schedule, r.state, [](const nn::EpochRecord& rec) {
    spdlog::info("epoch {} ({}): loss {:.6f}", rec.epoch, rec.stage, rec.loss);
    return true;
  });
  return r;
}

std::string loss_log_csv(const nn::TrainState& state) {
  std::ostringstream out;
  out << "epoch,stage,loss\n";
  char buf[64];
  for (const auto& r : state.log) {
    std::snprintf(buf, sizeof buf, "%.17g", r.loss);
    out << r.epoch << ',' << r.stage << ',' << buf << '\n';
  }
  return out.str();
}

std::vector<TrackingOutput> track_dataset(const RunConfig& cfg, const std::vector<SequenceData>& data,
                                          const nn::TrackingModel* model, const TrackOptions& opts, int jobs) {
  cfg.validate();
  std::optional<nn::TrackingModel> ablated;
  if (!opts.heuristic) {
    if (!model) throw InvalidInput("tracking needs a checkpoint unless --heuristic is given");
    if (opts.no_geometry) {
      ablated.emplace(*model);
      ablated->set_no_geometry(true);
      model = &*ablated;
    }
  }
  const PipelineParams params = cfg.pipeline_params();
  const TrackerKind kind = opts.heuristic ? TrackerKind::kHeuristic : TrackerKind::kGnn;
  std::vector<TrackingOutput> out(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) { out[i] = track_sequence(data[i], kind, model, params); });
  return out;
}

eval::TrackReport evaluate_dataset(const RunConfig& cfg, const std::vector<SequenceData>& data,
                                   const std::map<std::string, std::vector<Tracklet>>& tracks,
                                   const nn::TrackingModel* model) {
  std::vector<std::string> missing;
  std::map<std::string, const SequenceData*> by_id;
  for (const auto& d : data) {
    if (!d.has_ground_truth()) continue;
    by_id[d.id] = &d;
    if (!tracks.contains(d.id)) missing.push_back("no tracklets for " + d.id);
  }
  for (const auto& [id, _] : tracks)
    if (!by_id.contains(id)) missing.push_back("no ground truth for " + id);
  if (!missing.empty()) {
    std::string msg = "sequence ids do not match:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw InvalidInput(msg);
  }

  std::vector<eval::SequenceResult> results;
  std::vector<eval::GridPair> grids;
  for (const auto& [id, d] : by_id) {
    const auto& tr = tracks.at(id);
    auto r = eval::evaluate_sequence(id, eval::predictions_by_frame(tr, d->frames()), d->gt_points(), cfg.radius);
    TrackingOutput out{filter_detections(d->detections, cfg.pipeline.filter), tr};
    for (const auto& t : tr)
      for (const auto& e : t.entries) {
        if (e.frame >= d->frames() || e.detection < 0 ||
            static_cast<std::size_t>(e.detection) >= out.detections[e.frame].size()) {
          throw InvalidInput(id + ": tracklet entry refers to a missing detection");
        }
      }
    auto pairs = matched_grid_pairs(*d, out, r, model);
    grids.insert(grids.end(), std::make_move_iterator(pairs.begin()), std::make_move_iterator(pairs.end()));
    results.push_back(std::move(r));
  }
  return eval::make_report(std::move(results), eval::grid_iou_report(grids));
}

std::string trajectories_csv(const std::vector<SequenceData>& data,
                             const std::map<std::string, std::vector<Tracklet>>& tracks) {
  std::ostringstream out;
  out << "sequence,source,id,frame,x,y,z\n";
  char buf[128];
  for (const auto& d : data) {
    const auto it = tracks.find(d.id);
    if (it != tracks.end()) {
      for (const auto& t : it->second)
        for (const auto& e : t.entries) {
          std::snprintf(buf, sizeof buf, "%d,%d,%.6f,%.6f,%.6f", t.instance_id, e.frame, e.center.x(), e.center.y(),
                        e.center.z());
          out << d.id << ",track," << buf << '\n';
        }
    }
    for (std::size_t f = 0; f < d.gt_boxes.size(); ++f)
      for (const auto& g : d.gt_boxes[f]) {
        std::snprintf(buf, sizeof buf, "%d,%zu,%.6f,%.6f,%.6f", g.instance, f, g.box.center.x(), g.box.center.y(),
                      g.box.center.z());
        out << d.id << ",gt," << buf << '\n';
      }
  }
  return out.str();
}

namespace {

void setup_logging() {
  auto logger = spdlog::get("mot3d");
  if (!logger) logger = spdlog::stderr_color_mt("mot3d");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("MOT3D_LOG_LEVEL")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off.
    if (level == spdlog::level::off && std::string(env) != "off") {
      spdlog::warn("MOT3D_LOG_LEVEL: unknown level '{}', keeping info", env);
    } else {
      spdlog::set_level(level);
    }
  }
}

std::map<std::string, std::vector<Tracklet>> read_tracks(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("no tracklet directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 12 && name.ends_with(".tracks.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, std::vector<Tracklet>> out;
  for (const auto& f : files) {
    const Json j = read_versioned(f, "mot3d-tracklets");
    const std::string id = j.at("id").get<std::string>();
    if (out.contains(id)) throw InvalidInput("duplicate tracklets for " + id);
    out[id] = tracklets_from_json(j);
  }
  return out;
}

std::vector<SequenceData> load_data(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidInput("no data directory " + dir.string());
  return load_dataset(dir);
}

}  // namespace

int run(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Multi-object 3D tracking: data generation, training, tracking and evaluation."};
  app.require_subcommand(0, 1);
  app.fallthrough();
  std::string config_path;
  bool print_config = false;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "JSON run config (see --print-config)")->check(CLI::ExistingFile);
  app.add_flag("--print-config", print_config, "Print the effective config and exit");
  app.add_option("--jobs", jobs, "Sequences processed in parallel")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Global seed (overrides the config)");

  auto* gen = app.add_subcommand("generate", "Generate sequences, detections and an index");
  std::string gen_out;
  std::optional<int> n_seq, min_obj, max_obj;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("-n,--sequences", n_seq, "Number of sequences");
  gen->add_option("--min-objects", min_obj, "Minimum objects per scene (>= 3)");
  gen->add_option("--max-objects", max_obj, "Maximum objects per scene");

  auto* trn = app.add_subcommand("train", "Train the tracker on labeled sequences");
  std::string trn_data, trn_out, trn_log, trn_resume;
  std::optional<int> trn_epochs;
  trn->add_option("--data", trn_data, "Dataset directory (with index.json)")->required();
  trn->add_option("--out", trn_out, "Checkpoint to write")->required();
  trn->add_option("--log", trn_log, "Per-epoch loss CSV (default: <out>.loss.csv)");
  trn->add_option("--resume", trn_resume, "Continue from this checkpoint")->check(CLI::ExistingFile);
  trn->add_option("--track-epochs", trn_epochs, "Override schedule.track_epochs");

  auto* trk = app.add_subcommand("track", "Run tracking and write one tracklet file per sequence");
  std::string trk_data, trk_out, trk_ckpt;
  bool heuristic = false, no_geometry = false;
  trk->add_option("--data", trk_data, "Dataset directory")->required();
  trk->add_option("--out", trk_out, "Output directory")->required();
  trk->add_option("--checkpoint", trk_ckpt, "Trained model")->check(CLI::ExistingFile);
  trk->add_flag("--heuristic", heuristic, "Nearest-center baseline instead of the GNN");
  trk->add_flag("--no-geometry", no_geometry, "Zero the node embeddings");

  auto* evl = app.add_subcommand("eval", "Score tracklets against ground truth");
  std::string ev_tracks, ev_data, ev_out, ev_ckpt;
  bool trajectories = false;
  evl->add_option("--tracks", ev_tracks, "Tracklet directory")->required();
  evl->add_option("--data", ev_data, "Dataset directory")->required();
  evl->add_option("--out", ev_out, "Report prefix (writes .json, .txt, .csv)")->required();
  evl->add_option("--checkpoint", ev_ckpt, "Refine grids through this model for the shape IoU")->check(CLI::ExistingFile);
  evl->add_flag("--trajectories", trajectories, "Also write <out>.trajectories.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (n_seq) cfg.sequences = *n_seq;
    if (min_obj) cfg.scene.min_objects = *min_obj;
    if (max_obj) cfg.scene.max_objects = *max_obj;
    if (trn_epochs) cfg.schedule.track_epochs = *trn_epochs;
    cfg.validate();

    if (print_config) {
      std::cout << dump_json(config_to_json(cfg));
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 2;
    }

    if (gen->parsed()) {
      generate_dataset(cfg, gen_out, jobs);
    } else if (trn->parsed()) {
      const auto data = load_data(trn_data);
      std::optional<fs::path> resume;
      if (!trn_resume.empty()) resume = trn_resume;
      const auto r = train_model(cfg, data, jobs, resume);
      nn::save_checkpoint(trn_out, r.model, r.state);
      write_text(trn_log.empty() ? trn_out + ".loss.csv" : trn_log, loss_log_csv(r.state));
      spdlog::info("wrote {}", trn_out);
    } else if (trk->parsed()) {
      if (heuristic && !trk_ckpt.empty()) throw InvalidInput("--heuristic and --checkpoint are exclusive");
      if (heuristic && no_geometry) throw InvalidInput("--no-geometry needs the GNN tracker");
      const auto data = load_data(trk_data);
      std::optional<nn::TrackingModel> model;
      if (!trk_ckpt.empty()) model.emplace(nn::load_checkpoint(trk_ckpt).first);
      const auto outs = track_dataset(cfg, data, model ? &*model : nullptr, {heuristic, no_geometry}, jobs);
      fs::create_directories(trk_out);
      for (std::size_t i = 0; i < data.size(); ++i) {
        write_text(fs::path(trk_out) / (data[i].id + ".tracks.json"),
                   dump_json(tracklets_to_json(data[i].id, data[i].frames(), outs[i].tracklets)));
      }
      spdlog::info("wrote tracklets for {} sequences to {}", data.size(), trk_out);
    } else if (evl->parsed()) {
      const auto data = load_data(ev_data);
      const auto tracks = read_tracks(ev_tracks);
      std::optional<nn::TrackingModel> model;
      if (!ev_ckpt.empty()) model.emplace(nn::load_checkpoint(ev_ckpt).first);
      const auto report = evaluate_dataset(cfg, data, tracks, model ? &*model : nullptr);
      write_text(ev_out + ".json", dump_json(eval::report_to_json(report)));
      const std::string table = eval::report_table(report);
      write_text(ev_out + ".txt", table);
      write_text(ev_out + ".csv", eval::report_csv(report));
      if (trajectories) write_text(ev_out + ".trajectories.csv", trajectories_csv(data, tracks));
      std::cout << table;
    }
    return 0;
  } catch (const InvalidInput& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const FormatError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}

}  // namespace mot3d::cli
