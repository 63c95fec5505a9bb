#include "mot3d/model.hpp"

#include "mot3d/config.hpp"
#include "mot3d/errors.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mot3d::nn {

namespace {

constexpr int kGridResolution = OccupancyGrid::kDefaultResolution;
constexpr std::size_t kMaxNocPointsPerLoss = 64;

Tensor grid_volume(const OccupancyGrid& grid) {
  if (grid.resolution() != kGridResolution) {
    throw InvalidInput("voxel encoder: grid resolution " + std::to_string(grid.resolution()) + ", expected " +
                       std::to_string(kGridResolution));
  }
  std::vector<double> v(grid.cell_count());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = grid.at_linear(i) ? 1.0 : 0.0;
  return Tensor::constant({1, kGridResolution, kGridResolution, kGridResolution}, std::move(v));
}

Tensor points_tensor(std::span<const Vec3> pts) {
  std::vector<double> v;
  v.reserve(pts.size() * 3);
  for (const auto& p : pts) v.insert(v.end(), {p.x(), p.y(), p.z()});
  return Tensor::constant({static_cast<int>(pts.size()), 3}, std::move(v));
}

// Evenly strided subset, capped for the per-node NOC loss.
std::vector<std::size_t> noc_subset(std::size_t n) {
  const std::size_t stride = std::max<std::size_t>(1, (n + kMaxNocPointsPerLoss - 1) / kMaxNocPointsPerLoss);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; i += stride) idx.push_back(i);
  return idx;
}

bool is_refiner(const std::string& name) { return name.starts_with("shape_ref.") || name.starts_with("noc_ref."); }

}  // namespace

void GnnConfig::validate() const {
  if (message_passing_steps < 1) throw InvalidInput("GnnConfig: message_passing_steps must be >= 1");
  if (window < 2) throw InvalidInput("GnnConfig: window must be >= 2");
  for (const int h : {edge_hidden, edge_dim, node_dim, voxel_hidden, edge_update_hidden, node_update_hidden,
                      classifier_hidden}) {
    if (h < 1) throw InvalidInput("GnnConfig: layer sizes must be >= 1");
  }
  if (!(slope >= 0.0 && slope < 1.0)) throw InvalidInput("GnnConfig: slope must be in [0, 1)");
  if (!(init_gain > 0.0)) throw InvalidInput("GnnConfig: init_gain must be > 0");
}

std::array<double, kEdgeFeatureDim> EdgeFeature::as_array() const {
  return {rel_translation.x(), rel_translation.y(), rel_translation.z(), rel_euler.x(),
          rel_euler.y(),       rel_euler.z(),       log_scale_ratio,     static_cast<double>(rel_time)};
}

void EdgeFeature::validate() const {
  for (const double v : as_array()) {
    if (!std::isfinite(v)) throw InvalidInput("EdgeFeature: non-finite entry");
  }
  if (rel_time == 0) throw InvalidInput("EdgeFeature: rel_time must be non-zero");
}

EdgeFeature make_edge_feature(const Pose7& from, int from_frame, const Pose7& to, int to_frame) {
  EdgeFeature f;
  f.rel_translation = to.translation - from.translation;
  const Vec3 d = euler_from_rotation(to.rotation) - euler_from_rotation(from.rotation);
  f.rel_euler = Vec3(wrap_angle(d.x()), wrap_angle(d.y()), wrap_angle(d.z()));
  f.log_scale_ratio = std::log(to.scale / from.scale);
  f.rel_time = to_frame - from_frame;
  f.validate();
  return f;
}

// ---------------------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Shape shape, int fan_in, std::mt19937_64& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = u(rng);
  return add(name, std::move(shape), std::move(v));
}

Tensor& ParamStore::add(const std::string& name, Shape shape, std::vector<double> values) {
  auto [it, inserted] = params_.insert_or_assign(name, Tensor::leaf(std::move(shape), std::move(values), true));
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  const auto it = params_.find(name);
  if (it == params_.end()) throw InvalidInput("ParamStore: no parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

// ---------------------------------------------------------------------------

TrackingModel::TrackingModel(GnnConfig config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const auto& c = config_;
  auto dense = [&](const std::string& name, int in, int out) {
    params_.add(name + ".w", {out, in}, in, rng, c.init_gain);
    params_.add(name + ".b", {out}, in, rng);
  };

  dense("edge_enc.0", kEdgeFeatureDim, c.edge_hidden);
  dense("edge_enc.1", c.edge_hidden, c.edge_dim);

  params_.add("voxel_enc.conv0.w", {8, 1, 4, 4, 4}, 64, rng, c.init_gain);
  params_.add("voxel_enc.conv0.b", {8}, 64, rng);
  params_.add("voxel_enc.conv1.w", {16, 8, 2, 2, 2}, 64, rng, c.init_gain);
  params_.add("voxel_enc.conv1.b", {16}, 64, rng);
  dense("voxel_enc.fc0", 16 * 4 * 4 * 4, c.voxel_hidden);
  dense("voxel_enc.fc1", c.voxel_hidden, c.node_dim);

  dense("edge_upd.0", c.edge_dim + 2 * c.node_dim, c.edge_update_hidden);
  dense("edge_upd.1", c.edge_update_hidden, c.edge_dim);
  dense("node_upd.0", c.edge_dim + c.node_dim, c.node_update_hidden);
  dense("node_upd.1", c.node_update_hidden, c.node_dim);

  dense("cls.0", c.edge_dim, c.classifier_hidden);
  dense("cls.1", c.classifier_hidden, 1);

  // Refiner heads start close to the identity map.
  std::vector<double> kernel(27, 0.0);
  kernel[13] = 8.0;
  params_.add("shape_ref.w", {1, 1, 3, 3, 3}, kernel);
  params_.add("shape_ref.b", {1}, {-4.0});
  params_.add("noc_ref.w", {3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  params_.add("noc_ref.b", {3}, {0, 0, 0});
}

Tensor TrackingModel::mlp(const std::string& prefix, const Tensor& x) const {
  const Tensor h = leaky_relu(affine(x, param(prefix + ".0.w"), param(prefix + ".0.b")), config_.slope);
  return affine(h, param(prefix + ".1.w"), param(prefix + ".1.b"));
}

Tensor TrackingModel::encode_edge(const EdgeFeature& f) const {
  f.validate();
  const auto a = f.as_array();
  return mlp("edge_enc", Tensor::constant({kEdgeFeatureDim}, std::vector<double>(a.begin(), a.end())));
}

Tensor TrackingModel::encode_edges(std::span<const EdgeFeature> fs) const {
  if (fs.empty()) throw ShapeMismatch("encode_edges: no edges");
  std::vector<double> v;
  v.reserve(fs.size() * kEdgeFeatureDim);
  for (const auto& f : fs) {
    f.validate();
    const auto a = f.as_array();
    v.insert(v.end(), a.begin(), a.end());
  }
  return mlp("edge_enc", Tensor::constant({static_cast<int>(fs.size()), kEdgeFeatureDim}, std::move(v)));
}

Tensor TrackingModel::encode_voxels(const Tensor& volume) const {
  if (volume.shape() != Shape{1, kGridResolution, kGridResolution, kGridResolution}) {
    throw InvalidInput("encode_voxels: volume shape " + shape_string(volume.shape()) + ", expected [1, 32, 32, 32]");
  }
  const double s = config_.slope;
  Tensor h = leaky_relu(conv3d(volume, param("voxel_enc.conv0.w"), param("voxel_enc.conv0.b"), 4), s);
  h = leaky_relu(conv3d(h, param("voxel_enc.conv1.w"), param("voxel_enc.conv1.b"), 2), s);
  h = reshape(h, {static_cast<int>(h.size())});
  h = leaky_relu(affine(h, param("voxel_enc.fc0.w"), param("voxel_enc.fc0.b")), s);
  return affine(h, param("voxel_enc.fc1.w"), param("voxel_enc.fc1.b"));
}

Tensor TrackingModel::encode_voxels(const OccupancyGrid& grid) const { return encode_voxels(grid_volume(grid)); }

Tensor TrackingModel::refine_grid(const OccupancyGrid& grid) const {
  return sigmoid(conv3d(grid_volume(grid), param("shape_ref.w"), param("shape_ref.b"), 1, 1));
}

Tensor TrackingModel::refine_noc(const Tensor& noc) const { return affine(noc, param("noc_ref.w"), param("noc_ref.b")); }

std::vector<Vec3> TrackingModel::refine_noc(std::span<const Vec3> noc) const {
  if (noc.empty()) return {};
  const Tensor out = refine_noc(points_tensor(noc));
  std::vector<Vec3> pts(noc.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(out.at(3 * i), out.at(3 * i + 1), out.at(3 * i + 2));
  return pts;
}

Tensor TrackingModel::node_volume(const OccupancyGrid& grid) const {
  return config_.refine_shapes ? refine_grid(grid) : grid_volume(grid);
}

Tensor TrackingModel::node_embeddings(std::span<const Tensor> volumes) const {
  if (volumes.empty()) throw ShapeMismatch("node_embeddings: no nodes");
  const int n = static_cast<int>(volumes.size());
  if (config_.no_geometry) return Tensor::zeros({n, config_.node_dim});
  std::vector<Tensor> rows;
  rows.reserve(volumes.size());
  for (const auto& v : volumes) rows.push_back(encode_voxels(v));
  return reshape(concat(rows), {n, config_.node_dim});
}

Tensor TrackingModel::message_passing(const Tensor& nodes, const Tensor& edges,
                                      std::span<const std::pair<int, int>> endpoints) const {
  if (nodes.rank() != 2 || nodes.dim(1) != config_.node_dim) {
    throw ShapeMismatch("message_passing: node shape " + shape_string(nodes.shape()));
  }
  if (edges.rank() != 2 || edges.dim(1) != config_.edge_dim || edges.dim(0) != static_cast<int>(endpoints.size())) {
    throw ShapeMismatch("message_passing: edge shape " + shape_string(edges.shape()) + " for " +
                        std::to_string(endpoints.size()) + " endpoints");
  }
  const int n = nodes.dim(0);
  std::vector<int> src;
  std::vector<int> dst;
  std::vector<std::vector<int>> incident(static_cast<std::size_t>(n));
  for (std::size_t e = 0; e < endpoints.size(); ++e) {
    const auto [i, j] = endpoints[e];
    if (i < 0 || j < 0 || i >= n || j >= n || i == j) {
      throw InvalidInput("message_passing: bad edge (" + std::to_string(i) + ", " + std::to_string(j) + ")");
    }
    src.push_back(i);
    dst.push_back(j);
    incident[static_cast<std::size_t>(i)].push_back(static_cast<int>(e));
    incident[static_cast<std::size_t>(j)].push_back(static_cast<int>(e));
  }

  Tensor a = nodes;
  Tensor e = edges;
  for (int round = 0; round < config_.message_passing_steps; ++round) {
    e = mlp("edge_upd", concat({e, gather_rows(a, src), gather_rows(a, dst)}));
    a = mlp("node_upd", concat({mean_aggregate(e, incident), a}));
  }
  return e;
}

Tensor TrackingModel::classify(const Tensor& edge_embeddings) const {
  const Tensor logits = mlp("cls", edge_embeddings);
  return sigmoid(reshape(logits, {static_cast<int>(logits.size())}));
}

Tensor TrackingModel::edge_probabilities(const Tensor& nodes, std::span<const EdgeFeature> features,
                                         std::span<const std::pair<int, int>> endpoints) const {
  return classify(message_passing(nodes, encode_edges(features), endpoints));
}

std::vector<double> TrackingModel::predict(std::span<const OccupancyGrid> grids, std::span<const EdgeFeature> features,
                                           std::span<const std::pair<int, int>> endpoints) const {
  if (endpoints.empty()) return {};
  std::vector<Tensor> volumes(grids.size());
  if (!config_.no_geometry) {
    for (std::size_t i = 0; i < grids.size(); ++i) {
      const Tensor v = node_volume(grids[i]);
      volumes[i] = Tensor::constant(v.shape(), std::vector<double>(v.values().begin(), v.values().end()));
    }
  }
  const Tensor p = edge_probabilities(node_embeddings(volumes), features, endpoints);
  return {p.values().begin(), p.values().end()};
}

// ---------------------------------------------------------------------------

void TrainSchedule::validate() const {
  if (shape_epochs < 0 || track_epochs < 0 || joint_epochs < 0) throw InvalidInput("TrainSchedule: negative epochs");
  if (!(learning_rate >= 0.0) || !(l2 >= 0.0)) throw InvalidInput("TrainSchedule: learning_rate and l2 must be >= 0");
  weights.validate();
}

std::string stage_of_epoch(const TrainSchedule& schedule, int epoch) {
  if (epoch < schedule.shape_epochs) return "shape";
  if (epoch < schedule.shape_epochs + schedule.track_epochs) return "track";
  return "joint";
}

void Adam::step(ParamStore& params, double lr, double l2, const std::function<bool(const std::string&)>& trainable) {
  for (auto& [name, tensor] : params.all()) {
    if (!trainable(name) || tensor.grad().empty()) continue;
    Slot& s = slots_[name];
    if (s.m.empty()) {
      s.m.assign(tensor.size(), 0.0);
      s.v.assign(tensor.size(), 0.0);
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(s.t));
    auto w = tensor.mutable_values();
    const auto g = tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + l2 * w[i];
      s.m[i] = beta1 * s.m[i] + (1.0 - beta1) * gi;
      s.v[i] = beta2 * s.v[i] + (1.0 - beta2) * gi * gi;
      w[i] -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps);
    }
  }
}

namespace {

// Builds the loss tape of one graph; undefined when the stage has nothing to fit.
Tensor build_loss(const TrackingModel& model, const GraphSample& g, const std::string& stage, const LossWeights& w) {
  const bool shape_terms = stage == "shape" || stage == "joint";
  const bool track_terms = (stage == "track" || stage == "joint") && !g.endpoints.empty();
  if (g.labels.size() != g.endpoints.size() || g.features.size() != g.endpoints.size()) {
    throw InvalidInput("GraphSample: features, endpoints and labels differ in length");
  }
  if (g.nodes.empty()) return {};

  Tensor loss;
  auto accumulate = [&](const Tensor& t) { loss = loss.defined() ? add(loss, t) : t; };
  const bool refine = model.config().refine_shapes;
  std::vector<Tensor> refined(g.nodes.size());

  if (shape_terms) {
    const double inv = 1.0 / static_cast<double>(g.nodes.size());
    for (std::size_t k = 0; k < g.nodes.size(); ++k) {
      const NodeSample& n = g.nodes[k];
      refined[k] = model.refine_grid(n.grid);
      accumulate(scale(loss_rec(refined[k], n.gt_grid, default_w_occ(n.gt_grid)), w.rec_weight * inv));
      if (n.noc.size() != n.gt_noc.size()) throw InvalidInput("NodeSample: noc and gt_noc differ in length");
      if (n.noc.empty()) continue;
      std::vector<Vec3> pred;
      std::vector<Vec3> target;
      for (const auto i : noc_subset(n.noc.size())) {
        pred.push_back(n.noc[i]);
        target.push_back(n.gt_noc[i]);
      }
      accumulate(scale(loss_noc(model.refine_noc(points_tensor(pred)), target, n.object_class), w.noc_weight * inv));
    }
  }

  if (track_terms) {
    std::vector<Tensor> volumes(g.nodes.size());
    if (!model.config().no_geometry) {
      for (std::size_t k = 0; k < g.nodes.size(); ++k) {
        if (!refine) {
          volumes[k] = model.node_volume(g.nodes[k].grid);
        } else if (stage == "joint") {
          volumes[k] = refined[k];
        } else {
          // Refiner frozen: feed its output as a constant.
          const Tensor r = model.refine_grid(g.nodes[k].grid);
          volumes[k] = Tensor::constant(r.shape(), std::vector<double>(r.values().begin(), r.values().end()));
        }
      }
    }
    const Tensor probs = model.edge_probabilities(model.node_embeddings(volumes), g.features, g.endpoints);
    accumulate(loss_track(probs, g.labels, default_w_act(g.labels)));
  }
  return loss;
}

}  // namespace

double graph_loss(const TrackingModel& model, const GraphSample& sample, const std::string& stage,
                  const LossWeights& weights) {
  const Tensor l = build_loss(model, sample, stage, weights);
  return l.defined() ? l.item() : 0.0;
}

void train(TrackingModel& model, std::span<const GraphSample> data, const TrainSchedule& schedule, TrainState& state,
           const std::function<bool(const EpochRecord&)>& on_epoch) {
  schedule.validate();
  if (data.empty()) throw InvalidInput("train: empty dataset");
  const int total = schedule.total_epochs();
  for (int epoch = state.epochs_done; epoch < total; ++epoch) {
    const std::string stage = stage_of_epoch(schedule, epoch);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(model.config().seed), static_cast<std::uint32_t>(model.config().seed >> 32),
                      static_cast<std::uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    const auto trainable = [&](const std::string& name) {
      if (stage == "shape") return is_refiner(name);
      if (stage == "track") return !is_refiner(name);
      return true;
    };

    double sum = 0.0;
    int count = 0;
    for (const auto gi : order) {
      const Tensor loss = build_loss(model, data[gi], stage, schedule.weights);
      if (!loss.defined()) continue;
      loss.backward();
      state.adam.step(model.params(), schedule.learning_rate, schedule.l2, trainable);
      model.params().zero_grad();
      sum += loss.item();
      ++count;
    }
    EpochRecord rec{epoch, stage, count > 0 ? sum / count : 0.0};
    state.log.push_back(rec);
    state.epochs_done = epoch + 1;
    spdlog::debug("epoch {} ({}): loss {:.6f} over {} graphs", epoch, stage, rec.loss, count);
    if (on_epoch && !on_epoch(rec)) break;
  }
}

// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& path, const TrackingModel& model, const TrainState& state) {
  Json params = Json::object();
  for (const auto& [name, t] : model.params().all()) {
    params[name] = Json{{"shape", t.shape()}, {"data", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  Json slots = Json::object();
  for (const auto& [name, s] : state.adam.slots()) slots[name] = Json{{"t", s.t}, {"m", s.m}, {"v", s.v}};
  Json log = Json::array();
  for (const auto& r : state.log) log.push_back(Json{{"epoch", r.epoch}, {"stage", r.stage}, {"loss", r.loss}});

  const Json j{{"format_version", kCheckpointFormatVersion},
               {"kind", "mot3d-checkpoint"},
               {"config", model.config()},
               {"params", params},
               {"training",
                {{"epochs_done", state.epochs_done},
                 {"log", log},
                 {"adam", {{"beta1", state.adam.beta1}, {"beta2", state.adam.beta2}, {"eps", state.adam.eps}, {"slots", slots}}}}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::pair<TrackingModel, TrainState> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Json j;
  try {
    j = Json::parse(in);
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw FormatError("checkpoint " + path.string() + ": unsupported format_version");
    }
    TrackingModel model(j.at("config").get<GnnConfig>());
    const Json& params = j.at("params");
    if (params.size() != model.params().all().size()) throw FormatError("checkpoint: parameter count mismatch");
    for (auto& [name, t] : model.params().all()) {
      if (!params.contains(name)) throw FormatError("checkpoint: missing parameter '" + name + "'");
      const Json& p = params.at(name);
      if (p.at("shape").get<Shape>() != t.shape()) throw FormatError("checkpoint: shape mismatch for '" + name + "'");
      const auto data = p.at("data").get<std::vector<double>>();
      if (data.size() != t.size()) throw FormatError("checkpoint: size mismatch for '" + name + "'");
      std::copy(data.begin(), data.end(), t.mutable_values().begin());
    }

    TrainState state;
    const Json& tr = j.at("training");
    state.epochs_done = tr.at("epochs_done").get<int>();
    for (const auto& r : tr.at("log")) {
      state.log.push_back({r.at("epoch").get<int>(), r.at("stage").get<std::string>(), r.at("loss").get<double>()});
    }
    const Json& adam = tr.at("adam");
    state.adam.beta1 = adam.at("beta1").get<double>();
    state.adam.beta2 = adam.at("beta2").get<double>();
    state.adam.eps = adam.at("eps").get<double>();
    for (const auto& [name, s] : adam.at("slots").items()) {
      auto& slot = state.adam.slots()[name];
      slot.t = s.at("t").get<long long>();
      slot.m = s.at("m").get<std::vector<double>>();
      slot.v = s.at("v").get<std::vector<double>>();
    }
    return {std::move(model), std::move(state)};
  } catch (const Json::exception& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace mot3d::nn
