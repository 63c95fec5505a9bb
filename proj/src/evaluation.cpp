#include "mot3d/evaluation.hpp"

#include "mot3d/errors.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace mot3d::eval {

std::vector<int> hungarian(std::span<const double> cost, int rows, int cols) {
  if (rows < 0 || cols < 0 || cost.size() != static_cast<std::size_t>(rows) * cols) {
    throw InvalidInput("hungarian: cost size does not match rows x cols");
  }
  if (rows == 0) return {};
  if (cols == 0) return std::vector<int>(rows, -1);
  const bool transpose = rows > cols;
  const int n = transpose ? cols : rows;
  const int m = transpose ? rows : cols;
  auto a = [&](int i, int j) { return transpose ? cost[j * cols + i] : cost[i * cols + j]; };

  // Shortest augmenting path with potentials, 1-based.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(rows, -1);
  for (int j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transpose) {
      out[j - 1] = p[j] - 1;
    } else {
      out[p[j] - 1] = j - 1;
    }
  }
  return out;
}

Counts& Counts::operator+=(const Counts& o) {
  misses += o.misses;
  false_positives += o.false_positives;
  mismatches += o.mismatches;
  gt += o.gt;
  matches += o.matches;
  return *this;
}

FrameResult match_frame(std::span<const PredPoint> preds, std::span<const GtPoint> gts, MatchState& state,
                        double radius) {
  if (!(radius > 0.0)) throw InvalidInput("match_frame: radius must be > 0");
  FrameResult r;
  const int ng = static_cast<int>(gts.size());
  const int np = static_cast<int>(preds.size());
  std::vector<int> gt_to_pred(ng, -1);
  std::vector<bool> pred_used(np, false);
  auto dist = [&](int g, int p) { return (gts[g].center - preds[p].center).norm(); };

  for (int g = 0; g < ng; ++g) {
    const auto it = state.previous.find(gts[g].instance);
    if (it == state.previous.end()) continue;
    for (int p = 0; p < np; ++p) {
      if (!pred_used[p] && preds[p].track == it->second && dist(g, p) < radius) {
        gt_to_pred[g] = p;
        pred_used[p] = true;
        break;
      }
    }
  }

  std::vector<int> free_g, free_p;
  for (int g = 0; g < ng; ++g)
    if (gt_to_pred[g] < 0) free_g.push_back(g);
  for (int p = 0; p < np; ++p)
    if (!pred_used[p]) free_p.push_back(p);
  if (!free_g.empty() && !free_p.empty()) {
    // Pairs outside the radius cost more than any set of feasible pairs, so
    // the assignment maximises the match count first.
    const double big = 1e6;
    std::vector<double> cost(free_g.size() * free_p.size());
    for (std::size_t i = 0; i < free_g.size(); ++i)
      for (std::size_t j = 0; j < free_p.size(); ++j) {
        const double d = dist(free_g[i], free_p[j]);
        cost[i * free_p.size() + j] = d < radius ? d : big;
      }
    const auto assign = hungarian(cost, static_cast<int>(free_g.size()), static_cast<int>(free_p.size()));
    for (std::size_t i = 0; i < free_g.size(); ++i) {
      const int j = assign[i];
      if (j < 0 || cost[i * free_p.size() + j] >= big) continue;
      gt_to_pred[free_g[i]] = free_p[j];
      pred_used[free_p[j]] = true;
    }
  }

  state.previous.clear();
  for (int g = 0; g < ng; ++g) {
    auto& pc = r.per_class[gts[g].object_class];
    ++r.counts.gt;
    ++pc.gt;
    const int p = gt_to_pred[g];
    if (p < 0) {
      ++r.counts.misses;
      ++pc.misses;
      continue;
    }
    ++r.counts.matches;
    ++pc.matches;
    r.pairs.emplace_back(g, p);
    const int inst = gts[g].instance;
    const auto last = state.last.find(inst);
    if (last != state.last.end() && last->second != preds[p].track) {
      ++r.counts.mismatches;
      ++pc.mismatches;
    }
    state.last[inst] = preds[p].track;
    state.previous[inst] = preds[p].track;
  }
  for (int p = 0; p < np; ++p) {
    if (pred_used[p]) continue;
    ++r.counts.false_positives;
    ++r.per_class[preds[p].object_class].false_positives;
  }
  return r;
}

double mota(long misses, long false_positives, long mismatches, long gt_count) {
  if (gt_count <= 0) throw UndefinedMetric("MOTA is undefined without ground-truth objects");
  return 1.0 - static_cast<double>(misses + false_positives + mismatches) / static_cast<double>(gt_count);
}

double mota(const Counts& c) { return mota(c.misses, c.false_positives, c.mismatches, c.gt); }

Prf prf(long matches, long misses, long false_positives) {
  Prf r;
  const long pd = matches + false_positives;
  const long rd = matches + misses;
  if (pd > 0) {
    r.precision = static_cast<double>(matches) / pd;
  } else {
    r.precision_undefined = true;
  }
  if (rd > 0) {
    r.recall = static_cast<double>(matches) / rd;
  } else {
    r.recall_undefined = true;
  }
  if (r.precision + r.recall > 0.0) {
    r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  } else {
    r.f1_undefined = r.precision_undefined || r.recall_undefined;
  }
  return r;
}

GridIouReport grid_iou_report(std::span<const GridPair> pairs) {
  GridIouReport r;
  if (pairs.empty()) return r;
  std::map<ObjectClass, double> sums;
  double total = 0.0;
  for (const auto& p : pairs) {
    const double iou = iou3d_grids(p.predicted, p.ground_truth);
    sums[p.object_class] += iou;
    ++r.per_class_count[p.object_class];
    total += iou;
  }
  for (const auto& [c, s] : sums) r.per_class[c] = s / static_cast<double>(r.per_class_count[c]);
  r.overall = total / static_cast<double>(pairs.size());
  return r;
}

std::vector<std::vector<PredPoint>> predictions_by_frame(std::span<const Tracklet> tracklets, int frames) {
  std::vector<std::vector<PredPoint>> out(frames);
  for (const auto& t : tracklets) {
    for (const auto& e : t.entries) {
      if (e.frame < 0 || e.frame >= frames) throw InvalidInput("predictions_by_frame: tracklet entry outside the sequence");
      out[e.frame].push_back({t.instance_id, e.center, t.object_class});
    }
  }
  return out;
}

SequenceResult evaluate_sequence(const std::string& id, std::span<const std::vector<PredPoint>> preds,
                                 std::span<const std::vector<GtPoint>> gts, double radius) {
  if (preds.size() != gts.size()) {
    throw InvalidInput("evaluate_sequence: " + id + " has " + std::to_string(preds.size()) + " predicted frames and " +
                       std::to_string(gts.size()) + " GT frames");
  }
  SequenceResult r;
  r.id = id;
  MatchState state;
  for (std::size_t f = 0; f < gts.size(); ++f) {
    const auto fr = match_frame(preds[f], gts[f], state, radius);
    r.counts += fr.counts;
    for (const auto& [c, n] : fr.per_class) r.per_class[c] += n;
    auto& m = r.matches.emplace_back();
    for (const auto& [g, p] : fr.pairs) m.emplace_back(gts[f][g].instance, preds[f][p].track);
  }
  return r;
}

TrackReport make_report(std::vector<SequenceResult> sequences, GridIouReport grid_iou) {
  TrackReport r;
  for (const auto& s : sequences) {
    r.counts += s.counts;
    for (const auto& [c, n] : s.per_class) r.per_class[c] += n;
  }
  if (r.counts.gt > 0) r.mota = mota(r.counts);
  r.prf = prf(r.counts.matches, r.counts.misses, r.counts.false_positives);
  r.grid_iou = std::move(grid_iou);
  r.sequences = std::move(sequences);
  return r;
}

namespace {

Json counts_json(const Counts& c) {
  Json j{{"misses", c.misses}, {"false_positives", c.false_positives}, {"mismatches", c.mismatches},
         {"gt", c.gt},         {"matches", c.matches}};
  j["mota"] = c.gt > 0 ? Json(mota(c)) : Json(nullptr);
  const Prf p = prf(c.matches, c.misses, c.false_positives);
  j["precision"] = p.precision;
  j["recall"] = p.recall;
  j["f1"] = p.f1;
  return j;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Row {
  std::string name;
  Counts c;
};

std::vector<Row> rows_of(const TrackReport& r) {
  std::vector<Row> rows;
  for (const auto& s : r.sequences) rows.push_back({s.id, s.counts});
  rows.push_back({"total", r.counts});
  return rows;
}

}  // namespace

Json report_to_json(const TrackReport& r) {
  Json j;
  j["format_version"] = 1;
  j["kind"] = "mot3d-report";
  j["total"] = counts_json(r.counts);
  j["total"]["precision_undefined"] = r.prf.precision_undefined;
  j["total"]["recall_undefined"] = r.prf.recall_undefined;
  Json pc = Json::object();
  for (const auto& [c, n] : r.per_class) pc[std::string(class_name(c))] = counts_json(n);
  j["per_class"] = pc;
  Json g = Json::object();
  g["overall"] = r.grid_iou.overall ? Json(*r.grid_iou.overall) : Json(nullptr);
  Json gc = Json::object();
  for (const auto& [c, v] : r.grid_iou.per_class) {
    gc[std::string(class_name(c))] = Json{{"mean_iou", v}, {"pairs", r.grid_iou.per_class_count.at(c)}};
  }
  g["per_class"] = gc;
  j["grid_iou"] = g;
  Json seqs = Json::array();
  for (const auto& s : r.sequences) {
    Json sj = counts_json(s.counts);
    sj["id"] = s.id;
    seqs.push_back(sj);
  }
  j["sequences"] = seqs;
  return j;
}

std::string report_table(const TrackReport& r) {
  const auto rows = rows_of(r);
  std::size_t w = 8;
  for (const auto& row : rows) w = std::max(w, row.name.size());
  char line[512];
  std::ostringstream os;
  std::snprintf(line, sizeof line, "%-*s %8s %8s %6s %7s %9s %7s %7s\n", static_cast<int>(w), "sequence", "m", "fp",
                "mme", "F1", "Precision", "Recall", "MOTA%");
  os << line;
  for (const auto& row : rows) {
    const Prf p = prf(row.c.matches, row.c.misses, row.c.false_positives);
    const std::string m = row.c.gt > 0 ? fixed(100.0 * mota(row.c), 1) : "n/a";
    std::snprintf(line, sizeof line, "%-*s %8ld %8ld %6ld %7s %9s %7s %7s\n", static_cast<int>(w), row.name.c_str(),
                  row.c.misses, row.c.false_positives, row.c.mismatches, fixed(p.f1, 3).c_str(),
                  fixed(p.precision, 3).c_str(), fixed(p.recall, 3).c_str(), m.c_str());
    os << line;
  }
  return os.str();
}

std::string report_csv(const TrackReport& r) {
  std::ostringstream os;
  os << "sequence,misses,false_positives,mismatches,gt,matches,f1,precision,recall,mota\n";
  for (const auto& row : rows_of(r)) {
    const Prf p = prf(row.c.matches, row.c.misses, row.c.false_positives);
    os << row.name << ',' << row.c.misses << ',' << row.c.false_positives << ',' << row.c.mismatches << ',' << row.c.gt
       << ',' << row.c.matches << ',' << fixed(p.f1, 6) << ',' << fixed(p.precision, 6) << ',' << fixed(p.recall, 6)
       << ',' << (row.c.gt > 0 ? fixed(mota(row.c), 6) : std::string()) << '\n';
  }
  return os.str();
}

}  // namespace mot3d::eval
