#include "lopguard/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "json.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/featurize.hpp"
#include "lopguard/json_codec.hpp"

namespace lopguard {

using nlohmann::json;

std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::physical: return "physical";
    case AttackKind::random_inject: return "random_inject";
    case AttackKind::adaptive: return "adaptive";
  }
  return "physical";
}

AttackKind attack_kind_from_string(std::string_view s) {
  if (s == "physical") return AttackKind::physical;
  if (s == "random_inject") return AttackKind::random_inject;
  if (s == "adaptive") return AttackKind::adaptive;
  throw ValueError("unknown attack kind: " + std::string(s));
}

namespace {

// Keeps a box-frame coordinate inside the half-open extent [-half, half).
double inside(double v, double half) { return std::clamp(v, -half, std::nextafter(half, 0.0)); }

Point project_into(const Point& p, const Box3D& box) {
  const auto q = to_box_frame(p, box);
  const auto w = from_box_frame(inside(q[0], box.l / 2), inside(q[1], box.w / 2), inside(q[2], box.h / 2), box);
  Point out{w[0], w[1], w[2], p.intensity};
  if (!point_in_box(out, box)) {
    // Rounding in the round trip; pull toward the center.
    const auto r = to_box_frame(out, box);
    const double s = 1.0 - 1e-9;
    const auto v = from_box_frame(r[0] * s, r[1] * s, r[2] * s, box);
    out = {v[0], v[1], v[2], p.intensity};
  }
  return out;
}

Scene append(const Scene& scene, std::span<const Point> pts) {
  Scene out = scene;
  out.cloud.points.insert(out.cloud.points.end(), pts.begin(), pts.end());
  out.detections.reset();
  return out;
}

}  // namespace

DonorLibrary build_donor_library(std::span<const Scene> scenes, std::size_t max_points, std::size_t min_points) {
  DonorLibrary lib;
  for (const auto& s : scenes) {
    for (const auto& g : s.ground_truth) {
      if (g.category != Category::car) continue;
      std::vector<Point> local;
      for (const auto& p : s.cloud.points) {
        if (!point_in_box(p, g.box)) continue;
        const auto q = to_box_frame(p, g.box);
        local.push_back({q[0], q[1], q[2], p.intensity});
        if (local.size() > max_points) break;
      }
      if (local.size() < std::max<std::size_t>(min_points, 1) || local.size() > max_points) continue;
      lib.entries.push_back({std::move(local), g.box.l, g.box.w, g.box.h, s.frame_id()});
    }
  }
  if (lib.entries.empty()) throw EmptyLibraryError("no ground-truth car within the donor point budget");
  return lib;
}

Box3D sample_attack_pose(const Scene& scene, double l, double w, double h, Rng& rng, const PlacementConfig& cfg) {
  if (!(cfg.min_distance >= 0.0 && cfg.max_distance >= cfg.min_distance)) {
    throw DomainError("bad placement distance band");
  }
  const double reach = cfg.max_distance + l + w + cfg.clearance + 1.0;
  std::vector<Point> blockers;
  for (const auto& p : scene.cloud.points) {
    if (p.z > cfg.ground_z + cfg.ground_clearance && std::hypot(p.x, p.y) <= reach) blockers.push_back(p);
  }
  std::set<PillarIndex> occupied;
  if (cfg.isolate_grid) {
    for (const auto& p : scene.cloud.points) {
      if (p.z <= cfg.ground_z + cfg.ground_clearance) continue;
      if (const auto idx = pillar_of(p.x, p.y, *cfg.isolate_grid)) occupied.insert(*idx);
    }
  }
  auto isolated = [&](const Box3D& box) {
    if (!cfg.isolate_grid) return true;
    for (const auto& idx : intersecting_pillars(box, *cfg.isolate_grid, 0.0)) {
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          if (occupied.contains({idx.i + di, idx.j + dj})) return false;
        }
      }
    }
    return true;
  };
  const double max_bearing = cfg.max_bearing_deg * std::numbers::pi / 180.0;
  const double cz = cfg.ground_z + cfg.bottom_gap + h / 2;
  // Strictest test first: isolated and clear, then clear of points, then
  // merely not overlapping a ground-truth box.
  enum class Level { isolated, clear, boxes_only };
  for (const Level level : {Level::isolated, Level::clear, Level::boxes_only}) {
    if (level == Level::isolated && !cfg.isolate_grid) continue;
    for (int attempt = 0; attempt < cfg.max_tries; ++attempt) {
      const double d = rng.uniform(cfg.min_distance, cfg.max_distance);
      const double bearing = rng.uniform(-max_bearing, max_bearing);
      const double yaw = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
      const Box3D box = make_box(d * std::cos(bearing), d * std::sin(bearing), cz, l, w, h, yaw);
      Box3D grown = box;
      if (level != Level::boxes_only) {
        grown.l += 2 * cfg.clearance;
        grown.w += 2 * cfg.clearance;
      }
      grown.h = 1e6;
      const Footprint2D gf = footprint(grown);
      bool free = true;
      for (const auto& g : scene.ground_truth) {
        if (intersection_area(gf, footprint(g.box)) > 0.0) {
          free = false;
          break;
        }
      }
      if (level != Level::boxes_only) {
        for (std::size_t k = 0; free && k < blockers.size(); ++k) {
          if (point_in_box({blockers[k].x, blockers[k].y, grown.cz, 0.0}, grown)) free = false;
        }
      }
      if (free && (level != Level::isolated || isolated(box))) return box;
    }
  }
  throw PlacementError("no free attack pose after " + std::to_string(cfg.max_tries) + " tries");
}

AttackResult physical_attack(const Scene& scene, const DonorLibrary& lib, Rng& rng, const PlacementConfig& cfg) {
  if (lib.entries.empty()) throw EmptyLibraryError("donor library is empty");
  const auto pick = static_cast<std::size_t>(rng.below(lib.entries.size()));
  const DonorEntry& donor = lib.entries[pick];
  if (donor.local_points.size() > kAttackBudget) throw DomainError("donor exceeds the attack budget");
  const Box3D target = sample_attack_pose(scene, donor.l, donor.w, donor.h, rng, cfg);
  AttackTrace t;
  t.kind = AttackKind::physical;
  t.base_frame_id = scene.frame_id();
  t.target_box = target;
  t.donor_index = pick;
  t.injected_points.reserve(donor.local_points.size());
  for (const auto& q : donor.local_points) {
    const auto w = from_box_frame(q.x, q.y, q.z, target);
    t.injected_points.push_back(project_into({w[0], w[1], w[2], q.intensity}, target));
  }
  return {append(scene, t.injected_points), std::move(t)};
}

AttackResult random_inject_attack(const Scene& scene, const Box3D& zone, std::size_t n, Rng& rng) {
  if (n > kAttackBudget) throw DomainError("injection exceeds the attack budget");
  AttackTrace t;
  t.kind = AttackKind::random_inject;
  t.base_frame_id = scene.frame_id();
  t.target_box = zone;
  t.injected_points.reserve(n);
  const double s = 1.0 - 1e-9;
  for (std::size_t k = 0; k < n; ++k) {
    const double lx = rng.uniform(-zone.l / 2, zone.l / 2) * s;
    const double ly = rng.uniform(-zone.w / 2, zone.w / 2) * s;
    const double lz = rng.uniform(-zone.h / 2, zone.h / 2) * s;
    const auto w = from_box_frame(lx, ly, lz, zone);
    t.injected_points.push_back(project_into({w[0], w[1], w[2], rng.uniform()}, zone));
  }
  return {append(scene, t.injected_points), std::move(t)};
}

namespace {

// Objective and gradient of the mean class-1 probability over the occupied
// target pillars with respect to the injected point coordinates.
struct TargetEval {
  double objective = 0.0;
  std::vector<std::array<double, 3>> grad;
};

TargetEval eval_target(std::span<const Point> base, std::span<const Point> injected, std::uint64_t frame_id,
                       const std::vector<PillarIndex>& targets, const LOPModel& model, const VoteConfig& cfg,
                       bool want_grad) {
  PointCloud pc;
  pc.frame_id = frame_id;
  pc.points.assign(base.begin(), base.end());
  pc.points.insert(pc.points.end(), injected.begin(), injected.end());
  const Partition part = partition(pc, cfg.grid);

  TargetEval out;
  out.grad.assign(injected.size(), {0.0, 0.0, 0.0});
  std::size_t used = 0;
  std::vector<Mat> grads;
  std::vector<PillarFeatures> feats;
  for (const auto& idx : targets) {
    const auto it = part.pillars.find(idx);
    if (it == part.pillars.end()) continue;
    feats.push_back(featurize_pillar(pc, it->second, idx, cfg.grid, cfg.m_pc, cfg.seed));
    out.objective += forward(model.network, feats.back()).p1;
    ++used;
  }
  if (used == 0) return out;
  const double inv = 1.0 / static_cast<double>(used);
  out.objective *= inv;
  if (!want_grad) return out;
  for (const auto& f : feats) {
    const Mat g = grad_of_input(model.network, f);
    for (int r = 0; r < f.valid_count(); ++r) {
      const std::size_t src = f.source[static_cast<std::size_t>(r)];
      if (src < base.size()) continue;
      const Point& p = pc.points[src];
      const double dep = depth(p);
      const double gd = dep > 0.0 ? g(r, 6) / dep : 0.0;
      auto& acc = out.grad[src - base.size()];
      acc[0] += inv * (g(r, 0) + g(r, 2) + gd * p.x);
      acc[1] += inv * (g(r, 1) + g(r, 3) + gd * p.y);
      acc[2] += inv * (g(r, 4) + gd * p.z);
    }
  }
  return out;
}

std::vector<Point> points_near(const PointCloud& pc, const std::vector<PillarIndex>& targets, const GridSpec& spec) {
  const Partition part = partition(pc, spec);
  std::vector<std::size_t> idx;
  for (const auto& t : targets) {
    if (auto it = part.pillars.find(t); it != part.pillars.end()) idx.insert(idx.end(), it->second.begin(), it->second.end());
  }
  std::ranges::sort(idx);
  std::vector<Point> out;
  out.reserve(idx.size());
  for (auto k : idx) out.push_back(pc.points[k]);
  return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double target_objectness(const PointCloud& pc, const Box3D& zone, const LOPModel& model, const VoteConfig& cfg) {
  const auto targets = intersecting_pillars(zone, cfg.grid, cfg.beta);
  return eval_target(pc.points, {}, pc.frame_id, targets, model, cfg, false).objective;
}

AttackResult adaptive_attack(const Scene& scene, const LOPModel& model, const Box3D& zone, const AdaptiveConfig& cfg,
                             Rng& rng) {
  if (cfg.steps < 0) throw DomainError("steps must be >= 0");
  if (!(cfg.step_size >= 0.0)) throw DomainError("step_size must be non-negative");
  AttackResult res = random_inject_attack(scene, zone, cfg.n, rng);
  res.trace.kind = AttackKind::adaptive;
  auto& pts = res.trace.injected_points;
  if (cfg.steps > 0 && !pts.empty()) {
    const auto targets = intersecting_pillars(zone, cfg.vote.grid, cfg.vote.beta);
    const auto base = points_near(scene.cloud, targets, cfg.vote.grid);
    for (int step = 0; step < cfg.steps; ++step) {
      const auto ev = eval_target(base, pts, scene.frame_id(), targets, model, cfg.vote, true);
      for (std::size_t k = 0; k < pts.size(); ++k) {
        Point p = pts[k];
        p.x += cfg.step_size * sign(ev.grad[k][0]);
        p.y += cfg.step_size * sign(ev.grad[k][1]);
        p.z += cfg.step_size * sign(ev.grad[k][2]);
        pts[k] = project_into(p, zone);
      }
    }
  }
  res.scene = append(scene, pts);
  return res;
}

std::string trace_to_json(const AttackTrace& t) {
  json pts = json::array();
  for (const auto& p : t.injected_points) pts.push_back(json::array({p.x, p.y, p.z, p.intensity}));
  json j{{"kind", std::string(to_string(t.kind))},
         {"base_frame_id", t.base_frame_id},
         {"target_box", jsonc::box_to_json(t.target_box)},
         {"injected_points", std::move(pts)}};
  if (t.donor_index) j["donor_index"] = *t.donor_index;
  return j.dump(2);
}

AttackTrace trace_from_json(std::string_view text) {
  const json doc = jsonc::parse_document(text);
  AttackTrace t;
  const auto& kind = jsonc::require(doc, "kind", "");
  if (!kind.is_string()) throw SchemaError("kind", "expected string");
  try {
    t.kind = attack_kind_from_string(kind.get<std::string>());
  } catch (const ValueError& e) {
    throw SchemaError("kind", e.what());
  }
  const auto& fid = jsonc::require(doc, "base_frame_id", "");
  if (!fid.is_number_unsigned() && !(fid.is_number_integer() && fid.get<std::int64_t>() >= 0)) {
    throw SchemaError("base_frame_id", "expected non-negative integer");
  }
  t.base_frame_id = fid.get<std::uint64_t>();
  t.target_box = jsonc::box_from_json(jsonc::require(doc, "target_box", ""), "target_box");
  const auto& pts = jsonc::require(doc, "injected_points", "");
  if (!pts.is_array()) throw SchemaError("injected_points", "expected array");
  if (pts.size() > kAttackBudget) throw SchemaError("injected_points", "exceeds the attack budget");
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string path = "injected_points[" + std::to_string(i) + "]";
    if (!pts[i].is_array() || pts[i].size() != 4) throw SchemaError(path, "expected [x,y,z,intensity]");
    t.injected_points.push_back({jsonc::number(pts[i][0], path), jsonc::number(pts[i][1], path),
                                 jsonc::number(pts[i][2], path), jsonc::number(pts[i][3], path)});
  }
  if (auto it = doc.find("donor_index"); it != doc.end()) t.donor_index = it->get<std::size_t>();
  return t;
}

}  // namespace lopguard
