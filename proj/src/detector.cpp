#include "lopguard/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <tuple>

#include "json.hpp"
#include "lopguard/errors.hpp"

namespace lopguard {

Box3D fit_box(std::span<const Point> pts, double margin, double yaw_step_deg) {
  if (pts.empty()) throw DomainError("fit_box: no points");
  if (!(yaw_step_deg > 0.0)) throw DomainError("fit_box: yaw step must be positive");
  double best_area = std::numeric_limits<double>::infinity();
  double best_yaw = 0.0;
  std::array<double, 4> best_ext{};  // min u, max u, min v, max v
  const int steps = std::max(1, static_cast<int>(std::ceil(90.0 / yaw_step_deg)));
  for (int s = 0; s < steps; ++s) {
    const double yaw = s * yaw_step_deg * std::numbers::pi / 180.0;
    const double c = std::cos(yaw), sn = std::sin(yaw);
    std::array<double, 4> e{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
                            std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : pts) {
      const double u = c * p.x + sn * p.y, v = -sn * p.x + c * p.y;
      e[0] = std::min(e[0], u);
      e[1] = std::max(e[1], u);
      e[2] = std::min(e[2], v);
      e[3] = std::max(e[3], v);
    }
    const double area = (e[1] - e[0] + 2 * margin) * (e[3] - e[2] + 2 * margin);
    if (area < best_area - 1e-12) {
      best_area = area;
      best_yaw = yaw;
      best_ext = e;
    }
  }
  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (const auto& p : pts) {
    zmin = std::min(zmin, p.z);
    zmax = std::max(zmax, p.z);
  }
  const double c = std::cos(best_yaw), sn = std::sin(best_yaw);
  const double uc = (best_ext[0] + best_ext[1]) / 2, vc = (best_ext[2] + best_ext[3]) / 2;
  double len_u = best_ext[1] - best_ext[0] + 2 * margin;
  double len_v = best_ext[3] - best_ext[2] + 2 * margin;
  double yaw = best_yaw;
  if (len_v > len_u) {
    std::swap(len_u, len_v);
    yaw += std::numbers::pi / 2;
  }
  return make_box(c * uc - sn * vc, sn * uc + c * vc, (zmin + zmax) / 2, len_u, len_v,
                  zmax - zmin + 2 * margin, yaw);
}

std::vector<Detection> detect(const PointCloud& pc, const DetectorConfig& cfg) {
  cfg.grid.validate();
  PointCloud above;
  for (const auto& p : pc.points) {
    if (p.z > cfg.ground_z + cfg.ground_clearance) above.points.push_back(p);
  }
  const Partition part = partition(above, cfg.grid);

  std::set<PillarIndex> unvisited;
  for (const auto& [idx, _] : part.pillars) unvisited.insert(idx);
  std::vector<Detection> out;
  while (!unvisited.empty()) {
    std::vector<PillarIndex> stack{*unvisited.begin()};
    unvisited.erase(unvisited.begin());
    std::vector<Point> members;
    while (!stack.empty()) {
      const PillarIndex cur = stack.back();
      stack.pop_back();
      for (auto k : part.pillars.at(cur)) members.push_back(above.points[k]);
      for (int di = -1; di <= 1; ++di) {
        for (int dj = -1; dj <= 1; ++dj) {
          const auto it = unvisited.find({cur.i + di, cur.j + dj});
          if (it == unvisited.end()) continue;
          stack.push_back(*it);
          unvisited.erase(it);
        }
      }
    }
    if (members.size() < cfg.min_points) continue;
    const Box3D box = fit_box(members, cfg.margin, cfg.yaw_step_deg);
    if (box.l > cfg.max_length || box.w > cfg.max_width) continue;
    const double d = std::max(box_depth(box), 1e-6);
    const double expected = cfg.occlusion_tolerance * cfg.density_constant / (d * d);
    Detection det;
    det.box = box;
    det.category = Category::car;
    det.confidence = std::min(1.0, static_cast<double>(members.size()) / expected);
    out.push_back(det);
  }
  std::ranges::sort(out, [](const Detection& a, const Detection& b) {
    return std::tie(a.box.cx, a.box.cy) < std::tie(b.box.cx, b.box.cy);
  });
  return out;
}

std::string_view to_string(TrackState s) {
  switch (s) {
    case TrackState::tentative: return "tentative";
    case TrackState::confirmed: return "confirmed";
    case TrackState::dead: return "dead";
  }
  return "dead";
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(cfg) {
  if (!(cfg_.gate > 0.0)) throw DomainError("gate must be positive");
  if (cfg_.confirm_hits < 1 || cfg_.max_misses < 1) throw DomainError("lifecycle constants must be >= 1");
}

void Tracker::step(std::span<const Detection> dets) {
  ++frame_;
  struct Pair {
    double dist;
    std::uint64_t track_id;
    std::size_t track_pos;
    std::size_t det;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < tracks_.size(); ++t) {
    if (tracks_[t].state == TrackState::dead) continue;
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const double dist = std::hypot(tracks_[t].box.cx - dets[d].box.cx, tracks_[t].box.cy - dets[d].box.cy);
      if (dist <= cfg_.gate) pairs.push_back({dist, tracks_[t].id, t, d});
    }
  }
  std::ranges::sort(pairs, [](const Pair& a, const Pair& b) {
    return std::tie(a.dist, a.track_id, a.det) < std::tie(b.dist, b.track_id, b.det);
  });
  std::vector<char> track_used(tracks_.size(), 0), det_used(dets.size(), 0);
  for (const auto& p : pairs) {
    if (track_used[p.track_pos] || det_used[p.det]) continue;
    track_used[p.track_pos] = det_used[p.det] = 1;
    Track& tr = tracks_[p.track_pos];
    tr.box = dets[p.det].box;
    ++tr.hit_streak;
    tr.miss_streak = 0;
    if (tr.state == TrackState::tentative && tr.hit_streak >= cfg_.confirm_hits) tr.state = TrackState::confirmed;
  }
  const std::size_t existing = tracks_.size();
  for (std::size_t t = 0; t < existing; ++t) {
    Track& tr = tracks_[t];
    if (tr.state == TrackState::dead || track_used[t]) continue;
    tr.hit_streak = 0;
    ++tr.miss_streak;
    if (tr.miss_streak >= cfg_.max_misses) tr.state = TrackState::dead;
  }
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (det_used[d]) continue;
    Track tr;
    tr.id = next_id_++;
    tr.box = dets[d].box;
    tr.hit_streak = 1;
    tr.state = cfg_.confirm_hits <= 1 ? TrackState::confirmed : TrackState::tentative;
    tracks_.push_back(tr);
  }
}

std::string Tracker::timeline_lines() const {
  std::string out;
  for (const auto& t : tracks_) {
    nlohmann::json j{{"frame", frame_},
                     {"track_id", t.id},
                     {"state", to_string(t.state)},
                     {"hit_streak", t.hit_streak},
                     {"miss_streak", t.miss_streak},
                     {"box", {{"cx", t.box.cx}, {"cy", t.box.cy}, {"cz", t.box.cz}, {"l", t.box.l}, {"w", t.box.w},
                              {"h", t.box.h}, {"yaw", t.box.yaw}}}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace lopguard
