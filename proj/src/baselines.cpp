#include "lopguard/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "lopguard/errors.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

PointCloud srs(const PointCloud& pc, std::size_t m, Rng& rng) {
  const std::size_t n = pc.points.size();
  if (m >= n) return pc;
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t k = 0; k < m; ++k) std::swap(idx[k], idx[k + rng.below(n - k)]);
  idx.resize(m);
  std::ranges::sort(idx);
  PointCloud out;
  out.frame_id = pc.frame_id;
  out.points.reserve(m);
  for (auto k : idx) out.points.push_back(pc.points[k]);
  return out;
}

std::vector<double> knn_mean_distances(std::span<const Point> pts, int k) {
  if (k < 1) throw DomainError("k must be >= 1");
  const std::size_t n = pts.size();
  if (n <= static_cast<std::size_t>(k)) throw SizeError("need more than k points");

  // Sweep over x-sorted order; stop expanding once |dx| exceeds the current
  // k-th best distance. Exact, and much cheaper than all pairs on LiDAR data.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::sort(order, [&](std::size_t a, std::size_t b) {
    return pts[a].x != pts[b].x ? pts[a].x < pts[b].x : a < b;
  });
  std::vector<std::size_t> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = r;

  std::vector<double> out(n);
  std::priority_queue<double> best;  // squared distances, max on top
  for (std::size_t i = 0; i < n; ++i) {
    const Point& p = pts[i];
    best = {};
    auto consider = [&](std::size_t j) {
      const double dx = pts[j].x - p.x, dy = pts[j].y - p.y, dz = pts[j].z - p.z;
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (best.size() < static_cast<std::size_t>(k)) {
        best.push(d2);
      } else if (d2 < best.top()) {
        best.pop();
        best.push(d2);
      }
    };
    auto full_and_far = [&](std::size_t j) {
      if (best.size() < static_cast<std::size_t>(k)) return false;
      const double dx = pts[j].x - p.x;
      return dx * dx > best.top();
    };
    const std::size_t r = rank[i];
    std::size_t lo = r, hi = r + 1;
    bool left = lo > 0, right = hi < n;
    while (left || right) {
      if (left) {
        const std::size_t j = order[lo - 1];
        if (full_and_far(j)) {
          left = false;
        } else {
          consider(j);
          left = --lo > 0;
        }
      }
      if (right) {
        const std::size_t j = order[hi];
        if (full_and_far(j)) {
          right = false;
        } else {
          consider(j);
          right = ++hi < n;
        }
      }
    }
    std::vector<double> d;
    d.reserve(best.size());
    while (!best.empty()) {
      d.push_back(std::sqrt(best.top()));
      best.pop();
    }
    std::ranges::sort(d);
    double s = 0.0;
    for (double v : d) s += v;
    out[i] = s / static_cast<double>(k);
  }
  return out;
}

PointCloud sor(const PointCloud& pc, int k, double alpha) {
  if (!(alpha >= 0.0)) throw DomainError("alpha must be non-negative");
  const auto d = knn_mean_distances(pc.points, k);
  const double n = static_cast<double>(d.size());
  double mu = 0.0;
  for (double v : d) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : d) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / n);
  // Rounding slack so equal distances stay inside a zero-width band.
  const double half = alpha * sigma + 1e-12 * mu;
  PointCloud out;
  out.frame_id = pc.frame_id;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] >= mu - half && d[i] <= mu + half) out.points.push_back(pc.points[i]);
  }
  return out;
}

CarloVerdict carlo_fsd(const Detection& det, const PointCloud& pc, double cell, double r_thresh) {
  if (!(cell > 0.0)) throw DomainError("cell must be positive");
  const Box3D& b = det.box;
  auto cells = [&](double extent) { return std::max(1, static_cast<int>(std::ceil(extent / cell - 1e-9))); };
  const int nl = cells(b.l), nw = cells(b.w), nh = cells(b.h);
  std::vector<char> occupied(static_cast<std::size_t>(nl) * nw * nh, 0);
  for (const auto& p : pc.points) {
    if (!point_in_box(p, b)) continue;
    const auto q = to_box_frame(p, b);
    const int a = std::clamp(static_cast<int>(std::floor((q[0] + b.l / 2) / cell)), 0, nl - 1);
    const int c = std::clamp(static_cast<int>(std::floor((q[1] + b.w / 2) / cell)), 0, nw - 1);
    const int e = std::clamp(static_cast<int>(std::floor((q[2] + b.h / 2) / cell)), 0, nh - 1);
    occupied[(static_cast<std::size_t>(a) * nw + c) * nh + e] = 1;
  }
  const auto free_cells = std::ranges::count(occupied, 0);
  CarloVerdict v;
  v.ratio = static_cast<double>(free_cells) / static_cast<double>(occupied.size());
  v.flagged = v.ratio > r_thresh;
  return v;
}

namespace {

double segment_distance(Vec2 a, Vec2 b) {
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  double t = len2 > 0.0 ? -(a.x * ex + a.y * ey) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(a.x + t * ex, a.y + t * ey);
}

bool origin_inside(const Footprint2D& f) {
  for (int k = 0; k < 4; ++k) {
    const Vec2 a = f.corners[k], b = f.corners[(k + 1) % 4];
    if ((b.x - a.x) * (0.0 - a.y) - (b.y - a.y) * (0.0 - a.x) < 0.0) return false;
  }
  return true;
}

}  // namespace

CarloVerdict carlo_lpd(const Detection& det, const PointCloud& pc, double r_thresh) {
  const Footprint2D fp = footprint(det.box);
  if (origin_inside(fp)) throw GeometryError("sensor origin inside the detection footprint");
  const double center = std::atan2(det.box.cy, det.box.cx);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  double r_near = std::numeric_limits<double>::infinity(), r_far = 0.0;
  for (int k = 0; k < 4; ++k) {
    const Vec2 c = fp.corners[k];
    const double rel = normalize_angle(std::atan2(c.y, c.x) - center);
    lo = std::min(lo, rel);
    hi = std::max(hi, rel);
    r_far = std::max(r_far, std::hypot(c.x, c.y));
    r_near = std::min(r_near, segment_distance(c, fp.corners[(k + 1) % 4]));
  }
  std::size_t up = 0, in = 0, down = 0;
  for (const auto& p : pc.points) {
    const double rho = std::hypot(p.x, p.y);
    if (rho == 0.0) continue;
    const double rel = normalize_angle(std::atan2(p.y, p.x) - center);
    if (rel < lo || rel > hi) continue;
    if (point_in_box(p, det.box)) {
      ++in;
    } else if (rho < r_near) {
      ++up;
    } else if (rho > r_far) {
      ++down;
    }
  }
  CarloVerdict v;
  const std::size_t total = up + in + down;
  v.ratio = total == 0 ? 0.0 : static_cast<double>(down) / static_cast<double>(total);
  v.flagged = v.ratio > r_thresh;
  return v;
}

std::vector<CarloVerdict> carlo_verdicts(std::span<const Detection> dets, const PointCloud& pc,
                                         const CarloConfig& cfg) {
  std::vector<CarloVerdict> out(dets.size());
  parallel_for(dets.size(), cfg.threads, [&](std::size_t k) {
    out[k] = cfg.mode == CarloMode::fsd ? carlo_fsd(dets[k], pc, cfg.cell, cfg.r_thresh)
                                        : carlo_lpd(dets[k], pc, cfg.r_thresh);
    out[k].detection_index = k;
  });
  return out;
}

std::vector<Detection> carlo_filter(std::span<const Detection> dets, const PointCloud& pc, const CarloConfig& cfg) {
  const auto verdicts = carlo_verdicts(dets, pc, cfg);
  std::vector<Detection> kept;
  for (const auto& v : verdicts) {
    if (!v.flagged) kept.push_back(dets[v.detection_index]);
  }
  return kept;
}

}  // namespace lopguard
