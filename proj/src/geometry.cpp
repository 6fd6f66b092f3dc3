#include "lopguard/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lopguard/errors.hpp"

namespace lopguard {

namespace {

constexpr double kAreaSnap = 1e-12;

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 line_intersection(const Vec2& p, const Vec2& q, const Vec2& a, const Vec2& b) {
  // Segment p->q against the infinite line a->b.
  const double d1 = cross(a, b, p);
  const double d2 = cross(a, b, q);
  const double t = d1 / (d1 - d2);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

bool same_vertex_set(const Footprint2D& a, const Footprint2D& b) {
  auto key = [](const Vec2& v) { return std::pair{v.x, v.y}; };
  std::array<std::pair<double, double>, 4> ka, kb;
  std::ranges::transform(a.corners, ka.begin(), key);
  std::ranges::transform(b.corners, kb.begin(), key);
  std::ranges::sort(ka);
  std::ranges::sort(kb);
  return ka == kb;
}

}  // namespace

double normalize_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a > std::numbers::pi) a -= two_pi;
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

Box3D make_box(double cx, double cy, double cz, double l, double w, double h, double yaw) {
  for (double v : {cx, cy, cz, l, w, h, yaw}) {
    if (!std::isfinite(v)) throw DomainError("box: non-finite value");
  }
  if (!(l > 0.0 && w > 0.0 && h > 0.0)) throw DomainError("box: extents must be positive");
  return Box3D{cx, cy, cz, l, w, h, normalize_angle(yaw)};
}

Footprint2D footprint(const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = box.l / 2.0;
  const double hw = box.w / 2.0;
  // CCW starting from the front-right corner.
  const std::array<std::pair<double, double>, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  Footprint2D fp;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto [lx, ly] = local[i];
    fp.corners[i] = {box.cx + c * lx - s * ly, box.cy + s * lx + c * ly};
  }
  return fp;
}

Footprint2D rect_footprint(double x0, double y0, double x1, double y1) {
  return Footprint2D{{Vec2{x0, y0}, Vec2{x1, y0}, Vec2{x1, y1}, Vec2{x0, y1}}};
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  std::vector<Vec2> in;
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    in.swap(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2& cur = in[i];
      const Vec2& prev = in[(i + in.size() - 1) % in.size()];
      const bool cur_in = cross(a, b, cur) >= 0.0;
      const bool prev_in = cross(a, b, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) out.push_back(line_intersection(prev, cur, a, b));
        out.push_back(cur);
      } else if (prev_in) {
        out.push_back(line_intersection(prev, cur, a, b));
      }
    }
  }
  return out;
}

double intersection_area(const Footprint2D& a, const Footprint2D& b) {
  const auto poly = clip_convex(a.corners, b.corners);
  const double area = polygon_area(poly);
  return area < kAreaSnap ? 0.0 : area;
}

double iou_2d(const Footprint2D& a, const Footprint2D& b) {
  if (same_vertex_set(a, b)) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = polygon_area(a.corners) + polygon_area(b.corners) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

std::array<double, 3> to_box_frame(const Point& p, const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double dx = p.x - box.cx;
  const double dy = p.y - box.cy;
  return {c * dx + s * dy, -s * dx + c * dy, p.z - box.cz};
}

std::array<double, 3> from_box_frame(double lx, double ly, double lz, const Box3D& box) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  return {box.cx + c * lx - s * ly, box.cy + s * lx + c * ly, box.cz + lz};
}

bool point_in_box(const Point& p, const Box3D& box) {
  const auto [lx, ly, lz] = to_box_frame(p, box);
  const double hl = box.l / 2.0, hw = box.w / 2.0, hh = box.h / 2.0;
  return lx >= -hl && lx < hl && ly >= -hw && ly < hw && lz >= -hh && lz < hh;
}

double depth(double x, double y, double z) { return std::sqrt(x * x + y * y + z * z); }

double volume(const Box3D& box) { return box.l * box.w * box.h; }

std::size_t count_points_in_box(const Box3D& box, const PointCloud& pc) {
  return static_cast<std::size_t>(
      std::ranges::count_if(pc.points, [&](const Point& p) { return point_in_box(p, box); }));
}

double point_density(const Box3D& box, const PointCloud& pc) {
  return static_cast<double>(count_points_in_box(box, pc)) / volume(box);
}

}  // namespace lopguard
