#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace lopguard {

/// One LiDAR return in the sensor frame (x forward, y left, z up; meters).
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;
  std::uint64_t frame_id = 0;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

/// Oriented 3D box. `l` runs along the heading `yaw` (rotation about +z from
/// +x). Construct through `make_box` to get validated extents and a
/// normalized yaw.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double l = 1.0, w = 1.0, h = 1.0;
  double yaw = 0.0;

  friend bool operator==(const Box3D&, const Box3D&) = default;
};

/// Throws DomainError unless l, w, h > 0 and all values are finite.
Box3D make_box(double cx, double cy, double cz, double l, double w, double h, double yaw);

/// Counter-clockwise convex quadrilateral in the x-y plane.
struct Footprint2D {
  std::array<Vec2, 4> corners;
  friend bool operator==(const Footprint2D&, const Footprint2D&) = default;
};

Footprint2D footprint(const Box3D& box);

/// Axis-aligned rectangle [x0, x1] x [y0, y1] as a CCW footprint.
Footprint2D rect_footprint(double x0, double y0, double x1, double y1);

/// Shoelace area (positive for CCW input).
double polygon_area(std::span<const Vec2> poly);

/// Sutherland-Hodgman clip of a convex `subject` by a convex CCW `clip`.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

/// Bird's-eye IoU of two footprints. Exactly 1 for identical vertex sets,
/// exactly 0 when the clipped area is below 1e-12 m^2.
double iou_2d(const Footprint2D& a, const Footprint2D& b);

/// Intersection area only (same snapping rule as iou_2d).
double intersection_area(const Footprint2D& a, const Footprint2D& b);

/// Half-open membership: the point, expressed in the box frame, must lie in
/// [-l/2, l/2) x [-w/2, w/2) x [-h/2, h/2).
bool point_in_box(const Point& p, const Box3D& box);

/// Box-frame coordinates of a world point.
std::array<double, 3> to_box_frame(const Point& p, const Box3D& box);
/// World coordinates of a box-frame point.
std::array<double, 3> from_box_frame(double lx, double ly, double lz, const Box3D& box);

double depth(double x, double y, double z);
inline double depth(const Point& p) { return depth(p.x, p.y, p.z); }
inline double box_depth(const Box3D& b) { return depth(b.cx, b.cy, b.cz); }

double volume(const Box3D& box);

std::size_t count_points_in_box(const Box3D& box, const PointCloud& pc);

/// Points inside the box per cubic meter.
double point_density(const Box3D& box, const PointCloud& pc);

}  // namespace lopguard
