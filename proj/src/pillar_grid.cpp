#include "lopguard/pillar_grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lopguard/errors.hpp"

namespace lopguard {

void GridSpec::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min)) throw DomainError("grid: empty range");
  if (!(cell > 0.0)) throw DomainError("grid: cell must be positive");
}

int GridSpec::nx() const { return static_cast<int>(std::ceil((x_max - x_min) / cell)); }
int GridSpec::ny() const { return static_cast<int>(std::ceil((y_max - y_min) / cell)); }

Partition partition(const PointCloud& pc, const GridSpec& spec) {
  spec.validate();
  Partition out;
  for (std::size_t k = 0; k < pc.points.size(); ++k) {
    const Point& p = pc.points[k];
    if (const auto idx = pillar_of(p.x, p.y, spec)) {
      out.pillars[*idx].push_back(k);
    } else {
      ++out.dropped;
    }
  }
  return out;
}

std::optional<PillarIndex> pillar_of(double x, double y, const GridSpec& spec) {
  if (!(x >= spec.x_min && x < spec.x_max && y >= spec.y_min && y < spec.y_max)) return std::nullopt;
  const int i = std::min(static_cast<int>(std::floor((x - spec.x_min) / spec.cell)), spec.nx() - 1);
  const int j = std::min(static_cast<int>(std::floor((y - spec.y_min) / spec.cell)), spec.ny() - 1);
  return PillarIndex{i, j};
}

Footprint2D pillar_footprint(const PillarIndex& idx, const GridSpec& spec) {
  if (idx.i < 0 || idx.j < 0 || idx.i >= spec.nx() || idx.j >= spec.ny()) {
    throw IndexError("pillar (" + std::to_string(idx.i) + ", " + std::to_string(idx.j) +
                     ") outside grid");
  }
  const double x0 = spec.x_min + idx.i * spec.cell;
  const double y0 = spec.y_min + idx.j * spec.cell;
  return rect_footprint(x0, y0, x0 + spec.cell, y0 + spec.cell);
}

Vec2 pillar_center(const PillarIndex& idx, const GridSpec& spec) {
  return {spec.x_min + (idx.i + 0.5) * spec.cell, spec.y_min + (idx.j + 0.5) * spec.cell};
}

std::vector<PillarIndex> intersecting_pillars(const Box3D& box, const GridSpec& spec, double beta) {
  spec.validate();
  if (beta < 0.0) throw DomainError("beta must be non-negative");
  const Footprint2D fp = footprint(box);
  double lo_x = fp.corners[0].x, hi_x = lo_x, lo_y = fp.corners[0].y, hi_y = lo_y;
  for (const auto& c : fp.corners) {
    lo_x = std::min(lo_x, c.x);
    hi_x = std::max(hi_x, c.x);
    lo_y = std::min(lo_y, c.y);
    hi_y = std::max(hi_y, c.y);
  }
  auto cell_of = [&](double v, double origin, int n) {
    return static_cast<int>(std::clamp(std::floor((v - origin) / spec.cell), -2.0, n + 1.0));
  };
  const int i0 = std::max(0, cell_of(lo_x, spec.x_min, spec.nx()) - 1);
  const int i1 = std::min(spec.nx() - 1, cell_of(hi_x, spec.x_min, spec.nx()) + 1);
  const int j0 = std::max(0, cell_of(lo_y, spec.y_min, spec.ny()) - 1);
  const int j1 = std::min(spec.ny() - 1, cell_of(hi_y, spec.y_min, spec.ny()) + 1);
  std::vector<PillarIndex> out;
  for (int i = i0; i <= i1; ++i) {
    for (int j = j0; j <= j1; ++j) {
      if (iou_2d(pillar_footprint({i, j}, spec), fp) > beta) out.push_back({i, j});
    }
  }
  return out;
}

}  // namespace lopguard
