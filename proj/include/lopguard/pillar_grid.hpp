#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <vector>

#include "lopguard/geometry.hpp"

namespace lopguard {

/// Pillar partition of the bird's-eye detection range. Cells are half-open
/// and anchored at (x_min, y_min). The default extent is the KITTI detection
/// range with 1 m pillars.
struct GridSpec {
  double x_min = 0.0;
  double x_max = 70.4;
  double y_min = -40.0;
  double y_max = 40.0;
  double cell = 1.0;

  /// Throws DomainError on an empty range or non-positive cell.
  void validate() const;
  int nx() const;
  int ny() const;
};

struct PillarIndex {
  int i = 0;
  int j = 0;
  friend auto operator<=>(const PillarIndex&, const PillarIndex&) = default;
};

/// Point indices per occupied pillar, in ascending point order.
struct Partition {
  std::map<PillarIndex, std::vector<std::size_t>> pillars;
  std::size_t dropped = 0;
};

Partition partition(const PointCloud& pc, const GridSpec& spec);

/// Pillar holding planar position (x, y); nullopt outside the grid.
std::optional<PillarIndex> pillar_of(double x, double y, const GridSpec& spec);

/// Cell square [x_min + i*cell, x_min + (i+1)*cell) x [...]. IndexError when
/// the index is outside the grid.
Footprint2D pillar_footprint(const PillarIndex& idx, const GridSpec& spec);
Vec2 pillar_center(const PillarIndex& idx, const GridSpec& spec);

/// Pillars whose bird's-eye IoU with the box footprint exceeds `beta`. Only
/// the footprint's bounding rectangle grown by one cell is searched.
std::vector<PillarIndex> intersecting_pillars(const Box3D& box, const GridSpec& spec, double beta);

}  // namespace lopguard
