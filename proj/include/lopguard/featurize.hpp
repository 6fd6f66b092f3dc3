#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lopguard/geometry.hpp"
#include "lopguard/matrix.hpp"
#include "lopguard/pillar_grid.hpp"
#include "lopguard/rng.hpp"

namespace lopguard {

inline constexpr int kFeatureDim = 7;
inline constexpr int kDefaultMpc = 1024;

/// Fixed-size pillar input: an m_pc x 7 matrix with columns
/// (dx, dy, x, y, z, intensity, depth). Only the first `valid_count` rows are
/// stored; the remaining rows are implicit zero padding.
struct PillarFeatures {
  Mat valid;           // valid_count x 7
  int m_pc = kDefaultMpc;
  /// Row r came from input point `source[r]`.
  std::vector<std::size_t> source;

  int valid_count() const { return static_cast<int>(valid.rows()); }
  /// Full m_pc x 7 matrix including the zero padding.
  Mat dense() const;
};

/// Builds the feature matrix of one pillar. Over-full pillars are reduced to
/// a uniform random subset of m_pc points (drawn with `rng`, kept in input
/// order). DomainError if a point lies outside the pillar or m_pc < 1.
PillarFeatures augment(std::span<const Point> points, const Footprint2D& pillar, int m_pc, Rng& rng);

/// Per-pillar generator stream so featurization is independent of the order
/// and thread in which pillars are visited.
inline Rng pillar_rng(std::uint64_t seed, std::uint64_t frame_id, const PillarIndex& idx) {
  return Rng(derive_seed(seed, frame_id, static_cast<std::uint64_t>(idx.i),
                         static_cast<std::uint64_t>(idx.j)));
}

/// Convenience: gathers the pillar's points from the cloud and featurizes
/// them with `pillar_rng`.
PillarFeatures featurize_pillar(const PointCloud& pc, const std::vector<std::size_t>& indices,
                                const PillarIndex& idx, const GridSpec& spec, int m_pc,
                                std::uint64_t seed);

}  // namespace lopguard
