#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lopguard/geometry.hpp"
#include "lopguard/rng.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

/// Simple random sampling: min(m, |pc|) points without replacement, in
/// their original relative order.
PointCloud srs(const PointCloud& pc, std::size_t m, Rng& rng);

/// Mean Euclidean distance from each point to its k nearest other points.
/// SizeError if |pc| <= k.
std::vector<double> knn_mean_distances(std::span<const Point> pts, int k);

/// Statistical outlier removal: keeps points whose k-NN mean distance lies in
/// [mu - alpha*sigma, mu + alpha*sigma] (population sigma).
PointCloud sor(const PointCloud& pc, int k, double alpha);

struct CarloVerdict {
  std::size_t detection_index = 0;
  double ratio = 0.0;
  bool flagged = false;
};

/// Free-space fraction: the box is cut into ceil(extent/cell) cells per axis
/// and r is the share of cells holding no point.
CarloVerdict carlo_fsd(const Detection& det, const PointCloud& pc, double cell, double r_thresh);

/// Laser penetration ratio. The frustum is the planar angular sector spanned
/// by the footprint as seen from the origin, with radial bounds
/// r_near = distance from the origin to the footprint and
/// r_far = distance to its farthest corner. Sector points inside the box form
/// S, points nearer than r_near form S_up, points beyond r_far form S_down;
/// the rest are ignored. r = |S_down| / (|S_up| + |S| + |S_down|), 0 if all are
/// empty. GeometryError if the origin lies inside the footprint.
CarloVerdict carlo_lpd(const Detection& det, const PointCloud& pc, double r_thresh);

enum class CarloMode { fsd, lpd };

struct CarloConfig {
  CarloMode mode = CarloMode::lpd;
  double r_thresh = 0.7;
  double cell = 0.25;
  int threads = 1;
};

/// Verdict per detection, in input order.
std::vector<CarloVerdict> carlo_verdicts(std::span<const Detection> dets, const PointCloud& pc,
                                         const CarloConfig& cfg);
/// Detections that were not flagged, in input order.
std::vector<Detection> carlo_filter(std::span<const Detection> dets, const PointCloud& pc, const CarloConfig& cfg);

}  // namespace lopguard
