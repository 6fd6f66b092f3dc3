#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lopguard/pillar_grid.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

struct DetectorConfig {
  GridSpec grid;
  /// Minimum number of above-ground points per component.
  std::size_t min_points = 5;
  double ground_z = -1.73;
  /// Points at or below ground_z + ground_clearance are treated as ground.
  double ground_clearance = 0.2;
  double margin = 0.1;
  /// Expected points on a car at depth d: density_constant / d^2.
  double density_constant = 50000.0;
  /// Fraction of the expected count that already earns full confidence.
  double occlusion_tolerance = 0.02;
  /// Shape gate on the fitted footprint (margin included).
  double max_length = 6.0;
  double max_width = 3.0;
  /// Yaw sweep resolution for the minimum-area rectangle, degrees.
  double yaw_step_deg = 1.0;
};

/// Minimum-area oriented rectangle around the points (planar), grown by
/// `margin` on every side; z spans the points' range plus margin. The longer
/// side becomes `l`. DomainError on an empty set.
Box3D fit_box(std::span<const Point> pts, double margin, double yaw_step_deg = 1.0);

/// Occupancy-clustering stand-in for a 3D detector: 8-connected components of
/// pillars holding above-ground points, one car detection per component that
/// passes the point count and shape gates. Output sorted by (cx, cy).
std::vector<Detection> detect(const PointCloud& pc, const DetectorConfig& cfg);

enum class TrackState { tentative, confirmed, dead };
std::string_view to_string(TrackState s);

struct Track {
  std::uint64_t id = 0;
  Box3D box;
  int hit_streak = 0;
  int miss_streak = 0;
  TrackState state = TrackState::tentative;
};

struct TrackerConfig {
  double gate = 2.0;
  int confirm_hits = 6;
  int max_misses = 60;
};

/// One frame of track lifecycle bookkeeping. Live tracks and detections are
/// paired greedily by ascending centroid distance within the gate (ties by
/// track id, then detection index). Dead tracks stay in the list but never
/// match again.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  void step(std::span<const Detection> dets);

  const std::vector<Track>& tracks() const { return tracks_; }
  std::uint64_t frames() const { return frame_; }
  /// JSON-lines records of the last step: frame, id, state, box.
  std::string timeline_lines() const;

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  std::uint64_t next_id_ = 1;
  std::uint64_t frame_ = 0;
};

}  // namespace lopguard
