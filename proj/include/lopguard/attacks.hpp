#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lopguard/eliminate.hpp"
#include "lopguard/predictor.hpp"
#include "lopguard/rng.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

inline constexpr std::size_t kAttackBudget = 200;

enum class AttackKind { physical, random_inject, adaptive };
std::string_view to_string(AttackKind k);
AttackKind attack_kind_from_string(std::string_view s);

struct AttackTrace {
  AttackKind kind = AttackKind::physical;
  std::uint64_t base_frame_id = 0;
  Box3D target_box;
  std::vector<Point> injected_points;
  /// Physical attack only: position of the donor in the library.
  std::optional<std::size_t> donor_index;
};

struct DonorEntry {
  std::vector<Point> local_points;  // box frame, yaw removed
  double l = 0.0, w = 0.0, h = 0.0;
  std::uint64_t source_frame = 0;
};

struct DonorLibrary {
  std::vector<DonorEntry> entries;
};

/// Harvests every ground-truth car holding between min_points and max_points
/// returns, re-expressed in its own box frame. EmptyLibraryError if none.
DonorLibrary build_donor_library(std::span<const Scene> scenes, std::size_t max_points = kAttackBudget,
                                 std::size_t min_points = 1);

struct PlacementConfig {
  double min_distance = 5.0;
  double max_distance = 10.0;
  double max_bearing_deg = 30.0;
  /// Extra footprint growth when testing for free space.
  double clearance = 1.0;
  /// Points at or below this height are ground and do not block placement.
  double ground_z = -1.73;
  double ground_clearance = 0.2;
  /// Target box bottom above ground_z.
  double bottom_gap = 0.05;
  int max_tries = 1000;
  /// When set, the pillars under the target footprint and their 8-neighbours
  /// must hold no above-ground point, so the forged object never joins
  /// another cluster of an occupancy detector on this grid.
  std::optional<GridSpec> isolate_grid = GridSpec{};
};

/// Samples a pose for an l x w x h box at planar distance U[min,max] and
/// bearing U[-max_bearing, max_bearing], yaw U(-pi, pi]. Up to max_tries
/// draws each, in order: a pose passing the isolate_grid test (when set)
/// whose grown footprint is clear; one whose grown footprint overlaps no
/// ground-truth footprint and holds no above-ground point; one whose own
/// footprint overlaps no ground-truth footprint. PlacementError when all fail.
/// PlacementError after max_tries.
Box3D sample_attack_pose(const Scene& scene, double l, double w, double h, Rng& rng, const PlacementConfig& cfg);

struct AttackResult {
  Scene scene;
  AttackTrace trace;
};

/// Transplants a random donor to a sampled front-near pose. Appends only.
AttackResult physical_attack(const Scene& scene, const DonorLibrary& lib, Rng& rng, const PlacementConfig& cfg = {});

/// n points uniform in the zone volume with U[0,1] intensity. DomainError if
/// n exceeds the attack budget.
AttackResult random_inject_attack(const Scene& scene, const Box3D& zone, std::size_t n, Rng& rng);

struct AdaptiveConfig {
  VoteConfig vote;
  std::size_t n = kAttackBudget;
  int steps = 40;
  double step_size = 0.05;
};

/// Mean LOP class-1 probability over the non-empty pillars intersecting the
/// zone; 0 when none is occupied.
double target_objectness(const PointCloud& pc, const Box3D& zone, const LOPModel& model, const VoteConfig& cfg);

/// Random injection into `zone` followed by signed-gradient ascent of
/// target_objectness with respect to the injected coordinates, projecting
/// back into the zone after every step.
AttackResult adaptive_attack(const Scene& scene, const LOPModel& model, const Box3D& zone, const AdaptiveConfig& cfg,
                             Rng& rng);

std::string trace_to_json(const AttackTrace& t);
AttackTrace trace_from_json(std::string_view text);

}  // namespace lopguard
