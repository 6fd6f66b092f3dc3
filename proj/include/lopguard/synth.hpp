#pragma once

#include <cstdint>
#include <vector>

#include "lopguard/pillar_grid.hpp"
#include "lopguard/rng.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SynthConfig {
  int min_cars = 3;
  int max_cars = 8;
  Range car_length{3.5, 4.8};
  Range car_width{1.6, 1.9};
  Range car_height{1.4, 1.7};
  /// Points on a car at depth d: round(density_constant / d^2), +-count_noise.
  double density_constant = 50000.0;
  double count_noise = 0.1;
  /// Ground returns per square meter of the grid area.
  double ground_rate = 0.01;
  double occlusion_prob = 0.15;
  Range occlusion_factor{0.1, 0.4};
  Range car_depth{5.0, 60.0};
  double max_bearing_deg = 60.0;
  double ground_z = -1.73;
  /// Gap between the ground plane and car bottoms.
  double car_clearance = 0.05;
  /// Minimum gap kept between object footprints.
  double spacing = 3.0;
  double jitter_sigma = 0.01;
  double jitter_clamp = 0.05;
  /// Unlabeled sparse roadside structures (posts, hedges, walls).
  int min_clutter = 15;
  int max_clutter = 30;
  Range clutter_length{0.5, 6.0};
  Range clutter_width{0.3, 1.5};
  Range clutter_height{0.5, 2.5};
  /// Clutter surface density as a fraction of a car's at the same depth.
  Range clutter_density{0.02, 0.35};
  Range clutter_depth{4.0, 45.0};
  int max_placement_tries = 1000;
  GridSpec grid;

  void validate() const;
};

/// Sample `n` points on the sensor-facing side faces and the top of `box`
/// (area weighted, faces with outward normal pointing at the origin), then
/// jitter them. With jitter_sigma = 0 every point lies on the surface.
std::vector<Point> sample_box_surface(const Box3D& box, std::size_t n, double jitter_sigma, double jitter_clamp,
                                      Rng& rng);

/// round(C / d^2) for the box center depth.
std::size_t expected_car_points(const Box3D& box, double density_constant);

Scene gen_scene(const SynthConfig& cfg, std::uint64_t frame_id, Rng& rng);

/// Frames 0..n-1, scene k drawn from Rng(derive_seed(seed, k)).
std::vector<Scene> gen_corpus(const SynthConfig& cfg, std::size_t n_scenes, std::uint64_t seed, int threads = 1);

}  // namespace lopguard
