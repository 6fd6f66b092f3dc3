#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lopguard/geometry.hpp"

namespace lopguard {

enum class Category { car, pedestrian, cyclist, unknown };

std::string_view to_string(Category c);
/// Accepts the lowercase names produced by `to_string`; throws ValueError otherwise.
Category category_from_string(std::string_view s);

struct GroundTruthObject {
  Category category = Category::car;
  Box3D box;
  /// Set by the synthetic generator for cars whose returns were suppressed.
  bool occluded = false;

  friend bool operator==(const GroundTruthObject&, const GroundTruthObject&) = default;
};

struct Detection {
  Box3D box;
  Category category = Category::car;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

/// A frame plus its labels. All geometry is in the sensor frame.
struct Scene {
  PointCloud cloud;
  std::vector<GroundTruthObject> ground_truth;
  std::optional<std::vector<Detection>> detections;
  std::string provenance;

  std::uint64_t frame_id() const { return cloud.frame_id; }
  friend bool operator==(const Scene&, const Scene&) = default;
};

}  // namespace lopguard
