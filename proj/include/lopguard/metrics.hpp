#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lopguard/attacks.hpp"
#include "lopguard/pillar_grid.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

struct DetectionMatch {
  std::size_t det_index = 0;
  bool true_positive = false;
  /// Matched ground-truth index, -1 for a false positive.
  long gt_index = -1;
  double iou = 0.0;
};

struct MatchResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// Detections that passed the confidence filter, in processing order.
  std::vector<DetectionMatch> verdicts;
};

/// Greedy one-to-one matching in descending confidence (ties by input
/// index). Each detection takes the unmatched same-category ground truth of
/// highest bird's-eye IoU if that IoU >= c_iou.
MatchResult match(std::span<const Detection> dets, std::span<const GroundTruthObject> gts, double c_conf,
                  double c_iou);

/// tp / (tp + fp); 1.0 when nothing was predicted.
double precision(const MatchResult& mr);
/// Pools counts over frames before dividing.
double precision(std::span<const MatchResult> frames);

struct FrameDetections {
  std::span<const Detection> detections;
  std::span<const GroundTruthObject> ground_truth;
};

/// 11-point interpolated average precision over all frames. DataError when
/// there is no ground truth at all.
double ap_11point(std::span<const FrameDetections> frames, double c_iou);

/// Fraction of traces whose target box is hit (IoU >= c_iou) by a car
/// detection with confidence >= c_conf in the aligned detection list.
/// DataError on empty traces; LengthError on a size mismatch.
double asr(std::span<const AttackTrace> traces, std::span<const std::vector<Detection>> final_dets, double c_conf,
           double c_iou);
bool attack_succeeded(const AttackTrace& trace, std::span<const Detection> dets, double c_conf, double c_iou);

/// Mean over y in s_prime of the squared distance to its nearest point in s.
double chamfer(std::span<const Point> s, std::span<const Point> s_prime);

/// Mean over y in s_prime of the mean squared distance to its k nearest
/// points in s. SizeError if |s| < k.
double knn_dist(std::span<const Point> s, std::span<const Point> s_prime, int k = 10);

enum class SetMetric { chamfer, knn };

struct DiffStats {
  double d_global = 0.0;
  double d_avg_local = 0.0;
  double d_half_max_local = 0.0;
  std::size_t subsets = 0;
};

/// Aggregates precomputed values: the average of `locals` and the mean of
/// its ceil(n/2) largest entries. EmptySetError without locals.
DiffStats diff_stats(double global, std::span<const double> locals);

/// Splits s_f into its non-empty pillars and compares each part, and the
/// whole, against s_r.
DiffStats local_global_diffs(std::span<const Point> s_r, std::span<const Point> s_f, const GridSpec& spec,
                             SetMetric metric, int k = 10);

struct DensityRecord {
  std::uint64_t frame_id = 0;
  double depth = 0.0;
  double density = 0.0;
  std::size_t points = 0;
  bool forged = false;
  bool occluded = false;
};

/// One record per ground-truth object of each scene; each trace adds a
/// forged record measured in the scene whose frame id matches its base
/// frame (the attacked cloud when `attacked` is given).
std::vector<DensityRecord> depth_density_profile(std::span<const Scene> scenes,
                                                 std::span<const AttackTrace> traces = {},
                                                 std::span<const Scene> attacked = {});

double pearson(std::span<const double> x, std::span<const double> y);

/// log(density) = log_c + exponent * log(depth), least squares.
struct PowerLawFit {
  double log_c = 0.0;
  double exponent = 0.0;
  double correlation = 0.0;
  std::size_t n = 0;
  double predict(double depth) const;
};

/// Fits the records accepted by `keep` that have positive density.
/// DataError with fewer than two usable records.
PowerLawFit fit_power_law(std::span<const DensityRecord> records,
                          const std::function<bool(const DensityRecord&)>& keep);

}  // namespace lopguard
