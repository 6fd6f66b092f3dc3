#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lopguard/pillar_grid.hpp"
#include "lopguard/predictor.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

struct VoteConfig {
  GridSpec grid;
  double beta = 1e-3;
  /// Boundary value: a detection is eliminated iff its vote ratio <= b.
  double b = 0.5;
  int m_pc = kDefaultMpc;
  /// Count empty intersecting pillars (with score 0) in the denominator.
  bool include_empty = false;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct PillarVote {
  PillarIndex pillar;
  std::size_t points = 0;
  int score = 0;
  double prob = 0.0;
};

struct DetectionVerdict {
  std::size_t index = 0;  // position in the input list
  Detection detection;
  double ratio = 0.0;
  std::size_t pillar_count = 0;
  std::size_t votes = 0;
  bool eliminated = false;
  std::vector<PillarIndex> pillars;
};

struct EliminationReport {
  std::vector<Detection> kept;
  std::vector<DetectionVerdict> eliminated;
  /// One entry per input detection, in input order.
  std::vector<DetectionVerdict> verdicts;
  /// Scores of every pillar that took part in a vote, by pillar index.
  std::map<PillarIndex, PillarVote> pillar_votes;
};

/// Voting stage on precomputed scores. `scores` holds the non-empty pillars
/// of the frame; pillars missing from it are empty.
EliminationReport vote(std::span<const Detection> dets, const std::map<PillarIndex, PillarVote>& scores,
                       const VoteConfig& cfg);

/// Scores each non-empty pillar touched by some detection once, then votes.
EliminationReport filter_detections(std::span<const Detection> dets, const PointCloud& pc,
                                    const LOPModel& model, const VoteConfig& cfg);

std::string diagnostics_json(const EliminationReport& report, std::uint64_t frame_id);

}  // namespace lopguard
