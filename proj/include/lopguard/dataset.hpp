#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lopguard/featurize.hpp"
#include "lopguard/pillar_grid.hpp"
#include "lopguard/rng.hpp"
#include "lopguard/scene.hpp"

namespace lopguard {

struct PillarSource {
  std::uint64_t frame_id = 0;
  PillarIndex pillar;
  friend auto operator<=>(const PillarSource&, const PillarSource&) = default;
};

/// One training pair: a pillar's features and its 0/1 objectness label.
struct PillarSample {
  PillarFeatures features;
  int label = 0;
  PillarSource source;
};

/// 1 iff the pillar's best bird's-eye IoU over all ground-truth boxes
/// exceeds t_iou.
int label_pillar(const PillarIndex& idx, const GridSpec& spec, std::span<const GroundTruthObject> gts,
                 double t_iou);

struct DatasetConfig {
  GridSpec grid;
  int m_pc = kDefaultMpc;
  double t_iou = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;
};

/// One sample per occupied pillar per scene. Output is ordered by frame id,
/// then pillar index; featurization draws from per-pillar streams.
std::vector<PillarSample> generate(std::span<const Scene> scenes, const DatasetConfig& cfg);

/// Keeps every positive and at most floor(max_neg_ratio * |pos|) uniformly
/// chosen negatives, then shuffles. DataError without positives.
std::vector<PillarSample> balance(std::vector<PillarSample> samples, double max_neg_ratio, Rng& rng);

// Shard file ("LOPDSET1" magic):
//   header: magic[8] | u32 version | u32 m_pc | u64 count
//   row:    u8 label | u32 valid_count | u64 frame_id | u32 i | u32 j
//           | m_pc x 7 float32 (row-major, zero padded)
std::vector<std::byte> encode_shard(std::span<const PillarSample> samples, int m_pc);
std::vector<PillarSample> decode_shard(std::span<const std::byte> bytes);

/// Writes shard_00000.bin, shard_00001.bin, ... with up to `per_shard` rows.
void write_dataset(const std::filesystem::path& dir, std::span<const PillarSample> samples, int m_pc,
                   std::size_t per_shard = 4096);
std::vector<PillarSample> read_dataset(const std::filesystem::path& dir);

}  // namespace lopguard
