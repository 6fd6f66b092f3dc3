#include "lopguard/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "lopguard/binio.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/io.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

int label_pillar(const PillarIndex& idx, const GridSpec& spec, std::span<const GroundTruthObject> gts,
                 double t_iou) {
  if (t_iou < 0.0) throw DomainError("t_iou must be non-negative");
  const Footprint2D cell = pillar_footprint(idx, spec);
  double best = 0.0;
  for (const auto& g : gts) best = std::max(best, iou_2d(cell, footprint(g.box)));
  return best > t_iou ? 1 : 0;
}

std::vector<PillarSample> generate(std::span<const Scene> scenes, const DatasetConfig& cfg) {
  if (scenes.empty()) throw DomainError("generate: no scenes");
  cfg.grid.validate();
  std::vector<std::size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, {}, [&](std::size_t k) { return scenes[k].frame_id(); });

  std::vector<std::vector<PillarSample>> per_scene(scenes.size());
  parallel_for(order.size(), cfg.threads, [&](std::size_t slot) {
    const Scene& s = scenes[order[slot]];
    const Partition part = partition(s.cloud, cfg.grid);
    auto& out = per_scene[slot];
    out.reserve(part.pillars.size());
    for (const auto& [idx, members] : part.pillars) {
      PillarSample ps;
      ps.features = featurize_pillar(s.cloud, members, idx, cfg.grid, cfg.m_pc, cfg.seed);
      ps.label = label_pillar(idx, cfg.grid, s.ground_truth, cfg.t_iou);
      ps.source = {s.frame_id(), idx};
      out.push_back(std::move(ps));
    }
  });

  std::vector<PillarSample> all;
  for (auto& v : per_scene) std::ranges::move(v, std::back_inserter(all));
  return all;
}

std::vector<PillarSample> balance(std::vector<PillarSample> samples, double max_neg_ratio, Rng& rng) {
  if (!(max_neg_ratio > 0.0)) throw DomainError("max_neg_ratio must be positive");
  std::vector<PillarSample> pos, neg;
  for (auto& s : samples) (s.label == 1 ? pos : neg).push_back(std::move(s));
  if (pos.empty()) throw DataError("no positive samples to balance against");
  const auto cap = static_cast<std::size_t>(std::floor(max_neg_ratio * static_cast<double>(pos.size())));
  if (neg.size() > cap) {
    for (std::size_t k = 0; k < cap; ++k) {
      const auto j = k + rng.below(neg.size() - k);
      std::swap(neg[k], neg[j]);
    }
    neg.resize(cap);
  }
  std::vector<PillarSample> out = std::move(pos);
  std::ranges::move(neg, std::back_inserter(out));
  rng.shuffle(out.begin(), out.end());
  return out;
}

// --------------------------------------------------------------------------
// Shards
// --------------------------------------------------------------------------

namespace {
constexpr std::string_view kShardMagic = "LOPDSET1";
constexpr std::uint32_t kShardVersion = 1;
}  // namespace

std::vector<std::byte> encode_shard(std::span<const PillarSample> samples, int m_pc) {
  binio::Writer w;
  w.bytes(kShardMagic);
  w.u32(kShardVersion);
  w.u32(static_cast<std::uint32_t>(m_pc));
  w.u64(samples.size());
  for (const auto& s : samples) {
    if (s.features.m_pc != m_pc) throw DomainError("encode_shard: mixed m_pc");
    w.u8(static_cast<std::uint8_t>(s.label));
    w.u32(static_cast<std::uint32_t>(s.features.valid_count()));
    w.u64(s.source.frame_id);
    w.u32(static_cast<std::uint32_t>(s.source.pillar.i));
    w.u32(static_cast<std::uint32_t>(s.source.pillar.j));
    for (int r = 0; r < m_pc; ++r) {
      for (int c = 0; c < kFeatureDim; ++c) {
        w.f32(r < s.features.valid_count() ? static_cast<float>(s.features.valid(r, c)) : 0.0f);
      }
    }
  }
  return w.take();
}

std::vector<PillarSample> decode_shard(std::span<const std::byte> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(kShardMagic.size()) != kShardMagic) throw ValueError("shard: bad magic");
  if (r.u32() != kShardVersion) throw ValueError("shard: unsupported version");
  const int m_pc = static_cast<int>(r.u32());
  const auto count = r.u64();
  std::vector<PillarSample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::uint64_t k = 0; k < count; ++k) {
    PillarSample s;
    s.label = r.u8();
    if (s.label > 1) throw ValueError("shard: label out of range");
    const int valid = static_cast<int>(r.u32());
    if (valid > m_pc) throw ValueError("shard: valid_count exceeds m_pc");
    s.source.frame_id = r.u64();
    s.source.pillar.i = static_cast<int>(r.u32());
    s.source.pillar.j = static_cast<int>(r.u32());
    s.features.m_pc = m_pc;
    s.features.valid.resize(valid, kFeatureDim);
    for (int row = 0; row < m_pc; ++row) {
      for (int c = 0; c < kFeatureDim; ++c) {
        const float v = r.f32();
        if (row < valid) s.features.valid(row, c) = v;
      }
    }
    s.features.source.resize(static_cast<std::size_t>(valid));
    std::iota(s.features.source.begin(), s.features.source.end(), std::size_t{0});
    out.push_back(std::move(s));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, std::span<const PillarSample> samples, int m_pc,
                   std::size_t per_shard) {
  std::filesystem::create_directories(dir);
  std::size_t shard = 0;
  for (std::size_t lo = 0; lo < samples.size() || (lo == 0 && shard == 0); lo += per_shard) {
    const auto n = std::min(per_shard, samples.size() - lo);
    char name[32];
    std::snprintf(name, sizeof name, "shard_%05zu.bin", shard++);
    write_binary_file(dir / name, encode_shard(samples.subspan(lo, n), m_pc));
    if (samples.empty()) break;
  }
}

std::vector<PillarSample> read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("shard_") && name.ends_with(".bin")) files.push_back(e.path());
  }
  std::ranges::sort(files);
  std::vector<PillarSample> all;
  for (const auto& f : files) {
    auto part = decode_shard(read_binary_file(f));
    std::ranges::move(part, std::back_inserter(all));
  }
  return all;
}

}  // namespace lopguard
