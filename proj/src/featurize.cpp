#include "lopguard/featurize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lopguard/errors.hpp"

namespace lopguard {

void check_finite(const Eigen::Ref<const Mat>& m, std::string_view what) {
  if (!m.allFinite()) throw NumericsError("non-finite value in " + std::string(what));
}

Mat PillarFeatures::dense() const {
  Mat out = Mat::Zero(m_pc, kFeatureDim);
  out.topRows(valid.rows()) = valid;
  return out;
}

PillarFeatures augment(std::span<const Point> points, const Footprint2D& pillar, int m_pc, Rng& rng) {
  if (m_pc < 1) throw DomainError("m_pc must be at least 1");
  double x0 = pillar.corners[0].x, x1 = x0, y0 = pillar.corners[0].y, y1 = y0;
  double cx = 0.0, cy = 0.0;
  for (const auto& c : pillar.corners) {
    x0 = std::min(x0, c.x);
    x1 = std::max(x1, c.x);
    y0 = std::min(y0, c.y);
    y1 = std::max(y1, c.y);
    cx += c.x / 4.0;
    cy += c.y / 4.0;
  }
  constexpr double tol = 1e-9;
  for (const auto& p : points) {
    if (p.x < x0 - tol || p.x > x1 + tol || p.y < y0 - tol || p.y > y1 + tol) {
      throw DomainError("point outside pillar");
    }
  }

  std::vector<std::size_t> chosen(points.size());
  std::iota(chosen.begin(), chosen.end(), std::size_t{0});
  if (chosen.size() > static_cast<std::size_t>(m_pc)) {
    // Partial Fisher-Yates: the first m_pc slots become the sample.
    for (std::size_t k = 0; k < static_cast<std::size_t>(m_pc); ++k) {
      const auto j = k + rng.below(chosen.size() - k);
      std::swap(chosen[k], chosen[j]);
    }
    chosen.resize(static_cast<std::size_t>(m_pc));
    std::ranges::sort(chosen);
  }

  PillarFeatures f;
  f.m_pc = m_pc;
  f.valid.resize(static_cast<Eigen::Index>(chosen.size()), kFeatureDim);
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    const Point& p = points[chosen[r]];
    auto row = f.valid.row(static_cast<Eigen::Index>(r));
    row << p.x - cx, p.y - cy, p.x, p.y, p.z, p.intensity, depth(p);
  }
  f.source = std::move(chosen);
  return f;
}

PillarFeatures featurize_pillar(const PointCloud& pc, const std::vector<std::size_t>& indices,
                                const PillarIndex& idx, const GridSpec& spec, int m_pc,
                                std::uint64_t seed) {
  std::vector<Point> pts;
  pts.reserve(indices.size());
  for (auto k : indices) pts.push_back(pc.points[k]);
  Rng rng = pillar_rng(seed, pc.frame_id, idx);
  PillarFeatures f = augment(pts, pillar_footprint(idx, spec), m_pc, rng);
  for (auto& s : f.source) s = indices[s];
  return f;
}

}  // namespace lopguard
