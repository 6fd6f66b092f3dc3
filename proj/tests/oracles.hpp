#pragma once

// Independent reference computations for tests. Nothing here calls into the
// geometry or metrics code under test.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "lopguard/geometry.hpp"
#include "lopguard/rng.hpp"

namespace oracle {

using lopguard::Point;
using lopguard::Vec2;

/// Corners of an oriented rectangle, CCW.
inline std::vector<Vec2> rect_corners(double cx, double cy, double l, double w, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  std::vector<Vec2> out;
  for (auto [a, b] : {std::pair{0.5, 0.5}, {-0.5, 0.5}, {-0.5, -0.5}, {0.5, -0.5}}) {
    const double lx = a * l, ly = b * w;
    out.push_back({cx + c * lx - s * ly, cy + s * lx + c * ly});
  }
  return out;
}

/// Inside test for a convex CCW polygon (boundary counts as inside).
inline bool inside_convex(const std::vector<Vec2>& poly, double x, double y) {
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec2& a = poly[k];
    const Vec2& b = poly[(k + 1) % poly.size()];
    if ((b.x - a.x) * (y - a.y) - (b.y - a.y) * (x - a.x) < 0.0) return false;
  }
  return true;
}

/// Jittered-grid Monte-Carlo estimate of the bird's-eye IoU: one uniform
/// sample in each cell of a side x side raster over the union's bounding
/// rectangle.
inline double mc_iou(const std::vector<Vec2>& a, const std::vector<Vec2>& b, int side, lopguard::Rng& rng) {
  double x0 = a[0].x, x1 = a[0].x, y0 = a[0].y, y1 = a[0].y;
  for (const auto* poly : {&a, &b}) {
    for (const auto& v : *poly) {
      x0 = std::min(x0, v.x);
      x1 = std::max(x1, v.x);
      y0 = std::min(y0, v.y);
      y1 = std::max(y1, v.y);
    }
  }
  const double dx = (x1 - x0) / side, dy = (y1 - y0) / side;
  long inter = 0, uni = 0;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double x = x0 + (i + rng.uniform()) * dx;
      const double y = y0 + (j + rng.uniform()) * dy;
      const bool ia = inside_convex(a, x, y), ib = inside_convex(b, x, y);
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double shoelace(const std::vector<Vec2>& p) {
  double a = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const Vec2& u = p[k];
    const Vec2& v = p[(k + 1) % p.size()];
    a += u.x * v.y - v.x * u.y;
  }
  return std::abs(a) / 2.0;
}

/// Area of a convex polygon inside the axis-aligned cell [x0,x1] x [y0,y1],
/// by clipping against the four cell half-planes one at a time.
inline double area_in_cell(std::vector<Vec2> poly, double x0, double y0, double x1, double y1) {
  auto clip = [&](auto keep, auto cross) {
    std::vector<Vec2> out;
    for (std::size_t k = 0; k < poly.size(); ++k) {
      const Vec2& p = poly[k];
      const Vec2& q = poly[(k + 1) % poly.size()];
      const bool kp = keep(p), kq = keep(q);
      if (kp) out.push_back(p);
      if (kp != kq) out.push_back(cross(p, q));
    }
    poly = std::move(out);
  };
  auto at_x = [](double xc) {
    return [xc](const Vec2& p, const Vec2& q) {
      const double t = (xc - p.x) / (q.x - p.x);
      return Vec2{xc, p.y + t * (q.y - p.y)};
    };
  };
  auto at_y = [](double yc) {
    return [yc](const Vec2& p, const Vec2& q) {
      const double t = (yc - p.y) / (q.y - p.y);
      return Vec2{p.x + t * (q.x - p.x), yc};
    };
  };
  clip([&](const Vec2& p) { return p.x >= x0; }, at_x(x0));
  clip([&](const Vec2& p) { return p.x <= x1; }, at_x(x1));
  clip([&](const Vec2& p) { return p.y >= y0; }, at_y(y0));
  clip([&](const Vec2& p) { return p.y <= y1; }, at_y(y1));
  return poly.size() < 3 ? 0.0 : shoelace(poly);
}

inline double sq_dist(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

/// Chamfer by full enumeration of every pair.
inline double chamfer(std::span<const Point> s, std::span<const Point> s_prime) {
  double total = 0.0;
  for (const auto& y : s_prime) {
    double best = INFINITY;
    for (const auto& x : s) best = std::min(best, sq_dist(x, y));
    total += best;
  }
  return total / static_cast<double>(s_prime.size());
}

/// kNN distance by sorting all squared distances.
inline double knn(std::span<const Point> s, std::span<const Point> s_prime, int k) {
  double total = 0.0;
  for (const auto& y : s_prime) {
    std::vector<double> d;
    for (const auto& x : s) d.push_back(sq_dist(x, y));
    std::sort(d.begin(), d.end());
    double acc = 0.0;
    for (int i = 0; i < k; ++i) acc += d[static_cast<std::size_t>(i)];
    total += acc / k;
  }
  return total / static_cast<double>(s_prime.size());
}

/// Extended-precision re-implementation of the pillar classifier forward
/// pass, used as the finite-difference reference. `params` follows the
/// network's flat layout: per layer an (in x out) row-major weight, then the
/// bias. Input rows are raw features; (x - shift) / scale is applied first.
struct RefNet {
  static constexpr int kShapes[5][2] = {{7, 64}, {64, 128}, {128, 256}, {256, 128}, {128, 2}};
  std::vector<long double> params;
  std::array<long double, 7> shift{};
  std::array<long double, 7> scale{1, 1, 1, 1, 1, 1, 1};

  std::size_t weight_at(int layer) const {
    std::size_t off = 0;
    for (int l = 0; l < layer; ++l) off += static_cast<std::size_t>(kShapes[l][0] * kShapes[l][1] + kShapes[l][1]);
    return off;
  }

  std::vector<long double> dense(int layer, const std::vector<long double>& in) const {
    const int n_in = kShapes[layer][0], n_out = kShapes[layer][1];
    const std::size_t w = weight_at(layer), b = w + static_cast<std::size_t>(n_in * n_out);
    std::vector<long double> out(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      long double acc = params[b + static_cast<std::size_t>(o)];
      for (int i = 0; i < n_in; ++i) {
        acc += in[static_cast<std::size_t>(i)] * params[w + static_cast<std::size_t>(i * n_out + o)];
      }
      out[static_cast<std::size_t>(o)] = acc;
    }
    return out;
  }

  static void relu(std::vector<long double>& v) {
    for (auto& x : v) x = x > 0 ? x : 0;
  }

  /// Class-1 probability.
  long double p1(const std::vector<std::vector<long double>>& rows) const {
    std::vector<long double> pooled(256, -INFINITY);
    for (const auto& r : rows) {
      std::vector<long double> h(7);
      for (std::size_t c = 0; c < 7; ++c) h[c] = (r[c] - shift[c]) / scale[c];
      for (int l = 0; l < 3; ++l) {
        h = dense(l, h);
        relu(h);
      }
      for (std::size_t c = 0; c < 256; ++c) pooled[c] = std::max(pooled[c], h[c]);
    }
    auto h = dense(3, pooled);
    relu(h);
    const auto z = dense(4, h);
    return 1.0L / (1.0L + std::exp(z[0] - z[1]));
  }

  static long double focal(long double p1, int y, long double alpha, long double gamma) {
    const long double py = std::max(y == 1 ? p1 : 1.0L - p1, 1e-12L);
    return -alpha * std::pow(1.0L - py, gamma) * std::log(py);
  }
};

}  // namespace oracle
