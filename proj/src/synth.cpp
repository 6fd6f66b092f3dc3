#include "lopguard/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lopguard/errors.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

namespace {

void check_range(const Range& r, const char* name, bool positive = true) {
  if (!(r.lo <= r.hi) || (positive && !(r.lo > 0.0))) throw DomainError(std::string("bad range: ") + name);
}

double draw(Rng& rng, const Range& r) { return rng.uniform(r.lo, r.hi); }

double mid(const Range& r) { return (r.lo + r.hi) / 2; }

// Top plus one long and one short side: a rough visible surface.
double exposed_area(double l, double w, double h) { return l * w + l * h + w * h; }

bool overlaps(const Box3D& a, const Box3D& b, double gap) {
  Box3D ga = a, gb = b;
  ga.l += gap;
  ga.w += gap;
  gb.l += gap;
  gb.w += gap;
  return intersection_area(footprint(ga), footprint(gb)) > 0.0;
}

// Planar position at depth-like range r and bearing, clear of `placed`.
Box3D place(const SynthConfig& cfg, Rng& rng, const std::vector<Box3D>& placed, const Range& range, double l,
            double w, double h) {
  const double max_bearing = cfg.max_bearing_deg * std::numbers::pi / 180.0;
  const double cz = cfg.ground_z + cfg.car_clearance + h / 2;
  for (int attempt = 0; attempt < cfg.max_placement_tries; ++attempt) {
    const double r = draw(rng, range);
    const double bearing = rng.uniform(-max_bearing, max_bearing);
    const double yaw = std::numbers::pi - 2.0 * std::numbers::pi * rng.uniform();
    const Box3D b = make_box(r * std::cos(bearing), r * std::sin(bearing), cz, l, w, h, yaw);
    bool ok = true;
    for (const auto& fc : footprint(b).corners) {
      if (fc.x < cfg.grid.x_min || fc.x >= cfg.grid.x_max || fc.y < cfg.grid.y_min || fc.y >= cfg.grid.y_max) {
        ok = false;
      }
    }
    for (const auto& o : placed) ok = ok && !overlaps(b, o, cfg.spacing);
    if (ok) return b;
  }
  throw PlacementError("could not place object after " + std::to_string(cfg.max_placement_tries) + " tries");
}

}  // namespace

void SynthConfig::validate() const {
  if (min_cars < 0 || max_cars < min_cars) throw DomainError("bad car count range");
  if (min_clutter < 0 || max_clutter < min_clutter) throw DomainError("bad clutter count range");
  check_range(car_length, "car_length");
  check_range(car_width, "car_width");
  check_range(car_height, "car_height");
  check_range(car_depth, "car_depth");
  check_range(occlusion_factor, "occlusion_factor", false);
  check_range(clutter_length, "clutter_length");
  check_range(clutter_width, "clutter_width");
  check_range(clutter_height, "clutter_height");
  check_range(clutter_density, "clutter_density", false);
  check_range(clutter_depth, "clutter_depth");
  if (!(density_constant > 0.0)) throw DomainError("density_constant must be positive");
  if (!(ground_rate >= 0.0)) throw DomainError("ground_rate must be non-negative");
  if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) throw DomainError("occlusion_prob must be in [0,1]");
  if (!(count_noise >= 0.0 && count_noise < 1.0)) throw DomainError("count_noise must be in [0,1)");
  if (!(jitter_sigma >= 0.0 && jitter_clamp >= 0.0)) throw DomainError("jitter must be non-negative");
  if (!(max_bearing_deg > 0.0 && max_bearing_deg <= 90.0)) throw DomainError("max_bearing_deg must be in (0,90]");
  if (max_placement_tries < 1) throw DomainError("max_placement_tries must be >= 1");
  grid.validate();
}

std::size_t expected_car_points(const Box3D& box, double density_constant) {
  const double d = box_depth(box);
  return static_cast<std::size_t>(std::llround(density_constant / (d * d)));
}

std::vector<Point> sample_box_surface(const Box3D& box, std::size_t n, double jitter_sigma, double jitter_clamp,
                                      Rng& rng) {
  struct Face {
    int axis;     // 0 = l, 1 = w, 2 = h
    double sign;  // which side
    double area;
  };
  const double hl = box.l / 2, hw = box.w / 2, hh = box.h / 2;
  // Origin in the box frame decides which side faces are visible.
  const auto o = to_box_frame(Point{}, box);
  std::vector<Face> faces;
  if (o[0] < -hl) faces.push_back({0, -1.0, box.w * box.h});
  if (o[0] > hl) faces.push_back({0, 1.0, box.w * box.h});
  if (o[1] < -hw) faces.push_back({1, -1.0, box.l * box.h});
  if (o[1] > hw) faces.push_back({1, 1.0, box.l * box.h});
  if (o[2] > hh) faces.push_back({2, 1.0, box.l * box.w});
  if (o[2] < -hh) faces.push_back({2, -1.0, box.l * box.w});
  std::vector<Point> out;
  if (faces.empty() || n == 0) return out;
  double total = 0.0;
  for (const auto& f : faces) total += f.area;

  // Points stay inside the half-open box so every return counts toward it.
  // The relative inset absorbs rounding in the box-to-sensor transform.
  const double half[3] = {hl * (1.0 - 1e-10), hw * (1.0 - 1e-10), hh * (1.0 - 1e-10)};
  auto clamp_axis = [&](double v, int axis, double base) {
    const double lo = std::max(-half[axis], base - jitter_clamp);
    const double hi = std::min(half[axis], base + jitter_clamp);
    return std::clamp(v, lo, hi);
  };
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double u = rng.uniform() * total;
    std::size_t fi = 0;
    while (fi + 1 < faces.size() && u >= faces[fi].area) u -= faces[fi++].area;
    const Face& f = faces[fi];
    double q[3] = {rng.uniform(-half[0], half[0]), rng.uniform(-half[1], half[1]), rng.uniform(-half[2], half[2])};
    q[f.axis] = f.sign * half[f.axis];
    const double base[3] = {q[0], q[1], q[2]};
    if (jitter_sigma > 0.0) {
      for (int a = 0; a < 3; ++a) q[a] = clamp_axis(q[a] + jitter_sigma * rng.normal(), a, base[a]);
    }
    const auto w = from_box_frame(q[0], q[1], q[2], box);
    out.push_back({w[0], w[1], w[2], rng.uniform()});
  }
  return out;
}

Scene gen_scene(const SynthConfig& cfg, std::uint64_t frame_id, Rng& rng) {
  cfg.validate();
  Scene s;
  s.cloud.frame_id = frame_id;
  s.provenance = "synth";
  std::vector<Box3D> placed;

  const int n_cars = cfg.min_cars + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_cars - cfg.min_cars + 1)));
  for (int c = 0; c < n_cars; ++c) {
    const double l = draw(rng, cfg.car_length), w = draw(rng, cfg.car_width), h = draw(rng, cfg.car_height);
    const Box3D box = place(cfg, rng, placed, cfg.car_depth, l, w, h);
    placed.push_back(box);
    const double noise = rng.uniform(1.0 - cfg.count_noise, 1.0 + cfg.count_noise);
    double count = static_cast<double>(expected_car_points(box, cfg.density_constant)) * noise;
    GroundTruthObject gt{Category::car, box, false};
    if (rng.uniform() < cfg.occlusion_prob) {
      count *= draw(rng, cfg.occlusion_factor);
      gt.occluded = true;
    }
    const auto pts = sample_box_surface(box, static_cast<std::size_t>(std::llround(count)), cfg.jitter_sigma,
                                        cfg.jitter_clamp, rng);
    s.cloud.points.insert(s.cloud.points.end(), pts.begin(), pts.end());
    s.ground_truth.push_back(gt);
  }

  const int n_clutter =
      cfg.min_clutter + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_clutter - cfg.min_clutter + 1)));
  for (int c = 0; c < n_clutter; ++c) {
    const double l = draw(rng, cfg.clutter_length), w = draw(rng, cfg.clutter_width);
    const double h = draw(rng, cfg.clutter_height);
    const Box3D box = place(cfg, rng, placed, cfg.clutter_depth, l, w, h);
    placed.push_back(box);
    // Same surface density as a mid-sized car at this depth, scaled down.
    const double area_ratio = exposed_area(l, w, h) / exposed_area(mid(cfg.car_length), mid(cfg.car_width),
                                                                   mid(cfg.car_height));
    const double count = static_cast<double>(expected_car_points(box, cfg.density_constant)) * area_ratio *
                         draw(rng, cfg.clutter_density);
    const auto pts = sample_box_surface(box, static_cast<std::size_t>(std::llround(count)), cfg.jitter_sigma,
                                        cfg.jitter_clamp, rng);
    s.cloud.points.insert(s.cloud.points.end(), pts.begin(), pts.end());
  }

  const auto& g = cfg.grid;
  const double area = (g.x_max - g.x_min) * (g.y_max - g.y_min);
  const auto n_ground = static_cast<std::size_t>(std::llround(area * cfg.ground_rate));
  for (std::size_t k = 0; k < n_ground; ++k) {
    const double x = rng.uniform(g.x_min, g.x_max), y = rng.uniform(g.y_min, g.y_max);
    s.cloud.points.push_back({x, y, cfg.ground_z, rng.uniform()});
  }
  return s;
}

std::vector<Scene> gen_corpus(const SynthConfig& cfg, std::size_t n_scenes, std::uint64_t seed, int threads) {
  if (n_scenes < 1) throw DomainError("n_scenes must be >= 1");
  cfg.validate();
  std::vector<Scene> out(n_scenes);
  parallel_for(n_scenes, threads, [&](std::size_t k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    out[k] = gen_scene(cfg, k, rng);
  });
  return out;
}

}  // namespace lopguard
