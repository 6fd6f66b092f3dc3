#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lopguard/attacks.hpp"
#include "lopguard/dataset.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/synth.hpp"

using namespace lopguard;

namespace {

Scene car_scene(std::uint64_t frame, const Box3D& box, std::size_t n, Rng& rng) {
  Scene s;
  s.cloud.frame_id = frame;
  // Strictly interior so the half-open box test keeps every point.
  for (std::size_t k = 0; k < n; ++k) {
    const auto w = from_box_frame(rng.uniform(-0.45, 0.45) * box.l, rng.uniform(-0.45, 0.45) * box.w,
                                  rng.uniform(-0.45, 0.45) * box.h, box);
    s.cloud.points.push_back({w[0], w[1], w[2], rng.uniform()});
  }
  s.ground_truth.push_back({Category::car, box, false});
  return s;
}

Scene ground_scene(std::uint64_t frame, Rng& rng) {
  Scene s;
  s.cloud.frame_id = frame;
  for (int k = 0; k < 300; ++k) s.cloud.points.push_back({rng.uniform(0, 70), rng.uniform(-40, 40), -1.73, rng.uniform()});
  return s;
}

bool is_prefix(const PointCloud& base, const PointCloud& out) {
  if (out.size() < base.size()) return false;
  for (std::size_t k = 0; k < base.size(); ++k) {
    if (!(out.points[k] == base.points[k])) return false;
  }
  return true;
}

Box3D front_zone() { return make_box(7.0, 0.5, -0.9, 4.0, 1.8, 1.5, 0.3); }

// A small classifier trained on a handful of synthetic scenes.
const LOPModel& quick_model() {
  static const LOPModel model = [] {
    SynthConfig sc;
    const auto scenes = gen_corpus(sc, 6, 11);
    DatasetConfig dc;
    dc.m_pc = 128;
    dc.seed = 3;
    Rng rng(5);
    const auto data = balance(generate(scenes, dc), 1.5, rng);
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch_size = 32;
    tc.val_fraction = 0.0;
    tc.seed = 2;
    return train(data, tc).model;
  }();
  return model;
}

}  // namespace

TEST_CASE("donor library keeps cars within the point cap") {
  Rng rng(1);
  const std::vector<Scene> scenes{car_scene(3, make_box(20, 2, -0.9, 4, 1.8, 1.5, 0.7), 150, rng),
                                  car_scene(4, make_box(8, -3, -0.9, 4, 1.8, 1.5, -1.2), 800, rng)};
  const auto lib = build_donor_library(scenes);
  REQUIRE(lib.entries.size() == 1);
  const auto& e = lib.entries[0];
  CHECK(e.local_points.size() == 150);
  CHECK(e.source_frame == 3);
  CHECK(e.l == 4.0);
  double mx = 0, my = 0, mz = 0;
  for (const auto& p : e.local_points) {
    CHECK(std::abs(p.x) <= 2.0 + 1e-9);
    CHECK(std::abs(p.y) <= 0.9 + 1e-9);
    CHECK(std::abs(p.z) <= 0.75 + 1e-9);
    mx += p.x / 150;
    my += p.y / 150;
    mz += p.z / 150;
  }
  CHECK(std::abs(mx) <= 2.0);
  CHECK(std::abs(my) <= 0.9);
  CHECK(std::abs(mz) <= 0.75);
}

TEST_CASE("donor library without qualifying cars is an error") {
  Rng rng(2);
  const std::vector<Scene> dense{car_scene(0, make_box(8, 0, -0.9, 4, 1.8, 1.5, 0), 800, rng)};
  CHECK_THROWS_AS(build_donor_library(dense), EmptyLibraryError);
  CHECK_THROWS_AS(build_donor_library(std::vector<Scene>{}), EmptyLibraryError);
}

TEST_CASE("physical attack appends a donor inside a front-near box") {
  Rng gen(3);
  const std::vector<Scene> donors{car_scene(0, make_box(30, 5, -0.9, 4.2, 1.7, 1.5, 0.4), 120, gen)};
  const auto lib = build_donor_library(donors);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const auto base = ground_scene(seed, rng);
    const auto [out, trace] = physical_attack(base, lib, rng);
    CHECK(out.cloud.size() == base.cloud.size() + 120);
    CHECK(is_prefix(base.cloud, out.cloud));
    CHECK(trace.kind == AttackKind::physical);
    CHECK(trace.base_frame_id == seed);
    CHECK(trace.donor_index == std::size_t{0});
    const double d = std::hypot(trace.target_box.cx, trace.target_box.cy);
    CHECK(d >= 5.0);
    CHECK(d <= 10.0);
    CHECK(std::abs(std::atan2(trace.target_box.cy, trace.target_box.cx)) <= std::numbers::pi / 6 + 1e-12);
    CHECK(trace.injected_points.size() <= kAttackBudget);
    for (const auto& p : trace.injected_points) CHECK(point_in_box(p, trace.target_box));
  }
}

TEST_CASE("physical placement avoids ground-truth footprints") {
  Rng rng(4);
  Scene s = ground_scene(0, rng);
  s.ground_truth.push_back({Category::car, make_box(7.5, 0, -0.9, 4, 1.8, 1.5, 0), false});
  const auto donors = std::vector<Scene>{car_scene(1, make_box(30, 0, -0.9, 4, 1.8, 1.5, 0), 90, rng)};
  const auto lib = build_donor_library(donors);
  for (int k = 0; k < 20; ++k) {
    const auto res = physical_attack(s, lib, rng);
    CHECK(intersection_area(footprint(res.trace.target_box), footprint(s.ground_truth[0].box)) == 0.0);
  }
}

TEST_CASE("placement rejects a bad distance band") {
  Rng rng(5);
  PlacementConfig cfg;
  cfg.min_distance = 10;
  cfg.max_distance = 5;
  CHECK_THROWS_AS(sample_attack_pose(Scene{}, 4, 2, 1.5, rng, cfg), DomainError);
}

TEST_CASE("physical donors are sparse against the density law") {
  SynthConfig sc;
  const auto scenes = gen_corpus(sc, 20, 7);
  const auto lib = build_donor_library(scenes);
  Rng rng(8);
  int below = 0, total = 0;
  for (int round = 0; round < 5; ++round) {
    for (const auto& s : scenes) {
      const auto res = physical_attack(s, lib, rng);
      const auto n = static_cast<double>(res.trace.injected_points.size());
      const auto expected = static_cast<double>(expected_car_points(res.trace.target_box, sc.density_constant));
      // The 200-point cap against >= 500 expected at 10 m bounds every donor.
      CHECK(n * 2.5 <= expected);
      below += n * 4.0 <= expected;
      ++total;
    }
  }
  MESSAGE(below, " of ", total, " donors below the law by 4x");
  CHECK(below >= 0.9 * total);
}

TEST_CASE("random injection: sizes, zone containment, determinism") {
  Rng gen(6);
  const auto base = ground_scene(9, gen);
  Rng a(10);
  const auto none = random_inject_attack(base, front_zone(), 0, a);
  CHECK(none.scene == base);
  CHECK(none.trace.injected_points.empty());
  CHECK(none.trace.target_box == front_zone());

  Rng b(11), c(11);
  const auto full = random_inject_attack(base, front_zone(), 200, b);
  CHECK(full.trace.injected_points.size() == 200);
  CHECK(full.scene.cloud.size() == base.cloud.size() + 200);
  CHECK(is_prefix(base.cloud, full.scene.cloud));
  for (const auto& p : full.trace.injected_points) {
    CHECK(point_in_box(p, front_zone()));
    CHECK(p.intensity >= 0.0);
    CHECK(p.intensity <= 1.0);
  }
  CHECK(random_inject_attack(base, front_zone(), 200, c).trace.injected_points == full.trace.injected_points);
  CHECK_THROWS_AS(random_inject_attack(base, front_zone(), 201, c), DomainError);
}

TEST_CASE("adaptive attack with zero steps equals random injection") {
  Rng gen(12);
  const auto base = ground_scene(2, gen);
  AdaptiveConfig cfg;
  cfg.steps = 0;
  cfg.n = 50;
  Rng a(13), b(13);
  const auto adaptive = adaptive_attack(base, quick_model(), front_zone(), cfg, a);
  const auto plain = random_inject_attack(base, front_zone(), 50, b);
  CHECK(adaptive.trace.kind == AttackKind::adaptive);
  CHECK(adaptive.trace.injected_points == plain.trace.injected_points);
  CHECK(adaptive.scene == plain.scene);
}

TEST_CASE("adaptive attack rejects bad parameters") {
  Rng rng(14);
  AdaptiveConfig cfg;
  cfg.steps = -1;
  CHECK_THROWS_AS(adaptive_attack(Scene{}, quick_model(), front_zone(), cfg, rng), DomainError);
  cfg.steps = 1;
  cfg.n = 201;
  CHECK_THROWS_AS(adaptive_attack(Scene{}, quick_model(), front_zone(), cfg, rng), DomainError);
}

TEST_CASE("adaptive attack raises mean objectness and stays in the zone") {
  const auto& model = quick_model();
  AdaptiveConfig cfg;
  cfg.vote.m_pc = 128;
  cfg.steps = 15;
  double before = 0.0, after = 0.0;
  const int runs = 20;
  for (int run = 0; run < runs; ++run) {
    Rng gen(static_cast<std::uint64_t>(100 + run));
    const auto base = ground_scene(static_cast<std::uint64_t>(run), gen);
    Rng a(static_cast<std::uint64_t>(run)), b(static_cast<std::uint64_t>(run));
    const auto init = random_inject_attack(base, front_zone(), cfg.n, a);
    const auto res = adaptive_attack(base, model, front_zone(), cfg, b);
    CHECK(is_prefix(base.cloud, res.scene.cloud));
    for (std::size_t k = 0; k < res.trace.injected_points.size(); ++k) {
      const auto& p = res.trace.injected_points[k];
      CHECK(point_in_box(p, front_zone()));
      CHECK(p.intensity == init.trace.injected_points[k].intensity);
    }
    before += target_objectness(init.scene.cloud, front_zone(), model, cfg.vote) / runs;
    after += target_objectness(res.scene.cloud, front_zone(), model, cfg.vote) / runs;
  }
  MESSAGE("mean objectness ", before, " -> ", after);
  CHECK(after >= before);
}

TEST_CASE("objectness of an empty zone is zero") {
  CHECK(target_objectness(PointCloud{}, front_zone(), quick_model(), VoteConfig{}) == 0.0);
}

TEST_CASE("trace json round-trip and budget check") {
  Rng rng(15);
  auto t = random_inject_attack(ground_scene(5, rng), front_zone(), 30, rng).trace;
  t.donor_index = 4;
  const auto back = trace_from_json(trace_to_json(t));
  CHECK(back.kind == t.kind);
  CHECK(back.base_frame_id == 5);
  CHECK(back.target_box == t.target_box);
  CHECK(back.injected_points == t.injected_points);
  CHECK(back.donor_index == std::size_t{4});

  t.injected_points.resize(201);
  try {
    trace_from_json(trace_to_json(t));
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("injected_points") != std::string::npos);
  }
  CHECK_THROWS_AS(trace_from_json(R"({"kind":"laser","base_frame_id":0})"), SchemaError);
  CHECK(attack_kind_from_string("adaptive") == AttackKind::adaptive);
}
