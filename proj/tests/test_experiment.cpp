#include "doctest.h"
#include "lopguard/errors.hpp"
#include "lopguard/experiment.hpp"

using namespace lopguard;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.train_scenes = 6;
  c.eval_scenes = 5;
  c.adaptive_scenes = 2;
  c.adaptive_steps = 3;
  c.m_pc = 128;
  c.train.epochs = 2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("run config json round-trip") {
  RunConfig c = tiny_config();
  c.b = 0.6;
  c.synth.occlusion_prob = 0.2;
  c.placement.max_bearing_deg = 20;
  c.detector.min_points = 7;
  c.train.standardize = false;
  const auto j = run_config_to_json(c);
  const auto back = run_config_from_json(j);
  CHECK(run_config_to_json(back) == j);
  CHECK(back.b == 0.6);
  CHECK(back.train_scenes == 6);
  CHECK(back.synth.occlusion_prob == 0.2);
  CHECK(back.detector.min_points == 7);
  CHECK_FALSE(back.train.standardize);
}

TEST_CASE("partial config overlays the defaults") {
  const auto c = run_config_from_json(nlohmann::json{{"seed", 9}, {"train", {{"epochs", 3}}}});
  CHECK(c.seed == 9);
  CHECK(c.train.epochs == 3);
  CHECK(c.train.batch_size == TrainConfig{}.batch_size);
  CHECK(c.b == 0.5);
}

TEST_CASE("unknown config keys are schema errors") {
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"sed", 1}}), SchemaError);
  CHECK_THROWS_AS(run_config_from_json(nlohmann::json{{"train", {{"epoch", 1}}}}), SchemaError);
}

TEST_CASE("standard defenses cover every kind") {
  const auto defs = standard_defenses(RunConfig{});
  REQUIRE(defs.size() == 7);
  CHECK(defs[0].kind == DefenseKind::none);
  CHECK(defs[1].kind == DefenseKind::lop);
  CHECK(defs[1].b == 0.5);
  CHECK(defs[2].b == 0.6);
  for (const auto& d : defs) CHECK(defense_kind_from_string(to_string(d.kind)) == d.kind);
  CHECK(vote_config(RunConfig{}, 0.6).b == 0.6);
}

TEST_CASE("no defense returns the detector output") {
  SynthConfig sc;
  Rng rng(1);
  const auto s = gen_scene(sc, 0, rng);
  const RunConfig cfg;
  const auto dets = apply_defense(s.cloud, std::nullopt, DefenseSpec{}, cfg, nullptr);
  CHECK(dets == detect(s.cloud, cfg.detector));
  DefenseSpec lop;
  lop.kind = DefenseKind::lop;
  CHECK_THROWS(apply_defense(s.cloud, std::nullopt, lop, cfg, nullptr));
}

TEST_CASE("small experiment is deterministic across runs and threads") {
  auto cfg = tiny_config();
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  cfg.threads = 3;
  const auto c = run_experiment(cfg);
  CHECK(a.to_json().dump() == b.to_json().dump());
  CHECK(a.to_json().dump() == c.to_json().dump());
  CHECK(a.to_csv() == c.to_csv());
  CHECK(a.row("none", "physical").attempts == 5);
  CHECK(a.row("none", "adaptive").attempts == 2);
  CHECK(a.training_log.size() <= 2);
  CHECK(a.frames_checked == 5);
  CHECK(a.monotonicity_violations.empty());
  CHECK_THROWS(a.row("nothing", "physical"));
}

TEST_CASE("csv has one header and one line per row") {
  const auto rep = run_experiment(tiny_config());
  const auto csv = rep.to_csv();
  CHECK(csv.rfind(csv_header(), 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == rep.rows.size() + 1);
}
