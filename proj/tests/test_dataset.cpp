#include <filesystem>
#include <set>

#include "doctest.h"
#include "lopguard/dataset.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/synth.hpp"
#include "oracles.hpp"

using namespace lopguard;

namespace {

const GridSpec kTen{0.0, 10.0, 0.0, 10.0, 1.0};

PillarSample sample_with_label(int label, double v) {
  PillarSample s;
  s.label = label;
  s.features.m_pc = 4;
  s.features.valid = Mat::Constant(1, kFeatureDim, v);
  s.features.source = {0};
  return s;
}

Scene scene_with(std::vector<Point> pts, std::vector<Box3D> boxes) {
  Scene s;
  s.cloud.points = std::move(pts);
  for (const auto& b : boxes) s.ground_truth.push_back({Category::car, b, false});
  return s;
}

}  // namespace

TEST_CASE("label_pillar hand cases") {
  const std::vector<GroundTruthObject> big{{Category::car, make_box(5, 5, 0, 6, 6, 1, 0.2), false}};
  CHECK(label_pillar({5, 5}, kTen, big, 1e-6) == 1);
  CHECK(label_pillar({5, 5}, kTen, {}, 1e-6) == 0);
  const std::vector<GroundTruthObject> edge{{Category::car, make_box(2, 0.5, 0, 2, 1, 1, 0), false}};
  CHECK(label_pillar({0, 0}, kTen, edge, 1e-6) == 0);
  CHECK(label_pillar({1, 0}, kTen, edge, 1e-6) == 1);
}

TEST_CASE("label_pillar matches a full grid scan on synthetic scenes") {
  SynthConfig cfg;
  const auto scenes = gen_corpus(cfg, 5, 21);
  const GridSpec& g = cfg.grid;
  for (const auto& s : scenes) {
    for (int i = 0; i < g.nx(); ++i) {
      for (int j = 0; j < g.ny(); ++j) {
        const double x0 = g.x_min + i * g.cell, y0 = g.y_min + j * g.cell;
        const double x1 = std::min(x0 + g.cell, g.x_max), y1 = std::min(y0 + g.cell, g.y_max);
        int expected = 0;
        for (const auto& gt : s.ground_truth) {
          const auto& b = gt.box;
          const double inter =
              oracle::area_in_cell(oracle::rect_corners(b.cx, b.cy, b.l, b.w, b.yaw), x0, y0, x1, y1);
          const double iou = inter / ((x1 - x0) * (y1 - y0) + b.l * b.w - inter);
          if (iou > 1e-6) expected = 1;
        }
        if (label_pillar({i, j}, g, s.ground_truth, 1e-6) != expected) FAIL("pillar ", i, ",", j);
      }
    }
  }
}

TEST_CASE("generate: one point inside a box is a positive sample") {
  const std::vector<Scene> scenes{scene_with({{5.5, 5.5, 0, 0}}, {make_box(5.5, 5.5, 0, 2, 2, 2, 0)})};
  const auto out = generate(scenes, {kTen, 16, 1e-6, 0, 1});
  REQUIRE(out.size() == 1);
  CHECK(out[0].label == 1);
  CHECK(out[0].source.pillar == PillarIndex{5, 5});
}

TEST_CASE("generate: one far point is a negative sample") {
  const std::vector<Scene> scenes{scene_with({{0.5, 9.5, 0, 0}}, {make_box(5.5, 5.5, 0, 2, 2, 2, 0)})};
  const auto out = generate(scenes, {kTen, 16, 1e-6, 0, 1});
  REQUIRE(out.size() == 1);
  CHECK(out[0].label == 0);
}

TEST_CASE("generate: one sample per occupied pillar") {
  std::vector<Point> pts;
  for (int k = 0; k < 50; ++k) {
    pts.push_back({k % 10 + 0.5, k / 10 + 0.5, 0, 0});
    pts.push_back({k % 10 + 0.25, k / 10 + 0.75, 0, 0});
  }
  const std::vector<Scene> scenes{scene_with(pts, {})};
  CHECK(generate(scenes, {kTen, 16, 1e-6, 0, 1}).size() == 50);
}

TEST_CASE("generate is deterministic, ordered, and thread independent") {
  SynthConfig cfg;
  auto scenes = gen_corpus(cfg, 4, 3);
  std::swap(scenes[0], scenes[3]);
  DatasetConfig dc;
  dc.m_pc = 64;
  dc.seed = 5;
  const auto a = generate(scenes, dc);
  dc.threads = 4;
  const auto b = generate(scenes, dc);
  REQUIRE(a.size() == b.size());
  std::set<PillarSource> seen;
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].source == b[k].source);
    CHECK(a[k].label == b[k].label);
    CHECK(a[k].features.valid == b[k].features.valid);
    CHECK(seen.insert(a[k].source).second);
    if (k > 0) CHECK(a[k - 1].source < a[k].source);
  }
}

TEST_CASE("balance caps negatives at the ratio") {
  std::vector<PillarSample> s;
  for (int k = 0; k < 10; ++k) s.push_back(sample_with_label(1, k));
  for (int k = 0; k < 100; ++k) s.push_back(sample_with_label(0, 100 + k));
  Rng rng(1);
  const auto out = balance(s, 1.5, rng);
  CHECK(std::ranges::count(out, 1, &PillarSample::label) == 10);
  CHECK(std::ranges::count(out, 0, &PillarSample::label) == 15);
}

TEST_CASE("balance keeps everything when already under the ratio") {
  std::vector<PillarSample> s;
  for (int k = 0; k < 10; ++k) s.push_back(sample_with_label(1, k));
  for (int k = 0; k < 12; ++k) s.push_back(sample_with_label(0, k));
  Rng rng(1);
  const auto out = balance(s, 1.5, rng);
  CHECK(out.size() == 22);
}

TEST_CASE("balance without positives is a data error") {
  std::vector<PillarSample> s{sample_with_label(0, 1), sample_with_label(0, 2)};
  Rng rng(1);
  CHECK_THROWS_AS(balance(s, 1.5, rng), DataError);
}

TEST_CASE("balance never drops a positive and shuffles") {
  std::vector<PillarSample> s;
  for (int k = 0; k < 40; ++k) s.push_back(sample_with_label(1, k));
  for (int k = 0; k < 400; ++k) s.push_back(sample_with_label(0, 1000 + k));
  Rng rng(2);
  const auto out = balance(s, 1.5, rng);
  std::set<double> pos;
  for (const auto& x : out) {
    if (x.label == 1) pos.insert(x.features.valid(0, 0));
  }
  CHECK(pos.size() == 40);
  // Label-sorted output would put all positives first.
  bool interleaved = false;
  for (std::size_t k = 0; k < 40; ++k) interleaved = interleaved || out[k].label == 0;
  CHECK(interleaved);
}

TEST_CASE("shard round-trip keeps float32 values and provenance") {
  SynthConfig cfg;
  const auto scenes = gen_corpus(cfg, 2, 8);
  DatasetConfig dc;
  dc.m_pc = 32;
  const auto samples = generate(scenes, dc);
  const auto back = decode_shard(encode_shard(samples, 32));
  REQUIRE(back.size() == samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    CHECK(back[k].label == samples[k].label);
    CHECK(back[k].source == samples[k].source);
    CHECK(back[k].features.valid == samples[k].features.valid.cast<float>().cast<double>());
  }
}

TEST_CASE("dataset directory round-trip across shards") {
  std::vector<PillarSample> s;
  for (int k = 0; k < 25; ++k) s.push_back(sample_with_label(k % 2, 0.5 * k));
  const auto dir = std::filesystem::temp_directory_path() / "lopguard_test_dataset";
  std::filesystem::remove_all(dir);
  write_dataset(dir, s, 4, 10);
  CHECK(std::filesystem::exists(dir / "shard_00002.bin"));
  const auto back = read_dataset(dir);
  REQUIRE(back.size() == 25);
  for (std::size_t k = 0; k < 25; ++k) CHECK(back[k].features.valid(0, 3) == s[k].features.valid(0, 3));
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated or foreign shards are rejected") {
  const auto bytes = encode_shard(std::vector<PillarSample>{sample_with_label(1, 2)}, 4);
  CHECK_THROWS_AS(decode_shard(std::span(bytes).first(bytes.size() - 3)), LengthError);
  auto bad = bytes;
  bad[0] = std::byte{'X'};
  CHECK_THROWS_AS(decode_shard(bad), ValueError);
}
