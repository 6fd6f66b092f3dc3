#include <cmath>

#include "doctest.h"
#include "json.hpp"
#include "lopguard/eliminate.hpp"
#include "lopguard/errors.hpp"

using namespace lopguard;

namespace {

VoteConfig ten_grid(double b) {
  VoteConfig c;
  c.grid = {0.0, 10.0, 0.0, 10.0, 1.0};
  c.b = b;
  return c;
}

// The 2 x 2 box on vertex (5, 5) touches pillars (4,4), (4,5), (5,4), (5,5).
Detection square_det() { return {make_box(5, 5, 0, 2, 2, 1, 0), Category::car, 0.9}; }

std::map<PillarIndex, PillarVote> scores_of(std::initializer_list<std::pair<PillarIndex, int>> s) {
  std::map<PillarIndex, PillarVote> out;
  for (const auto& [idx, score] : s) out[idx] = {idx, 3, score, score ? 0.8 : 0.2};
  return out;
}

LOPModel constant_model(double logit_gap) {
  LOPModel m;
  m.network.bias(4)[1] = logit_gap;
  return m;
}

}  // namespace

TEST_CASE("all pillars vote real: kept") {
  const std::vector<Detection> dets{square_det()};
  const auto rep = vote(dets, scores_of({{{4, 4}, 1}, {{4, 5}, 1}, {{5, 4}, 1}, {{5, 5}, 1}}), ten_grid(0.5));
  CHECK(rep.kept.size() == 1);
  CHECK(rep.verdicts[0].ratio == 1.0);
  CHECK(rep.verdicts[0].pillar_count == 4);
}

TEST_CASE("all pillars vote fake: eliminated") {
  const std::vector<Detection> dets{square_det()};
  const auto rep = vote(dets, scores_of({{{4, 4}, 0}, {{4, 5}, 0}, {{5, 4}, 0}, {{5, 5}, 0}}), ten_grid(0.5));
  CHECK(rep.eliminated.size() == 1);
  CHECK(rep.verdicts[0].ratio == 0.0);
}

TEST_CASE("ratio equal to B is eliminated") {
  const std::vector<Detection> dets{square_det()};
  const auto rep = vote(dets, scores_of({{{4, 4}, 1}, {{4, 5}, 0}, {{5, 4}, 1}, {{5, 5}, 0}}), ten_grid(0.5));
  CHECK(rep.verdicts[0].ratio == 0.5);
  CHECK(rep.verdicts[0].eliminated);
  CHECK(rep.kept.empty());
}

TEST_CASE("empty pillars stay out of the denominator unless asked") {
  const std::vector<Detection> dets{square_det()};
  const auto scores = scores_of({{{4, 4}, 1}, {{5, 5}, 1}});
  const auto plain = vote(dets, scores, ten_grid(0.5));
  CHECK(plain.verdicts[0].pillar_count == 2);
  CHECK(plain.verdicts[0].ratio == 1.0);
  auto cfg = ten_grid(0.5);
  cfg.include_empty = true;
  const auto with_empty = vote(dets, scores, cfg);
  CHECK(with_empty.verdicts[0].pillar_count == 4);
  CHECK(with_empty.verdicts[0].eliminated);
}

TEST_CASE("detection over no occupied pillar is eliminated") {
  const std::vector<Detection> dets{{make_box(1.5, 8.5, 0, 1, 1, 1, 0), Category::car, 1.0}};
  const auto rep = vote(dets, scores_of({{{4, 4}, 1}}), ten_grid(0.0));
  CHECK(rep.verdicts[0].pillar_count == 0);
  CHECK(rep.verdicts[0].ratio == 0.0);
  CHECK(rep.verdicts[0].eliminated);
}

TEST_CASE("out-of-range parameters are rejected") {
  CHECK_THROWS_AS(vote({}, {}, ten_grid(1.5)), DomainError);
  auto cfg = ten_grid(0.5);
  cfg.beta = -1.0;
  CHECK_THROWS_AS(vote({}, {}, cfg), DomainError);
}

TEST_CASE("vote properties on random frames") {
  Rng rng(1);
  for (int frame = 0; frame < 50; ++frame) {
    std::map<PillarIndex, PillarVote> scores;
    for (int i = 0; i < 10; ++i) {
      for (int j = 0; j < 10; ++j) {
        if (rng.uniform() < 0.6) scores[{i, j}] = {{i, j}, 1, static_cast<int>(rng.below(2)), 0.5};
      }
    }
    std::vector<Detection> dets;
    for (int k = 0; k < 8; ++k) {
      dets.push_back({make_box(rng.uniform(0, 10), rng.uniform(0, 10), 0, rng.uniform(0.5, 5), rng.uniform(0.5, 2),
                               1, rng.uniform(-3, 3)),
                      Category::car, rng.uniform()});
    }
    const auto low = vote(dets, scores, ten_grid(0.5));
    const auto high = vote(dets, scores, ten_grid(0.6));
    CHECK(low.kept.size() + low.eliminated.size() == dets.size());
    for (std::size_t k = 0; k < dets.size(); ++k) {
      // Monotone in B.
      if (low.verdicts[k].eliminated) CHECK(high.verdicts[k].eliminated);
      CHECK(low.verdicts[k].detection == dets[k]);
    }
    // Idempotent on the kept set.
    const auto again = vote(low.kept, scores, ten_grid(0.5));
    CHECK(again.eliminated.empty());
    CHECK(again.kept == low.kept);
  }
}

TEST_CASE("filter_detections scores each touched pillar once") {
  PointCloud pc;
  for (double x : {4.5, 5.5}) {
    for (double y : {4.5, 5.5}) pc.points.push_back({x, y, 0, 0.5});
  }
  pc.points.push_back({9.5, 9.5, 0, 0.5});
  const std::vector<Detection> dets{square_det(), {make_box(1.5, 1.5, 0, 1, 1, 1, 0), Category::car, 0.8}};
  const auto real = filter_detections(dets, pc, constant_model(3.0), ten_grid(0.5));
  REQUIRE(real.verdicts.size() == 2);
  CHECK_FALSE(real.verdicts[0].eliminated);
  CHECK(real.verdicts[0].votes == 4);
  // The second box covers no point.
  CHECK(real.verdicts[1].eliminated);
  CHECK(real.pillar_votes.size() == 4);
  CHECK_FALSE(real.pillar_votes.contains({9, 9}));
  for (const auto& [idx, pv] : real.pillar_votes) CHECK(pv.points == 1);

  const auto fake = filter_detections(dets, pc, constant_model(-3.0), ten_grid(0.5));
  CHECK(fake.kept.empty());
}

TEST_CASE("diagnostics sidecar lists the votes") {
  const std::vector<Detection> dets{square_det()};
  const auto rep = vote(dets, scores_of({{{4, 4}, 1}, {{5, 5}, 0}}), ten_grid(0.5));
  const auto j = nlohmann::json::parse(diagnostics_json(rep, 12));
  CHECK(j["frame_id"] == 12);
  CHECK(j["eliminated"] == 1);
  CHECK(j["detections"][0]["ratio"] == 0.5);
  CHECK(j["detections"][0]["pillars"].size() == 2);
}
