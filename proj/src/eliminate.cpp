#include "lopguard/eliminate.hpp"

#include <set>

#include "json.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/featurize.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

namespace {

void validate(const VoteConfig& cfg) {
  cfg.grid.validate();
  if (!(cfg.b >= 0.0 && cfg.b <= 1.0)) throw DomainError("boundary value must be in [0,1]");
  if (!(cfg.beta >= 0.0)) throw DomainError("beta must be non-negative");
}

}  // namespace

EliminationReport vote(std::span<const Detection> dets, const std::map<PillarIndex, PillarVote>& scores,
                       const VoteConfig& cfg) {
  validate(cfg);
  EliminationReport rep;
  rep.verdicts.resize(dets.size());
  parallel_for(dets.size(), cfg.threads, [&](std::size_t k) {
    auto& v = rep.verdicts[k];
    v.index = k;
    v.detection = dets[k];
    for (const auto& idx : intersecting_pillars(dets[k].box, cfg.grid, cfg.beta)) {
      const auto it = scores.find(idx);
      if (it == scores.end()) {
        if (!cfg.include_empty) continue;
      } else {
        v.votes += static_cast<std::size_t>(it->second.score);
      }
      v.pillars.push_back(idx);
    }
    v.pillar_count = v.pillars.size();
    v.ratio = v.pillar_count == 0 ? 0.0 : static_cast<double>(v.votes) / static_cast<double>(v.pillar_count);
    v.eliminated = v.ratio <= cfg.b;
  });
  for (const auto& v : rep.verdicts) {
    for (const auto& idx : v.pillars) {
      const auto it = scores.find(idx);
      rep.pillar_votes[idx] = it != scores.end() ? it->second : PillarVote{idx, 0, 0, 0.0};
    }
    if (v.eliminated) {
      rep.eliminated.push_back(v);
    } else {
      rep.kept.push_back(v.detection);
    }
  }
  return rep;
}

EliminationReport filter_detections(std::span<const Detection> dets, const PointCloud& pc,
                                    const LOPModel& model, const VoteConfig& cfg) {
  validate(cfg);
  const Partition part = partition(pc, cfg.grid);
  std::set<PillarIndex> needed;
  for (const auto& d : dets) {
    for (const auto& idx : intersecting_pillars(d.box, cfg.grid, cfg.beta)) {
      if (part.pillars.contains(idx)) needed.insert(idx);
    }
  }
  const std::vector<PillarIndex> order(needed.begin(), needed.end());
  std::vector<PillarFeatures> feats(order.size());
  parallel_for(order.size(), cfg.threads, [&](std::size_t k) {
    feats[k] = featurize_pillar(pc, part.pillars.at(order[k]), order[k], cfg.grid, cfg.m_pc, cfg.seed);
  });
  const auto preds = predict_batch(model, std::span<const PillarFeatures>(feats), cfg.threads);
  std::map<PillarIndex, PillarVote> scores;
  for (std::size_t k = 0; k < order.size(); ++k) {
    scores[order[k]] = {order[k], part.pillars.at(order[k]).size(), preds[k].score, preds[k].prob};
  }
  return vote(dets, scores, cfg);
}

std::string diagnostics_json(const EliminationReport& report, std::uint64_t frame_id) {
  using nlohmann::json;
  json dets = json::array();
  for (const auto& v : report.verdicts) {
    json pillars = json::array();
    for (const auto& idx : v.pillars) {
      const auto& pv = report.pillar_votes.at(idx);
      pillars.push_back({{"i", idx.i}, {"j", idx.j}, {"points", pv.points}, {"score", pv.score}, {"prob", pv.prob}});
    }
    dets.push_back({{"index", v.index},
                    {"ratio", v.ratio},
                    {"pillar_count", v.pillar_count},
                    {"votes", v.votes},
                    {"eliminated", v.eliminated},
                    {"confidence", v.detection.confidence},
                    {"pillars", std::move(pillars)}});
  }
  json j{{"frame_id", frame_id},
         {"kept", report.kept.size()},
         {"eliminated", report.eliminated.size()},
         {"detections", std::move(dets)}};
  return j.dump(2);
}

}  // namespace lopguard
