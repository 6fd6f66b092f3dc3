// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any selected criterion fails.
//
//   acceptance all                   every criterion, end-to-end run in-process
//   acceptance <id>... [--report F]  selected criteria (1..13, heldout)
//   acceptance prepare F             run the default experiment, write F

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "json.hpp"
#include "lopguard/dataset.hpp"
#include "lopguard/detector.hpp"
#include "lopguard/experiment.hpp"
#include "lopguard/logging.hpp"
#include "lopguard/metrics.hpp"
#include "lopguard/nn.hpp"
#include "lopguard/synth.hpp"
#include "oracles.hpp"

using namespace lopguard;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Criterion 1 -----------------------------------------------------------------

Outcome geometry_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  bool self_exact = true;
  for (int k = 0; k < 1000; ++k) {
    auto draw = [&] {
      return make_box(rng.uniform(0, 3), rng.uniform(0, 3), 0, rng.uniform(0.5, 5), rng.uniform(0.5, 3), 1,
                      rng.uniform(-std::numbers::pi, std::numbers::pi));
    };
    const Box3D a = draw(), b = draw();
    const double exact = iou_2d(footprint(a), footprint(b));
    const double mc = oracle::mc_iou(oracle::rect_corners(a.cx, a.cy, a.l, a.w, a.yaw),
                                     oracle::rect_corners(b.cx, b.cy, b.l, b.w, b.yaw), 1000, rng);
    worst = std::max(worst, std::abs(exact - mc));
    self_exact = self_exact && iou_2d(footprint(a), footprint(a)) == 1.0;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && self_exact && secs < 60.0,
          fmt("max |iou - mc| = %.2e over 1000 pairs, self-IoU exact: %s, %.1f s", worst, self_exact ? "yes" : "no",
              secs)};
}

// Criterion 2 -----------------------------------------------------------------

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_param = 0.0, worst_input = 0.0;
  std::size_t params = 0, inputs = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = gradcheck::check_config(1000 + seed, 600);
    worst_param = std::max(worst_param, r.worst_param);
    worst_input = std::max(worst_input, r.worst_input);
    params += r.params_checked;
    inputs += r.inputs_checked;
  }
  const double secs = seconds_since(t0);
  return {worst_param <= 1e-5 && worst_input <= 1e-5 && secs < 60.0,
          fmt("20 configs, %zu parameter and %zu input coordinates, worst rel. error %.2e / %.2e, %.1f s", params,
              inputs, worst_param, worst_input, secs)};
}

// Criterion 3 -----------------------------------------------------------------

Outcome focal_values() {
  const double at_one = focal_loss({0.0, 1.0}, 1, 1.0, 2.0);
  const double at_half = focal_loss({0.5, 0.5}, 1, 1.0, 2.0);
  const double err = std::abs(at_half - 0.25 * std::numbers::ln2);
  return {at_one == 0.0 && err <= 1e-12, fmt("FL(p_y=1) = %g, |FL(0.5) - ln2/4| = %.1e", at_one + 0.0, err)};
}

// Criterion 4 -----------------------------------------------------------------

Outcome labeling_oracle() {
  SynthConfig cfg;
  const auto scenes = gen_corpus(cfg, 50, 404);
  const GridSpec& g = cfg.grid;
  std::size_t cells = 0, mismatches = 0, positives = 0;
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
          if (inter / ((x1 - x0) * (y1 - y0) + b.l * b.w - inter) > 1e-6) expected = 1;
        }
        positives += expected;
        mismatches += label_pillar({i, j}, g, s.ground_truth, 1e-6) != expected;
        ++cells;
      }
    }
  }
  return {mismatches == 0, fmt("%zu cells over 50 scenes (%zu positive), %zu mismatches", cells, positives, mismatches)};
}

// Criterion 5 -----------------------------------------------------------------

Outcome ap_hand_case() {
  auto car = [](double cx) { return make_box(cx, 0, -0.9, 4, 1.8, 1.5, 0); };
  const std::vector<GroundTruthObject> gts{{Category::car, car(10), false}, {Category::car, car(20), false}};
  const std::vector<Detection> dets{{car(10), Category::car, 0.9}, {car(40), Category::car, 0.8},
                                    {car(20), Category::car, 0.7}};
  const std::vector<FrameDetections> hand{{dets, gts}};
  const double ap = ap_11point(hand, 0.5);
  const std::vector<Detection> perfect{{car(10), Category::car, 1.0}, {car(20), Category::car, 1.0}};
  const std::vector<FrameDetections> ideal{{perfect, gts}};
  const double ap_perfect = ap_11point(ideal, 0.5);
  const double err = std::abs(ap - 28.0 / 33.0);
  return {err <= 1e-12 && ap_perfect == 1.0, fmt("|AP - 28/33| = %.1e, perfect AP = %.17g", err, ap_perfect)};
}

// Criteria 6-9, 13 and the held-out accuracy read the default experiment -----

struct Rows {
  json report;
  const json& row(const std::string& defense, const std::string& params, const std::string& attack) const {
    for (const auto& r : report["rows"]) {
      if (r["defense"] == defense && r["params"] == params && r["attack"] == attack) return r;
    }
    throw std::runtime_error("missing row " + defense + " " + params + " " + attack);
  }
};

Outcome end_to_end(const Rows& r) {
  const auto& none = r.row("none", "", "physical");
  const auto& lop = r.row("lop", "B=0.5", "physical");
  const double asr0 = none["ASR"], asr1 = lop["ASR"];
  const double p0 = none["precision_clean"], p1 = lop["precision_clean"];
  const bool pass = asr0 >= 0.6 && asr1 <= 0.5 * asr0 && p0 - p1 <= 0.05;
  return {pass, fmt("undefended ASR %.3f, LOP(B=0.5) ASR %.3f (ratio %.3f), real-car precision %.3f -> %.3f", asr0,
                    asr1, asr1 / asr0, p0, p1)};
}

Outcome baseline_direction(const Rows& r) {
  const double lop = r.row("lop", "B=0.5", "physical")["precision"];
  const double srs = r.row("srs", "M=500", "physical")["precision"];
  const double sor = r.row("sor", "k=2 alpha=1.1", "physical")["precision"];
  const double lpd = r.row("carlo_lpd", "r=0.7", "physical")["precision"];
  return {lop >= srs && lop >= sor && lop >= lpd,
          fmt("post-defense precision LOP %.3f, SRS %.3f, SOR %.3f, CARLO-LPD %.3f", lop, srs, sor, lpd)};
}

Outcome adaptive_resilience(const Rows& r) {
  const double none = r.row("none", "", "adaptive")["ASR"];
  const double lop = r.row("lop", "B=0.6", "adaptive")["ASR"];
  return {lop <= 0.6 * none, fmt("adaptive ASR: none %.3f, LOP(B=0.6) %.3f, bound %.3f", none, lop, 0.6 * none)};
}

Outcome monotonicity(const Rows& r) {
  const auto& m = r.report["monotonicity"];
  const std::size_t frames = m["frames_checked"], violations = m["violations"].size();
  return {violations == 0 && frames > 0, fmt("%zu frames, %zu violations", frames, violations)};
}

Outcome density_reproduction(const Rows& r) {
  const auto& d = r.report["density"];
  const double rho = d["log_log_correlation"], below = d["forged_below_law_fraction"];
  const std::size_t near = d["forged_near"];
  return {rho <= -0.8 && below >= 0.9 && near > 0,
          fmt("log-log correlation %.3f, %.3f of %zu forged objects at <= 10 m below law/4", rho, below, near)};
}

Outcome heldout_accuracy(const Rows& r) {
  const double acc = r.report["heldout_accuracy"];
  return {acc >= 0.9, fmt("held-out pillar accuracy %.4f (bound 0.9)", acc)};
}

// Criterion 10 ----------------------------------------------------------------

Outcome tracker_lifecycle() {
  const std::vector<Detection> one{{make_box(8, 0, -0.9, 4, 1.8, 1.5, 0), Category::car, 0.9}};
  bool ok = true;
  int confirmed_on = -1, dead_on = -1;
  Tracker tr;
  for (int f = 1; f <= 6; ++f) {
    tr.step(one);
    if (confirmed_on < 0 && tr.tracks()[0].state == TrackState::confirmed) confirmed_on = f;
  }
  for (int miss = 1; miss <= 70 && dead_on < 0; ++miss) {
    tr.step({});
    if (tr.tracks()[0].state == TrackState::dead) dead_on = miss;
  }
  ok = confirmed_on == 6 && dead_on == 60;
  // An interruption restarts the count; a single hit resets the misses.
  Tracker t2;
  for (int f = 0; f < 5; ++f) t2.step(one);
  t2.step({});
  for (int f = 0; f < 5; ++f) t2.step(one);
  ok = ok && t2.tracks()[0].state == TrackState::tentative;
  t2.step(one);
  ok = ok && t2.tracks()[0].state == TrackState::confirmed;
  for (int f = 0; f < 59; ++f) t2.step({});
  t2.step(one);
  for (int f = 0; f < 59; ++f) t2.step({});
  ok = ok && t2.tracks()[0].state == TrackState::confirmed && t2.tracks().size() == 1;
  t2.step({});
  ok = ok && t2.tracks()[0].state == TrackState::dead;
  return {ok, fmt("confirmed on hit %d, dead on miss %d; interrupted scripts as expected: %s", confirmed_on, dead_on,
                  ok ? "yes" : "no")};
}

// Criterion 11 ----------------------------------------------------------------

Outcome determinism() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig cfg;
  cfg.train_scenes = 20;
  cfg.eval_scenes = 12;
  cfg.adaptive_scenes = 4;
  cfg.adaptive_steps = 5;
  cfg.train.epochs = 3;
  cfg.seed = 11;
  auto bytes = [](const ExperimentReport& r) { return r.to_json().dump(2) + "\n" + r.to_csv(); };
  cfg.threads = 1;
  const auto a = bytes(run_experiment(cfg));
  const auto b = bytes(run_experiment(cfg));
  cfg.threads = 4;
  const auto c = bytes(run_experiment(cfg));
  return {a == b && a == c, fmt("reports of %zu bytes; run-to-run identical: %s, threads 1 vs 4 identical: %s, %.1f s",
                                a.size(), a == b ? "yes" : "no", a == c ? "yes" : "no", seconds_since(t0))};
}

// Criterion 12 ----------------------------------------------------------------

Outcome set_distance_oracle() {
  Rng rng(1212);
  auto set = [&] {
    std::vector<Point> out(1 + rng.below(10));
    for (auto& p : out) p = {rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-2, 2), 0};
    return out;
  };
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto s = set(), sp = set();
    const int k = 1 + static_cast<int>(rng.below(s.size()));
    mismatches += chamfer(s, sp) != oracle::chamfer(s, sp);
    mismatches += knn_dist(s, sp, k) != oracle::knn(s, sp, k);
  }
  return {mismatches == 0, fmt("500 trials, %zu inexact results", mismatches)};
}

// Driver ----------------------------------------------------------------------

json load_or_run(const std::optional<std::filesystem::path>& report_path) {
  if (report_path && std::filesystem::exists(*report_path)) {
    std::ifstream in(*report_path);
    return json::parse(in);
  }
  std::printf("running the default experiment\n");
  std::fflush(stdout);
  const auto t0 = std::chrono::steady_clock::now();
  auto j = run_experiment(RunConfig{}).to_json();
  std::printf("default experiment took %.1f s\n", seconds_since(t0));
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging("warn");
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.size() == 2 && args[0] == "prepare") {
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = run_experiment(RunConfig{});
    std::ofstream(args[1]) << report.to_json().dump(2) << "\n";
    std::printf("default experiment written to %s in %.1f s\n", args[1].c_str(), seconds_since(t0));
    return 0;
  }

  std::optional<std::filesystem::path> report_path;
  std::vector<std::string> ids;
  for (std::size_t k = 0; k < args.size(); ++k) {
    if (args[k] == "--report" && k + 1 < args.size()) {
      report_path = args[++k];
    } else if (args[k] == "all") {
      ids = {"1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "11", "12", "13", "heldout"};
    } else {
      ids.push_back(args[k]);
    }
  }
  if (ids.empty()) {
    std::fprintf(stderr, "usage: acceptance all | <id>... [--report FILE] | prepare FILE\n");
    return 2;
  }

  const std::map<std::string, std::function<Outcome()>> standalone{
      {"1", geometry_oracle},  {"2", gradient_check},     {"3", focal_values},  {"4", labeling_oracle},
      {"5", ap_hand_case},     {"10", tracker_lifecycle}, {"11", determinism}, {"12", set_distance_oracle}};
  const std::map<std::string, std::function<Outcome(const Rows&)>> from_report{
      {"6", end_to_end},   {"7", baseline_direction},   {"8", adaptive_resilience},
      {"9", monotonicity}, {"13", density_reproduction}, {"heldout", heldout_accuracy}};

  std::optional<Rows> rows;
  bool all_pass = true;
  for (const auto& id : ids) {
    Outcome o;
    if (auto it = standalone.find(id); it != standalone.end()) {
      o = it->second();
    } else if (auto jt = from_report.find(id); jt != from_report.end()) {
      if (!rows) rows = Rows{load_or_run(report_path)};
      o = jt->second(*rows);
    } else {
      std::fprintf(stderr, "unknown criterion %s\n", id.c_str());
      return 2;
    }
    const std::string name = id == "heldout" ? "held-out accuracy" : "criterion " + id;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
