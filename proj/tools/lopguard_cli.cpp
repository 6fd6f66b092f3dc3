// Command-line driver: synth, gen-dataset, train-lop, attack, detect, defend,
// track, eval, analyze, run.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "lopguard/attacks.hpp"
#include "lopguard/baselines.hpp"
#include "lopguard/dataset.hpp"
#include "lopguard/detector.hpp"
#include "lopguard/eliminate.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/experiment.hpp"
#include "lopguard/io.hpp"
#include "lopguard/json_codec.hpp"
#include "lopguard/logging.hpp"
#include "lopguard/metrics.hpp"
#include "lopguard/predictor.hpp"
#include "lopguard/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lopguard;

namespace {

constexpr const char* kVersion = "0.1.0";

std::uint64_t fnv1a(std::span<const std::byte> data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (auto b : data) {
    h ^= std::to_integer<std::uint8_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Hash of a file, or of every regular file below a directory (sorted names).
std::string hash_input(const fs::path& p) {
  if (fs::is_regular_file(p)) return hex(fnv1a(read_binary_file(p)));
  if (!fs::is_directory(p)) throw IoError("missing input: " + p.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p)) {
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  }
  std::ranges::sort(files);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    const auto rel = fs::relative(f, p).generic_string();
    h = fnv1a(std::as_bytes(std::span(rel.data(), rel.size())), h);
    h = fnv1a(read_binary_file(f), h);
  }
  return hex(h);
}

struct Context {
  std::string config_path;
  int threads = 1;
  std::string log_level = "info";
  std::optional<std::uint64_t> seed;

  RunConfig config() const {
    RunConfig c;
    if (!config_path.empty()) c = run_config_from_json(jsonc::parse_document(read_text_file(config_path)));
    if (seed) c.seed = *seed;
    c.threads = threads;
    return c;
  }
};

void write_manifest(const fs::path& out_dir, const std::string& command, const RunConfig& cfg, const json& options,
                    const std::vector<fs::path>& inputs) {
  json in = json::object();
  for (const auto& p : inputs) in[p.generic_string()] = hash_input(p);
  json m{{"tool", "lopguard"},
         {"version", kVersion},
         {"command", command},
         {"config", run_config_to_json(cfg)},
         {"options", options},
         {"inputs", in}};
  fs::create_directories(out_dir);
  write_text_file(out_dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<Scene> load_scenes(const fs::path& dir) {
  std::vector<Scene> out;
  for (const auto& f : list_scene_files(dir)) out.push_back(load_scene(f));
  if (out.empty()) throw DataError("no scene_*.json files in " + dir.string());
  return out;
}

void save_scenes(const fs::path& dir, std::span<const Scene> scenes) {
  fs::create_directories(dir);
  for (const auto& s : scenes) save_scene(dir / scene_file_name(s.frame_id()), s);
}

std::string trace_file_name(std::uint64_t frame_id) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "trace_%06llu.json", static_cast<unsigned long long>(frame_id));
  return buf;
}

std::vector<AttackTrace> load_traces(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("trace_") && name.ends_with(".json")) files.push_back(e.path());
  }
  std::ranges::sort(files);
  std::vector<AttackTrace> out;
  for (const auto& f : files) out.push_back(trace_from_json(read_text_file(f)));
  return out;
}

std::vector<Detection> detections_or_detect(const Scene& s, const RunConfig& cfg) {
  if (s.detections) return *s.detections;
  DetectorConfig dc = cfg.detector;
  dc.grid = cfg.grid;
  return detect(s.cloud, dc);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pillar-level objectness defense against LiDAR spoofing: data generation, training, attacks, "
               "defenses and evaluation."};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  // Global options may also follow the subcommand.
  app.fallthrough();
  Context ctx;
  app.add_option("--config", ctx.config_path, "JSON run configuration; flags override its fields")
      ->check(CLI::ExistingFile);
  app.add_option("--threads", ctx.threads, "Worker threads; results are identical for any value")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_option("--log-level", ctx.log_level, "trace|debug|info|warn|error|off")->capture_default_str();
  app.add_option("--seed", ctx.seed, "Master seed (default from config, 1)");

  std::function<void()> action;

  // synth ------------------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "Generate labeled synthetic scenes");
  std::size_t n_scenes = 0;
  std::string out;
  synth_cmd->add_option("--scenes", n_scenes, "Number of scenes")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out", out, "Output directory")->required();
  synth_cmd->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      SynthConfig sc = cfg.synth;
      sc.grid = cfg.grid;
      const auto scenes = gen_corpus(sc, n_scenes, cfg.seed, cfg.threads);
      save_scenes(out, scenes);
      write_manifest(out, "synth", cfg, {{"scenes", n_scenes}}, {});
      spdlog::info("wrote {} scenes to {}", scenes.size(), out);
    };
  });

  // gen-dataset --------------------------------------------------------------
  auto* ds_cmd = app.add_subcommand("gen-dataset", "Featurize and label pillars into binary shards");
  std::string scenes_dir;
  bool no_balance = false;
  std::optional<double> neg_ratio;
  ds_cmd->add_option("--scenes", scenes_dir, "Scene directory")->required()->check(CLI::ExistingDirectory);
  ds_cmd->add_option("--out", out, "Dataset directory")->required();
  ds_cmd->add_flag("--no-balance", no_balance, "Keep every negative pillar");
  ds_cmd->add_option("--neg-ratio", neg_ratio, "Maximum negatives per positive (default 1.5)");
  ds_cmd->callback([&] {
    action = [&] {
      auto cfg = ctx.config();
      if (neg_ratio) cfg.neg_ratio = *neg_ratio;
      const auto scenes = load_scenes(scenes_dir);
      DatasetConfig dc{cfg.grid, cfg.m_pc, cfg.t_iou, derive_seed(cfg.seed, 12), cfg.threads};
      auto samples = generate(scenes, dc);
      if (!no_balance) {
        Rng rng(derive_seed(cfg.seed, 13));
        samples = balance(std::move(samples), cfg.neg_ratio, rng);
      }
      write_dataset(out, samples, cfg.m_pc);
      write_manifest(out, "gen-dataset", cfg, {{"balance", !no_balance}}, {scenes_dir});
      spdlog::info("wrote {} samples to {}", samples.size(), out);
    };
  });

  // train-lop ----------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train-lop", "Train the pillar objectness predictor");
  std::string dataset_dir;
  std::optional<int> epochs, batch_size;
  std::optional<double> lr;
  train_cmd->add_option("--dataset", dataset_dir, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", out, "Model file; training_log.json and manifest.json go next to it")->required();
  train_cmd->add_option("--epochs", epochs, "Maximum epochs (default 30)");
  train_cmd->add_option("--batch-size", batch_size, "Mini-batch size (default 64)");
  train_cmd->add_option("--lr", lr, "Adam learning rate (default 1e-3)");
  train_cmd->callback([&] {
    action = [&] {
      auto cfg = ctx.config();
      if (epochs) cfg.train.epochs = *epochs;
      if (batch_size) cfg.train.batch_size = *batch_size;
      if (lr) cfg.train.lr = *lr;
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed(cfg.seed, 14);
      tc.threads = cfg.threads;
      const auto data = read_dataset(dataset_dir);
      const auto res = train(data, tc);
      const fs::path model_path(out);
      const fs::path dir = model_path.has_parent_path() ? model_path.parent_path() : fs::path(".");
      fs::create_directories(dir);
      save_model(model_path, res.model);
      write_text_file(dir / "training_log.json", training_log_json(res.log) + "\n");
      write_manifest(dir, "train-lop", cfg, {{"model", model_path.filename().string()}}, {dataset_dir});
    };
  });

  // attack -------------------------------------------------------------------
  auto* attack_cmd = app.add_subcommand("attack", "Inject a forged car into every scene");
  std::string kind = "physical", donors_dir, model_path;
  std::optional<std::size_t> points;
  std::optional<int> steps;
  std::optional<double> step_size;
  attack_cmd->add_option("--scenes", scenes_dir, "Scene directory")->required()->check(CLI::ExistingDirectory);
  attack_cmd->add_option("--out", out, "Output directory (scenes and traces)")->required();
  attack_cmd->add_option("--kind", kind, "physical|random_inject|adaptive")
      ->capture_default_str()
      ->check(CLI::IsMember({"physical", "random_inject", "adaptive"}));
  attack_cmd->add_option("--donors", donors_dir, "Scenes to harvest donor cars from (default: --scenes)")
      ->check(CLI::ExistingDirectory);
  attack_cmd->add_option("--model", model_path, "LOP model (adaptive attack)")->check(CLI::ExistingFile);
  attack_cmd->add_option("--points", points, "Injected points for random_inject/adaptive (default 200)");
  attack_cmd->add_option("--steps", steps, "PGD steps (default 40)");
  attack_cmd->add_option("--step-size", step_size, "PGD step in meters (default 0.05)");
  attack_cmd->callback([&] {
    action = [&] {
      auto cfg = ctx.config();
      if (points) cfg.adaptive_points = *points;
      if (steps) cfg.adaptive_steps = *steps;
      if (step_size) cfg.adaptive_step_size = *step_size;
      const auto scenes = load_scenes(scenes_dir);
      const AttackKind ak = attack_kind_from_string(kind);
      std::optional<DonorLibrary> lib;
      std::optional<LOPModel> model;
      if (ak == AttackKind::physical) {
        const auto donor_scenes = donors_dir.empty() ? scenes : load_scenes(donors_dir);
        lib = build_donor_library(donor_scenes, cfg.donor_max_points, cfg.donor_min_points);
      }
      if (ak == AttackKind::adaptive) {
        if (model_path.empty()) throw CLI::RequiredError("--model");
        model = load_model(model_path);
      }
      std::vector<fs::path> inputs{scenes_dir};
      if (!donors_dir.empty()) inputs.emplace_back(donors_dir);
      if (!model_path.empty()) inputs.emplace_back(model_path);
      fs::create_directories(out);
      for (const auto& s : scenes) {
        Rng rng(derive_seed(cfg.seed, 22, s.frame_id()));
        AttackResult res;
        if (ak == AttackKind::physical) {
          res = physical_attack(s, *lib, rng, cfg.placement);
        } else {
          const double l = rng.uniform(cfg.synth.car_length.lo, cfg.synth.car_length.hi);
          const double w = rng.uniform(cfg.synth.car_width.lo, cfg.synth.car_width.hi);
          const double h = rng.uniform(cfg.synth.car_height.lo, cfg.synth.car_height.hi);
          const Box3D zone = sample_attack_pose(s, l, w, h, rng, cfg.placement);
          if (ak == AttackKind::random_inject) {
            res = random_inject_attack(s, zone, cfg.adaptive_points, rng);
          } else {
            AdaptiveConfig ac;
            ac.vote = vote_config(cfg, cfg.b);
            ac.n = cfg.adaptive_points;
            ac.steps = cfg.adaptive_steps;
            ac.step_size = cfg.adaptive_step_size;
            res = adaptive_attack(s, *model, zone, ac, rng);
          }
        }
        res.scene.provenance = std::string("attack:") + std::string(to_string(ak));
        save_scene(fs::path(out) / scene_file_name(s.frame_id()), res.scene);
        write_text_file(fs::path(out) / trace_file_name(s.frame_id()), trace_to_json(res.trace) + "\n");
      }
      write_manifest(out, "attack", cfg, {{"kind", kind}}, inputs);
    };
  });

  // detect -------------------------------------------------------------------
  auto* detect_cmd = app.add_subcommand("detect", "Run the occupancy-clustering detector");
  detect_cmd->add_option("--scenes", scenes_dir, "Scene directory")->required()->check(CLI::ExistingDirectory);
  detect_cmd->add_option("--out", out, "Output directory (scenes with detections)")->required();
  detect_cmd->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      auto scenes = load_scenes(scenes_dir);
      DetectorConfig dc = cfg.detector;
      dc.grid = cfg.grid;
      for (auto& s : scenes) s.detections = detect(s.cloud, dc);
      save_scenes(out, scenes);
      write_manifest(out, "detect", cfg, json::object(), {scenes_dir});
    };
  });

  // defend -------------------------------------------------------------------
  auto* defend_cmd = app.add_subcommand("defend", "Apply a defense and keep the surviving detections");
  std::string method = "lop";
  std::optional<double> b_value, r_thresh, sor_alpha, cell;
  std::optional<std::size_t> srs_m;
  std::optional<int> sor_k;
  bool include_empty = false;
  defend_cmd->add_option("--scenes", scenes_dir, "Scene directory (detections are computed when absent)")
      ->required()
      ->check(CLI::ExistingDirectory);
  defend_cmd->add_option("--out", out, "Output directory")->required();
  defend_cmd->add_option("--method", method, "none|lop|srs|sor|fsd|lpd")
      ->capture_default_str()
      ->check(CLI::IsMember({"none", "lop", "srs", "sor", "fsd", "lpd", "carlo_fsd", "carlo_lpd"}));
  defend_cmd->add_option("--model", model_path, "LOP model file")->check(CLI::ExistingFile);
  defend_cmd->add_option("--B", b_value, "Boundary value: eliminate when vote ratio <= B (default 0.5)");
  defend_cmd->add_flag("--include-empty", include_empty, "Count empty intersecting pillars in the vote");
  defend_cmd->add_option("--M", srs_m, "SRS sample size (default 500)");
  defend_cmd->add_option("--k", sor_k, "SOR neighbors (default 2)");
  defend_cmd->add_option("--alpha", sor_alpha, "SOR band width in sigmas (default 1.1)");
  defend_cmd->add_option("--r", r_thresh, "CARLO anomaly threshold (default 0.7)");
  defend_cmd->add_option("--cell", cell, "CARLO-FSD cell side in meters (default 0.25)");
  defend_cmd->callback([&] {
    action = [&] {
      auto cfg = ctx.config();
      DefenseSpec spec;
      spec.kind = defense_kind_from_string(method);
      spec.b = b_value.value_or(cfg.b);
      spec.srs_m = srs_m.value_or(cfg.srs_m);
      spec.sor_k = sor_k.value_or(cfg.sor_k);
      spec.sor_alpha = sor_alpha.value_or(cfg.sor_alpha);
      spec.cell = cell.value_or(cfg.fsd_cell);
      spec.r_thresh = r_thresh.value_or(spec.kind == DefenseKind::carlo_fsd ? cfg.fsd_r : cfg.lpd_r);
      std::optional<LOPModel> model;
      std::vector<fs::path> inputs{scenes_dir};
      if (spec.kind == DefenseKind::lop) {
        if (model_path.empty()) throw CLI::RequiredError("--model");
        model = load_model(model_path);
        inputs.emplace_back(model_path);
      }
      auto scenes = load_scenes(scenes_dir);
      fs::create_directories(out);
      for (auto& s : scenes) {
        std::optional<std::vector<Detection>> dets;
        if (spec.kind != DefenseKind::srs && spec.kind != DefenseKind::sor) dets = detections_or_detect(s, cfg);
        if (spec.kind == DefenseKind::lop) {
          VoteConfig vc = vote_config(cfg, spec.b);
          vc.include_empty = include_empty;
          vc.threads = cfg.threads;
          const auto rep = filter_detections(*dets, s.cloud, *model, vc);
          write_text_file(fs::path(out) / ("diagnostics_" + scene_file_name(s.frame_id()).substr(6)),
                          diagnostics_json(rep, s.frame_id()) + "\n");
          s.detections = rep.kept;
        } else {
          s.detections = apply_defense(s.cloud, dets, spec, cfg, nullptr);
        }
        s.provenance = "defense:" + spec.label() + (spec.params().empty() ? "" : " " + spec.params());
        save_scene(fs::path(out) / scene_file_name(s.frame_id()), s);
      }
      write_manifest(out, "defend", cfg, {{"method", spec.label()}, {"params", spec.params()}}, inputs);
    };
  });

  // track --------------------------------------------------------------------
  auto* track_cmd = app.add_subcommand("track", "Run the track lifecycle over scenes in frame order");
  TrackerConfig tcfg;
  track_cmd->add_option("--scenes", scenes_dir, "Scenes with detections")->required()->check(CLI::ExistingDirectory);
  track_cmd->add_option("--out", out, "Timeline file (JSON lines)")->required();
  track_cmd->add_option("--gate", tcfg.gate, "Association gate in meters")->capture_default_str();
  track_cmd->add_option("--confirm-hits", tcfg.confirm_hits, "Consecutive hits to confirm")->capture_default_str();
  track_cmd->add_option("--max-misses", tcfg.max_misses, "Consecutive misses before a track dies")
      ->capture_default_str();
  track_cmd->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      const auto scenes = load_scenes(scenes_dir);
      Tracker tracker(tcfg);
      std::string lines;
      for (const auto& s : scenes) {
        tracker.step(detections_or_detect(s, cfg));
        lines += tracker.timeline_lines();
      }
      const fs::path p(out);
      const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
      fs::create_directories(dir);
      write_text_file(p, lines);
    };
  });

  // eval ---------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Precision, AP and attack success rate report");
  std::string traces_dir, label = "unnamed", params;
  eval_cmd->add_option("--scenes", scenes_dir, "Scenes with (defended) detections")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--traces", traces_dir, "Attack traces (enables ASR)")->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--out", out, "Report directory (metrics.csv, report.json)")->required();
  eval_cmd->add_option("--defense", label, "Defense label for the report row")->capture_default_str();
  eval_cmd->add_option("--params", params, "Parameter string for the report row");
  eval_cmd->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      const auto scenes = load_scenes(scenes_dir);
      std::vector<std::vector<Detection>> dets;
      for (const auto& s : scenes) dets.push_back(detections_or_detect(s, cfg));
      std::vector<AttackTrace> traces;
      std::vector<std::vector<Detection>> att;
      std::vector<fs::path> inputs{scenes_dir};
      if (!traces_dir.empty()) {
        traces = load_traces(traces_dir);
        inputs.emplace_back(traces_dir);
        std::map<std::uint64_t, std::size_t> pos;
        for (std::size_t k = 0; k < scenes.size(); ++k) pos[scenes[k].frame_id()] = k;
        for (const auto& t : traces) {
          const auto it = pos.find(t.base_frame_id);
          if (it == pos.end()) throw DataError("trace for unknown frame " + std::to_string(t.base_frame_id));
          att.push_back(dets[it->second]);
        }
      }
      DefenseRow row = evaluate_defense(dets, att, {}, scenes, traces, cfg.c_conf, cfg.c_iou);
      row.defense = label;
      row.params = params;
      row.attack = traces.empty() ? "none" : std::string(to_string(traces.front().kind));
      // Without traces the AP and precision columns describe the given scenes.
      if (traces.empty()) {
        row.precision_attacked = row.precision_clean;
        row.ap_attacked = row.ap_clean;
      }
      json frames = json::array();
      for (std::size_t k = 0; k < scenes.size(); ++k) {
        const auto mr = match(dets[k], scenes[k].ground_truth, cfg.c_conf, cfg.c_iou);
        frames.push_back({{"frame_id", scenes[k].frame_id()}, {"tp", mr.tp}, {"fp", mr.fp}, {"fn", mr.fn}});
      }
      fs::create_directories(out);
      write_text_file(fs::path(out) / "metrics.csv", csv_header() + csv_row(row));
      json rep{{"defense", row.defense},
               {"params", row.params},
               {"attack", row.attack},
               {"AP", row.ap_attacked},
               {"precision", row.precision_attacked},
               {"ASR", traces.empty() ? json(nullptr) : json(row.asr)},
               {"attempts", row.attempts},
               {"frames", frames}};
      write_text_file(fs::path(out) / "report.json", rep.dump(2) + "\n");
      write_manifest(out, "eval", cfg, {{"defense", label}, {"params", params}}, inputs);
      std::cout << csv_header() << csv_row(row);
    };
  });

  // analyze ------------------------------------------------------------------
  auto* analyze_cmd = app.add_subcommand("analyze", "Depth-density profile and local/global set distances");
  std::string clean_dir;
  analyze_cmd->add_option("--scenes", scenes_dir, "Clean scenes with ground truth")
      ->required()
      ->check(CLI::ExistingDirectory);
  analyze_cmd->add_option("--attacked", clean_dir, "Attacked scenes (with traces) to add forged objects")
      ->check(CLI::ExistingDirectory);
  analyze_cmd->add_option("--out", out, "Output directory")->required();
  analyze_cmd->callback([&] {
    action = [&] {
      const auto cfg = ctx.config();
      const auto scenes = load_scenes(scenes_dir);
      std::vector<AttackTrace> traces;
      std::vector<Scene> attacked;
      std::vector<fs::path> inputs{scenes_dir};
      if (!clean_dir.empty()) {
        traces = load_traces(clean_dir);
        inputs.emplace_back(clean_dir);
        for (const auto& t : traces) attacked.push_back(load_scene(fs::path(clean_dir) / scene_file_name(t.base_frame_id)));
      }
      const auto profile = depth_density_profile(scenes, traces, attacked);
      std::string csv = "frame_id,depth,density,points,forged,occluded\n";
      for (const auto& r : profile) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%zu,%d,%d\n", static_cast<unsigned long long>(r.frame_id),
                      r.depth, r.density, r.points, r.forged ? 1 : 0, r.occluded ? 1 : 0);
        csv += buf;
      }
      fs::create_directories(out);
      write_text_file(fs::path(out) / "density.csv", csv);
      json summary = json::object();
      try {
        const auto fit = fit_power_law(profile, [](const DensityRecord& r) { return !r.forged && !r.occluded; });
        summary["fit"] = {{"log_c", fit.log_c}, {"exponent", fit.exponent}, {"correlation", fit.correlation},
                          {"n", fit.n}};
        std::size_t near = 0, below = 0;
        for (const auto& r : profile) {
          if (!r.forged || r.depth > 10.0) continue;
          ++near;
          below += r.density * 4.0 <= fit.predict(r.depth);
        }
        summary["forged_near"] = near;
        summary["forged_below_law_fraction"] = near ? static_cast<double>(below) / static_cast<double>(near) : 0.0;
      } catch (const DataError& e) {
        summary["fit"] = nullptr;
        spdlog::warn("density fit skipped: {}", e.what());
      }

      // Each forged object against the unoccluded real car of its scene
      // closest in depth, both in their own box frames.
      std::string diffs = "frame_id,metric,d_global,d_avg_local,d_half_max_local,subsets\n";
      const GridSpec local{-5.0, 5.0, -5.0, 5.0, cfg.grid.cell};
      std::map<std::uint64_t, const Scene*> by_frame;
      for (const auto& s : scenes) by_frame[s.frame_id()] = &s;
      for (const auto& t : traces) {
        const auto it = by_frame.find(t.base_frame_id);
        if (it == by_frame.end() || t.injected_points.empty()) continue;
        const Scene& s = *it->second;
        const GroundTruthObject* ref = nullptr;
        for (const auto& g : s.ground_truth) {
          if (g.occluded) continue;
          if (!ref || std::abs(box_depth(g.box) - box_depth(t.target_box)) <
                          std::abs(box_depth(ref->box) - box_depth(t.target_box))) {
            ref = &g;
          }
        }
        if (!ref) continue;
        auto to_local = [](std::span<const Point> pts, const Box3D& box) {
          std::vector<Point> outp;
          for (const auto& p : pts) {
            if (!point_in_box(p, box)) continue;
            const auto q = to_box_frame(p, box);
            outp.push_back({q[0], q[1], q[2], p.intensity});
          }
          return outp;
        };
        const auto s_r = to_local(s.cloud.points, ref->box);
        const auto s_f = to_local(t.injected_points, t.target_box);
        if (s_r.empty() || s_f.empty()) continue;
        for (auto metric : {SetMetric::chamfer, SetMetric::knn}) {
          if (metric == SetMetric::knn && s_r.size() < 10) continue;
          const auto st = local_global_diffs(s_r, s_f, local, metric, 10);
          char buf[200];
          std::snprintf(buf, sizeof buf, "%llu,%s,%.6f,%.6f,%.6f,%zu\n",
                        static_cast<unsigned long long>(t.base_frame_id),
                        metric == SetMetric::chamfer ? "chamfer" : "knn", st.d_global, st.d_avg_local,
                        st.d_half_max_local, st.subsets);
          diffs += buf;
        }
      }
      write_text_file(fs::path(out) / "diffs.csv", diffs);
      write_text_file(fs::path(out) / "summary.json", summary.dump(2) + "\n");
      write_manifest(out, "analyze", cfg, json::object(), inputs);
    };
  });

  // run ----------------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Full seeded pipeline: synth, train, attack, defend, evaluate");
  std::optional<std::size_t> train_scenes, eval_scenes, adaptive_scenes;
  run_cmd->add_option("--out", out, "Report directory")->required();
  run_cmd->add_option("--train-scenes", train_scenes, "Training scenes (default 200)");
  run_cmd->add_option("--eval-scenes", eval_scenes, "Evaluation scenes (default 200)");
  run_cmd->add_option("--adaptive-scenes", adaptive_scenes, "Scenes for the adaptive attack (default 200)");
  run_cmd->add_option("--epochs", epochs, "Maximum training epochs (default 30)");
  run_cmd->callback([&] {
    action = [&] {
      auto cfg = ctx.config();
      if (train_scenes) cfg.train_scenes = *train_scenes;
      if (eval_scenes) cfg.eval_scenes = *eval_scenes;
      if (adaptive_scenes) cfg.adaptive_scenes = *adaptive_scenes;
      if (epochs) cfg.train.epochs = *epochs;
      const auto rep = run_experiment(cfg);
      fs::create_directories(out);
      write_text_file(fs::path(out) / "metrics.csv", rep.to_csv());
      write_text_file(fs::path(out) / "report.json", rep.to_json().dump(2) + "\n");
      write_manifest(out, "run", cfg, json::object(), {});
      std::cout << rep.to_csv();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    init_logging(ctx.log_level);
    if (action) action();
  } catch (const CLI::RequiredError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
