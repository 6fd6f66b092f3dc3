#include "lopguard/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include <spdlog/spdlog.h>

#include "lopguard/errors.hpp"
#include "lopguard/json_codec.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

using nlohmann::json;

// --------------------------------------------------------------------------
// Config
// --------------------------------------------------------------------------

namespace {

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

Range range_from(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw SchemaError(path, "expected [lo, hi]");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

// Reads `key` from `obj` into `out` when present, recording the key as known.
struct Reader {
  const json& obj;
  std::string path;
  std::set<std::string> known;

  template <typename T>
  void get(const std::string& key, T& out) {
    known.insert(key);
    const auto it = obj.find(key);
    if (it == obj.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(path + key, e.what());
    }
  }
  void range(const std::string& key, Range& out) {
    known.insert(key);
    if (const auto it = obj.find(key); it != obj.end()) out = range_from(*it, path + key);
  }
  const json* section(const std::string& key) {
    known.insert(key);
    const auto it = obj.find(key);
    if (it == obj.end()) return nullptr;
    if (!it->is_object()) throw SchemaError(path + key, "expected object");
    return &*it;
  }
  void finish() const {
    for (const auto& [k, _] : obj.items()) {
      if (!known.contains(k)) throw SchemaError(path + k, "unknown field");
    }
  }
};

}  // namespace

json run_config_to_json(const RunConfig& c) {
  const auto& g = c.grid;
  const auto& t = c.train;
  const auto& s = c.synth;
  const auto& d = c.detector;
  const auto& p = c.placement;
  return json{
      {"grid", {{"x_min", g.x_min}, {"x_max", g.x_max}, {"y_min", g.y_min}, {"y_max", g.y_max}, {"cell", g.cell}}},
      {"lop",
       {{"m_pc", c.m_pc}, {"t_iou", c.t_iou}, {"beta", c.beta}, {"B", c.b}, {"neg_ratio", c.neg_ratio}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"alpha_fl", t.alpha_fl},
        {"gamma_fl", t.gamma_fl},
        {"lr", t.lr},
        {"optimizer", t.optimizer == Optimizer::adam ? "adam" : "sgd"},
        {"val_fraction", t.val_fraction},
        {"patience", t.patience},
        {"standardize", t.standardize},
        {"decision_threshold", t.decision_threshold}}},
      {"metrics", {{"c_conf", c.c_conf}, {"c_iou", c.c_iou}}},
      {"synth",
       {{"min_cars", s.min_cars},
        {"max_cars", s.max_cars},
        {"car_length", range_json(s.car_length)},
        {"car_width", range_json(s.car_width)},
        {"car_height", range_json(s.car_height)},
        {"density_constant", s.density_constant},
        {"count_noise", s.count_noise},
        {"ground_rate", s.ground_rate},
        {"occlusion_prob", s.occlusion_prob},
        {"occlusion_factor", range_json(s.occlusion_factor)},
        {"car_depth", range_json(s.car_depth)},
        {"max_bearing_deg", s.max_bearing_deg},
        {"ground_z", s.ground_z},
        {"car_clearance", s.car_clearance},
        {"spacing", s.spacing},
        {"jitter_sigma", s.jitter_sigma},
        {"jitter_clamp", s.jitter_clamp},
        {"min_clutter", s.min_clutter},
        {"max_clutter", s.max_clutter},
        {"clutter_length", range_json(s.clutter_length)},
        {"clutter_width", range_json(s.clutter_width)},
        {"clutter_height", range_json(s.clutter_height)},
        {"clutter_density", range_json(s.clutter_density)},
        {"clutter_depth", range_json(s.clutter_depth)}}},
      {"detector",
       {{"min_points", d.min_points},
        {"ground_z", d.ground_z},
        {"ground_clearance", d.ground_clearance},
        {"margin", d.margin},
        {"density_constant", d.density_constant},
        {"occlusion_tolerance", d.occlusion_tolerance},
        {"max_length", d.max_length},
        {"max_width", d.max_width},
        {"yaw_step_deg", d.yaw_step_deg}}},
      {"attack",
       {{"min_distance", p.min_distance},
        {"max_distance", p.max_distance},
        {"max_bearing_deg", p.max_bearing_deg},
        {"clearance", p.clearance},
        {"isolate", p.isolate_grid.has_value()},
        {"donor_max_points", c.donor_max_points},
        {"donor_min_points", c.donor_min_points},
        {"adaptive_points", c.adaptive_points},
        {"adaptive_steps", c.adaptive_steps},
        {"adaptive_step_size", c.adaptive_step_size}}},
      {"defenses",
       {{"srs_m", c.srs_m},
        {"sor_k", c.sor_k},
        {"sor_alpha", c.sor_alpha},
        {"lpd_r", c.lpd_r},
        {"fsd_r", c.fsd_r},
        {"fsd_cell", c.fsd_cell}}},
      {"train_scenes", c.train_scenes},
      {"eval_scenes", c.eval_scenes},
      {"adaptive_scenes", c.adaptive_scenes},
      {"seed", c.seed},
  };
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw SchemaError("<root>", "expected object");
  Reader top{j, "", {}};
  if (const json* g = top.section("grid")) {
    Reader r{*g, "grid.", {}};
    r.get("x_min", c.grid.x_min);
    r.get("x_max", c.grid.x_max);
    r.get("y_min", c.grid.y_min);
    r.get("y_max", c.grid.y_max);
    r.get("cell", c.grid.cell);
    r.finish();
  }
  if (const json* l = top.section("lop")) {
    Reader r{*l, "lop.", {}};
    r.get("m_pc", c.m_pc);
    r.get("t_iou", c.t_iou);
    r.get("beta", c.beta);
    r.get("B", c.b);
    r.get("neg_ratio", c.neg_ratio);
    r.finish();
  }
  if (const json* t = top.section("train")) {
    Reader r{*t, "train.", {}};
    r.get("epochs", c.train.epochs);
    r.get("batch_size", c.train.batch_size);
    r.get("alpha_fl", c.train.alpha_fl);
    r.get("gamma_fl", c.train.gamma_fl);
    r.get("lr", c.train.lr);
    std::string opt = c.train.optimizer == Optimizer::adam ? "adam" : "sgd";
    r.get("optimizer", opt);
    if (opt != "adam" && opt != "sgd") throw SchemaError("train.optimizer", "expected adam or sgd");
    c.train.optimizer = opt == "adam" ? Optimizer::adam : Optimizer::sgd;
    r.get("val_fraction", c.train.val_fraction);
    r.get("patience", c.train.patience);
    r.get("standardize", c.train.standardize);
    r.get("decision_threshold", c.train.decision_threshold);
    r.finish();
  }
  if (const json* m = top.section("metrics")) {
    Reader r{*m, "metrics.", {}};
    r.get("c_conf", c.c_conf);
    r.get("c_iou", c.c_iou);
    r.finish();
  }
  if (const json* s = top.section("synth")) {
    Reader r{*s, "synth.", {}};
    auto& y = c.synth;
    r.get("min_cars", y.min_cars);
    r.get("max_cars", y.max_cars);
    r.range("car_length", y.car_length);
    r.range("car_width", y.car_width);
    r.range("car_height", y.car_height);
    r.get("density_constant", y.density_constant);
    r.get("count_noise", y.count_noise);
    r.get("ground_rate", y.ground_rate);
    r.get("occlusion_prob", y.occlusion_prob);
    r.range("occlusion_factor", y.occlusion_factor);
    r.range("car_depth", y.car_depth);
    r.get("max_bearing_deg", y.max_bearing_deg);
    r.get("ground_z", y.ground_z);
    r.get("car_clearance", y.car_clearance);
    r.get("spacing", y.spacing);
    r.get("jitter_sigma", y.jitter_sigma);
    r.get("jitter_clamp", y.jitter_clamp);
    r.get("min_clutter", y.min_clutter);
    r.get("max_clutter", y.max_clutter);
    r.range("clutter_length", y.clutter_length);
    r.range("clutter_width", y.clutter_width);
    r.range("clutter_height", y.clutter_height);
    r.range("clutter_density", y.clutter_density);
    r.range("clutter_depth", y.clutter_depth);
    r.finish();
  }
  if (const json* d = top.section("detector")) {
    Reader r{*d, "detector.", {}};
    auto& x = c.detector;
    r.get("min_points", x.min_points);
    r.get("ground_z", x.ground_z);
    r.get("ground_clearance", x.ground_clearance);
    r.get("margin", x.margin);
    r.get("density_constant", x.density_constant);
    r.get("occlusion_tolerance", x.occlusion_tolerance);
    r.get("max_length", x.max_length);
    r.get("max_width", x.max_width);
    r.get("yaw_step_deg", x.yaw_step_deg);
    r.finish();
  }
  bool isolate = c.placement.isolate_grid.has_value();
  if (const json* a = top.section("attack")) {
    Reader r{*a, "attack.", {}};
    r.get("min_distance", c.placement.min_distance);
    r.get("max_distance", c.placement.max_distance);
    r.get("max_bearing_deg", c.placement.max_bearing_deg);
    r.get("clearance", c.placement.clearance);
    r.get("isolate", isolate);
    r.get("donor_max_points", c.donor_max_points);
    r.get("donor_min_points", c.donor_min_points);
    r.get("adaptive_points", c.adaptive_points);
    r.get("adaptive_steps", c.adaptive_steps);
    r.get("adaptive_step_size", c.adaptive_step_size);
    r.finish();
  }
  if (const json* d = top.section("defenses")) {
    Reader r{*d, "defenses.", {}};
    r.get("srs_m", c.srs_m);
    r.get("sor_k", c.sor_k);
    r.get("sor_alpha", c.sor_alpha);
    r.get("lpd_r", c.lpd_r);
    r.get("fsd_r", c.fsd_r);
    r.get("fsd_cell", c.fsd_cell);
    r.finish();
  }
  top.get("train_scenes", c.train_scenes);
  top.get("eval_scenes", c.eval_scenes);
  top.get("adaptive_scenes", c.adaptive_scenes);
  top.get("seed", c.seed);
  top.finish();
  c.placement.isolate_grid = isolate ? std::optional<GridSpec>(c.grid) : std::nullopt;
  return c;
}

// --------------------------------------------------------------------------
// Defenses
// --------------------------------------------------------------------------

std::string_view to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::none: return "none";
    case DefenseKind::lop: return "lop";
    case DefenseKind::srs: return "srs";
    case DefenseKind::sor: return "sor";
    case DefenseKind::carlo_fsd: return "carlo_fsd";
    case DefenseKind::carlo_lpd: return "carlo_lpd";
  }
  return "none";
}

DefenseKind defense_kind_from_string(std::string_view s) {
  for (auto k : {DefenseKind::none, DefenseKind::lop, DefenseKind::srs, DefenseKind::sor, DefenseKind::carlo_fsd,
                 DefenseKind::carlo_lpd}) {
    if (s == to_string(k)) return k;
  }
  if (s == "fsd") return DefenseKind::carlo_fsd;
  if (s == "lpd") return DefenseKind::carlo_lpd;
  throw ValueError("unknown defense: " + std::string(s));
}

std::string DefenseSpec::label() const { return std::string(to_string(kind)); }

std::string DefenseSpec::params() const {
  char buf[64];
  switch (kind) {
    case DefenseKind::none: return "";
    case DefenseKind::lop: std::snprintf(buf, sizeof buf, "B=%g", b); break;
    case DefenseKind::srs: std::snprintf(buf, sizeof buf, "M=%zu", srs_m); break;
    case DefenseKind::sor: std::snprintf(buf, sizeof buf, "k=%d alpha=%g", sor_k, sor_alpha); break;
    case DefenseKind::carlo_fsd: std::snprintf(buf, sizeof buf, "r=%g cell=%g", r_thresh, cell); break;
    case DefenseKind::carlo_lpd: std::snprintf(buf, sizeof buf, "r=%g", r_thresh); break;
  }
  return buf;
}

std::vector<DefenseSpec> standard_defenses(const RunConfig& cfg) {
  std::vector<DefenseSpec> out;
  DefenseSpec none;
  out.push_back(none);
  for (double b : {0.5, 0.6}) {
    DefenseSpec d;
    d.kind = DefenseKind::lop;
    d.b = b;
    out.push_back(d);
  }
  DefenseSpec srs_spec;
  srs_spec.kind = DefenseKind::srs;
  srs_spec.srs_m = cfg.srs_m;
  out.push_back(srs_spec);
  DefenseSpec sor_spec;
  sor_spec.kind = DefenseKind::sor;
  sor_spec.sor_k = cfg.sor_k;
  sor_spec.sor_alpha = cfg.sor_alpha;
  out.push_back(sor_spec);
  DefenseSpec fsd;
  fsd.kind = DefenseKind::carlo_fsd;
  fsd.r_thresh = cfg.fsd_r;
  fsd.cell = cfg.fsd_cell;
  out.push_back(fsd);
  DefenseSpec lpd;
  lpd.kind = DefenseKind::carlo_lpd;
  lpd.r_thresh = cfg.lpd_r;
  out.push_back(lpd);
  return out;
}

VoteConfig vote_config(const RunConfig& cfg, double b) {
  VoteConfig v;
  v.grid = cfg.grid;
  v.beta = cfg.beta;
  v.b = b;
  v.m_pc = cfg.m_pc;
  v.seed = derive_seed(cfg.seed, 31);
  v.threads = 1;
  return v;
}

std::vector<Detection> apply_defense(const PointCloud& cloud, const std::optional<std::vector<Detection>>& dets,
                                     const DefenseSpec& spec, const RunConfig& cfg, const LOPModel* model,
                                     EliminationReport* diag) {
  DetectorConfig dc = cfg.detector;
  dc.grid = cfg.grid;
  auto base = [&] { return dets ? *dets : detect(cloud, dc); };
  switch (spec.kind) {
    case DefenseKind::none: return base();
    case DefenseKind::lop: {
      if (model == nullptr) throw DomainError("LOP defense needs a model");
      const auto in = base();
      auto rep = filter_detections(in, cloud, *model, vote_config(cfg, spec.b));
      auto kept = rep.kept;
      if (diag) *diag = std::move(rep);
      return kept;
    }
    case DefenseKind::srs: {
      Rng rng(derive_seed(cfg.seed, 32, cloud.frame_id));
      return detect(srs(cloud, spec.srs_m, rng), dc);
    }
    case DefenseKind::sor: {
      if (cloud.size() <= static_cast<std::size_t>(spec.sor_k)) return detect(cloud, dc);
      return detect(sor(cloud, spec.sor_k, spec.sor_alpha), dc);
    }
    case DefenseKind::carlo_fsd:
    case DefenseKind::carlo_lpd: {
      CarloConfig cc;
      cc.mode = spec.kind == DefenseKind::carlo_fsd ? CarloMode::fsd : CarloMode::lpd;
      cc.r_thresh = spec.r_thresh;
      cc.cell = spec.cell;
      const auto in = base();
      return carlo_filter(in, cloud, cc);
    }
  }
  return base();
}

// --------------------------------------------------------------------------
// Evaluation
// --------------------------------------------------------------------------

DefenseRow evaluate_defense(std::span<const std::vector<Detection>> clean_dets,
                            std::span<const std::vector<Detection>> attacked_dets,
                            std::span<const std::vector<Detection>> baseline_clean, std::span<const Scene> scenes,
                            std::span<const AttackTrace> traces, double c_conf, double c_iou) {
  if (clean_dets.size() != scenes.size() || attacked_dets.size() != traces.size() ||
      (!baseline_clean.empty() && baseline_clean.size() != scenes.size())) {
    throw LengthError("evaluate_defense: misaligned inputs");
  }
  DefenseRow row;
  std::vector<MatchResult> clean_m, attacked_m;
  std::vector<FrameDetections> clean_f, attacked_f;
  std::size_t tp_def = 0, tp_base = 0;
  std::map<std::uint64_t, const Scene*> by_frame;
  for (const auto& s : scenes) by_frame.emplace(s.frame_id(), &s);
  for (std::size_t k = 0; k < scenes.size(); ++k) {
    clean_m.push_back(match(clean_dets[k], scenes[k].ground_truth, c_conf, c_iou));
    clean_f.push_back({clean_dets[k], scenes[k].ground_truth});
    tp_def += clean_m.back().tp;
    if (!baseline_clean.empty()) tp_base += match(baseline_clean[k], scenes[k].ground_truth, c_conf, c_iou).tp;
  }
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto it = by_frame.find(traces[k].base_frame_id);
    if (it == by_frame.end()) throw DataError("trace refers to an unknown frame");
    attacked_m.push_back(match(attacked_dets[k], it->second->ground_truth, c_conf, c_iou));
    attacked_f.push_back({attacked_dets[k], it->second->ground_truth});
  }
  row.precision_clean = precision(clean_m);
  std::size_t n_gt = 0;
  for (const auto& s : scenes) n_gt += s.ground_truth.size();
  if (n_gt > 0) row.ap_clean = ap_11point(clean_f, c_iou);
  if (!traces.empty()) {
    row.asr = asr(traces, attacked_dets, c_conf, c_iou);
    row.precision_attacked = precision(attacked_m);
    if (n_gt > 0) row.ap_attacked = ap_11point(attacked_f, c_iou);
  }
  row.attempts = traces.size();
  row.real_retention = tp_base == 0 ? 1.0 : static_cast<double>(tp_def) / static_cast<double>(tp_base);
  return row;
}

std::string csv_header() {
  return "defense,params,attack,AP,precision,ASR,AP_clean,precision_clean,real_retention,attempts\n";
}

std::string csv_row(const DefenseRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%zu\n", r.defense.c_str(), r.params.c_str(),
                r.attack.c_str(), r.ap_attacked, r.precision_attacked, r.asr, r.ap_clean, r.precision_clean,
                r.real_retention, r.attempts);
  return buf;
}

const DefenseRow& ExperimentReport::row(std::string_view defense, std::string_view attack) const {
  for (const auto& r : rows) {
    if (r.attack == attack && (r.defense + (r.params.empty() ? "" : " " + r.params)) == defense) return r;
    if (r.attack == attack && r.defense == defense && r.params.empty()) return r;
  }
  throw ValueError("no report row for " + std::string(defense) + " / " + std::string(attack));
}

json ExperimentReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    rows_j.push_back({{"defense", r.defense},
                      {"params", r.params},
                      {"attack", r.attack},
                      {"AP", r.ap_attacked},
                      {"precision", r.precision_attacked},
                      {"ASR", r.asr},
                      {"AP_clean", r.ap_clean},
                      {"precision_clean", r.precision_clean},
                      {"real_retention", r.real_retention},
                      {"attempts", r.attempts}});
  }
  json log = json::parse(training_log_json(training_log));
  return json{{"rows", std::move(rows_j)},
              {"training_log", std::move(log)},
              {"heldout_accuracy", heldout_accuracy},
              {"train_samples", train_samples},
              {"monotonicity", {{"frames_checked", frames_checked}, {"violations", monotonicity_violations}}},
              {"density",
               {{"log_log_correlation", density_correlation},
                {"forged_near", forged_near},
                {"forged_below_law_fraction", forged_below_law_fraction}}},
              {"frames", per_frame}};
}

std::string ExperimentReport::to_csv() const {
  std::string out = csv_header();
  for (const auto& r : rows) out += csv_row(r);
  return out;
}

// --------------------------------------------------------------------------
// Pipeline
// --------------------------------------------------------------------------

namespace {

std::set<std::size_t> eliminated_indices(const EliminationReport& rep) {
  std::set<std::size_t> out;
  for (const auto& v : rep.eliminated) out.insert(v.index);
  return out;
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& cfg) {
  ExperimentReport report;
  SynthConfig sc = cfg.synth;
  sc.grid = cfg.grid;
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed(cfg.seed, 14);
  tc.threads = cfg.threads;

  spdlog::info("generating {} training scenes", cfg.train_scenes);
  const auto train_corpus = gen_corpus(sc, cfg.train_scenes, derive_seed(cfg.seed, 11), cfg.threads);
  DatasetConfig dc{cfg.grid, cfg.m_pc, cfg.t_iou, derive_seed(cfg.seed, 12), cfg.threads};
  Rng balance_rng(derive_seed(cfg.seed, 13));
  const auto train_set = balance(generate(train_corpus, dc), cfg.neg_ratio, balance_rng);
  report.train_samples = train_set.size();
  spdlog::info("training on {} pillars", train_set.size());
  const auto trained = train(train_set, tc);
  report.training_log = trained.log;
  const LOPModel& model = trained.model;

  spdlog::info("generating {} evaluation scenes", cfg.eval_scenes);
  const auto eval_corpus = gen_corpus(sc, cfg.eval_scenes, derive_seed(cfg.seed, 21), cfg.threads);
  {
    DatasetConfig hc = dc;
    hc.seed = derive_seed(cfg.seed, 15);
    Rng hr(derive_seed(cfg.seed, 16));
    const auto held = balance(generate(eval_corpus, hc), cfg.neg_ratio, hr);
    report.heldout_accuracy = evaluate(model, held, cfg.threads).accuracy;
  }

  const auto donors = build_donor_library(train_corpus, cfg.donor_max_points, cfg.donor_min_points);
  const std::size_t n = eval_corpus.size();
  std::vector<Scene> attacked(n);
  std::vector<AttackTrace> traces(n);
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    Rng rng(derive_seed(cfg.seed, 22, k));
    auto res = physical_attack(eval_corpus[k], donors, rng, cfg.placement);
    attacked[k] = std::move(res.scene);
    traces[k] = std::move(res.trace);
  });

  const std::size_t n_adapt = std::min(cfg.adaptive_scenes, n);
  std::vector<Scene> adapted(n_adapt);
  std::vector<AttackTrace> adapt_traces(n_adapt);
  if (n_adapt > 0) spdlog::info("adaptive attack on {} scenes", n_adapt);
  parallel_for(n_adapt, cfg.threads, [&](std::size_t k) {
    Rng rng(derive_seed(cfg.seed, 23, k));
    const double l = rng.uniform(sc.car_length.lo, sc.car_length.hi);
    const double w = rng.uniform(sc.car_width.lo, sc.car_width.hi);
    const double h = rng.uniform(sc.car_height.lo, sc.car_height.hi);
    const Box3D zone = sample_attack_pose(eval_corpus[k], l, w, h, rng, cfg.placement);
    AdaptiveConfig ac;
    ac.vote = vote_config(cfg, 0.6);
    ac.n = cfg.adaptive_points;
    ac.steps = cfg.adaptive_steps;
    ac.step_size = cfg.adaptive_step_size;
    auto res = adaptive_attack(eval_corpus[k], model, zone, ac, rng);
    adapted[k] = std::move(res.scene);
    adapt_traces[k] = std::move(res.trace);
  });

  // Undefended detections are shared by the detection-level defenses.
  std::vector<std::optional<std::vector<Detection>>> base_clean(n), base_attacked(n), base_adapted(n_adapt);
  DetectorConfig det_cfg = cfg.detector;
  det_cfg.grid = cfg.grid;
  parallel_for(n, cfg.threads, [&](std::size_t k) {
    base_clean[k] = detect(eval_corpus[k].cloud, det_cfg);
    base_attacked[k] = detect(attacked[k].cloud, det_cfg);
    if (k < n_adapt) base_adapted[k] = detect(adapted[k].cloud, det_cfg);
  });
  std::vector<std::vector<Detection>> none_clean(n);
  for (std::size_t k = 0; k < n; ++k) none_clean[k] = *base_clean[k];

  std::map<std::string, std::vector<EliminationReport>> lop_reports;
  for (const auto& spec : standard_defenses(cfg)) {
    spdlog::info("evaluating defense {} {}", spec.label(), spec.params());
    std::vector<std::vector<Detection>> clean(n), att(n), adp(n_adapt);
    std::vector<EliminationReport> reps(n);
    parallel_for(n, cfg.threads, [&](std::size_t k) {
      clean[k] = apply_defense(eval_corpus[k].cloud, base_clean[k], spec, cfg, &model);
      att[k] = apply_defense(attacked[k].cloud, base_attacked[k], spec, cfg, &model,
                             spec.kind == DefenseKind::lop ? &reps[k] : nullptr);
      if (k < n_adapt) adp[k] = apply_defense(adapted[k].cloud, base_adapted[k], spec, cfg, &model);
    });
    if (spec.kind == DefenseKind::lop) lop_reports[spec.params()] = std::move(reps);
    DefenseRow row = evaluate_defense(clean, att, none_clean, eval_corpus, traces, cfg.c_conf, cfg.c_iou);
    row.defense = spec.label();
    row.params = spec.params();
    row.attack = "physical";
    report.rows.push_back(row);
    if (n_adapt > 0 && (spec.kind == DefenseKind::none || spec.kind == DefenseKind::lop)) {
      std::vector<std::vector<Detection>> adp_clean(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(n_adapt));
      std::vector<std::vector<Detection>> adp_base(none_clean.begin(),
                                                   none_clean.begin() + static_cast<std::ptrdiff_t>(n_adapt));
      DefenseRow ar = evaluate_defense(adp_clean, adp, adp_base,
                                       std::span<const Scene>(eval_corpus).first(n_adapt), adapt_traces, cfg.c_conf,
                                       cfg.c_iou);
      ar.defense = spec.label();
      ar.params = spec.params();
      ar.attack = "adaptive";
      report.rows.push_back(ar);
    }
    for (std::size_t k = 0; k < n; ++k) {
      if (report.per_frame.size() <= k) {
        report.per_frame.push_back({{"frame_id", eval_corpus[k].frame_id()},
                                    {"ground_truth", eval_corpus[k].ground_truth.size()},
                                    {"attack_target", jsonc::box_to_json(traces[k].target_box)},
                                    {"injected", traces[k].injected_points.size()},
                                    {"defenses", json::object()}});
      }
      const std::string key = spec.label() + (spec.params().empty() ? "" : " " + spec.params());
      report.per_frame[k]["defenses"][key] = {
          {"clean_detections", clean[k].size()},
          {"attacked_detections", att[k].size()},
          {"attack_succeeded", attack_succeeded(traces[k], att[k], cfg.c_conf, cfg.c_iou)}};
    }
  }

  const auto& r05 = lop_reports.at("B=0.5");
  const auto& r06 = lop_reports.at("B=0.6");
  for (std::size_t k = 0; k < n; ++k) {
    const auto a = eliminated_indices(r05[k]);
    const auto b = eliminated_indices(r06[k]);
    ++report.frames_checked;
    if (!std::ranges::includes(b, a)) report.monotonicity_violations.push_back(eval_corpus[k].frame_id());
  }

  const auto profile = depth_density_profile(eval_corpus, traces, attacked);
  const auto fit = fit_power_law(profile, [](const DensityRecord& r) { return !r.forged && !r.occluded; });
  report.density_correlation = fit.correlation;
  std::size_t below = 0;
  for (const auto& r : profile) {
    if (!r.forged || r.depth > 10.0) continue;
    ++report.forged_near;
    below += r.density * 4.0 <= fit.predict(r.depth);
  }
  report.forged_below_law_fraction =
      report.forged_near == 0 ? 0.0 : static_cast<double>(below) / static_cast<double>(report.forged_near);
  return report;
}

}  // namespace lopguard
