#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "lopguard/attacks.hpp"
#include "lopguard/baselines.hpp"
#include "lopguard/dataset.hpp"
#include "lopguard/detector.hpp"
#include "lopguard/eliminate.hpp"
#include "lopguard/metrics.hpp"
#include "lopguard/predictor.hpp"
#include "lopguard/synth.hpp"

namespace lopguard {

/// Every experiment knob in one place, with the default hyper-parameters.
struct RunConfig {
  GridSpec grid;
  int m_pc = kDefaultMpc;
  double t_iou = 1e-6;
  double beta = 1e-3;
  double b = 0.5;
  double neg_ratio = 1.5;
  double c_conf = 0.5;
  double c_iou = 0.5;
  TrainConfig train;
  SynthConfig synth;
  DetectorConfig detector;
  PlacementConfig placement;
  std::size_t donor_max_points = kAttackBudget;
  std::size_t donor_min_points = 1;
  std::size_t adaptive_points = kAttackBudget;
  int adaptive_steps = 40;
  double adaptive_step_size = 0.05;
  std::size_t srs_m = 500;
  int sor_k = 2;
  double sor_alpha = 1.1;
  double lpd_r = 0.7;
  double fsd_r = 0.7;
  double fsd_cell = 0.25;
  std::size_t train_scenes = 200;
  std::size_t eval_scenes = 200;
  /// Scenes (from the start of the evaluation corpus) used for the adaptive
  /// attack; 0 skips it.
  std::size_t adaptive_scenes = 200;
  std::uint64_t seed = 1;
  int threads = 1;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Overlays the fields present in `j` on `base`. SchemaError on unknown keys.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

enum class DefenseKind { none, lop, srs, sor, carlo_fsd, carlo_lpd };
std::string_view to_string(DefenseKind k);
DefenseKind defense_kind_from_string(std::string_view s);

struct DefenseSpec {
  DefenseKind kind = DefenseKind::none;
  double b = 0.5;
  std::size_t srs_m = 500;
  int sor_k = 2;
  double sor_alpha = 1.1;
  double r_thresh = 0.7;
  double cell = 0.25;

  std::string label() const;
  std::string params() const;
};

/// The standard comparison set: none, LOP at B=0.5 and B=0.6, SRS, SOR,
/// CARLO-FSD and CARLO-LPD with the configured parameters.
std::vector<DefenseSpec> standard_defenses(const RunConfig& cfg);

VoteConfig vote_config(const RunConfig& cfg, double b);

/// Final detections for one cloud under a defense. Point-level defenses
/// (SRS, SOR) transform the cloud before detection; detection-level defenses
/// filter `dets`, or the detector's output on `cloud` when `dets` is empty
/// and not given. `diag` receives the LOP report when non-null.
std::vector<Detection> apply_defense(const PointCloud& cloud, const std::optional<std::vector<Detection>>& dets,
                                     const DefenseSpec& spec, const RunConfig& cfg, const LOPModel* model,
                                     EliminationReport* diag = nullptr);

struct DefenseRow {
  std::string defense;
  std::string params;
  std::string attack;
  double asr = 0.0;
  double precision_clean = 1.0;
  double precision_attacked = 1.0;
  double ap_clean = 0.0;
  double ap_attacked = 0.0;
  /// Real cars detected after the defense over those detected without it.
  double real_retention = 1.0;
  std::size_t attempts = 0;
};

struct ExperimentReport {
  std::vector<EpochLog> training_log;
  double heldout_accuracy = 0.0;
  std::size_t train_samples = 0;
  std::vector<DefenseRow> rows;
  /// Frames where eliminated(B=0.5) is not a subset of eliminated(B=0.6).
  std::vector<std::uint64_t> monotonicity_violations;
  std::size_t frames_checked = 0;
  /// Depth-density reproduction on the evaluation corpus.
  double density_correlation = 0.0;
  double forged_below_law_fraction = 0.0;
  std::size_t forged_near = 0;
  nlohmann::json per_frame = nlohmann::json::array();

  const DefenseRow& row(std::string_view defense, std::string_view attack) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// synth -> dataset -> train -> attack -> defend -> evaluate, fully seeded.
/// The result does not depend on cfg.threads.
ExperimentReport run_experiment(const RunConfig& cfg);

/// Evaluates already-defended frames. `clean` and `attacked` are aligned
/// per frame; `traces[k]` belongs to `attacked[k]`.
DefenseRow evaluate_defense(std::span<const std::vector<Detection>> clean_dets,
                            std::span<const std::vector<Detection>> attacked_dets,
                            std::span<const std::vector<Detection>> baseline_clean, std::span<const Scene> scenes,
                            std::span<const AttackTrace> traces, double c_conf, double c_iou);

std::string csv_header();
std::string csv_row(const DefenseRow& r);

}  // namespace lopguard
