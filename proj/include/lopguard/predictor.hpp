#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lopguard/dataset.hpp"
#include "lopguard/nn.hpp"

namespace lopguard {

enum class Optimizer { adam, sgd };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double alpha_fl = 1.0;
  double gamma_fl = 2.0;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  /// Fraction of frames held out for early stopping; 0 disables the split.
  double val_fraction = 0.1;
  /// Epochs without validation improvement before stopping; 0 disables.
  int patience = 3;
  double decision_threshold = 0.5;
  /// Fit a per-feature standardization on the training split.
  bool standardize = true;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_accuracy;
};

struct LOPModel {
  LOPNetwork network;
  double decision_threshold = 0.5;
  TrainConfig train_config;
  int epochs_run = 0;
  double final_loss = 0.0;
};

struct TrainResult {
  LOPModel model;
  std::vector<EpochLog> log;
};

/// Mini-batch focal-loss training. When a validation split exists the
/// weights of the epoch with the lowest validation loss are returned.
/// DataError if the dataset lacks either label.
TrainResult train(std::span<const PillarSample> dataset, const TrainConfig& cfg);

struct Prediction {
  int score = 0;
  double prob = 0.0;
  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// score = 1 iff p1 >= decision_threshold. EmptyPillarError on empty input.
Prediction predict(const LOPModel& model, const PillarFeatures& feat);

/// Element-wise identical to `predict`. EmptyPillarError names the index.
std::vector<Prediction> predict_batch(const LOPModel& model, std::span<const PillarFeatures* const> feats,
                                      int threads = 1);
std::vector<Prediction> predict_batch(const LOPModel& model, std::span<const PillarFeatures> feats,
                                      int threads = 1);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};
Evaluation evaluate(const LOPModel& model, std::span<const PillarSample> samples, int threads = 1);

std::string model_metadata_json(const LOPModel& model);
std::vector<std::byte> encode_model(const LOPModel& model);
LOPModel decode_model(std::span<const std::byte> bytes);
void save_model(const std::filesystem::path& path, const LOPModel& model);
LOPModel load_model(const std::filesystem::path& path);

std::string training_log_json(std::span<const EpochLog> log);

}  // namespace lopguard
