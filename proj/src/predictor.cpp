#include "lopguard/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "json.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/io.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

using nlohmann::json;

namespace {

void validate(const TrainConfig& c) {
  if (c.epochs < 1) throw DomainError("epochs must be >= 1");
  if (c.batch_size < 1) throw DomainError("batch_size must be >= 1");
  if (!(c.lr > 0.0)) throw DomainError("lr must be positive");
  if (c.val_fraction < 0.0 || c.val_fraction >= 1.0) throw DomainError("val_fraction must be in [0,1)");
  if (c.patience < 0) throw DomainError("patience must be >= 0");
  if (!(c.decision_threshold > 0.0 && c.decision_threshold < 1.0)) {
    throw DomainError("decision_threshold must be in (0,1)");
  }
}

// Holds out ceil(val_fraction * frames) whole frames, never all of them.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_by_frame(
    std::span<const PillarSample> data, double val_fraction, Rng& rng) {
  std::vector<std::size_t> tr, va;
  std::set<std::uint64_t> frame_set;
  for (const auto& s : data) frame_set.insert(s.source.frame_id);
  std::vector<std::uint64_t> frames(frame_set.begin(), frame_set.end());
  std::size_t n_val = 0;
  if (val_fraction > 0.0 && frames.size() >= 2) {
    n_val = static_cast<std::size_t>(std::ceil(val_fraction * static_cast<double>(frames.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, frames.size() - 1);
  }
  rng.shuffle(frames.begin(), frames.end());
  const std::set<std::uint64_t> held(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (std::size_t k = 0; k < data.size(); ++k) (held.contains(data[k].source.frame_id) ? va : tr).push_back(k);
  return {tr, va};
}

bool has_both(std::span<const PillarSample> data, const std::vector<std::size_t>& idx) {
  bool pos = false, neg = false;
  for (auto k : idx) (data[k].label == 1 ? pos : neg) = true;
  return pos && neg;
}

json config_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"alpha_fl", c.alpha_fl},
          {"gamma_fl", c.gamma_fl},
          {"lr", c.lr},
          {"optimizer", c.optimizer == Optimizer::adam ? "adam" : "sgd"},
          {"val_fraction", c.val_fraction},
          {"patience", c.patience},
          {"standardize", c.standardize},
          {"decision_threshold", c.decision_threshold},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.alpha_fl = j.value("alpha_fl", c.alpha_fl);
  c.gamma_fl = j.value("gamma_fl", c.gamma_fl);
  c.lr = j.value("lr", c.lr);
  c.optimizer = j.value("optimizer", std::string("adam")) == "sgd" ? Optimizer::sgd : Optimizer::adam;
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.patience = j.value("patience", c.patience);
  c.standardize = j.value("standardize", c.standardize);
  c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace

Evaluation evaluate(const LOPModel& model, std::span<const PillarSample> samples, int threads) {
  Evaluation e;
  e.count = samples.size();
  if (samples.empty()) return e;
  std::vector<double> loss(samples.size());
  std::vector<int> correct(samples.size());
  const auto& tc = model.train_config;
  parallel_for(samples.size(), threads, [&](std::size_t k) {
    const auto p = forward(model.network, samples[k].features);
    loss[k] = focal_loss(p, samples[k].label, tc.alpha_fl, tc.gamma_fl);
    correct[k] = (p.p1 >= model.decision_threshold ? 1 : 0) == samples[k].label;
  });
  e.loss = std::accumulate(loss.begin(), loss.end(), 0.0) / static_cast<double>(samples.size());
  e.accuracy = static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
               static_cast<double>(samples.size());
  return e;
}

TrainResult train(std::span<const PillarSample> dataset, const TrainConfig& cfg) {
  validate(cfg);
  std::vector<std::size_t> everything(dataset.size());
  std::iota(everything.begin(), everything.end(), std::size_t{0});
  if (!has_both(dataset, everything)) throw DataError("training set must contain both labels");
  for (const auto& s : dataset) {
    if (s.features.valid_count() < 1) throw EmptyPillarError("training sample without valid rows");
  }

  Rng split_rng(derive_seed(cfg.seed, 1));
  auto [tr, va] = split_by_frame(dataset, cfg.val_fraction, split_rng);
  if (!has_both(dataset, tr)) {
    spdlog::warn("validation split left a single-class training set; training on all frames");
    tr = everything;
    va.clear();
  }
  std::vector<PillarSample> val_set;
  for (auto k : va) val_set.push_back(dataset[k]);

  Rng init_rng(derive_seed(cfg.seed, 2));
  Rng order_rng(derive_seed(cfg.seed, 3));

  TrainResult res;
  res.model.network = LOPNetwork::glorot(init_rng);
  if (cfg.standardize) {
    std::vector<const PillarFeatures*> rows;
    rows.reserve(tr.size());
    for (auto k : tr) rows.push_back(&dataset[k].features);
    res.model.network.set_input_transform(fit_input_transform(rows));
  }
  res.model.decision_threshold = cfg.decision_threshold;
  res.model.train_config = cfg;

  AdamState adam;
  adam.lr = cfg.lr;
  LOPNetwork best = res.model.network;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  std::vector<LabeledPillar> batch;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(tr.begin(), tr.end());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t lo = 0; lo < tr.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const auto hi = std::min(tr.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (auto k = lo; k < hi; ++k) batch.push_back({&dataset[tr[k]].features, dataset[tr[k]].label});
      const auto g = backward(res.model.network, batch, cfg.alpha_fl, cfg.gamma_fl, cfg.threads);
      loss_sum += g.mean_loss * static_cast<double>(batch.size());
      for (std::size_t s = 0; s < batch.size(); ++s) {
        correct += (g.p1[s] >= cfg.decision_threshold ? 1 : 0) == batch[s].label;
      }
      if (cfg.optimizer == Optimizer::adam) {
        adam_step(adam, res.model.network, g.grads);
      } else {
        sgd_step(res.model.network, g.grads, cfg.lr);
      }
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(tr.size());
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(tr.size());
    res.model.epochs_run = epoch;
    res.model.final_loss = log.train_loss;

    if (!val_set.empty()) {
      const auto ev = evaluate(res.model, val_set, cfg.threads);
      log.val_loss = ev.loss;
      log.val_accuracy = ev.accuracy;
      if (ev.loss < best_val) {
        best_val = ev.loss;
        best = res.model.network;
        stale = 0;
      } else {
        ++stale;
      }
    }
    spdlog::info("epoch {} loss {:.5f} acc {:.4f}{}", epoch, log.train_loss, log.train_accuracy,
                 log.val_loss ? fmt::format(" val_loss {:.5f} val_acc {:.4f}", *log.val_loss, *log.val_accuracy)
                              : std::string());
    res.log.push_back(log);
    if (!val_set.empty() && cfg.patience > 0 && stale >= cfg.patience) break;
  }
  if (!val_set.empty()) res.model.network = best;
  return res;
}

Prediction predict(const LOPModel& model, const PillarFeatures& feat) {
  const auto p = forward(model.network, feat);
  return {p.p1 >= model.decision_threshold ? 1 : 0, p.p1};
}

std::vector<Prediction> predict_batch(const LOPModel& model, std::span<const PillarFeatures* const> feats,
                                      int threads) {
  for (std::size_t k = 0; k < feats.size(); ++k) {
    if (feats[k] == nullptr || feats[k]->valid_count() == 0) {
      throw EmptyPillarError("predict_batch: empty pillar at index " + std::to_string(k));
    }
  }
  std::vector<Prediction> out(feats.size());
  parallel_for(feats.size(), threads, [&](std::size_t k) { out[k] = predict(model, *feats[k]); });
  return out;
}

std::vector<Prediction> predict_batch(const LOPModel& model, std::span<const PillarFeatures> feats, int threads) {
  std::vector<const PillarFeatures*> ptrs;
  ptrs.reserve(feats.size());
  for (const auto& f : feats) ptrs.push_back(&f);
  return predict_batch(model, std::span<const PillarFeatures* const>(ptrs), threads);
}

std::string model_metadata_json(const LOPModel& model) {
  json j{{"decision_threshold", model.decision_threshold},
         {"epochs_run", model.epochs_run},
         {"final_loss", model.final_loss},
         {"train_config", config_json(model.train_config)}};
  return j.dump();
}

std::vector<std::byte> encode_model(const LOPModel& model) {
  return encode_network(model.network, model_metadata_json(model));
}

LOPModel decode_model(std::span<const std::byte> bytes) {
  auto [net, meta] = decode_network(bytes);
  LOPModel m;
  m.network = std::move(net);
  json j;
  try {
    j = json::parse(meta.empty() ? std::string("{}") : meta);
  } catch (const json::exception& e) {
    throw ValueError(std::string("model metadata: ") + e.what());
  }
  m.decision_threshold = j.value("decision_threshold", 0.5);
  if (!(m.decision_threshold > 0.0 && m.decision_threshold < 1.0)) {
    throw ValueError("model metadata: decision_threshold out of (0,1)");
  }
  m.epochs_run = j.value("epochs_run", 0);
  m.final_loss = j.value("final_loss", 0.0);
  if (j.contains("train_config")) m.train_config = config_from_json(j["train_config"]);
  return m;
}

void save_model(const std::filesystem::path& path, const LOPModel& model) {
  write_binary_file(path, encode_model(model));
}

LOPModel load_model(const std::filesystem::path& path) { return decode_model(read_binary_file(path)); }

std::string training_log_json(std::span<const EpochLog> log) {
  json arr = json::array();
  for (const auto& e : log) {
    json j{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}};
    if (e.val_loss) j["val_loss"] = *e.val_loss;
    if (e.val_accuracy) j["val_accuracy"] = *e.val_accuracy;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace lopguard
