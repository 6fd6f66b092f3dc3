#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lopguard/featurize.hpp"
#include "lopguard/matrix.hpp"
#include "lopguard/rng.hpp"

namespace lopguard {

/// Fixed per-feature affine map applied to every valid row before the first
/// layer: (x - shift) / scale. Not trained; the identity by default.
struct InputTransform {
  std::array<double, kFeatureDim> shift{};
  std::array<double, kFeatureDim> scale{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};

  bool identity() const;
  /// DomainError unless every shift is finite and every scale finite and > 0.
  void validate() const;

  friend bool operator==(const InputTransform&, const InputTransform&) = default;
};

/// Column means and population standard deviations over all valid rows.
/// Columns with deviation below 1e-12 keep scale 1. DomainError if no rows.
InputTransform fit_input_transform(std::span<const PillarFeatures* const> pillars);

struct LayerShape {
  int in = 0;
  int out = 0;
};

/// PointNet-style pillar classifier with a fixed architecture:
///
///   shared per-point MLP 7 -> 64 -> 128 -> 256 (ReLU after each layer)
///   masked max-pool over the valid rows
///   head 256 -> 128 (ReLU) -> 2 logits -> softmax
///
/// All parameters live in one flat buffer. Layer k stores its weight as a
/// row-major (in x out) block followed by its bias (out); layers are laid
/// out in order, which is also the order used by the model file.
class LOPNetwork {
 public:
  static constexpr int kLayers = 5;
  static constexpr int kPointLayers = 3;
  static constexpr std::array<LayerShape, kLayers> kShapes{
      {{7, 64}, {64, 128}, {128, 256}, {256, 128}, {128, 2}}};
  static constexpr std::size_t kParamCount = 75010;

  /// All-zero parameters.
  LOPNetwork();

  /// Uniform(-sqrt(6/(fan_in+fan_out)), +sqrt(...)) weights, zero biases.
  static LOPNetwork glorot(Rng& rng);

  static std::size_t weight_offset(int layer);
  static std::size_t bias_offset(int layer);

  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;

  MatMap weight(int layer);
  ConstMatMap weight(int layer) const;
  Eigen::Map<Vec> bias(int layer);
  Eigen::Map<const Vec> bias(int layer) const;

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  const InputTransform& input_transform() const { return input_; }
  void set_input_transform(const InputTransform& t);

  friend bool operator==(const LOPNetwork&, const LOPNetwork&) = default;

 private:
  std::vector<double> params_;
  InputTransform input_;
};

struct Probabilities {
  double p0 = 0.5;
  double p1 = 0.5;
  double operator[](int y) const { return y == 1 ? p1 : p0; }
};

/// Class probabilities of one pillar. EmptyPillarError if valid_count is 0.
Probabilities forward(const LOPNetwork& net, const PillarFeatures& feat);

/// -alpha * (1 - p_y)^gamma * ln(p_y), with p_y clamped to >= 1e-12.
double focal_loss(const Probabilities& p, int y, double alpha_fl, double gamma_fl);

struct LabeledPillar {
  const PillarFeatures* features = nullptr;
  int label = 0;
};

struct BatchGradient {
  double mean_loss = 0.0;
  std::vector<double> grads;  // same layout as LOPNetwork::params()
  std::vector<double> p1;     // per-sample class-1 probability
};

/// Mean focal loss of the batch and its gradient with respect to every
/// parameter. Max-pool routes gradient to the arg-max row of each channel,
/// ties going to the lowest row.
///
/// Samples are accumulated in fixed groups of eight and the group sums are
/// combined by a pairwise tree, so the result is bit-identical for any
/// `threads` value. NumericsError on a non-finite loss or gradient.
BatchGradient backward(const LOPNetwork& net, std::span<const LabeledPillar> batch, double alpha_fl,
                       double gamma_fl, int threads = 1);

/// d p1 / d features (untransformed) as an m_pc x 7 matrix; padding rows are zero.
Mat grad_of_input(const LOPNetwork& net, const PillarFeatures& feat);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected adaptive-moment update in place.
void adam_step(AdamState& state, LOPNetwork& net, std::span<const double> grads);

/// Plain gradient descent: params -= lr * grads.
void sgd_step(LOPNetwork& net, std::span<const double> grads, double lr);

// Model file:
//   "LOPMODEL" | u32 version (2)
//   | u32 n, n x u32 point-MLP widths | u32 m, m x u32 head widths
//   | u64 parameter count | parameters as f64 in LOPNetwork order
//   | 7 x f64 input shift | 7 x f64 input scale
//   | u64 trailer length | JSON metadata trailer
// All integers and floats little-endian.
std::vector<std::byte> encode_network(const LOPNetwork& net, const std::string& metadata_json);
std::pair<LOPNetwork, std::string> decode_network(std::span<const std::byte> bytes);

}  // namespace lopguard
