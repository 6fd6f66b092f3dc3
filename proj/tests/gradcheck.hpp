#pragma once

// Finite-difference check of the analytic gradients against the
// extended-precision reference network in oracles.hpp.

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lopguard/nn.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Result {
  double worst_param = 0.0;
  double worst_input = 0.0;
  std::size_t params_checked = 0;
  std::size_t inputs_checked = 0;
};

inline double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
}

/// Random weights and biases, a pillar of 1..6 points, a random label and,
/// for odd seeds, a random input transform. Checks `per_block` sampled
/// coordinates of every weight and bias block (all of them when the block is
/// smaller) and every valid input entry, at step eps.
inline Result check_config(std::uint64_t seed, std::size_t per_block, double eps = 1e-6) {
  using namespace lopguard;
  Rng rng(seed);
  LOPNetwork net = LOPNetwork::glorot(rng);
  for (int l = 0; l < LOPNetwork::kLayers; ++l) {
    for (auto& b : net.bias(l)) b = rng.uniform(-0.1, 0.1);
  }
  if (seed % 2 == 1) {
    InputTransform t;
    for (int c = 0; c < kFeatureDim; ++c) {
      t.shift[static_cast<std::size_t>(c)] = rng.uniform(-5, 5);
      t.scale[static_cast<std::size_t>(c)] = rng.uniform(0.2, 5);
    }
    net.set_input_transform(t);
  }
  const int n = 1 + static_cast<int>(rng.below(6));
  PillarFeatures f;
  f.m_pc = 16;
  f.valid.resize(n, kFeatureDim);
  for (int r = 0; r < n; ++r) {
    const double x = rng.uniform(0, 70), y = rng.uniform(-40, 40), z = rng.uniform(-2, 1);
    f.valid.row(r) << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), x, y, z, rng.uniform(), std::hypot(x, y, z);
  }
  f.source.resize(static_cast<std::size_t>(n));
  const int label = static_cast<int>(rng.below(2));

  const LabeledPillar item{&f, label};
  const auto grads = backward(net, std::span(&item, 1), 1.0, 2.0);
  const Mat dx = grad_of_input(net, f);

  oracle::RefNet ref;
  ref.params.assign(net.params().begin(), net.params().end());
  for (std::size_t c = 0; c < 7; ++c) {
    ref.shift[c] = net.input_transform().shift[c];
    ref.scale[c] = net.input_transform().scale[c];
  }
  std::vector<std::vector<long double>> rows(static_cast<std::size_t>(n), std::vector<long double>(7));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < 7; ++c) rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = f.valid(r, c);
  }
  const long double h = eps;

  Result out;
  for (int l = 0; l < LOPNetwork::kLayers; ++l) {
    const auto shape = LOPNetwork::kShapes[static_cast<std::size_t>(l)];
    const std::size_t blocks[2][2] = {
        {LOPNetwork::weight_offset(l), static_cast<std::size_t>(shape.in * shape.out)},
        {LOPNetwork::bias_offset(l), static_cast<std::size_t>(shape.out)}};
    for (const auto& [offset, size] : blocks) {
      const std::size_t count = std::min(per_block, size);
      for (std::size_t s = 0; s < count; ++s) {
        const std::size_t k = offset + (count == size ? s : rng.below(size));
        const long double keep = ref.params[k];
        ref.params[k] = keep + h;
        const long double up = oracle::RefNet::focal(ref.p1(rows), label, 1, 2);
        ref.params[k] = keep - h;
        const long double down = oracle::RefNet::focal(ref.p1(rows), label, 1, 2);
        ref.params[k] = keep;
        const double numeric = static_cast<double>((up - down) / (2 * h));
        out.worst_param = std::max(out.worst_param, rel_error(grads.grads[k], numeric));
        ++out.params_checked;
      }
    }
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      const long double keep = rows[r][c];
      rows[r][c] = keep + h;
      const long double up = ref.p1(rows);
      rows[r][c] = keep - h;
      const long double down = ref.p1(rows);
      rows[r][c] = keep;
      const double numeric = static_cast<double>((up - down) / (2 * h));
      out.worst_input = std::max(
          out.worst_input, rel_error(dx(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)), numeric));
      ++out.inputs_checked;
    }
  }
  return out;
}

}  // namespace gradcheck
