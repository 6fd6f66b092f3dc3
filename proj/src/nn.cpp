#include "lopguard/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lopguard/binio.hpp"
#include "lopguard/errors.hpp"
#include "lopguard/parallel.hpp"

namespace lopguard {

namespace {

constexpr std::array<std::size_t, LOPNetwork::kLayers + 1> layer_offsets() {
  std::array<std::size_t, LOPNetwork::kLayers + 1> off{};
  for (int k = 0; k < LOPNetwork::kLayers; ++k) {
    const auto s = LOPNetwork::kShapes[k];
    off[k + 1] = off[k] + static_cast<std::size_t>(s.in * s.out + s.out);
  }
  return off;
}

constexpr auto kOffsets = layer_offsets();
static_assert(kOffsets.back() == LOPNetwork::kParamCount);

constexpr double kProbClamp = 1e-12;
constexpr std::size_t kGroup = 8;

using ConstMatMap = LOPNetwork::ConstMatMap;

/// out = X W + b, accumulated row by row in increasing k so a row's result
/// never depends on which other rows are present.
void affine_rows(const Mat& x, const ConstMatMap& w, const Eigen::Map<const Vec>& b, Mat& out) {
  out.resize(x.rows(), w.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto o = out.row(r);
    o = b.transpose();
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double xv = x(r, k);
      if (xv != 0.0) o.noalias() += xv * w.row(k);
    }
  }
}

struct Trace {
  Mat x0;                      // transformed input rows
  Mat a1, h1, a2, h2, a3, h3;  // per-point activations (pre / post ReLU)
  RowVec g;                    // pooled feature
  std::vector<Eigen::Index> argmax;
  RowVec a4, h4;
  double z[2] = {0.0, 0.0};
  Probabilities p;
};

void run_forward(const LOPNetwork& net, const PillarFeatures& feat, Trace& t) {
  if (feat.valid_count() == 0) throw EmptyPillarError("pillar has no valid rows");
  const auto& tf = net.input_transform();
  t.x0 = feat.valid;
  if (!tf.identity()) {
    for (Eigen::Index c = 0; c < kFeatureDim; ++c) {
      const auto k = static_cast<std::size_t>(c);
      t.x0.col(c) = (t.x0.col(c).array() - tf.shift[k]) / tf.scale[k];
    }
  }
  affine_rows(t.x0, net.weight(0), net.bias(0), t.a1);
  t.h1 = t.a1.cwiseMax(0.0);
  affine_rows(t.h1, net.weight(1), net.bias(1), t.a2);
  t.h2 = t.a2.cwiseMax(0.0);
  affine_rows(t.h2, net.weight(2), net.bias(2), t.a3);
  t.h3 = t.a3.cwiseMax(0.0);

  const Eigen::Index channels = t.h3.cols();
  t.g.resize(channels);
  t.argmax.assign(static_cast<std::size_t>(channels), 0);
  for (Eigen::Index c = 0; c < channels; ++c) {
    Eigen::Index best = 0;
    double v = t.h3(0, c);
    for (Eigen::Index r = 1; r < t.h3.rows(); ++r) {
      if (t.h3(r, c) > v) {
        v = t.h3(r, c);
        best = r;
      }
    }
    t.g(c) = v;
    t.argmax[static_cast<std::size_t>(c)] = best;
  }

  Mat gm = t.g;
  Mat a4;
  affine_rows(gm, net.weight(3), net.bias(3), a4);
  t.a4 = a4.row(0);
  t.h4 = t.a4.cwiseMax(0.0);
  Mat h4m = t.h4;
  Mat z;
  affine_rows(h4m, net.weight(4), net.bias(4), z);
  t.z[0] = z(0, 0);
  t.z[1] = z(0, 1);
  if (!std::isfinite(t.z[0]) || !std::isfinite(t.z[1])) throw NumericsError("non-finite logits");
  const double m = std::max(t.z[0], t.z[1]);
  const double e0 = std::exp(t.z[0] - m);
  const double e1 = std::exp(t.z[1] - m);
  t.p.p0 = e0 / (e0 + e1);
  t.p.p1 = e1 / (e0 + e1);
}

/// Accumulates d(objective)/d(params) into `grad` given d(objective)/dz.
/// Optionally writes d(objective)/d(valid rows) into `dx`.
void run_backward(const LOPNetwork& net, const Trace& t, const double dz[2],
                  double* grad, Mat* dx) {
  auto gw = [&](int layer) {
    const auto s = LOPNetwork::kShapes[layer];
    return Eigen::Map<Mat>(grad + LOPNetwork::weight_offset(layer), s.in, s.out);
  };
  auto gb = [&](int layer) {
    const auto s = LOPNetwork::kShapes[layer];
    return Eigen::Map<Vec>(grad + LOPNetwork::bias_offset(layer), s.out);
  };

  // Head.
  Eigen::RowVector2d dzv(dz[0], dz[1]);
  if (grad) {
    gw(4).noalias() += t.h4.transpose() * dzv;
    gb(4) += dzv.transpose();
  }
  RowVec da4 = dzv * net.weight(4).transpose();
  for (Eigen::Index c = 0; c < da4.size(); ++c) {
    if (t.a4(c) <= 0.0) da4(c) = 0.0;
  }
  if (grad) {
    gw(3).noalias() += t.g.transpose() * da4;
    gb(3) += da4.transpose();
  }
  const RowVec dg = da4 * net.weight(3).transpose();

  // Max-pool: only the arg-max row of each channel receives gradient.
  const Eigen::Index n = t.h3.rows();
  const Eigen::Index c3 = t.h3.cols();
  std::vector<Eigen::Index> rows;  // distinct rows receiving gradient, ascending
  std::vector<Eigen::Index> row_slot(static_cast<std::size_t>(n), -1);
  for (Eigen::Index c = 0; c < c3; ++c) {
    const auto r = t.argmax[static_cast<std::size_t>(c)];
    if (dg(c) != 0.0 && t.a3(r, c) > 0.0) row_slot[static_cast<std::size_t>(r)] = 0;
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    if (row_slot[static_cast<std::size_t>(r)] == 0) {
      row_slot[static_cast<std::size_t>(r)] = static_cast<Eigen::Index>(rows.size());
      rows.push_back(r);
    }
  }
  const auto nr = static_cast<Eigen::Index>(rows.size());
  Mat da3 = Mat::Zero(nr, c3);
  for (Eigen::Index c = 0; c < c3; ++c) {
    const auto r = t.argmax[static_cast<std::size_t>(c)];
    if (dg(c) != 0.0 && t.a3(r, c) > 0.0) da3(row_slot[static_cast<std::size_t>(r)], c) = dg(c);
  }
  if (dx) *dx = Mat::Zero(n, kFeatureDim);
  if (nr == 0) return;

  // Gather the contributing rows of the earlier activations.
  Mat h2s(nr, t.h2.cols()), a2s(nr, t.a2.cols()), h1s(nr, t.h1.cols()), a1s(nr, t.a1.cols()),
      xs(nr, kFeatureDim);
  for (Eigen::Index k = 0; k < nr; ++k) {
    const auto r = rows[static_cast<std::size_t>(k)];
    h2s.row(k) = t.h2.row(r);
    a2s.row(k) = t.a2.row(r);
    h1s.row(k) = t.h1.row(r);
    a1s.row(k) = t.a1.row(r);
    xs.row(k) = t.x0.row(r);
  }

  if (grad) {
    gw(2).noalias() += h2s.transpose() * da3;
    gb(2) += da3.colwise().sum().transpose();
  }
  Mat da2 = da3 * net.weight(2).transpose();
  da2 = (a2s.array() > 0.0).select(da2, 0.0);
  if (grad) {
    gw(1).noalias() += h1s.transpose() * da2;
    gb(1) += da2.colwise().sum().transpose();
  }
  Mat da1 = da2 * net.weight(1).transpose();
  da1 = (a1s.array() > 0.0).select(da1, 0.0);
  if (grad) {
    gw(0).noalias() += xs.transpose() * da1;
    gb(0) += da1.colwise().sum().transpose();
  }
  if (dx) {
    Mat dxs = da1 * net.weight(0).transpose();
    const auto& tf = net.input_transform();
    for (Eigen::Index c = 0; c < kFeatureDim; ++c) dxs.col(c) /= tf.scale[static_cast<std::size_t>(c)];
    for (Eigen::Index k = 0; k < nr; ++k) dx->row(rows[static_cast<std::size_t>(k)]) = dxs.row(k);
  }
}

/// d FL / d z for the two logits.
void focal_grad_logits(const Probabilities& p, int y, double alpha, double gamma, double dz[2]) {
  const double py_raw = p[y];
  dz[0] = dz[1] = 0.0;
  if (py_raw < kProbClamp || py_raw >= 1.0) return;  // clamped or at the minimum
  const double q = 1.0 - py_raw;
  const double dl_dpy =
      -alpha * (std::pow(q, gamma) / py_raw - gamma * std::pow(q, gamma - 1.0) * std::log(py_raw));
  for (int k = 0; k < 2; ++k) {
    const double dpy_dzk = py_raw * ((k == y ? 1.0 : 0.0) - p[k]);
    dz[k] = dl_dpy * dpy_dzk;
  }
}

}  // namespace

// --------------------------------------------------------------------------
// LOPNetwork
// --------------------------------------------------------------------------

bool InputTransform::identity() const {
  return std::ranges::all_of(shift, [](double v) { return v == 0.0; }) &&
         std::ranges::all_of(scale, [](double v) { return v == 1.0; });
}

void InputTransform::validate() const {
  for (std::size_t k = 0; k < kFeatureDim; ++k) {
    if (!std::isfinite(shift[k])) throw DomainError("input shift must be finite");
    if (!std::isfinite(scale[k]) || scale[k] <= 0.0) throw DomainError("input scale must be finite and positive");
  }
}

InputTransform fit_input_transform(std::span<const PillarFeatures* const> pillars) {
  double n = 0.0;
  std::array<double, kFeatureDim> sum{}, sq{};
  for (const auto* f : pillars) {
    for (Eigen::Index r = 0; r < f->valid.rows(); ++r) {
      n += 1.0;
      for (std::size_t c = 0; c < kFeatureDim; ++c) sum[c] += f->valid(r, static_cast<Eigen::Index>(c));
    }
  }
  if (n == 0.0) throw DomainError("fit_input_transform: no rows");
  InputTransform t;
  for (std::size_t c = 0; c < kFeatureDim; ++c) t.shift[c] = sum[c] / n;
  for (const auto* f : pillars) {
    for (Eigen::Index r = 0; r < f->valid.rows(); ++r) {
      for (std::size_t c = 0; c < kFeatureDim; ++c) {
        const double d = f->valid(r, static_cast<Eigen::Index>(c)) - t.shift[c];
        sq[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < kFeatureDim; ++c) {
    const double sd = std::sqrt(sq[c] / n);
    t.scale[c] = sd < 1e-12 ? 1.0 : sd;
  }
  return t;
}

LOPNetwork::LOPNetwork() : params_(kParamCount, 0.0) {}

void LOPNetwork::set_input_transform(const InputTransform& t) {
  t.validate();
  input_ = t;
}

LOPNetwork LOPNetwork::glorot(Rng& rng) {
  LOPNetwork net;
  for (int k = 0; k < kLayers; ++k) {
    const auto s = kShapes[k];
    const double bound = std::sqrt(6.0 / (s.in + s.out));
    auto w = net.weight(k);
    for (int i = 0; i < s.in; ++i) {
      for (int j = 0; j < s.out; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
  }
  return net;
}

std::size_t LOPNetwork::weight_offset(int layer) { return kOffsets[static_cast<std::size_t>(layer)]; }

std::size_t LOPNetwork::bias_offset(int layer) {
  const auto s = kShapes[static_cast<std::size_t>(layer)];
  return kOffsets[static_cast<std::size_t>(layer)] + static_cast<std::size_t>(s.in * s.out);
}

LOPNetwork::MatMap LOPNetwork::weight(int layer) {
  const auto s = kShapes[static_cast<std::size_t>(layer)];
  return MatMap(params_.data() + weight_offset(layer), s.in, s.out);
}

LOPNetwork::ConstMatMap LOPNetwork::weight(int layer) const {
  const auto s = kShapes[static_cast<std::size_t>(layer)];
  return ConstMatMap(params_.data() + weight_offset(layer), s.in, s.out);
}

Eigen::Map<Vec> LOPNetwork::bias(int layer) {
  return Eigen::Map<Vec>(params_.data() + bias_offset(layer), kShapes[static_cast<std::size_t>(layer)].out);
}

Eigen::Map<const Vec> LOPNetwork::bias(int layer) const {
  return Eigen::Map<const Vec>(params_.data() + bias_offset(layer),
                               kShapes[static_cast<std::size_t>(layer)].out);
}

// --------------------------------------------------------------------------
// Forward / loss / backward
// --------------------------------------------------------------------------

Probabilities forward(const LOPNetwork& net, const PillarFeatures& feat) {
  Trace t;
  run_forward(net, feat, t);
  return t.p;
}

double focal_loss(const Probabilities& p, int y, double alpha_fl, double gamma_fl) {
  const double py = std::max(p[y], kProbClamp);
  return -alpha_fl * std::pow(1.0 - py, gamma_fl) * std::log(py);
}

BatchGradient backward(const LOPNetwork& net, std::span<const LabeledPillar> batch, double alpha_fl,
                       double gamma_fl, int threads) {
  if (batch.empty()) throw DomainError("backward: empty batch");
  const std::size_t groups = (batch.size() + kGroup - 1) / kGroup;
  std::vector<std::vector<double>> acc(groups);
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<double> p1(batch.size(), 0.0);

  parallel_for(groups, threads, [&](std::size_t gi) {
    auto& buf = acc[gi];
    buf.assign(LOPNetwork::kParamCount, 0.0);
    Trace t;
    const std::size_t lo = gi * kGroup;
    const std::size_t hi = std::min(batch.size(), lo + kGroup);
    for (std::size_t s = lo; s < hi; ++s) {
      const auto& item = batch[s];
      run_forward(net, *item.features, t);
      losses[s] = focal_loss(t.p, item.label, alpha_fl, gamma_fl);
      p1[s] = t.p.p1;
      double dz[2];
      focal_grad_logits(t.p, item.label, alpha_fl, gamma_fl, dz);
      if (dz[0] != 0.0 || dz[1] != 0.0) run_backward(net, t, dz, buf.data(), nullptr);
    }
  });

  // Pairwise tree over group sums; the shape depends only on the batch size.
  for (std::size_t stride = 1; stride < groups; stride *= 2) {
    for (std::size_t i = 0; i + stride < groups; i += 2 * stride) {
      auto& a = acc[i];
      const auto& b = acc[i + stride];
      for (std::size_t k = 0; k < a.size(); ++k) a[k] += b[k];
    }
  }

  BatchGradient out;
  out.grads = std::move(acc[0]);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (auto& g : out.grads) g *= inv;
  double total = 0.0;
  for (double l : losses) total += l;
  out.mean_loss = total * inv;
  out.p1 = std::move(p1);
  if (!std::isfinite(out.mean_loss)) throw NumericsError("non-finite loss");
  for (double g : out.grads) {
    if (!std::isfinite(g)) throw NumericsError("non-finite gradient");
  }
  return out;
}

Mat grad_of_input(const LOPNetwork& net, const PillarFeatures& feat) {
  Trace t;
  run_forward(net, feat, t);
  // d p1 / d z_k = p1 * (delta_1k - p_k)
  const double dz[2] = {-t.p.p1 * t.p.p0, t.p.p1 * (1.0 - t.p.p1)};
  Mat dx;
  run_backward(net, t, dz, nullptr, &dx);
  Mat out = Mat::Zero(feat.m_pc, kFeatureDim);
  out.topRows(dx.rows()) = dx;
  return out;
}

// --------------------------------------------------------------------------
// Optimizers
// --------------------------------------------------------------------------

void adam_step(AdamState& s, LOPNetwork& net, std::span<const double> grads) {
  auto& p = net.params();
  if (grads.size() != p.size()) throw DomainError("adam_step: gradient size mismatch");
  if (s.m.empty()) {
    s.m.assign(p.size(), 0.0);
    s.v.assign(p.size(), 0.0);
  }
  if (s.m.size() != p.size() || s.v.size() != p.size()) throw DomainError("adam_step: state size mismatch");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double g = grads[k];
    s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * g;
    s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * g * g;
    const double mhat = s.m[k] / c1;
    const double vhat = s.v[k] / c2;
    p[k] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
  }
}

void sgd_step(LOPNetwork& net, std::span<const double> grads, double lr) {
  auto& p = net.params();
  if (grads.size() != p.size()) throw DomainError("sgd_step: gradient size mismatch");
  for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * grads[k];
}

// --------------------------------------------------------------------------
// Model file
// --------------------------------------------------------------------------

namespace {
constexpr std::string_view kMagic = "LOPMODEL";
constexpr std::uint32_t kVersion = 2;
}  // namespace

std::vector<std::byte> encode_network(const LOPNetwork& net, const std::string& metadata_json) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(LOPNetwork::kPointLayers + 1);
  w.u32(static_cast<std::uint32_t>(LOPNetwork::kShapes[0].in));
  for (int k = 0; k < LOPNetwork::kPointLayers; ++k) w.u32(static_cast<std::uint32_t>(LOPNetwork::kShapes[k].out));
  w.u32(LOPNetwork::kLayers - LOPNetwork::kPointLayers + 1);
  w.u32(static_cast<std::uint32_t>(LOPNetwork::kShapes[LOPNetwork::kPointLayers].in));
  for (int k = LOPNetwork::kPointLayers; k < LOPNetwork::kLayers; ++k) {
    w.u32(static_cast<std::uint32_t>(LOPNetwork::kShapes[k].out));
  }
  w.u64(net.params().size());
  for (double v : net.params()) w.f64(v);
  for (double v : net.input_transform().shift) w.f64(v);
  for (double v : net.input_transform().scale) w.f64(v);
  w.u64(metadata_json.size());
  w.bytes(metadata_json);
  return w.take();
}

std::pair<LOPNetwork, std::string> decode_network(std::span<const std::byte> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(kMagic.size()) != kMagic) throw ValueError("model file: bad magic");
  if (const auto v = r.u32(); v != kVersion) throw ValueError("model file: unsupported version " + std::to_string(v));
  auto expect_widths = [&](int first, int last) {
    const auto n = r.u32();
    if (n != static_cast<std::uint32_t>(last - first + 1)) throw ValueError("model file: architecture mismatch");
    if (r.u32() != static_cast<std::uint32_t>(LOPNetwork::kShapes[first].in)) {
      throw ValueError("model file: architecture mismatch");
    }
    for (int k = first; k < last; ++k) {
      if (r.u32() != static_cast<std::uint32_t>(LOPNetwork::kShapes[k].out)) {
        throw ValueError("model file: architecture mismatch");
      }
    }
  };
  expect_widths(0, LOPNetwork::kPointLayers);
  expect_widths(LOPNetwork::kPointLayers, LOPNetwork::kLayers);
  if (r.u64() != LOPNetwork::kParamCount) throw ValueError("model file: parameter count mismatch");
  LOPNetwork net;
  for (auto& v : net.params()) {
    v = r.f64();
    if (!std::isfinite(v)) throw ValueError("model file: non-finite parameter");
  }
  InputTransform tf;
  for (auto& v : tf.shift) v = r.f64();
  for (auto& v : tf.scale) v = r.f64();
  try {
    net.set_input_transform(tf);
  } catch (const DomainError& e) {
    throw ValueError(std::string("model file: ") + e.what());
  }
  const auto len = r.u64();
  std::string meta(r.bytes(static_cast<std::size_t>(len)));
  return {std::move(net), std::move(meta)};
}

}  // namespace lopguard
