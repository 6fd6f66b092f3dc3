#include "lopguard/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "lopguard/errors.hpp"

namespace lopguard {

namespace {

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(name) + " must be in [0,1]");
}

std::vector<std::size_t> by_confidence(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return dets[a].confidence > dets[b].confidence; });
  return order;
}

// Greedy pass over detections already in processing order.
template <typename Visit>
void greedy(std::span<const Detection> dets, std::span<const std::size_t> order,
            std::span<const GroundTruthObject> gts, double c_iou, Visit&& visit) {
  std::vector<char> taken(gts.size(), 0);
  for (auto di : order) {
    const Detection& d = dets[di];
    const Footprint2D df = footprint(d.box);
    long best = -1;
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].category != d.category) continue;
      const double iou = iou_2d(df, footprint(gts[g].box));
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<long>(g);
      }
    }
    DetectionMatch m;
    m.det_index = di;
    if (best >= 0 && best_iou >= c_iou) {
      taken[static_cast<std::size_t>(best)] = 1;
      m.true_positive = true;
      m.gt_index = best;
    }
    m.iou = std::max(best_iou, 0.0);
    visit(m);
  }
}

}  // namespace

MatchResult match(std::span<const Detection> dets, std::span<const GroundTruthObject> gts, double c_conf,
                  double c_iou) {
  check_unit(c_conf, "c_conf");
  check_unit(c_iou, "c_iou");
  std::vector<std::size_t> order;
  for (auto k : by_confidence(dets)) {
    if (dets[k].confidence >= c_conf) order.push_back(k);
  }
  MatchResult mr;
  greedy(dets, order, gts, c_iou, [&](const DetectionMatch& m) {
    (m.true_positive ? mr.tp : mr.fp) += 1;
    mr.verdicts.push_back(m);
  });
  mr.fn = gts.size() - mr.tp;
  return mr;
}

double precision(const MatchResult& mr) {
  const auto n = mr.tp + mr.fp;
  return n == 0 ? 1.0 : static_cast<double>(mr.tp) / static_cast<double>(n);
}

double precision(std::span<const MatchResult> frames) {
  MatchResult total;
  for (const auto& f : frames) {
    total.tp += f.tp;
    total.fp += f.fp;
  }
  return precision(total);
}

double ap_11point(std::span<const FrameDetections> frames, double c_iou) {
  check_unit(c_iou, "c_iou");
  std::size_t n_gt = 0;
  for (const auto& f : frames) n_gt += f.ground_truth.size();
  if (n_gt == 0) throw DataError("average precision needs ground truth");

  // One greedy pass per frame at the lowest threshold; raising the threshold
  // only drops a suffix of each frame's confidence order, which leaves the
  // earlier matches untouched.
  struct Item {
    double confidence;
    std::size_t frame;
    std::size_t index;
    bool tp;
  };
  std::vector<Item> items;
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const auto order = by_confidence(frames[fi].detections);
    greedy(frames[fi].detections, order, frames[fi].ground_truth, c_iou, [&](const DetectionMatch& m) {
      items.push_back({frames[fi].detections[m.det_index].confidence, fi, m.det_index, m.true_positive});
    });
  }
  std::ranges::sort(items, [](const Item& a, const Item& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.frame != b.frame) return a.frame < b.frame;
    return a.index < b.index;
  });

  // (recall, precision) at every distinct confidence threshold.
  std::vector<std::pair<double, double>> curve;
  std::size_t tp = 0, seen = 0;
  for (std::size_t k = 0; k < items.size(); ++k) {
    tp += items[k].tp;
    ++seen;
    if (k + 1 == items.size() || items[k + 1].confidence != items[k].confidence) {
      curve.emplace_back(static_cast<double>(tp) / static_cast<double>(n_gt),
                         static_cast<double>(tp) / static_cast<double>(seen));
    }
  }
  double sum = 0.0;
  for (int r = 0; r <= 10; ++r) {
    const double level = r / 10.0;
    double best = 0.0;
    for (const auto& [rec, prec] : curve) {
      if (rec >= level - 1e-12) best = std::max(best, prec);
    }
    sum += best;
  }
  return sum / 11.0;
}

bool attack_succeeded(const AttackTrace& trace, std::span<const Detection> dets, double c_conf, double c_iou) {
  const Footprint2D tf = footprint(trace.target_box);
  for (const auto& d : dets) {
    if (d.category == Category::car && d.confidence >= c_conf && iou_2d(footprint(d.box), tf) >= c_iou) return true;
  }
  return false;
}

double asr(std::span<const AttackTrace> traces, std::span<const std::vector<Detection>> final_dets, double c_conf,
           double c_iou) {
  if (traces.empty()) throw DataError("attack success rate needs at least one attempt");
  if (traces.size() != final_dets.size()) throw LengthError("one detection list per trace expected");
  check_unit(c_conf, "c_conf");
  check_unit(c_iou, "c_iou");
  std::size_t hits = 0;
  for (std::size_t k = 0; k < traces.size(); ++k) hits += attack_succeeded(traces[k], final_dets[k], c_conf, c_iou);
  return static_cast<double>(hits) / static_cast<double>(traces.size());
}

namespace {

double sq_dist(const Point& a, const Point& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace

double chamfer(std::span<const Point> s, std::span<const Point> s_prime) {
  if (s.empty() || s_prime.empty()) throw EmptySetError("chamfer needs two non-empty sets");
  double sum = 0.0;
  for (const auto& y : s_prime) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : s) best = std::min(best, sq_dist(x, y));
    sum += best;
  }
  return sum / static_cast<double>(s_prime.size());
}

double knn_dist(std::span<const Point> s, std::span<const Point> s_prime, int k) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (s.size() < static_cast<std::size_t>(k)) throw SizeError("knn_dist needs |S| >= k");
  if (s_prime.empty()) throw EmptySetError("knn_dist needs a non-empty S'");
  std::vector<double> d(s.size());
  double sum = 0.0;
  for (const auto& y : s_prime) {
    for (std::size_t i = 0; i < s.size(); ++i) d[i] = sq_dist(s[i], y);
    std::partial_sort(d.begin(), d.begin() + k, d.end());
    double local = 0.0;
    for (int i = 0; i < k; ++i) local += d[static_cast<std::size_t>(i)];
    sum += local / k;
  }
  return sum / static_cast<double>(s_prime.size());
}

DiffStats diff_stats(double global, std::span<const double> locals) {
  if (locals.empty()) throw EmptySetError("no local subsets");
  DiffStats st;
  st.d_global = global;
  st.subsets = locals.size();
  std::vector<double> v(locals.begin(), locals.end());
  st.d_avg_local = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::ranges::sort(v, std::greater<>());
  const std::size_t half = (v.size() + 1) / 2;
  st.d_half_max_local = std::accumulate(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half), 0.0) /
                        static_cast<double>(half);
  return st;
}

DiffStats local_global_diffs(std::span<const Point> s_r, std::span<const Point> s_f, const GridSpec& spec,
                             SetMetric metric, int k) {
  auto dist = [&](std::span<const Point> a, std::span<const Point> b) {
    return metric == SetMetric::chamfer ? chamfer(a, b) : knn_dist(a, b, k);
  };
  PointCloud cloud;
  cloud.points.assign(s_f.begin(), s_f.end());
  const Partition part = partition(cloud, spec);
  if (part.pillars.empty()) throw EmptySetError("forged set occupies no pillar");
  std::vector<double> locals;
  std::vector<Point> subset;
  for (const auto& [idx, members] : part.pillars) {
    subset.clear();
    for (auto m : members) subset.push_back(cloud.points[m]);
    locals.push_back(dist(s_r, subset));
  }
  return diff_stats(dist(s_r, s_f), locals);
}

std::vector<DensityRecord> depth_density_profile(std::span<const Scene> scenes, std::span<const AttackTrace> traces,
                                                 std::span<const Scene> attacked) {
  std::vector<DensityRecord> out;
  std::map<std::uint64_t, const Scene*> by_frame;
  for (const auto& s : scenes) {
    by_frame.emplace(s.frame_id(), &s);
    for (const auto& g : s.ground_truth) {
      DensityRecord r;
      r.frame_id = s.frame_id();
      r.depth = box_depth(g.box);
      r.points = count_points_in_box(g.box, s.cloud);
      r.density = static_cast<double>(r.points) / volume(g.box);
      r.occluded = g.occluded;
      out.push_back(r);
    }
  }
  if (!attacked.empty() && attacked.size() != traces.size()) {
    throw LengthError("one attacked scene per trace expected");
  }
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& t = traces[k];
    PointCloud cloud;
    if (!attacked.empty()) {
      cloud = attacked[k].cloud;
    } else if (auto it = by_frame.find(t.base_frame_id); it != by_frame.end()) {
      cloud = it->second->cloud;
      cloud.points.insert(cloud.points.end(), t.injected_points.begin(), t.injected_points.end());
    } else {
      cloud.points = t.injected_points;
    }
    DensityRecord r;
    r.frame_id = t.base_frame_id;
    r.depth = box_depth(t.target_box);
    r.points = count_points_in_box(t.target_box, cloud);
    r.density = static_cast<double>(r.points) / volume(t.target_box);
    r.forged = true;
    out.push_back(r);
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthError("pearson: size mismatch");
  if (x.size() < 2) throw DataError("pearson needs at least two samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double PowerLawFit::predict(double d) const { return std::exp(log_c + exponent * std::log(d)); }

PowerLawFit fit_power_law(std::span<const DensityRecord> records,
                          const std::function<bool(const DensityRecord&)>& keep) {
  std::vector<double> lx, ly;
  for (const auto& r : records) {
    if (!keep(r) || !(r.density > 0.0) || !(r.depth > 0.0)) continue;
    lx.push_back(std::log(r.depth));
    ly.push_back(std::log(r.density));
  }
  if (lx.size() < 2) throw DataError("power-law fit needs two usable records");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) throw DataError("power-law fit: all depths equal");
  PowerLawFit f;
  f.exponent = sxy / sxx;
  f.log_c = my - f.exponent * mx;
  f.correlation = pearson(lx, ly);
  f.n = lx.size();
  return f;
}

}  // namespace lopguard
