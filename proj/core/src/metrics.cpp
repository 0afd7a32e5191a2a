#include "oskf/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include "oskf/error.hpp"

namespace oskf {

namespace {

std::vector<Vec3> transform(const Pose& pose, std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& x : points) out.push_back(pose.rotation * x + pose.translation);
  return out;
}

// Uniform grid over the target points. Lookups visit cells in growing
// Chebyshev rings around the query and stop once the ring bound exceeds the
// best distance, so the result is the exact minimum.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    lo_ = pts[0];
    Vec3 hi = pts[0];
    for (const Vec3& p : pts) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 extent = hi - lo_;
    const double volume_side = std::cbrt(static_cast<double>(pts.size()));
    cell_ = std::max(extent.maxCoeff() / std::max(1.0, volume_side), 1e-12);
    for (int a = 0; a < 3; ++a) {
      dims_[a] = std::max(1, static_cast<int>(std::floor(extent[a] / cell_)) + 1);
    }
    start_.assign(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] + 1, 0);
    std::vector<std::size_t> cell_of(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = flat(cell_index(pts[i]));
      ++start_[cell_of[i] + 1];
    }
    for (std::size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    order_.resize(pts.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) order_[fill[cell_of[i]]++] = i;
  }

  double nearest(const Vec3& q) const {
    const std::array<int, 3> c = cell_index(q);
    const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    double best_sq = std::numeric_limits<double>::infinity();
    for (int r = 0; r <= max_ring; ++r) {
      for (int z = c[2] - r; z <= c[2] + r; ++z) {
        if (z < 0 || z >= dims_[2]) continue;
        for (int y = c[1] - r; y <= c[1] + r; ++y) {
          if (y < 0 || y >= dims_[1]) continue;
          for (int x = c[0] - r; x <= c[0] + r; ++x) {
            if (x < 0 || x >= dims_[0]) continue;
            const bool on_ring = std::abs(x - c[0]) == r || std::abs(y - c[1]) == r ||
                                 std::abs(z - c[2]) == r;
            if (!on_ring) continue;
            const std::size_t f = flat({x, y, z});
            for (std::size_t k = start_[f]; k < start_[f + 1]; ++k) {
              best_sq = std::min(best_sq, (q - pts_[order_[k]]).squaredNorm());
            }
          }
        }
      }
      // Unvisited cells are at least r cells away along some axis.
      const double bound = static_cast<double>(r) * cell_;
      if (best_sq <= bound * bound) break;
    }
    return std::sqrt(best_sq);
  }

 private:
  std::array<int, 3> cell_index(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int a = 0; a < 3; ++a) {
      const double g = std::floor((p[a] - lo_[a]) / cell_);
      c[a] = static_cast<int>(std::clamp(g, 0.0, static_cast<double>(dims_[a] - 1)));
    }
    return c;
  }
  std::size_t flat(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  const std::vector<Vec3>& pts_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> order_;
};

void check_distances(std::span<const double> distances) {
  if (distances.empty()) throw EmptyList("metric over an empty distance list");
  for (double d : distances) {
    if (!std::isfinite(d) || d < 0.0) throw InputError("distances must be finite and >= 0");
  }
}

std::string key_string(int scene, int im, int obj) {
  return "scene=" + std::to_string(scene) + " im=" + std::to_string(im) +
         " obj=" + std::to_string(obj);
}

}  // namespace

double add_distance(const Pose& pred, const Pose& gt, std::span<const Vec3> points) {
  if (points.empty()) throw EmptyModel("ADD over an empty point set");
  // Same transformed points and sqrt-of-squared-norm as adds_distance, so
  // adds <= add holds exactly in floating point.
  const std::vector<Vec3> p = transform(pred, points);
  const std::vector<Vec3> g = transform(gt, points);
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += std::sqrt((p[i] - g[i]).squaredNorm());
  return total / static_cast<double>(points.size());
}

double adds_distance(const Pose& pred, const Pose& gt, std::span<const Vec3> points,
                     AddsMethod method) {
  if (points.empty()) throw EmptyModel("ADD-S over an empty point set");
  const std::vector<Vec3> p = transform(pred, points);
  const std::vector<Vec3> g = transform(gt, points);
  if (method == AddsMethod::kAuto) {
    method = points.size() <= kAddsBruteForceLimit ? AddsMethod::kBruteForce : AddsMethod::kGrid;
  }
  double total = 0.0;
  if (method == AddsMethod::kBruteForce) {
    for (const Vec3& q : p) {
      double best_sq = std::numeric_limits<double>::infinity();
      for (const Vec3& t : g) best_sq = std::min(best_sq, (q - t).squaredNorm());
      total += std::sqrt(best_sq);
    }
  } else {
    const PointGrid grid(g);
    for (const Vec3& q : p) total += grid.nearest(q);
  }
  return total / static_cast<double>(points.size());
}

double add_s_accuracy(std::span<const double> distances, double diameter, double threshold_frac) {
  check_distances(distances);
  if (!(diameter > 0.0)) throw InputError("diameter must be positive");
  if (!(threshold_frac > 0.0)) throw InputError("threshold fraction must be positive");
  const double threshold = threshold_frac * diameter;
  const auto hits = std::count_if(distances.begin(), distances.end(),
                                  [&](double d) { return d < threshold; });
  return static_cast<double>(hits) / static_cast<double>(distances.size());
}

double auc_add(std::span<const double> distances, double max_threshold) {
  check_distances(distances);
  if (!(max_threshold > 0.0)) throw InputError("AUC threshold must be positive");
  // Accuracy at threshold s is #{d_i < s} / n, so the area on [0, max] is
  // sum_i max(0, max - d_i) / n.
  std::vector<double> sorted(distances.begin(), distances.end());
  std::sort(sorted.begin(), sorted.end());
  double area = 0.0;
  for (double d : sorted) area += std::max(0.0, max_threshold - d);
  return area / (static_cast<double>(sorted.size()) * max_threshold);
}

double rotation_error_deg(const Mat3& pred, const Mat3& gt, std::span<const Mat3> symmetries) {
  double best = rotation_angle_deg(pred, gt);
  for (const Mat3& s : symmetries) best = std::min(best, rotation_angle_deg(pred, gt * s));
  return best;
}

bool ndeg_ncm(const Pose& pred, const Pose& gt, std::span<const Mat3> symmetries, double n_deg,
              double n_cm) {
  return rotation_error_deg(pred.rotation, gt.rotation, symmetries) <= n_deg &&
         (pred.translation - gt.translation).norm() <= n_cm / 100.0;
}

MetricReport evaluate(std::span<const InstanceRecord> predictions,
                      std::span<const InstanceRecord> ground_truth,
                      const std::map<int, EvalModel>& models) {
  using Key = std::tuple<int, int, int>;
  auto key_of = [](const InstanceRecord& r) { return Key{r.scene, r.im, r.obj}; };

  std::map<Key, const InstanceRecord*> gt_index;
  for (const InstanceRecord& r : ground_truth) {
    if (!gt_index.emplace(key_of(r), &r).second) {
      throw InputError("duplicate ground-truth record " + key_string(r.scene, r.im, r.obj));
    }
  }
  std::map<Key, const InstanceRecord*> pred_index;
  for (const InstanceRecord& r : predictions) {
    if (!pred_index.emplace(key_of(r), &r).second) {
      throw InputError("duplicate prediction record " + key_string(r.scene, r.im, r.obj));
    }
  }

  std::vector<std::string> unmatched;
  for (const auto& [key, rec] : pred_index) {
    if (!gt_index.count(key)) {
      unmatched.push_back("prediction without ground truth: " +
                          key_string(rec->scene, rec->im, rec->obj));
    }
  }
  for (const auto& [key, rec] : gt_index) {
    if (!pred_index.count(key)) {
      unmatched.push_back("ground truth without prediction: " +
                          key_string(rec->scene, rec->im, rec->obj));
    }
  }
  if (!unmatched.empty()) throw KeyMismatch(std::move(unmatched));

  struct Accum {
    std::vector<double> distances;
    std::size_t hits_2 = 0;
    std::size_t hits_5 = 0;
  };
  std::map<int, Accum> per_object;
  for (const auto& [key, gt] : gt_index) {
    const auto model_it = models.find(gt->obj);
    if (model_it == models.end()) {
      throw InputError("no model for object " + std::to_string(gt->obj));
    }
    const EvalModel& em = model_it->second;
    const InstanceRecord& pred = *pred_index.at(key);
    const double d = em.symmetric ? adds_distance(pred.pose, gt->pose, em.model.points)
                                  : add_distance(pred.pose, gt->pose, em.model.points);
    const std::span<const Mat3> syms =
        em.symmetric ? std::span<const Mat3>(em.model.symmetries) : std::span<const Mat3>();
    Accum& acc = per_object[gt->obj];
    acc.distances.push_back(d);
    acc.hits_2 += ndeg_ncm(pred.pose, gt->pose, syms, 2.0, 2.0) ? 1 : 0;
    acc.hits_5 += ndeg_ncm(pred.pose, gt->pose, syms, 5.0, 5.0) ? 1 : 0;
  }

  MetricReport report;
  report.aggregate.obj = -1;
  for (const auto& [obj, acc] : per_object) {
    MetricRow row;
    row.obj = obj;
    row.count = acc.distances.size();
    const double n = static_cast<double>(row.count);
    row.add_accuracy = add_s_accuracy(acc.distances, models.at(obj).model.diameter);
    row.auc_add_s = auc_add(acc.distances);
    row.acc_2deg2cm = static_cast<double>(acc.hits_2) / n;
    row.acc_5deg5cm = static_cast<double>(acc.hits_5) / n;
    double sum = 0.0;
    for (double d : acc.distances) sum += d;
    row.mean_distance = sum / n;
    report.objects.push_back(row);

    MetricRow& agg = report.aggregate;
    agg.count += row.count;
    agg.add_accuracy += n * row.add_accuracy;
    agg.auc_add_s += n * row.auc_add_s;
    agg.acc_2deg2cm += n * row.acc_2deg2cm;
    agg.acc_5deg5cm += n * row.acc_5deg5cm;
    agg.mean_distance += n * row.mean_distance;
  }
  if (report.aggregate.count > 0) {
    const double total = static_cast<double>(report.aggregate.count);
    report.aggregate.add_accuracy /= total;
    report.aggregate.auc_add_s /= total;
    report.aggregate.acc_2deg2cm /= total;
    report.aggregate.acc_5deg5cm /= total;
    report.aggregate.mean_distance /= total;
  }
  return report;
}

}  // namespace oskf
