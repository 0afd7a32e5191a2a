#include "oskf/keypoints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "oskf/error.hpp"

namespace oskf {

ObjectModel ObjectModel::from_points(std::vector<Vec3> points, std::vector<Mat3> symmetries) {
  if (points.empty()) throw EmptyModel("object model has no points");
  ObjectModel model;
  model.diameter = points.size() >= 2 ? model_diameter(points) : 0.0;
  model.points = std::move(points);
  model.symmetries.clear();
  bool has_identity = false;
  for (const Mat3& s : symmetries) {
    if (!is_rotation(s, 1e-6)) throw InputError("symmetry matrix is not a rotation");
    if ((s - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12) has_identity = true;
  }
  if (!has_identity) model.symmetries.push_back(Mat3::Identity());
  model.symmetries.insert(model.symmetries.end(), symmetries.begin(), symmetries.end());
  return model;
}

double model_diameter(std::span<const Vec3> points) {
  if (points.size() < 2) throw TooFewPoints("diameter needs at least two points");
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, (points[i] - points[j]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

std::size_t default_fps_seed(std::span<const Vec3> points) {
  if (points.empty()) throw EmptyModel("no points to seed from");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = (points[i] - centroid).squaredNorm();
    if (d > best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

KeypointSet farthest_point_sample(std::span<const Vec3> points, std::size_t k,
                                  std::size_t seed_index) {
  if (k < 1 || k > points.size()) {
    throw InvalidK("k = " + std::to_string(k) + " outside [1, " + std::to_string(points.size()) +
                   "]");
  }
  if (seed_index >= points.size()) {
    throw InvalidK("seed index " + std::to_string(seed_index) + " out of range");
  }

  KeypointSet out;
  out.indices.reserve(k);
  out.keypoints.reserve(k);

  // min squared distance from each point to the selected set
  std::vector<double> nearest(points.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(points.size(), false);
  std::size_t current = seed_index;
  for (std::size_t round = 0; round < k; ++round) {
    taken[current] = true;
    out.indices.push_back(current);
    out.keypoints.push_back(points[current]);
    if (round + 1 == k) break;

    const Vec3& c = points[current];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d = (points[i] - c).squaredNorm();
      if (d < nearest[i]) nearest[i] = d;
      if (!taken[i] && nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    current = best;
  }
  return out;
}

KeypointSet farthest_point_sample(const ObjectModel& model, std::size_t k, std::size_t seed_index) {
  return farthest_point_sample(std::span<const Vec3>(model.points), k, seed_index);
}

KeypointSet farthest_point_sample(const ObjectModel& model, std::size_t k) {
  return farthest_point_sample(model, k, default_fps_seed(model.points));
}

}  // namespace oskf
