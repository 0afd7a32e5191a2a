#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "oskf/geometry.hpp"

namespace oskf {

/// Point model of an object in its own frame. `symmetries` is a discrete
/// symmetry group and always contains the identity.
struct ObjectModel {
  std::vector<Vec3> points;
  double diameter = 0.0;
  std::vector<Mat3> symmetries{Mat3::Identity()};

  /// Builds a model, computing the exact diameter and adding the identity to
  /// the symmetry set when missing. Throws on invalid symmetry matrices.
  static ObjectModel from_points(std::vector<Vec3> points, std::vector<Mat3> symmetries = {});
  bool is_symmetric() const { return symmetries.size() > 1; }
};

struct KeypointSet {
  std::vector<Vec3> keypoints;
  std::vector<std::size_t> indices;  ///< positions in the source point list

  std::size_t k() const { return keypoints.size(); }
};

inline constexpr std::size_t kDefaultKeypointCount = 64;

/// Max pairwise distance, brute force O(n^2). Throws TooFewPoints for n < 2.
double model_diameter(std::span<const Vec3> points);

/// Index of the point farthest from the centroid (lowest index on ties).
std::size_t default_fps_seed(std::span<const Vec3> points);

/// Greedy farthest point sampling: starts at seed_index, then repeatedly
/// takes the point with the largest distance to the chosen set. Ties go to
/// the lowest index. Throws InvalidK unless 1 <= k <= |points|.
KeypointSet farthest_point_sample(std::span<const Vec3> points, std::size_t k,
                                  std::size_t seed_index);
KeypointSet farthest_point_sample(const ObjectModel& model, std::size_t k, std::size_t seed_index);
KeypointSet farthest_point_sample(const ObjectModel& model, std::size_t k);

}  // namespace oskf
